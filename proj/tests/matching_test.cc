// Copyright 2026 The TAS Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "tas/matching.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <gtest/gtest.h>

#include "tas/rng.h"
#include "test_util.h"

namespace tas {
namespace {

using ::tas::testing::RandomMatrix;

Matrix M(int rows, int cols, std::initializer_list<double> values) {
  Matrix m(rows, cols);
  int i = 0;
  for (double v : values) {
    m(i / cols, i % cols) = v;
    ++i;
  }
  return m;
}

Matrix RandomCost(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Matrix cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost(i, j) = u(rng);
  }
  return cost;
}

Network IdentityEncoder(int dim) {
  NetworkSpec spec{{dim, dim}, 2, Activation::kRelu};
  Vector params = Vector::Zero(spec.param_count());
  for (int i = 0; i < dim; ++i) params[i * dim + i] = 1.0;
  return Network(spec, params);
}

TEST(ClassCentroidsTest, IdentityEncoderMean) {
  Batch batch{M(3, 2, {0, 0, 2, 2, 5, 1}), {4, 4, 1}};
  const CentroidSet set = ClassCentroids(IdentityEncoder(2), batch);
  EXPECT_EQ(set.class_ids, (std::vector<int>{1, 4}));
  EXPECT_EQ(set.centroids, M(2, 2, {5, 1, 1, 1}));
}

TEST(ClassCentroidsTest, MatchesLoopMeans) {
  const Network net = InitNetwork({{5, 7, 4}, 3, Activation::kTanh}, 3);
  const Batch batch = testing::RandomBatch(40, 5, 6, 4);
  const CentroidSet set = ClassCentroids(net, batch);
  const Matrix z = Encode(net, batch.features);
  for (size_t k = 0; k < set.class_ids.size(); ++k) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(4);
    int count = 0;
    for (int i = 0; i < batch.size(); ++i) {
      if (batch.labels[i] != set.class_ids[k]) continue;
      sum += z.row(i);
      ++count;
    }
    EXPECT_LT((set.centroids.row(k) - sum / count).cwiseAbs().maxCoeff(),
              1e-14);
  }
  EXPECT_TRUE(std::is_sorted(set.class_ids.begin(), set.class_ids.end()));
}

TEST(ClassCentroidsTest, SingleSampleIsItsEmbedding) {
  const Network net = InitNetwork({{3, 4}, 2, Activation::kRelu}, 1);
  Batch batch{RandomMatrix(2, 3, 5), {7, 3}};
  const CentroidSet set = ClassCentroids(net, batch);
  const Matrix z = Encode(net, batch.features);
  EXPECT_EQ(set.centroids.row(0), z.row(1));
  EXPECT_EQ(set.centroids.row(1), z.row(0));
}

TEST(CostMatrixTest, OneDimensionalArithmetic) {
  const CentroidSet a{{0, 1}, M(2, 1, {0, 3})};
  const CentroidSet b{{0, 1}, M(2, 1, {1, 5})};
  EXPECT_EQ(CostMatrix(a, b), M(2, 2, {1, 5, 2, 2}));
}

TEST(CostMatrixTest, ZeroDiagonalAndTransposeSymmetry) {
  const CentroidSet a{{0, 1, 2}, RandomMatrix(3, 4, 1)};
  const CentroidSet b{{0, 1, 2}, RandomMatrix(3, 4, 2)};
  EXPECT_TRUE(CostMatrix(a, a).diagonal().isZero(0.0));
  EXPECT_EQ(CostMatrix(a, b), Matrix(CostMatrix(b, a).transpose()));
}

TEST(CostMatrixTest, ShapeMismatchThrows) {
  const CentroidSet a{{0, 1}, RandomMatrix(2, 4, 1)};
  const CentroidSet b{{0, 1, 2}, RandomMatrix(3, 4, 2)};
  const CentroidSet c{{0, 1}, RandomMatrix(2, 3, 2)};
  EXPECT_THROW(CostMatrix(a, b), std::invalid_argument);
  EXPECT_THROW(CostMatrix(a, c), std::invalid_argument);
}

TEST(HungarianTest, SmallExamples) {
  Assignment a = Hungarian(M(2, 2, {0, 1, 1, 0}));
  EXPECT_EQ(a.mapping, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.total_cost, 0.0);
  a = Hungarian(M(2, 2, {1, 2, 2, 1}));
  EXPECT_EQ(a.mapping, (std::vector<int>{0, 1}));
  EXPECT_EQ(a.total_cost, 2.0);
  a = Hungarian(M(2, 2, {5, 1, 1, 5}));
  EXPECT_EQ(a.mapping, (std::vector<int>{1, 0}));
}

TEST(HungarianTest, TiesResolveToLexicographicallySmallest) {
  // Every permutation costs the same.
  EXPECT_EQ(Hungarian(Matrix::Ones(4, 4)).mapping,
            (std::vector<int>{0, 1, 2, 3}));
  // Two optima: [1,0,2] and [2,0,1]... only those with cost 3.
  const Matrix cost = M(3, 3, {2, 1, 1, 1, 2, 2, 2, 2, 1});
  const Assignment a = Hungarian(cost);
  EXPECT_EQ(a.mapping, BruteForceAssignment(cost).mapping);
  EXPECT_EQ(a.mapping, (std::vector<int>{1, 0, 2}));
}

TEST(HungarianTest, MatchesBruteForceOnRandomMatrices) {
  Rng rng(17);
  for (int n = 1; n <= 7; ++n) {
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix cost = RandomCost(n, rng);
      const Assignment h = Hungarian(cost);
      const Assignment b = BruteForceAssignment(cost);
      ASSERT_TRUE(h.IsPermutation());
      EXPECT_EQ(h.total_cost, b.total_cost) << "n=" << n;
      EXPECT_EQ(h.mapping, b.mapping) << "n=" << n;
    }
  }
}

TEST(HungarianTest, MatchesBruteForceOnTieHeavyMatrices) {
  Rng rng(5);
  std::uniform_int_distribution<int> small(0, 2);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 100; ++trial) {
      Matrix cost(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) cost(i, j) = small(rng);
      }
      EXPECT_EQ(Hungarian(cost).mapping, BruteForceAssignment(cost).mapping);
    }
  }
}

TEST(HungarianTest, TotalCostIsSumOfAssignedEntries) {
  Rng rng(3);
  const Matrix cost = RandomCost(6, rng);
  const Assignment a = Hungarian(cost);
  double total = 0.0;
  for (int i = 0; i < 6; ++i) total += cost(i, a.mapping[i]);
  EXPECT_NEAR(a.total_cost, total, 1e-10);
}

TEST(HungarianTest, RejectsBadInput) {
  EXPECT_THROW(Hungarian(Matrix::Zero(2, 3)), std::invalid_argument);
  Matrix cost = Matrix::Zero(2, 2);
  cost(1, 1) = NAN;
  EXPECT_THROW(Hungarian(cost), std::invalid_argument);
  EXPECT_THROW(BruteForceAssignment(Matrix::Zero(9, 9)),
               std::invalid_argument);
}

TEST(HungarianTest, RecoversRowPermutation) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 7;
    const CentroidSet a{{}, RandomMatrix(n, 3, 1000 + trial)};
    std::vector<int> pi(n);
    std::iota(pi.begin(), pi.end(), 0);
    std::shuffle(pi.begin(), pi.end(), rng);
    CentroidSet permuted{{}, Matrix(n, 3)};
    for (int i = 0; i < n; ++i) permuted.centroids.row(i) = a.centroids.row(pi[i]);
    const Assignment match = Hungarian(CostMatrix(permuted, a));
    for (int i = 0; i < n; ++i) EXPECT_EQ(match.mapping[i], pi[i]);
  }
}

TEST(AssignmentTest, InverseComposesToIdentity) {
  const Assignment a{{2, 0, 3, 1}, 0.0};
  const Assignment inv = a.Inverse();
  ASSERT_TRUE(inv.IsPermutation());
  for (int i = 0; i < 4; ++i) EXPECT_EQ(inv.mapping[a.mapping[i]], i);
  EXPECT_FALSE((Assignment{{0, 0, 1}, 0.0}).IsPermutation());
  EXPECT_FALSE((Assignment{{0, 3}, 0.0}).IsPermutation());
}

TEST(RemapLabelsTest, IdentityAndSwap) {
  Batch batch{RandomMatrix(4, 2, 1), {10, 20, 20, 10}};
  const Batch same = RemapLabels(batch, {10, 20}, {{0, 1}, 0.0}, {0, 1});
  EXPECT_EQ(same.labels, (std::vector<int>{0, 1, 1, 0}));
  EXPECT_EQ(same.features, batch.features);
  const Batch swapped = RemapLabels(batch, {10, 20}, {{1, 0}, 0.0}, {0, 1});
  EXPECT_EQ(swapped.labels, (std::vector<int>{1, 0, 0, 1}));
}

TEST(RemapLabelsTest, InverseRoundTrip) {
  const Batch batch = testing::RandomBatch(30, 2, 5, 3);
  const Assignment a{{3, 0, 4, 1, 2}, 0.0};
  const std::vector<int> ids = {0, 1, 2, 3, 4};
  const Batch there = RemapLabels(batch, ids, a, ids);
  const Batch back = RemapLabels(there, ids, a.Inverse(), ids);
  EXPECT_EQ(back.labels, batch.labels);
}

TEST(RemapLabelsTest, UnknownLabelThrows) {
  Batch batch{RandomMatrix(2, 2, 1), {1, 9}};
  EXPECT_THROW(RemapLabels(batch, {1, 2}, {{0, 1}, 0.0}, {0, 1}),
               std::invalid_argument);
}

}  // namespace
}  // namespace tas
