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


#include "tas/fisher.h"

#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "tas/rng.h"
#include "test_util.h"

namespace tas {
namespace {

using ::tas::testing::RandomBatch;

Vector Vec(std::initializer_list<double> values) {
  Vector v(values.size());
  int i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

// Random point on the simplex, with some exact zeros mixed in.
FisherDiagonal RandomNormalized(int n, Rng& rng) {
  std::exponential_distribution<double> exp(1.0);
  std::bernoulli_distribution zero(0.15);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = zero(rng) ? 0.0 : exp(rng);
  if (v.sum() == 0.0) v[0] = 1.0;
  return NormalizeUnitTrace(FisherDiagonal::Raw(v));
}

TEST(FisherDiagonalTest, RejectsNegativeAndNonFinite) {
  EXPECT_THROW(FisherDiagonal::Raw(Vec({1.0, -0.1})), std::invalid_argument);
  EXPECT_THROW(FisherDiagonal::Raw(Vec({1.0, INFINITY})),
               std::invalid_argument);
  EXPECT_THROW(FisherDiagonal::Normalized(Vec({0.5, 0.6})),
               std::invalid_argument);
  EXPECT_TRUE(FisherDiagonal::Normalized(Vec({0.5, 0.5})).normalized());
  EXPECT_FALSE(FisherDiagonal::Raw(Vec({0.5, 0.5})).normalized());
}

TEST(EmpiricalFisherTest, SingleSampleIsSquaredGradient) {
  const Network net = InitNetwork({{3, 4}, 2, Activation::kTanh}, 1);
  const Batch batch = RandomBatch(1, 3, 2, 2);
  const Vector g = Grad(net, batch);
  const FisherDiagonal fisher = EmpiricalFisherDiag(net, batch);
  EXPECT_FALSE(fisher.normalized());
  EXPECT_LT((fisher.entries() - g.cwiseProduct(g)).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(EmpiricalFisherTest, DuplicatedBatchUnchanged) {
  const Network net = InitNetwork({{3, 5, 4}, 3, Activation::kTanh}, 2);
  const Batch batch = RandomBatch(4, 3, 3, 3);
  Batch doubled;
  doubled.features.resize(8, 3);
  for (int i = 0; i < 4; ++i) {
    doubled.features.row(2 * i) = batch.features.row(i);
    doubled.features.row(2 * i + 1) = batch.features.row(i);
    doubled.labels.push_back(batch.labels[i]);
    doubled.labels.push_back(batch.labels[i]);
  }
  const Vector a = EmpiricalFisherDiag(net, batch).entries();
  const Vector b = EmpiricalFisherDiag(net, doubled).entries();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-15 * (1.0 + a.maxCoeff()));
}

TEST(EmpiricalFisherTest, MatchesLoopOverSamples) {
  const Network net = InitNetwork({{4, 6, 3}, 3, Activation::kRelu}, 5);
  const Batch batch = RandomBatch(3, 4, 3, 6);
  Vector expected = Vector::Zero(net.param_count());
  for (int i = 0; i < 3; ++i) {
    const Vector g = Grad(net, SliceBatch(batch, {i}));
    for (Eigen::Index j = 0; j < g.size(); ++j) expected[j] += g[j] * g[j];
  }
  expected /= 3.0;
  const Vector got = EmpiricalFisherDiag(net, batch).entries();
  EXPECT_LT((got - expected).cwiseAbs().maxCoeff(),
            1e-14 * expected.maxCoeff());
}

TEST(EmpiricalFisherTest, EmptyBatchThrows) {
  const Network net = InitNetwork({{2, 2}, 2, Activation::kRelu}, 1);
  EXPECT_THROW(EmpiricalFisherDiag(net, Batch{Matrix(0, 2), {}}),
               std::invalid_argument);
  EXPECT_THROW(FisherFromSampleGrads({}), std::invalid_argument);
}

TEST(NormalizeUnitTraceTest, Arithmetic) {
  const FisherDiagonal f =
      NormalizeUnitTrace(FisherDiagonal::Raw(Vec({2, 3, 5})));
  EXPECT_TRUE(f.normalized());
  EXPECT_NEAR(f.entries()[0], 0.2, 1e-16);
  EXPECT_NEAR(f.entries()[1], 0.3, 1e-16);
  EXPECT_NEAR(f.entries()[2], 0.5, 1e-16);
}

TEST(NormalizeUnitTraceTest, Idempotent) {
  Rng rng(4);
  const FisherDiagonal f = RandomNormalized(30, rng);
  const FisherDiagonal g = NormalizeUnitTrace(f);
  EXPECT_LT((f.entries() - g.entries()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NormalizeUnitTraceTest, AllZeroThrows) {
  EXPECT_THROW(NormalizeUnitTrace(FisherDiagonal::Raw(Vector::Zero(4))),
               std::domain_error);
}

TEST(TaskAffinityScoreTest, IdenticalIsZero) {
  Rng rng(1);
  const FisherDiagonal f = RandomNormalized(10, rng);
  EXPECT_EQ(TaskAffinityScore(f, f).value, 0.0);
}

TEST(TaskAffinityScoreTest, DisjointSupportIsOne) {
  const auto a = FisherDiagonal::Normalized(Vec({1, 0}));
  const auto b = FisherDiagonal::Normalized(Vec({0, 1}));
  EXPECT_NEAR(TaskAffinityScore(a, b).value, 1.0, 1e-15);
  EXPECT_NEAR(FrechetDiagOracle(a, b).value, 1.0, 1e-15);
}

TEST(TaskAffinityScoreTest, HalfSplitAgainstClosedForm) {
  const auto a = FisherDiagonal::Normalized(Vec({1, 0}));
  const auto b = FisherDiagonal::Normalized(Vec({0.5, 0.5}));
  // Hellinger-type value from the closed form 1 - sum sqrt(p q).
  const double expected = std::sqrt(1.0 - std::sqrt(0.5));
  EXPECT_NEAR(TaskAffinityScore(a, b).value, expected, 1e-15);
  EXPECT_NEAR(TaskAffinityScore(a, b).value, 0.5412, 5e-5);
}

TEST(TaskAffinityScoreTest, RejectsMismatchAndUnnormalized) {
  const auto a = FisherDiagonal::Normalized(Vec({1, 0}));
  const auto b = FisherDiagonal::Normalized(Vec({0.2, 0.3, 0.5}));
  const auto raw = FisherDiagonal::Raw(Vec({1, 1}));
  EXPECT_THROW(TaskAffinityScore(a, b), std::invalid_argument);
  EXPECT_THROW(TaskAffinityScore(a, raw), std::invalid_argument);
  EXPECT_THROW(FrechetDiagOracle(raw, a), std::invalid_argument);
}

TEST(TaskAffinityScoreTest, RandomPairsBoundedAndMatchOracle) {
  Rng rng(2026);
  std::uniform_int_distribution<int> length(1, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = length(rng);
    const FisherDiagonal a = RandomNormalized(n, rng);
    const FisherDiagonal b = RandomNormalized(n, rng);
    const double s = TaskAffinityScore(a, b).value;
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0 + 1e-12);
    EXPECT_NEAR(s, FrechetDiagOracle(a, b).value, 1e-12);
    // Symmetric in its arguments as a function of two diagonals.
    EXPECT_NEAR(s, TaskAffinityScore(b, a).value, 1e-15);
  }
}

TEST(TaskAffinityScoreTest, ZeroOnlyForEqualInputs) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const FisherDiagonal a = RandomNormalized(5, rng);
    const FisherDiagonal b = RandomNormalized(5, rng);
    if ((a.entries() - b.entries()).cwiseAbs().maxCoeff() > 1e-6) {
      EXPECT_GT(TaskAffinityScore(a, b).value, 0.0);
    }
  }
}

}  // namespace
}  // namespace tas
