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
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tas {

namespace {

void CheckCost(const Matrix& cost) {
  if (cost.rows() != cost.cols()) {
    throw std::invalid_argument("assignment needs a square cost matrix");
  }
  if (cost.rows() == 0) throw std::invalid_argument("empty cost matrix");
  if (!cost.allFinite()) {
    throw std::invalid_argument("cost matrix entries must be finite");
  }
}

// Costs closer than this are treated as ties.
double TieTolerance(const Matrix& cost) {
  return 1e-9 * std::max(1.0, cost.cwiseAbs().maxCoeff());
}

double SumCost(const Matrix& cost, const std::vector<int>& mapping) {
  double total = 0.0;
  for (size_t i = 0; i < mapping.size(); ++i) total += cost(i, mapping[i]);
  return total;
}

// Shortest-augmenting-path Hungarian method with row and column potentials.
// Returns one optimal mapping plus the final potentials.
struct PotentialSolution {
  std::vector<int> mapping;
  std::vector<double> row_potential;
  std::vector<double> col_potential;
};

PotentialSolution SolveWithPotentials(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> row_of_col(n + 1, 0), way(n + 1, 0);
  for (int row = 1; row <= n; ++row) {
    row_of_col[0] = row;
    int col0 = 0;
    std::vector<double> min_slack(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[col0] = true;
      const int row0 = row_of_col[col0];
      double delta = kInf;
      int col1 = 0;
      for (int col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double slack = cost(row0 - 1, col - 1) - u[row0] - v[col];
        if (slack < min_slack[col]) {
          min_slack[col] = slack;
          way[col] = col0;
        }
        if (min_slack[col] < delta) {
          delta = min_slack[col];
          col1 = col;
        }
      }
      for (int col = 0; col <= n; ++col) {
        if (used[col]) {
          u[row_of_col[col]] += delta;
          v[col] -= delta;
        } else {
          min_slack[col] -= delta;
        }
      }
      col0 = col1;
    } while (row_of_col[col0] != 0);
    do {
      const int col1 = way[col0];
      row_of_col[col0] = row_of_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  PotentialSolution solution;
  solution.mapping.assign(n, -1);
  for (int col = 1; col <= n; ++col) {
    solution.mapping[row_of_col[col] - 1] = col - 1;
  }
  solution.row_potential.assign(u.begin() + 1, u.end());
  solution.col_potential.assign(v.begin() + 1, v.end());
  return solution;
}

}  // namespace

bool Assignment::IsPermutation() const {
  std::vector<char> seen(mapping.size(), false);
  for (int target : mapping) {
    if (target < 0 || target >= static_cast<int>(mapping.size()) ||
        seen[target]) {
      return false;
    }
    seen[target] = true;
  }
  return true;
}

Assignment Assignment::Inverse() const {
  Assignment inverse;
  inverse.mapping.assign(mapping.size(), -1);
  for (size_t i = 0; i < mapping.size(); ++i) {
    inverse.mapping[mapping[i]] = static_cast<int>(i);
  }
  inverse.total_cost = total_cost;
  return inverse;
}

CentroidSet CentroidsOf(const Matrix& embeddings,
                        const std::vector<int>& labels) {
  if (embeddings.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("embeddings and labels disagree in length");
  }
  std::map<int, std::pair<Vector, int>> sums;
  for (size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = sums.try_emplace(
        labels[i], Vector::Zero(embeddings.cols()), 0);
    it->second.first += embeddings.row(i).transpose();
    ++it->second.second;
  }
  if (sums.empty()) throw std::invalid_argument("no samples to average");
  CentroidSet set;
  set.centroids.resize(static_cast<Eigen::Index>(sums.size()), embeddings.cols());
  int row = 0;
  for (const auto& [class_id, sum_count] : sums) {
    set.class_ids.push_back(class_id);
    set.centroids.row(row++) =
        (sum_count.first / static_cast<double>(sum_count.second)).transpose();
  }
  return set;
}

CentroidSet ClassCentroids(const Network& net, const Batch& data) {
  return CentroidsOf(Encode(net, data.features), data.labels);
}

Matrix CostMatrix(const CentroidSet& a, const CentroidSet& b) {
  if (a.centroids.rows() != b.centroids.rows() ||
      a.centroids.cols() != b.centroids.cols()) {
    throw std::invalid_argument("centroid sets differ in shape");
  }
  const Eigen::Index n = a.centroids.rows();
  Matrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      cost(i, j) = (a.centroids.row(i) - b.centroids.row(j)).norm();
    }
  }
  return cost;
}

Assignment Hungarian(const Matrix& cost) {
  CheckCost(cost);
  const int n = static_cast<int>(cost.rows());
  PotentialSolution solution = SolveWithPotentials(cost);

  // Every optimal matching is a perfect matching on the zero-slack edges.
  // Walk rows in order and give each the smallest column that still
  // completes to such a matching, re-routing the current one along an
  // alternating cycle when needed.
  const double tol = TieTolerance(cost);
  auto tight = [&](int row, int col) {
    return cost(row, col) - solution.row_potential[row] -
               solution.col_potential[col] <= tol;
  };
  std::vector<int>& match = solution.mapping;
  std::vector<int> row_of(n);
  for (int row = 0; row < n; ++row) row_of[match[row]] = row;

  for (int row = 0; row < n; ++row) {
    // Rows (among row..n-1) with an alternating path into `row`;
    // next_row[r] is r's successor on it.
    std::vector<int> next_row(n, -1);
    std::vector<char> reaches(n, false);
    reaches[row] = true;
    std::deque<int> frontier{row};
    while (!frontier.empty()) {
      const int target = frontier.front();
      frontier.pop_front();
      for (int r = row + 1; r < n; ++r) {
        if (!reaches[r] && tight(r, match[target])) {
          reaches[r] = true;
          next_row[r] = target;
          frontier.push_back(r);
        }
      }
    }
    int best_col = match[row];
    for (int col = 0; col < match[row]; ++col) {
      const int owner = row_of[col];
      if (owner > row && reaches[owner] && tight(row, col)) {
        best_col = col;
        break;
      }
    }
    if (best_col == match[row]) continue;
    // Rotate columns along owner -> ... -> row.
    int r = row_of[best_col];
    int carried = best_col;
    while (r != row) {
      const int next = next_row[r];
      const int next_col = match[next];
      match[r] = next_col;
      row_of[next_col] = r;
      r = next;
    }
    match[row] = carried;
    row_of[carried] = row;
  }

  Assignment assignment;
  assignment.mapping = std::move(match);
  assignment.total_cost = SumCost(cost, assignment.mapping);
  return assignment;
}

Assignment BruteForceAssignment(const Matrix& cost) {
  CheckCost(cost);
  const int n = static_cast<int>(cost.rows());
  if (n > 8) {
    throw std::invalid_argument("brute-force assignment limited to n <= 8");
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, SumCost(cost, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));

  const double tol = TieTolerance(cost);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    if (SumCost(cost, perm) <= best + tol) break;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {perm, SumCost(cost, perm)};
}

Batch RemapLabels(const Batch& data, const std::vector<int>& source_class_ids,
                  const Assignment& assignment,
                  const std::vector<int>& target_slot_order) {
  if (source_class_ids.size() != assignment.mapping.size() ||
      target_slot_order.size() != assignment.mapping.size()) {
    throw std::invalid_argument("class lists and assignment differ in size");
  }
  std::map<int, int> new_label;
  for (size_t slot = 0; slot < source_class_ids.size(); ++slot) {
    new_label[source_class_ids[slot]] =
        target_slot_order[assignment.mapping[slot]];
  }
  Batch out;
  out.features = data.features;
  out.labels.reserve(data.labels.size());
  for (int label : data.labels) {
    auto it = new_label.find(label);
    if (it == new_label.end()) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " is not a source class");
    }
    out.labels.push_back(it->second);
  }
  return out;
}

}  // namespace tas
