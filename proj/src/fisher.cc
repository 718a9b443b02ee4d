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

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tas {

namespace {

constexpr double kTraceTolerance = 1e-10;

void CheckComparable(const FisherDiagonal& a, const FisherDiagonal& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("Fisher diagonals differ in length");
  }
  if (!a.normalized() || !b.normalized()) {
    throw std::invalid_argument("affinity needs unit-trace Fisher diagonals");
  }
}

}  // namespace

FisherDiagonal::FisherDiagonal(Vector entries, bool normalized)
    : entries_(std::move(entries)), normalized_(normalized) {
  if (!entries_.allFinite() || (entries_.array() < 0.0).any()) {
    throw std::invalid_argument(
        "Fisher entries must be finite and nonnegative");
  }
}

FisherDiagonal FisherDiagonal::Raw(Vector entries) {
  return FisherDiagonal(std::move(entries), false);
}

FisherDiagonal FisherDiagonal::Normalized(Vector entries) {
  if (std::abs(entries.sum() - 1.0) > kTraceTolerance) {
    throw std::invalid_argument("Fisher diagonal does not have unit trace");
  }
  return FisherDiagonal(std::move(entries), true);
}

FisherDiagonal FisherFromSampleGrads(const std::vector<Vector>& sample_grads) {
  if (sample_grads.empty()) {
    throw std::invalid_argument("Fisher needs at least one sample");
  }
  Vector sum = Vector::Zero(sample_grads.front().size());
  for (const Vector& g : sample_grads) sum += g.cwiseAbs2();
  return FisherDiagonal::Raw(sum / static_cast<double>(sample_grads.size()));
}

FisherDiagonal EmpiricalFisherDiag(const Network& net, const Batch& data) {
  return FisherFromSampleGrads(PerSampleGrads(net, data));
}

FisherDiagonal NormalizeUnitTrace(const FisherDiagonal& fisher) {
  const double trace = fisher.entries().sum();
  if (!(trace > 0.0)) {
    throw std::domain_error("cannot normalize an all-zero Fisher diagonal");
  }
  return FisherDiagonal::Normalized(fisher.entries() / trace);
}

AffinityScore TaskAffinityScore(const FisherDiagonal& f_aa,
                                const FisherDiagonal& f_ab) {
  CheckComparable(f_aa, f_ab);
  const double squared =
      (f_aa.entries().cwiseSqrt() - f_ab.entries().cwiseSqrt()).squaredNorm();
  return {std::sqrt(squared) / std::sqrt(2.0)};
}

AffinityScore FrechetDiagOracle(const FisherDiagonal& f_a,
                                const FisherDiagonal& f_b) {
  CheckComparable(f_a, f_b);
  double trace = 0.0;
  for (int i = 0; i < f_a.size(); ++i) {
    const double a = f_a.entries()[i];
    const double b = f_b.entries()[i];
    trace += a + b - 2.0 * std::sqrt(a * b);
  }
  // Rounding can push a vanishing trace slightly negative.
  return {std::sqrt(std::max(trace, 0.0)) / std::sqrt(2.0)};
}

}  // namespace tas
