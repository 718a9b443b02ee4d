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

#ifndef TAS_FISHER_H_
#define TAS_FISHER_H_

// Diagonal empirical Fisher information and the Task Affinity Score.

#include <vector>

#include "tas/nnet.h"

namespace tas {

class FisherDiagonal {
 public:
  // Raw (unnormalized) diagonal. Entries must be finite and nonnegative.
  static FisherDiagonal Raw(Vector entries);
  // Already unit-trace diagonal; throws unless the entries sum to 1 +- 1e-10.
  static FisherDiagonal Normalized(Vector entries);

  const Vector& entries() const { return entries_; }
  bool normalized() const { return normalized_; }
  int size() const { return static_cast<int>(entries_.size()); }

 private:
  FisherDiagonal(Vector entries, bool normalized);

  Vector entries_;
  bool normalized_;
};

struct AffinityScore {
  double value = 0.0;
};

// entry j = mean over rows of grad_rows(i, j)^2.
FisherDiagonal FisherFromSampleGrads(const std::vector<Vector>& sample_grads);

// Diagonal of (1/|X|) sum_i g_i g_i^T, g_i the gradient of sample i's
// negative log-likelihood. Covers every parameter, head included.
FisherDiagonal EmpiricalFisherDiag(const Network& net, const Batch& data);

// Divides by the trace. Throws std::domain_error on an all-zero diagonal.
FisherDiagonal NormalizeUnitTrace(const FisherDiagonal& fisher);

// s = (1/sqrt 2) * || sqrt(f_aa) - sqrt(f_ab) ||_2 on unit-trace diagonals.
AffinityScore TaskAffinityScore(const FisherDiagonal& f_aa,
                                const FisherDiagonal& f_ab);

// Frechet form (1/sqrt 2) * Tr(A + B - 2 (AB)^{1/2})^{1/2}, evaluated for
// diagonal A and B where every matrix function acts elementwise.
AffinityScore FrechetDiagOracle(const FisherDiagonal& f_a,
                                const FisherDiagonal& f_b);

}  // namespace tas

#endif  // TAS_FISHER_H_
