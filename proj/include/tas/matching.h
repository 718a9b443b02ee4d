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

#ifndef TAS_MATCHING_H_
#define TAS_MATCHING_H_

// Class centroids and minimum-cost bipartite matching between the classes
// of two tasks.

#include <vector>

#include "tas/nnet.h"

namespace tas {

struct CentroidSet {
  std::vector<int> class_ids;
  Matrix centroids;  // one row per class, in class_ids order
};

struct Assignment {
  // mapping[i] is the target slot matched to source slot i.
  std::vector<int> mapping;
  double total_cost = 0.0;

  bool IsPermutation() const;
  Assignment Inverse() const;
};

// Per-class mean of the given embeddings, classes in ascending id order.
CentroidSet CentroidsOf(const Matrix& embeddings, const std::vector<int>& labels);

// Per-class mean of encoder outputs, classes in ascending label order.
CentroidSet ClassCentroids(const Network& net, const Batch& data);

// cost(i, j) = || a.centroids[i] - b.centroids[j] ||_2.
Matrix CostMatrix(const CentroidSet& a, const CentroidSet& b);

// Minimum-cost perfect matching in O(n^3). Among optimal matchings the
// lexicographically smallest mapping is returned.
Assignment Hungarian(const Matrix& cost);

// Exhaustive search over all n! permutations (n <= 8), same tie-break.
Assignment BruteForceAssignment(const Matrix& cost);

// Replaces every label source_class_ids[i] by
// target_slot_order[assignment.mapping[i]]. Features are copied unchanged.
Batch RemapLabels(const Batch& data, const std::vector<int>& source_class_ids,
                  const Assignment& assignment,
                  const std::vector<int>& target_slot_order);

}  // namespace tas

#endif  // TAS_MATCHING_H_
