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

#ifndef TAS_TASKS_H_
#define TAS_TASKS_H_

// Datasets, source and target tasks, few-shot episodes and synthetic data
// with a known family structure.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tas/nnet.h"

namespace tas {

class Dataset {
 public:
  Dataset() = default;
  // Throws unless every class has at least two samples.
  Dataset(Matrix features, std::vector<int> labels);

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::map<int, std::vector<int>>& class_index() const {
    return class_index_;
  }
  int size() const { return static_cast<int>(labels_.size()); }
  int dim() const { return static_cast<int>(features_.cols()); }
  int num_classes() const { return static_cast<int>(class_index_.size()); }
  // Ascending.
  std::vector<int> class_ids() const;
  const std::vector<int>& rows_of(int class_id) const;

  // Rows with their labels replaced by the position of the label in
  // slot_classes. Throws if a row's label is not listed.
  Batch SlotBatch(const std::vector<int>& rows,
                  const std::vector<int>& slot_classes) const;
  // Rows with their original labels.
  Batch RawBatch(const std::vector<int>& rows) const;
  // Every row belonging to one of the classes, in row order.
  Dataset Subset(const std::vector<int>& class_ids) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::map<int, std::vector<int>> class_index_;
};

struct TaskSpec {
  int task_id = 0;
  // Slot order: label k of the task's batches is class_ids[k].
  std::vector<int> class_ids;
  // Ascending row indices.
  std::vector<int> support_rows;
  std::vector<int> query_rows;

  // Target tasks carry no query rows; pass require_query = false for them.
  void Validate(const Dataset& data, bool require_query = true) const;
};

struct Episode {
  int m_way = 0;
  int k_shot = 0;
  // Dataset class of each episode label 0..m-1.
  std::vector<int> class_ids;
  std::vector<int> support_rows;
  std::vector<int> query_rows;
  Batch support;
  Batch query;
};

struct SyntheticConfig {
  int n_families = 4;
  int classes_per_family = 6;
  int samples_per_class = 40;
  int input_dim = 16;
  double family_spread = 6.0;
  double class_spread = 2.0;
  double noise_sigma = 0.6;
  // When positive, the class perturbations of a family all lie in a random
  // subspace of this dimension owned by the family; 0 means unrestricted.
  int family_subspace_dim = 0;
  uint64_t seed = 0;

  void Validate() const;
  int family_of(int class_id) const { return class_id / classes_per_family; }
};

// Family means on a sphere of radius family_spread, class means at distance
// class_spread from their family mean, isotropic Gaussian samples around
// the class means. Class c belongs to family c / classes_per_family.
Dataset MakeSynthetic(const SyntheticConfig& cfg);

// How a synthetic dataset is cut into disjoint train and test classes:
// the last test_classes_per_family classes (by id) of each listed family go
// to the test side, everything else to the train side.
struct ClassSplit {
  std::vector<int> test_families;
  int test_classes_per_family = 3;
};

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

TrainTestSplit SplitClasses(const Dataset& data, const SyntheticConfig& cfg,
                            const ClassSplit& split);

// Header f0..f{d-1},label; features written with 17 significant digits.
Dataset LoadCsv(const std::string& path);
std::string FormatCsv(const Dataset& data);

constexpr double kSourceSupportFraction = 0.7;

// A task over the given classes (sorted into slot order) with a seeded
// per-class support/query split.
TaskSpec MakeTask(const Dataset& data, std::vector<int> class_ids, int task_id,
                  uint64_t seed,
                  double support_fraction = kSourceSupportFraction);

// s_count tasks of n_test classes each. Task i draws its classes and its
// per-class support/query split from DeriveSeed(seed, i).
std::vector<TaskSpec> SampleSourceTasks(
    const Dataset& train, int s_count, int n_test, uint64_t seed,
    double support_fraction = kSourceSupportFraction);

// A single task over every class of the test support data; all rows are
// support rows and there is no query set.
TaskSpec BuildTargetTask(const Dataset& test_support);

// m classes drawn from `classes` (every class of data when empty), with k
// support and q query rows each.
Episode SampleEpisode(const Dataset& data, int m, int k, int q, uint64_t seed,
                      const std::vector<int>& classes = {});

}  // namespace tas

#endif  // TAS_TASKS_H_
