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

#include "tas/tasks.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tas/rng.h"

namespace tas {

namespace {

Vector RandomDirection(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

std::vector<std::string> SplitCommas(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::runtime_error CsvError(const std::string& path, int line,
                            const std::string& what) {
  return std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.rows() != static_cast<Eigen::Index>(labels_.size())) {
    throw std::invalid_argument("features and labels disagree in length");
  }
  for (int row = 0; row < size(); ++row) {
    if (labels_[row] < 0) throw std::invalid_argument("labels must be >= 0");
    class_index_[labels_[row]].push_back(row);
  }
  for (const auto& [class_id, rows] : class_index_) {
    if (rows.size() < 2) {
      throw std::invalid_argument("class " + std::to_string(class_id) +
                                  " has fewer than 2 samples");
    }
  }
}

std::vector<int> Dataset::class_ids() const {
  std::vector<int> ids;
  for (const auto& entry : class_index_) ids.push_back(entry.first);
  return ids;
}

const std::vector<int>& Dataset::rows_of(int class_id) const {
  auto it = class_index_.find(class_id);
  if (it == class_index_.end()) {
    throw std::invalid_argument("unknown class " + std::to_string(class_id));
  }
  return it->second;
}

Batch Dataset::SlotBatch(const std::vector<int>& rows,
                         const std::vector<int>& slot_classes) const {
  std::map<int, int> slot_of;
  for (size_t slot = 0; slot < slot_classes.size(); ++slot) {
    slot_of[slot_classes[slot]] = static_cast<int>(slot);
  }
  Batch batch = RawBatch(rows);
  for (int& label : batch.labels) {
    auto it = slot_of.find(label);
    if (it == slot_of.end()) {
      throw std::invalid_argument("row label " + std::to_string(label) +
                                  " is not one of the task classes");
    }
    label = it->second;
  }
  return batch;
}

Batch Dataset::RawBatch(const std::vector<int>& rows) const {
  Batch batch;
  batch.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
  batch.labels.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= size()) {
      throw std::out_of_range("row index out of range");
    }
    batch.features.row(i) = features_.row(rows[i]);
    batch.labels.push_back(labels_[rows[i]]);
  }
  return batch;
}

Dataset Dataset::Subset(const std::vector<int>& class_ids) const {
  const std::set<int> keep(class_ids.begin(), class_ids.end());
  std::vector<int> rows;
  for (int row = 0; row < size(); ++row) {
    if (keep.count(labels_[row])) rows.push_back(row);
  }
  Batch batch = RawBatch(rows);
  return Dataset(std::move(batch.features), std::move(batch.labels));
}

void TaskSpec::Validate(const Dataset& data, bool require_query) const {
  const std::set<int> classes(class_ids.begin(), class_ids.end());
  if (classes.size() != class_ids.size() || classes.empty()) {
    throw std::invalid_argument("task classes must be distinct and nonempty");
  }
  if (support_rows.empty() || (require_query && query_rows.empty())) {
    throw std::invalid_argument("task support and query sets must be nonempty");
  }
  std::vector<int> overlap;
  std::set_intersection(support_rows.begin(), support_rows.end(),
                        query_rows.begin(), query_rows.end(),
                        std::back_inserter(overlap));
  if (!overlap.empty()) {
    throw std::invalid_argument("task support and query sets overlap");
  }
  for (const auto* rows : {&support_rows, &query_rows}) {
    if (!std::is_sorted(rows->begin(), rows->end())) {
      throw std::invalid_argument("task rows must be ascending");
    }
    for (int row : *rows) {
      if (row < 0 || row >= data.size() || !classes.count(data.labels()[row])) {
        throw std::invalid_argument("task row outside the task classes");
      }
    }
  }
}

void SyntheticConfig::Validate() const {
  if (n_families <= 0 || classes_per_family <= 0 || input_dim <= 0) {
    throw std::invalid_argument("synthetic sizes must be positive");
  }
  if (samples_per_class < 2) {
    throw std::invalid_argument("need at least 2 samples per class");
  }
  if (!(family_spread > 0.0 && class_spread > 0.0 && noise_sigma > 0.0)) {
    throw std::invalid_argument("synthetic spreads and noise must be positive");
  }
  if (family_subspace_dim < 0 || family_subspace_dim > input_dim) {
    throw std::invalid_argument("family_subspace_dim must lie in [0, input_dim]");
  }
  if (!(class_spread < family_spread)) {
    throw std::invalid_argument("class_spread must be below family_spread");
  }
}

Dataset MakeSynthetic(const SyntheticConfig& cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  const int n_classes = cfg.n_families * cfg.classes_per_family;
  const int n = n_classes * cfg.samples_per_class;
  Matrix features(n, cfg.input_dim);
  std::vector<int> labels;
  labels.reserve(n);
  int row = 0;
  for (int family = 0; family < cfg.n_families; ++family) {
    const Vector family_mean =
        cfg.family_spread * RandomDirection(cfg.input_dim, rng);
    Matrix basis;  // orthonormal columns spanning the family subspace
    if (cfg.family_subspace_dim > 0) {
      Matrix gaussian(cfg.input_dim, cfg.family_subspace_dim);
      for (int k = 0; k < cfg.family_subspace_dim; ++k) {
        gaussian.col(k) = RandomDirection(cfg.input_dim, rng);
      }
      Eigen::HouseholderQR<Matrix> qr(gaussian);
      basis = qr.householderQ() *
              Matrix::Identity(cfg.input_dim, cfg.family_subspace_dim);
    }
    for (int c = 0; c < cfg.classes_per_family; ++c) {
      const Vector direction =
          cfg.family_subspace_dim > 0
              ? Vector((basis * RandomDirection(cfg.family_subspace_dim, rng))
                           .normalized())
              : RandomDirection(cfg.input_dim, rng);
      const Vector class_mean = family_mean + cfg.class_spread * direction;
      const int class_id = family * cfg.classes_per_family + c;
      for (int s = 0; s < cfg.samples_per_class; ++s) {
        for (int j = 0; j < cfg.input_dim; ++j) {
          features(row, j) = class_mean[j] + noise(rng);
        }
        labels.push_back(class_id);
        ++row;
      }
    }
  }
  return Dataset(std::move(features), std::move(labels));
}

TrainTestSplit SplitClasses(const Dataset& data, const SyntheticConfig& cfg,
                            const ClassSplit& split) {
  if (split.test_classes_per_family <= 0 ||
      split.test_classes_per_family >= cfg.classes_per_family) {
    throw std::invalid_argument(
        "test_classes_per_family must leave train classes in every family");
  }
  std::set<int> test_families(split.test_families.begin(),
                              split.test_families.end());
  std::vector<int> train_classes, test_classes;
  for (int class_id : data.class_ids()) {
    const int family = cfg.family_of(class_id);
    const int position = class_id % cfg.classes_per_family;
    if (test_families.count(family) &&
        position >= cfg.classes_per_family - split.test_classes_per_family) {
      test_classes.push_back(class_id);
    } else {
      train_classes.push_back(class_id);
    }
  }
  if (test_classes.empty()) {
    throw std::invalid_argument("class split leaves no test classes");
  }
  return {data.Subset(train_classes), data.Subset(test_classes)};
}

Dataset LoadCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw CsvError(path, 1, "missing header");
  const std::vector<std::string> header = SplitCommas(line);
  if (header.empty() || header.back() != "label") {
    throw CsvError(path, 1, "missing label column");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < dim; ++j) {
    if (header[j] != "f" + std::to_string(j)) {
      throw CsvError(path, 1, "expected column f" + std::to_string(j));
    }
  }
  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = SplitCommas(line);
    if (static_cast<int>(cells.size()) != dim + 1) {
      throw CsvError(path, line_no,
                     "expected " + std::to_string(dim + 1) + " cells, got " +
                         std::to_string(cells.size()));
    }
    for (int j = 0; j < dim; ++j) {
      const std::string& cell = cells[j];
      double value = 0.0;
      auto [end, ec] =
          std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || end != cell.data() + cell.size() ||
          cell.empty()) {
        throw CsvError(path, line_no, "non-numeric feature '" + cell + "'");
      }
      values.push_back(value);
    }
    const std::string& cell = cells[dim];
    int label = 0;
    auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || end != cell.data() + cell.size() || cell.empty() ||
        label < 0) {
      throw CsvError(path, line_no, "label must be a nonnegative integer");
    }
    labels.push_back(label);
  }
  Matrix features(static_cast<Eigen::Index>(labels.size()), dim);
  for (size_t i = 0; i < labels.size(); ++i) {
    for (int j = 0; j < dim; ++j) features(i, j) = values[i * dim + j];
  }
  return Dataset(std::move(features), std::move(labels));
}

std::string FormatCsv(const Dataset& data) {
  std::string out;
  for (int j = 0; j < data.dim(); ++j) out += "f" + std::to_string(j) + ",";
  out += "label\n";
  char buffer[32];
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", data.features()(i, j));
      out += buffer;
      out += ',';
    }
    out += std::to_string(data.labels()[i]);
    out += '\n';
  }
  return out;
}

TaskSpec MakeTask(const Dataset& data, std::vector<int> class_ids, int task_id,
                  uint64_t seed, double support_fraction) {
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("support fraction must lie in (0, 1)");
  }
  std::sort(class_ids.begin(), class_ids.end());
  Rng rng(seed);
  TaskSpec task;
  task.task_id = task_id;
  task.class_ids = std::move(class_ids);
  for (int class_id : task.class_ids) {
    std::vector<int> rows = data.rows_of(class_id);
    std::shuffle(rows.begin(), rows.end(), rng);
    const int n = static_cast<int>(rows.size());
    const int n_support = std::clamp(
        static_cast<int>(std::lround(support_fraction * n)), 1, n - 1);
    task.support_rows.insert(task.support_rows.end(), rows.begin(),
                             rows.begin() + n_support);
    task.query_rows.insert(task.query_rows.end(), rows.begin() + n_support,
                           rows.end());
  }
  std::sort(task.support_rows.begin(), task.support_rows.end());
  std::sort(task.query_rows.begin(), task.query_rows.end());
  task.Validate(data);
  return task;
}

std::vector<TaskSpec> SampleSourceTasks(const Dataset& train, int s_count,
                                        int n_test, uint64_t seed,
                                        double support_fraction) {
  if (n_test < 1 || n_test > train.num_classes()) {
    throw std::invalid_argument("n_test = " + std::to_string(n_test) +
                                " exceeds the " +
                                std::to_string(train.num_classes()) +
                                " available classes");
  }
  if (s_count < 1) throw std::invalid_argument("s_count must be positive");
  const std::vector<int> all_classes = train.class_ids();
  std::vector<TaskSpec> tasks;
  tasks.reserve(s_count);
  for (int i = 0; i < s_count; ++i) {
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(i)));
    std::vector<int> classes = all_classes;
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(n_test);
    tasks.push_back(MakeTask(train, std::move(classes), i, rng(),
                             support_fraction));
  }
  return tasks;
}

TaskSpec BuildTargetTask(const Dataset& test_support) {
  if (test_support.size() == 0) {
    throw std::invalid_argument("empty test support set");
  }
  TaskSpec task;
  task.task_id = -1;
  task.class_ids = test_support.class_ids();
  task.support_rows.resize(test_support.size());
  std::iota(task.support_rows.begin(), task.support_rows.end(), 0);
  return task;
}

Episode SampleEpisode(const Dataset& data, int m, int k, int q, uint64_t seed,
                      const std::vector<int>& classes) {
  if (m < 1 || k < 1 || q < 1) {
    throw std::invalid_argument("episode needs m, k, q >= 1");
  }
  std::vector<int> eligible;
  for (int class_id : classes.empty() ? data.class_ids() : classes) {
    if (static_cast<int>(data.rows_of(class_id).size()) >= k + q) {
      eligible.push_back(class_id);
    }
  }
  if (static_cast<int>(eligible.size()) < m) {
    throw std::invalid_argument(
        "insufficient samples: " + std::to_string(eligible.size()) +
        " classes have " + std::to_string(k + q) + " rows, episode needs " +
        std::to_string(m));
  }
  Rng rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(m);

  Episode episode;
  episode.m_way = m;
  episode.k_shot = k;
  episode.class_ids = eligible;
  for (int class_id : eligible) {
    std::vector<int> rows = data.rows_of(class_id);
    std::shuffle(rows.begin(), rows.end(), rng);
    episode.support_rows.insert(episode.support_rows.end(), rows.begin(),
                                rows.begin() + k);
    episode.query_rows.insert(episode.query_rows.end(), rows.begin() + k,
                              rows.begin() + k + q);
  }
  episode.support = data.SlotBatch(episode.support_rows, episode.class_ids);
  episode.query = data.SlotBatch(episode.query_rows, episode.class_ids);
  return episode;
}

}  // namespace tas
