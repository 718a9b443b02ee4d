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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "tas/io.h"
#include "tas/rng.h"
#include "test_util.h"

namespace tas {
namespace {

namespace fs = std::filesystem;

SyntheticConfig SmallConfig(uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_families = 3;
  cfg.classes_per_family = 4;
  cfg.samples_per_class = 12;
  cfg.input_dim = 6;
  cfg.seed = seed;
  return cfg;
}

fs::path TempPath(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tas_tasks_test";
  fs::create_directories(dir);
  return dir / name;
}

bool Disjoint(std::vector<int> a, std::vector<int> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(both));
  return both.empty();
}

// Upper tail of the chi-square distribution, Wilson-Hilferty approximation.
double ChiSquareUpperTail(double statistic, int dof) {
  const double k = dof;
  const double z = (std::cbrt(statistic / k) - (1.0 - 2.0 / (9.0 * k))) /
                   std::sqrt(2.0 / (9.0 * k));
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

TEST(DatasetTest, IndexesClasses) {
  Matrix x = testing::RandomMatrix(5, 2, 1);
  const Dataset data(x, {3, 1, 3, 1, 1});
  EXPECT_EQ(data.class_ids(), (std::vector<int>{1, 3}));
  EXPECT_EQ(data.rows_of(1), (std::vector<int>{1, 3, 4}));
  EXPECT_EQ(data.num_classes(), 2);
  const Batch slots = data.SlotBatch({0, 1, 2}, {3, 1});
  EXPECT_EQ(slots.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(data.RawBatch({4, 0}).labels, (std::vector<int>{1, 3}));
  EXPECT_THROW(data.SlotBatch({0}, {1}), std::invalid_argument);
}

TEST(DatasetTest, RejectsSingletonClass) {
  EXPECT_THROW(Dataset(testing::RandomMatrix(3, 2, 1), {0, 0, 1}),
               std::invalid_argument);
  EXPECT_THROW(Dataset(testing::RandomMatrix(3, 2, 1), {0, 0}),
               std::invalid_argument);
}

TEST(MakeSyntheticTest, CountsAndDeterminism) {
  const SyntheticConfig cfg = SmallConfig(4);
  const Dataset a = MakeSynthetic(cfg);
  EXPECT_EQ(a.size(), 3 * 4 * 12);
  EXPECT_EQ(a.num_classes(), 12);
  EXPECT_EQ(a.dim(), 6);
  const Dataset b = MakeSynthetic(cfg);
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.labels(), b.labels());
  SyntheticConfig other = cfg;
  other.seed = 5;
  EXPECT_NE(MakeSynthetic(other).features(), a.features());
}

TEST(MakeSyntheticTest, TinyNoiseCollapsesClasses) {
  SyntheticConfig cfg = SmallConfig(2);
  cfg.noise_sigma = 1e-300;
  const Dataset data = MakeSynthetic(cfg);
  for (int c : data.class_ids()) {
    const auto& rows = data.rows_of(c);
    for (int r : rows) {
      EXPECT_LT((data.features().row(r) - data.features().row(rows[0]))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-250);
    }
  }
}

TEST(MakeSyntheticTest, RejectsInvertedSpreads) {
  SyntheticConfig cfg = SmallConfig(1);
  cfg.class_spread = cfg.family_spread;
  EXPECT_THROW(MakeSynthetic(cfg), std::invalid_argument);
  cfg = SmallConfig(1);
  cfg.family_subspace_dim = cfg.input_dim + 1;
  EXPECT_THROW(MakeSynthetic(cfg), std::invalid_argument);
}

Matrix ClassMeans(const Dataset& data) {
  Matrix means(data.num_classes(), data.dim());
  int k = 0;
  for (int c : data.class_ids()) {
    means.row(k).setZero();
    for (int r : data.rows_of(c)) means.row(k) += data.features().row(r);
    means.row(k++) /= static_cast<double>(data.rows_of(c).size());
  }
  return means;
}

void ExpectFamiliesCloser(SyntheticConfig cfg) {
  double within = 0.0, across = 0.0;
  int n_within = 0, n_across = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    const Dataset data = MakeSynthetic(cfg);
    const Matrix means = ClassMeans(data);
    for (int a = 0; a < means.rows(); ++a) {
      for (int b = a + 1; b < means.rows(); ++b) {
        const double d = (means.row(a) - means.row(b)).norm();
        if (cfg.family_of(a) == cfg.family_of(b)) {
          within += d;
          ++n_within;
        } else {
          across += d;
          ++n_across;
        }
      }
    }
  }
  EXPECT_LT(within / n_within, across / n_across);
}

TEST(MakeSyntheticTest, FamiliesAreTighterThanAcross) {
  ExpectFamiliesCloser(SmallConfig(0));
}

TEST(MakeSyntheticTest, SubspaceFamiliesAreTighterThanAcross) {
  SyntheticConfig cfg = SmallConfig(0);
  cfg.family_subspace_dim = 2;
  ExpectFamiliesCloser(cfg);
}

TEST(MakeSyntheticTest, SubspacePerturbationsStayInRankedSubspace) {
  SyntheticConfig cfg = SmallConfig(3);
  cfg.classes_per_family = 6;
  cfg.family_subspace_dim = 2;
  cfg.noise_sigma = 1e-12;
  const Matrix means = ClassMeans(MakeSynthetic(cfg));
  for (int family = 0; family < cfg.n_families; ++family) {
    // Differences between class means of one family span <= 2 dims.
    Matrix diffs(cfg.classes_per_family - 1, cfg.input_dim);
    for (int c = 1; c < cfg.classes_per_family; ++c) {
      diffs.row(c - 1) = means.row(family * cfg.classes_per_family + c) -
                         means.row(family * cfg.classes_per_family);
    }
    Eigen::JacobiSVD<Matrix> svd(diffs);
    EXPECT_LT(svd.singularValues()[2], 1e-9 * svd.singularValues()[0]);
  }
}

TEST(SplitClassesTest, TakesLastClassesOfFamilies) {
  const SyntheticConfig cfg = SmallConfig(1);
  const TrainTestSplit split =
      SplitClasses(MakeSynthetic(cfg), cfg, ClassSplit{{0, 2}, 1});
  EXPECT_EQ(split.test.class_ids(), (std::vector<int>{3, 11}));
  EXPECT_EQ(split.train.num_classes(), 10);
  EXPECT_THROW(SplitClasses(MakeSynthetic(cfg), cfg, ClassSplit{{0}, 4}),
               std::invalid_argument);
}

TEST(CsvTest, TwoRowFile) {
  const fs::path path = TempPath("two.csv");
  WriteFileAtomic(path, "f0,f1,label\n1.5,2,0\n-3,4e-2,0\n");
  const Dataset data = LoadCsv(path.string());
  EXPECT_EQ(data.size(), 2);
  EXPECT_EQ(data.dim(), 2);
  EXPECT_EQ(data.features()(1, 1), 4e-2);
}

TEST(CsvTest, RoundTripIsBitExact) {
  const Dataset data = MakeSynthetic(SmallConfig(9));
  const fs::path path = TempPath("round.csv");
  WriteFileAtomic(path, FormatCsv(data));
  const Dataset back = LoadCsv(path.string());
  EXPECT_EQ(back.features(), data.features());
  EXPECT_EQ(back.labels(), data.labels());
}

TEST(CsvTest, NonNumericCellNamesLine) {
  const fs::path path = TempPath("bad.csv");
  WriteFileAtomic(path, "f0,label\n1,0\n2,0\nabc,1\n");
  try {
    LoadCsv(path.string());
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos)
        << e.what();
  }
}

TEST(CsvTest, MalformedRowAndMissingLabel) {
  const fs::path path = TempPath("short.csv");
  WriteFileAtomic(path, "f0,f1,label\n1,2,0\n1,0\n");
  EXPECT_THROW(LoadCsv(path.string()), std::runtime_error);
  WriteFileAtomic(path, "f0,f1\n1,2\n");
  EXPECT_THROW(LoadCsv(path.string()), std::runtime_error);
  EXPECT_THROW(LoadCsv(TempPath("absent.csv").string()), std::runtime_error);
}

TEST(MakeTaskTest, SplitsEveryClassWithoutLeakage) {
  const Dataset data = MakeSynthetic(SmallConfig(2));
  const TaskSpec task = MakeTask(data, {7, 2, 5}, 4, 99);
  EXPECT_EQ(task.class_ids, (std::vector<int>{2, 5, 7}));
  EXPECT_NO_THROW(task.Validate(data));
  EXPECT_TRUE(Disjoint(task.support_rows, task.query_rows));
  // 70/30 of 12 rows per class.
  EXPECT_EQ(task.support_rows.size() + task.query_rows.size(), 36u);
  EXPECT_EQ(task.query_rows.size(), 3u * 4u);
}

TEST(SampleSourceTasksTest, SingleTaskCoversAllClasses) {
  const Dataset data = MakeSynthetic(SmallConfig(2));
  const auto tasks = SampleSourceTasks(data, 1, 12, 5);
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].class_ids, data.class_ids());
}

TEST(SampleSourceTasksTest, DeterministicAndLeakFree) {
  const Dataset data = MakeSynthetic(SmallConfig(2));
  const auto a = SampleSourceTasks(data, 50, 4, 11);
  const auto b = SampleSourceTasks(data, 50, 4, 11);
  ASSERT_EQ(a.size(), 50u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].task_id, static_cast<int>(i));
    EXPECT_EQ(a[i].class_ids, b[i].class_ids);
    EXPECT_EQ(a[i].support_rows, b[i].support_rows);
    EXPECT_EQ(a[i].query_rows, b[i].query_rows);
    EXPECT_EQ(std::set<int>(a[i].class_ids.begin(), a[i].class_ids.end()).size(),
              4u);
    EXPECT_TRUE(Disjoint(a[i].support_rows, a[i].query_rows));
    EXPECT_NO_THROW(a[i].Validate(data));
  }
}

TEST(SampleSourceTasksTest, TaskDependsOnlyOnItsIndex) {
  const Dataset data = MakeSynthetic(SmallConfig(2));
  const auto few = SampleSourceTasks(data, 5, 4, 11);
  const auto many = SampleSourceTasks(data, 40, 4, 11);
  for (size_t i = 0; i < few.size(); ++i) {
    EXPECT_EQ(few[i].class_ids, many[i].class_ids);
    EXPECT_EQ(few[i].support_rows, many[i].support_rows);
  }
}

TEST(SampleSourceTasksTest, ClassCoverageIsUniform) {
  const Dataset data = MakeSynthetic(SmallConfig(6));
  const int n_test = 4;
  const auto tasks = SampleSourceTasks(data, 2000, n_test, 123);
  std::vector<int> counts(data.num_classes(), 0);
  for (const TaskSpec& task : tasks) {
    for (int c : task.class_ids) ++counts[c];
  }
  const double expected = 2000.0 * n_test / data.num_classes();
  double chi2 = 0.0;
  for (int count : counts) {
    chi2 += (count - expected) * (count - expected) / expected;
  }
  EXPECT_GT(ChiSquareUpperTail(chi2, data.num_classes() - 1), 0.001)
      << "chi2 " << chi2;
}

TEST(SampleSourceTasksTest, TooManyClassesThrows) {
  const Dataset data = MakeSynthetic(SmallConfig(2));
  EXPECT_THROW(SampleSourceTasks(data, 3, 13, 1), std::invalid_argument);
}

TEST(BuildTargetTaskTest, UsesWholeSupportSet) {
  const SyntheticConfig cfg = SmallConfig(2);
  const TrainTestSplit split =
      SplitClasses(MakeSynthetic(cfg), cfg, ClassSplit{{1}, 2});
  const TaskSpec target = BuildTargetTask(split.test);
  EXPECT_EQ(target.class_ids, split.test.class_ids());
  EXPECT_EQ(static_cast<int>(target.support_rows.size()), split.test.size());
  EXPECT_TRUE(target.query_rows.empty());
  EXPECT_NO_THROW(target.Validate(split.test, false));
}

TEST(SampleEpisodeTest, OneWayOneShot) {
  const Dataset data = MakeSynthetic(SmallConfig(1));
  const Episode e = SampleEpisode(data, 1, 1, 1, 3);
  EXPECT_EQ(e.support.size(), 1);
  EXPECT_EQ(e.query.size(), 1);
  EXPECT_NE(e.support_rows[0], e.query_rows[0]);
}

TEST(SampleEpisodeTest, StructureAndConsistentReindexing) {
  const Dataset data = MakeSynthetic(SmallConfig(1));
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const Episode e = SampleEpisode(data, 5, 2, 3, seed);
    ASSERT_EQ(e.support.size(), 10);
    ASSERT_EQ(e.query.size(), 15);
    EXPECT_TRUE(Disjoint(e.support_rows, e.query_rows));
    std::vector<int> per_slot(5, 0);
    for (int label : e.support.labels) ++per_slot[label];
    EXPECT_EQ(per_slot, std::vector<int>(5, 2));
    for (int i = 0; i < e.support.size(); ++i) {
      EXPECT_EQ(data.labels()[e.support_rows[i]],
                e.class_ids[e.support.labels[i]]);
    }
    for (int i = 0; i < e.query.size(); ++i) {
      EXPECT_EQ(data.labels()[e.query_rows[i]], e.class_ids[e.query.labels[i]]);
    }
  }
}

TEST(SampleEpisodeTest, DeterministicAndRestricted) {
  const Dataset data = MakeSynthetic(SmallConfig(1));
  const Episode a = SampleEpisode(data, 3, 1, 2, 8, {0, 4, 5, 9});
  const Episode b = SampleEpisode(data, 3, 1, 2, 8, {0, 4, 5, 9});
  EXPECT_EQ(a.support_rows, b.support_rows);
  EXPECT_EQ(a.query_rows, b.query_rows);
  for (int c : a.class_ids) {
    EXPECT_TRUE(c == 0 || c == 4 || c == 5 || c == 9);
  }
}

TEST(SampleEpisodeTest, InsufficientSamplesThrows) {
  const Dataset data = MakeSynthetic(SmallConfig(1));
  EXPECT_THROW(SampleEpisode(data, 13, 1, 1, 0), std::invalid_argument);
  EXPECT_THROW(SampleEpisode(data, 2, 6, 7, 0), std::invalid_argument);
}

}  // namespace
}  // namespace tas
