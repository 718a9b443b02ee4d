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

#ifndef TAS_PIPELINE_H_
#define TAS_PIPELINE_H_

// The three-phase few-shot pipeline:
//   1. train a whole-classification network on every training class;
//   2. score sampled source tasks against the target task with the Task
//      Affinity Score (centroid matching, epsilon-approximation network,
//      Fisher diagonals) and keep the classes of the closest ones;
//   3. episodically fine-tune the encoder on those related classes with a
//      soft nearest-centroid head, then evaluate on test episodes.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tas/fisher.h"
#include "tas/matching.h"
#include "tas/nnet.h"
#include "tas/tasks.h"

namespace tas {

struct PipelineConfig {
  int s_count = 200;
  int n_test = 5;
  int top_r = 4;
  int m_way = 5;
  int k_shot = 1;
  int q_query = 5;
  double epsilon = 0.2;
  TrainSchedule whole_schedule;
  TrainSchedule approx_schedule;
  // batch_size is the number of episodes averaged per update.
  TrainSchedule finetune_schedule;
  int finetune_batches_per_epoch = 25;
  int n_eval_episodes = 500;
  double softmax_temperature = 1.0;
  int histogram_bins = 20;
  uint64_t master_seed = 0;

  void Validate() const;
  // Re-derives every schedule seed from master_seed.
  void ReseedFromMaster();
};

struct EpsApprox {
  Network network;
  double query_accuracy = 0.0;
  int epochs_run = 0;
  bool reached = false;

  double achieved_epsilon() const { return 1.0 - query_accuracy; }
};

struct RankedTask {
  int task_id = 0;
  AffinityScore score;
  Assignment assignment;
  double approx_query_accuracy = 0.0;
  int approx_epochs = 0;
};

struct RelatedSet {
  std::vector<int> label_set;    // ascending
  std::vector<int> row_indices;  // ascending
};

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<int> counts;
};

enum class AblationMode { kRelated, kNonRelated, kRandom };

std::string_view AblationModeName(AblationMode mode);
AblationMode ParseAblationMode(std::string_view name);

struct FewshotAccuracy {
  double mean = 0.0;
  double ci95 = 0.0;
};

struct RunReport {
  std::string mode = "related";
  std::vector<RankedTask> scores;  // every source task, by task_id
  std::vector<RankedTask> top;     // the selected tasks, best first
  RelatedSet selected;
  Histogram tas_histogram;
  std::map<int, int> label_frequency;
  double whole_train_accuracy = 0.0;
  FewshotAccuracy before_finetune;
  FewshotAccuracy after_finetune;
  std::map<std::string, double> timings;

  double fewshot_accuracy_mean() const { return after_finetune.mean; }
  double fewshot_ci95() const { return after_finetune.ci95; }
};

// Phase 1. Labels are mapped to head slots in ascending class-id order; the
// spec must have one head class per training class.
Network TrainWholeClassifier(const Dataset& train, const NetworkSpec& spec,
                             const TrainSchedule& schedule);

// Fresh n_test-way head on the whole network's encoder, trained on the
// remapped support set until query accuracy reaches 1 - epsilon or the
// approx schedule runs out. Seeds derive from the task id.
EpsApprox BuildEpsApprox(const Network& whole, const TaskSpec& source,
                         const Batch& remapped_support,
                         const Batch& remapped_query,
                         const PipelineConfig& cfg);

// Affinity of one source task (rows of train) to the target task (rows of
// test_support): centroid matching, label remap, epsilon-approximation
// network, then TAS between F_aa (source query) and F_ab (target support).
RankedTask Mtas(const TaskSpec& source, const Dataset& train,
                const TaskSpec& target, const Dataset& test_support,
                const Network& whole, const PipelineConfig& cfg);

// Mtas for every source task on up to `jobs` threads, ordered by task_id.
std::vector<RankedTask> ScoreSources(const std::vector<TaskSpec>& sources,
                                     const Dataset& train,
                                     const TaskSpec& target,
                                     const Dataset& test_support,
                                     const Network& whole,
                                     const PipelineConfig& cfg, int jobs = 1);

// Ascending score, ties by task_id, first top_r.
std::vector<RankedTask> RankSources(std::vector<RankedTask> scores, int top_r);

RelatedSet RelatedTrainingSet(const std::vector<RankedTask>& top,
                              const std::vector<TaskSpec>& tasks,
                              const Dataset& train);
RelatedSet RelatedSetForLabels(const std::vector<int>& labels,
                               const Dataset& train);

// Count of each training class among the given tasks (zero entries kept).
std::map<int, int> LabelFrequency(const std::vector<RankedTask>& top,
                                  const std::vector<TaskSpec>& tasks,
                                  const Dataset& train);

Histogram MakeHistogram(const std::vector<double>& values, int bins);

struct EpisodeObjective {
  double loss = 0.0;
  Vector grad;
};

// Cross-entropy of the query set under softmax(-||z - c_j||^2 / T), c_j the
// support centroids in embedding space. grad covers the encoder only.
EpisodeObjective SoftCentroidLoss(const Network& net, const Episode& episode,
                                  double temperature);

struct FinetuneResult {
  Network network;
  std::vector<double> batch_losses;
};

// Phase 3. Every episode is drawn from the related rows only.
FinetuneResult EpisodicFinetune(const Network& whole,
                                const RelatedSet& related,
                                const Dataset& train,
                                const PipelineConfig& cfg);

// Hard nearest-centroid accuracy, ties to the lowest class index.
double NearestCentroidAccuracy(const Matrix& support_embeddings,
                               const std::vector<int>& support_labels,
                               const Matrix& query_embeddings,
                               const std::vector<int>& query_labels,
                               int m_way);

// Mean accuracy over n_eval_episodes test episodes, with a normal
// approximation 95% interval 1.96 * sd / sqrt(n).
FewshotAccuracy EvaluateFewshot(const Network& net, const Dataset& test,
                                const PipelineConfig& cfg);

// Everything a run computes before deciding which classes to fine-tune on.
struct AffinityPhase {
  Network whole;
  double whole_train_accuracy = 0.0;
  std::vector<TaskSpec> tasks;
  TaskSpec target;
  std::vector<RankedTask> scores;
  std::map<std::string, double> timings;
};

AffinityPhase RunAffinityPhase(const Dataset& train, const Dataset& test,
                               const NetworkSpec& spec,
                               const PipelineConfig& cfg, int jobs = 1);

// Phase 3 and reporting on top of a finished affinity phase.
RunReport FinishRun(const AffinityPhase& phase, const Dataset& train,
                    const Dataset& test, const PipelineConfig& cfg,
                    AblationMode mode);

RunReport RunFull(const Dataset& train, const Dataset& test,
                  const NetworkSpec& spec, const PipelineConfig& cfg,
                  int jobs = 1);

RunReport AblationRun(const Dataset& train, const Dataset& test,
                      const NetworkSpec& spec, const PipelineConfig& cfg,
                      AblationMode mode, int jobs = 1);

// Label set used by an ablation mode. related: union over the top-R tasks;
// non_related: union over the bottom-R tasks; random: as many classes as
// the related set, drawn uniformly from the training classes.
std::vector<int> AblationLabels(const AffinityPhase& phase,
                                const Dataset& train,
                                const PipelineConfig& cfg, AblationMode mode);

}  // namespace tas

#endif  // TAS_PIPELINE_H_
