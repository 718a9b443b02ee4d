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

#include "tas/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "tas/rng.h"

namespace tas {

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::vector<int> Iota(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

void PipelineConfig::Validate() const {
  if (s_count < 1) throw std::invalid_argument("s_count must be positive");
  if (n_test < 2) throw std::invalid_argument("n_test must be at least 2");
  if (top_r < 1 || top_r > s_count) {
    throw std::invalid_argument("top_r must lie in [1, s_count]");
  }
  if (m_way < 2 || k_shot < 1 || q_query < 1) {
    throw std::invalid_argument("episodes need m_way >= 2, k_shot, q_query >= 1");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("epsilon must lie in (0, 1)");
  }
  whole_schedule.Validate();
  approx_schedule.Validate();
  finetune_schedule.Validate();
  if (finetune_batches_per_epoch < 1 || n_eval_episodes < 1 ||
      histogram_bins < 1) {
    throw std::invalid_argument(
        "batches per epoch, eval episodes and histogram bins must be positive");
  }
  if (!(softmax_temperature > 0.0)) {
    throw std::invalid_argument("softmax temperature must be positive");
  }
}

void PipelineConfig::ReseedFromMaster() {
  whole_schedule.seed = DeriveSeed(master_seed, SeedStream::kWholeTraining);
  approx_schedule.seed = DeriveSeed(master_seed, SeedStream::kApproxTraining);
  finetune_schedule.seed = DeriveSeed(master_seed, SeedStream::kFinetune);
}

std::string_view AblationModeName(AblationMode mode) {
  switch (mode) {
    case AblationMode::kRelated:
      return "related";
    case AblationMode::kNonRelated:
      return "non_related";
    case AblationMode::kRandom:
      return "random";
  }
  return "unknown";
}

AblationMode ParseAblationMode(std::string_view name) {
  if (name == "related") return AblationMode::kRelated;
  if (name == "non_related") return AblationMode::kNonRelated;
  if (name == "random") return AblationMode::kRandom;
  throw std::invalid_argument("unknown ablation mode: " + std::string(name));
}

Network TrainWholeClassifier(const Dataset& train, const NetworkSpec& spec,
                             const TrainSchedule& schedule) {
  if (spec.head_classes != train.num_classes()) {
    throw std::invalid_argument(
        "whole classifier head has " + std::to_string(spec.head_classes) +
        " classes, training data has " + std::to_string(train.num_classes()));
  }
  const Batch data = train.SlotBatch(Iota(train.size()), train.class_ids());
  const Network init =
      InitNetwork(spec, DeriveSeed(schedule.seed, SeedStream::kNetworkInit));
  return Train(init, data, schedule).network;
}

EpsApprox BuildEpsApprox(const Network& whole, const TaskSpec& source,
                         const Batch& remapped_support,
                         const Batch& remapped_query,
                         const PipelineConfig& cfg) {
  const uint64_t task = static_cast<uint64_t>(source.task_id);
  const Network fresh = ReplaceHead(
      whole, cfg.n_test,
      DeriveSeed(DeriveSeed(cfg.master_seed, SeedStream::kApproxHead), task));
  TrainSchedule schedule = cfg.approx_schedule;
  schedule.seed = DeriveSeed(cfg.approx_schedule.seed, task);
  SgdTrainer trainer(fresh, remapped_support, schedule);
  EpsApprox result{fresh, 0.0, 0, false};
  while (!trainer.finished()) {
    trainer.RunEpoch();
    result.query_accuracy = Evaluate(trainer.network(), remapped_query);
    if (result.query_accuracy >= 1.0 - cfg.epsilon) {
      result.reached = true;
      break;
    }
  }
  result.network = trainer.network();
  result.epochs_run = trainer.epochs_done();
  return result;
}

RankedTask Mtas(const TaskSpec& source, const Dataset& train,
                const TaskSpec& target, const Dataset& test_support,
                const Network& whole, const PipelineConfig& cfg) {
  if (static_cast<int>(source.class_ids.size()) != cfg.n_test ||
      static_cast<int>(target.class_ids.size()) != cfg.n_test) {
    throw std::invalid_argument("source and target tasks need n_test classes");
  }
  // Centroids per slot. SlotBatch labels are slots, so CentroidsOf returns
  // them in slot order.
  const Batch source_support =
      train.SlotBatch(source.support_rows, source.class_ids);
  const Batch source_query = train.SlotBatch(source.query_rows, source.class_ids);
  const Batch target_support =
      test_support.SlotBatch(target.support_rows, target.class_ids);
  const CentroidSet source_centroids =
      CentroidsOf(Encode(whole, source_support.features), source_support.labels);
  const CentroidSet target_centroids =
      CentroidsOf(Encode(whole, target_support.features), target_support.labels);

  const Assignment assignment =
      Hungarian(CostMatrix(source_centroids, target_centroids));
  const std::vector<int> slots = Iota(cfg.n_test);
  const Batch support = RemapLabels(source_support, slots, assignment, slots);
  const Batch query = RemapLabels(source_query, slots, assignment, slots);

  const EpsApprox approx = BuildEpsApprox(whole, source, support, query, cfg);
  const FisherDiagonal f_aa =
      NormalizeUnitTrace(EmpiricalFisherDiag(approx.network, query));
  const FisherDiagonal f_ab =
      NormalizeUnitTrace(EmpiricalFisherDiag(approx.network, target_support));

  RankedTask ranked;
  ranked.task_id = source.task_id;
  ranked.score = TaskAffinityScore(f_aa, f_ab);
  ranked.assignment = assignment;
  ranked.approx_query_accuracy = approx.query_accuracy;
  ranked.approx_epochs = approx.epochs_run;
  return ranked;
}

std::vector<RankedTask> ScoreSources(const std::vector<TaskSpec>& sources,
                                     const Dataset& train,
                                     const TaskSpec& target,
                                     const Dataset& test_support,
                                     const Network& whole,
                                     const PipelineConfig& cfg, int jobs) {
  std::vector<RankedTask> results(sources.size());
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (size_t i = next++; i < sources.size(); i = next++) {
      try {
        results[i] = Mtas(sources[i], train, target, test_support, whole, cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads =
      std::clamp(jobs, 1, std::max(1, static_cast<int>(sources.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& thread : threads) thread.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::sort(results.begin(), results.end(),
            [](const RankedTask& a, const RankedTask& b) {
              return a.task_id < b.task_id;
            });
  return results;
}

std::vector<RankedTask> RankSources(std::vector<RankedTask> scores, int top_r) {
  if (top_r < 0 || top_r > static_cast<int>(scores.size())) {
    throw std::invalid_argument("top_r exceeds the number of scored tasks");
  }
  std::sort(scores.begin(), scores.end(),
            [](const RankedTask& a, const RankedTask& b) {
              if (a.score.value != b.score.value) {
                return a.score.value < b.score.value;
              }
              return a.task_id < b.task_id;
            });
  scores.resize(top_r);
  return scores;
}

namespace {

const TaskSpec& FindTask(const std::vector<TaskSpec>& tasks, int task_id) {
  for (const TaskSpec& task : tasks) {
    if (task.task_id == task_id) return task;
  }
  throw std::invalid_argument("unknown task id " + std::to_string(task_id));
}

}  // namespace

RelatedSet RelatedSetForLabels(const std::vector<int>& labels,
                               const Dataset& train) {
  RelatedSet related;
  const std::set<int> label_set(labels.begin(), labels.end());
  related.label_set.assign(label_set.begin(), label_set.end());
  for (int row = 0; row < train.size(); ++row) {
    if (label_set.count(train.labels()[row])) related.row_indices.push_back(row);
  }
  return related;
}

RelatedSet RelatedTrainingSet(const std::vector<RankedTask>& top,
                              const std::vector<TaskSpec>& tasks,
                              const Dataset& train) {
  if (top.empty()) throw std::invalid_argument("no tasks selected");
  std::vector<int> labels;
  for (const RankedTask& ranked : top) {
    const TaskSpec& task = FindTask(tasks, ranked.task_id);
    labels.insert(labels.end(), task.class_ids.begin(), task.class_ids.end());
  }
  return RelatedSetForLabels(labels, train);
}

std::map<int, int> LabelFrequency(const std::vector<RankedTask>& top,
                                  const std::vector<TaskSpec>& tasks,
                                  const Dataset& train) {
  std::map<int, int> frequency;
  for (int class_id : train.class_ids()) frequency[class_id] = 0;
  for (const RankedTask& ranked : top) {
    for (int class_id : FindTask(tasks, ranked.task_id).class_ids) {
      ++frequency[class_id];
    }
  }
  return frequency;
}

Histogram MakeHistogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs a bin");
  Histogram histogram;
  histogram.counts.assign(bins, 0);
  if (values.empty()) {
    for (int i = 0; i <= bins; ++i) histogram.edges.push_back(0.0);
    return histogram;
  }
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const double width = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) histogram.edges.push_back(lo + i * width);
  histogram.edges.back() = hi;
  for (double value : values) {
    int bin = width > 0.0 ? static_cast<int>((value - lo) / width) : 0;
    histogram.counts[std::clamp(bin, 0, bins - 1)]++;
  }
  return histogram;
}

EpisodeObjective SoftCentroidLoss(const Network& net, const Episode& episode,
                                  double temperature) {
  const int n_support = episode.support.size();
  const int n_query = episode.query.size();
  const int m = episode.m_way;
  Matrix inputs(n_support + n_query, net.spec().input_dim());
  inputs << episode.support.features, episode.query.features;
  const Matrix embeddings = Encode(net, inputs);
  const Matrix support = embeddings.topRows(n_support);
  const Matrix query = embeddings.bottomRows(n_query);

  Matrix centroids = Matrix::Zero(m, embeddings.cols());
  std::vector<int> counts(m, 0);
  for (int i = 0; i < n_support; ++i) {
    centroids.row(episode.support.labels[i]) += support.row(i);
    ++counts[episode.support.labels[i]];
  }
  for (int j = 0; j < m; ++j) {
    if (counts[j] == 0) throw std::invalid_argument("episode class without support");
    centroids.row(j) /= counts[j];
  }

  Matrix logits(n_query, m);
  for (int q = 0; q < n_query; ++q) {
    for (int j = 0; j < m; ++j) {
      logits(q, j) = -(query.row(q) - centroids.row(j)).squaredNorm() / temperature;
    }
  }
  Matrix probs = Softmax(logits);
  double loss = 0.0;
  for (int q = 0; q < n_query; ++q) {
    const double max = logits.row(q).maxCoeff();
    loss += max + std::log((logits.row(q).array() - max).exp().sum()) -
            logits(q, episode.query.labels[q]);
  }
  loss /= n_query;

  // d loss / d logits.
  Matrix dlogits = probs;
  for (int q = 0; q < n_query; ++q) dlogits(q, episode.query.labels[q]) -= 1.0;
  dlogits /= n_query;

  // logits(q, j) = -||z_q - c_j||^2 / T.
  const double scale = 2.0 / temperature;
  Matrix dquery(n_query, embeddings.cols());
  Matrix dcentroids = Matrix::Zero(m, embeddings.cols());
  for (int q = 0; q < n_query; ++q) {
    dquery.row(q).setZero();
    for (int j = 0; j < m; ++j) {
      const auto diff = query.row(q) - centroids.row(j);
      dquery.row(q) -= scale * dlogits(q, j) * diff;
      dcentroids.row(j) += scale * dlogits(q, j) * diff;
    }
  }
  Matrix dembeddings(n_support + n_query, embeddings.cols());
  for (int i = 0; i < n_support; ++i) {
    const int j = episode.support.labels[i];
    dembeddings.row(i) = dcentroids.row(j) / counts[j];
  }
  dembeddings.bottomRows(n_query) = dquery;
  return {loss, EncoderGrad(net, inputs, dembeddings)};
}

FinetuneResult EpisodicFinetune(const Network& whole,
                                const RelatedSet& related,
                                const Dataset& train,
                                const PipelineConfig& cfg) {
  const TrainSchedule& schedule = cfg.finetune_schedule;
  schedule.Validate();
  if (related.label_set.empty()) {
    throw std::invalid_argument("insufficient related data: empty label set");
  }
  auto in_related = [&](int row) {
    return std::binary_search(related.row_indices.begin(),
                              related.row_indices.end(), row);
  };
  FinetuneResult result{whole, {}};
  MomentumSgd optimizer(whole.param_count(), schedule.momentum);
  uint64_t episode_index = 0;
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = schedule.LearningRateAt(epoch);
    for (int b = 0; b < cfg.finetune_batches_per_epoch; ++b) {
      Vector grad = Vector::Zero(whole.param_count());
      double loss = 0.0;
      for (int e = 0; e < schedule.batch_size; ++e) {
        const Episode episode =
            SampleEpisode(train, cfg.m_way, cfg.k_shot, cfg.q_query,
                          DeriveSeed(schedule.seed, episode_index++),
                          related.label_set);
        for (const auto* rows : {&episode.support_rows, &episode.query_rows}) {
          if (!std::all_of(rows->begin(), rows->end(), in_related)) {
            throw std::logic_error("episode drew a row outside the related set");
          }
        }
        EpisodeObjective objective =
            SoftCentroidLoss(result.network, episode, cfg.softmax_temperature);
        grad += objective.grad;
        loss += objective.loss;
      }
      grad /= schedule.batch_size;
      result.batch_losses.push_back(loss / schedule.batch_size);
      result.network = optimizer.Step(result.network, grad, lr);
    }
  }
  return result;
}

double NearestCentroidAccuracy(const Matrix& support_embeddings,
                               const std::vector<int>& support_labels,
                               const Matrix& query_embeddings,
                               const std::vector<int>& query_labels,
                               int m_way) {
  const CentroidSet centroids = CentroidsOf(support_embeddings, support_labels);
  if (static_cast<int>(centroids.class_ids.size()) != m_way) {
    throw std::invalid_argument("support set does not cover every class");
  }
  Matrix neg_distance(query_embeddings.rows(), m_way);
  for (Eigen::Index q = 0; q < query_embeddings.rows(); ++q) {
    for (int j = 0; j < m_way; ++j) {
      neg_distance(q, j) =
          -(query_embeddings.row(q) - centroids.centroids.row(j)).squaredNorm();
    }
  }
  const std::vector<int> predicted = ArgmaxRows(neg_distance);
  int correct = 0;
  for (size_t q = 0; q < query_labels.size(); ++q) {
    if (centroids.class_ids[predicted[q]] == query_labels[q]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(query_labels.size());
}

FewshotAccuracy EvaluateFewshot(const Network& net, const Dataset& test,
                                const PipelineConfig& cfg) {
  const uint64_t seed = DeriveSeed(cfg.master_seed, SeedStream::kEvaluation);
  std::vector<double> accuracies;
  accuracies.reserve(cfg.n_eval_episodes);
  for (int i = 0; i < cfg.n_eval_episodes; ++i) {
    const Episode episode = SampleEpisode(test, cfg.m_way, cfg.k_shot,
                                          cfg.q_query, DeriveSeed(seed, i));
    accuracies.push_back(NearestCentroidAccuracy(
        Encode(net, episode.support.features), episode.support.labels,
        Encode(net, episode.query.features), episode.query.labels, cfg.m_way));
  }
  const double n = static_cast<double>(accuracies.size());
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : accuracies) var += (a - mean) * (a - mean);
  const double sd = accuracies.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return {mean, 1.96 * sd / std::sqrt(n)};
}

AffinityPhase RunAffinityPhase(const Dataset& train, const Dataset& test,
                               const NetworkSpec& spec,
                               const PipelineConfig& cfg, int jobs) {
  cfg.Validate();
  Stopwatch phase1;
  AffinityPhase phase{TrainWholeClassifier(train, spec, cfg.whole_schedule),
                      0.0, {}, {}, {}, {}};
  phase.whole_train_accuracy = Evaluate(
      phase.whole, train.SlotBatch(Iota(train.size()), train.class_ids()));
  phase.timings["whole_classification"] = phase1.Seconds();

  Stopwatch phase2;
  phase.tasks =
      SampleSourceTasks(train, cfg.s_count, cfg.n_test,
                        DeriveSeed(cfg.master_seed, SeedStream::kSourceTasks));
  phase.target = BuildTargetTask(test);
  phase.scores = ScoreSources(phase.tasks, train, phase.target, test,
                              phase.whole, cfg, jobs);
  phase.timings["task_affinity"] = phase2.Seconds();
  return phase;
}

std::vector<int> AblationLabels(const AffinityPhase& phase,
                                const Dataset& train,
                                const PipelineConfig& cfg, AblationMode mode) {
  const std::vector<RankedTask> ranked = RankSources(phase.scores, cfg.s_count);
  const std::vector<RankedTask> top(ranked.begin(), ranked.begin() + cfg.top_r);
  const RelatedSet related = RelatedTrainingSet(top, phase.tasks, train);
  switch (mode) {
    case AblationMode::kRelated:
      return related.label_set;
    case AblationMode::kNonRelated: {
      const std::vector<RankedTask> bottom(ranked.end() - cfg.top_r,
                                           ranked.end());
      return RelatedTrainingSet(bottom, phase.tasks, train).label_set;
    }
    case AblationMode::kRandom: {
      std::vector<int> classes = train.class_ids();
      Rng rng(DeriveSeed(cfg.master_seed, SeedStream::kAblationRandom));
      std::shuffle(classes.begin(), classes.end(), rng);
      classes.resize(related.label_set.size());
      std::sort(classes.begin(), classes.end());
      return classes;
    }
  }
  throw std::invalid_argument("unknown ablation mode");
}

RunReport FinishRun(const AffinityPhase& phase, const Dataset& train,
                    const Dataset& test, const PipelineConfig& cfg,
                    AblationMode mode) {
  RunReport report;
  report.mode = std::string(AblationModeName(mode));
  report.scores = phase.scores;
  report.top = RankSources(phase.scores, cfg.top_r);
  report.whole_train_accuracy = phase.whole_train_accuracy;
  report.timings = phase.timings;
  std::vector<double> values;
  for (const RankedTask& task : phase.scores) values.push_back(task.score.value);
  report.tas_histogram = MakeHistogram(values, cfg.histogram_bins);
  report.label_frequency = LabelFrequency(report.top, phase.tasks, train);
  report.selected =
      RelatedSetForLabels(AblationLabels(phase, train, cfg, mode), train);

  Stopwatch phase3;
  report.before_finetune = EvaluateFewshot(phase.whole, test, cfg);
  const FinetuneResult tuned =
      EpisodicFinetune(phase.whole, report.selected, train, cfg);
  report.after_finetune = EvaluateFewshot(tuned.network, test, cfg);
  report.timings["episodic_finetune"] = phase3.Seconds();
  return report;
}

RunReport RunFull(const Dataset& train, const Dataset& test,
                  const NetworkSpec& spec, const PipelineConfig& cfg,
                  int jobs) {
  return AblationRun(train, test, spec, cfg, AblationMode::kRelated, jobs);
}

RunReport AblationRun(const Dataset& train, const Dataset& test,
                      const NetworkSpec& spec, const PipelineConfig& cfg,
                      AblationMode mode, int jobs) {
  const AffinityPhase phase = RunAffinityPhase(train, test, spec, cfg, jobs);
  return FinishRun(phase, train, test, cfg, mode);
}

}  // namespace tas
