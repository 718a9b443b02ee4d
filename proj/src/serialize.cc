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

#include "tas/serialize.h"

#include <cstdio>
#include <stdexcept>

namespace tas {

namespace {

template <typename T>
void Read(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string FormatDouble(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

Json AccuracyToJson(const FewshotAccuracy& accuracy) {
  return {{"mean", accuracy.mean}, {"ci95", accuracy.ci95}};
}

FewshotAccuracy AccuracyFromJson(const Json& j) {
  return {j.at("mean").get<double>(), j.at("ci95").get<double>()};
}

}  // namespace

void CheckKeys(const Json& object, std::initializer_list<const char*> allowed,
               const std::string& context) {
  if (!object.is_object()) {
    throw std::invalid_argument(context + " must be a JSON object");
  }
  for (const auto& item : object.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) {
      throw std::invalid_argument("unknown key '" + item.key() + "' in " +
                                  context);
    }
  }
}

Json NetworkSpecToJson(const NetworkSpec& spec) {
  return {{"layer_widths", spec.layer_widths},
          {"head_classes", spec.head_classes},
          {"activation", std::string(ActivationName(spec.activation))}};
}

NetworkSpec NetworkSpecFromJson(const Json& j) {
  CheckKeys(j, {"layer_widths", "head_classes", "activation"}, "network");
  NetworkSpec spec;
  Read(j, "layer_widths", spec.layer_widths);
  Read(j, "head_classes", spec.head_classes);
  if (j.contains("activation")) {
    spec.activation = ParseActivation(j.at("activation").get<std::string>());
  }
  return spec;
}

Json NetworkToJson(const Network& net) {
  Json params = Json::array();
  for (Eigen::Index i = 0; i < net.params().size(); ++i) {
    params.push_back(net.params()[i]);
  }
  return {{"spec", NetworkSpecToJson(net.spec())}, {"params", params}};
}

Network NetworkFromJson(const Json& j) {
  CheckKeys(j, {"spec", "params"}, "network document");
  NetworkSpec spec = NetworkSpecFromJson(j.at("spec"));
  const std::vector<double> values = j.at("params").get<std::vector<double>>();
  Vector params = Eigen::Map<const Vector>(values.data(), values.size());
  return Network(std::move(spec), std::move(params));
}

Json ScheduleToJson(const TrainSchedule& schedule) {
  return {{"learning_rate", schedule.learning_rate},
          {"momentum", schedule.momentum},
          {"epochs", schedule.epochs},
          {"batch_size", schedule.batch_size},
          {"lr_decay_epochs", schedule.lr_decay_epochs},
          {"lr_decay_factor", schedule.lr_decay_factor}};
}

TrainSchedule ScheduleFromJson(const Json& j, TrainSchedule defaults) {
  CheckKeys(j,
            {"learning_rate", "momentum", "epochs", "batch_size",
             "lr_decay_epochs", "lr_decay_factor"},
            "schedule");
  TrainSchedule s = std::move(defaults);
  Read(j, "learning_rate", s.learning_rate);
  Read(j, "momentum", s.momentum);
  Read(j, "epochs", s.epochs);
  Read(j, "batch_size", s.batch_size);
  Read(j, "lr_decay_epochs", s.lr_decay_epochs);
  Read(j, "lr_decay_factor", s.lr_decay_factor);
  s.Validate();
  return s;
}

Json SyntheticConfigToJson(const SyntheticConfig& cfg) {
  return {{"n_families", cfg.n_families},
          {"classes_per_family", cfg.classes_per_family},
          {"samples_per_class", cfg.samples_per_class},
          {"input_dim", cfg.input_dim},
          {"family_spread", cfg.family_spread},
          {"class_spread", cfg.class_spread},
          {"noise_sigma", cfg.noise_sigma},
          {"family_subspace_dim", cfg.family_subspace_dim},
          {"seed", cfg.seed}};
}

SyntheticConfig SyntheticConfigFromJson(const Json& j) {
  CheckKeys(j,
            {"n_families", "classes_per_family", "samples_per_class",
             "input_dim", "family_spread", "class_spread", "noise_sigma",
             "family_subspace_dim", "seed"},
            "synthetic");
  SyntheticConfig cfg;
  Read(j, "n_families", cfg.n_families);
  Read(j, "classes_per_family", cfg.classes_per_family);
  Read(j, "samples_per_class", cfg.samples_per_class);
  Read(j, "input_dim", cfg.input_dim);
  Read(j, "family_spread", cfg.family_spread);
  Read(j, "class_spread", cfg.class_spread);
  Read(j, "noise_sigma", cfg.noise_sigma);
  Read(j, "family_subspace_dim", cfg.family_subspace_dim);
  Read(j, "seed", cfg.seed);
  cfg.Validate();
  return cfg;
}

Json ClassSplitToJson(const ClassSplit& split) {
  return {{"test_families", split.test_families},
          {"test_classes_per_family", split.test_classes_per_family}};
}

ClassSplit ClassSplitFromJson(const Json& j) {
  CheckKeys(j, {"test_families", "test_classes_per_family"}, "split");
  ClassSplit split;
  Read(j, "test_families", split.test_families);
  Read(j, "test_classes_per_family", split.test_classes_per_family);
  return split;
}

Json PipelineConfigToJson(const PipelineConfig& cfg) {
  return {{"s_count", cfg.s_count},
          {"n_test", cfg.n_test},
          {"top_r", cfg.top_r},
          {"m_way", cfg.m_way},
          {"k_shot", cfg.k_shot},
          {"q_query", cfg.q_query},
          {"epsilon", cfg.epsilon},
          {"whole_schedule", ScheduleToJson(cfg.whole_schedule)},
          {"approx_schedule", ScheduleToJson(cfg.approx_schedule)},
          {"finetune_schedule", ScheduleToJson(cfg.finetune_schedule)},
          {"finetune_batches_per_epoch", cfg.finetune_batches_per_epoch},
          {"n_eval_episodes", cfg.n_eval_episodes},
          {"softmax_temperature", cfg.softmax_temperature},
          {"histogram_bins", cfg.histogram_bins},
          {"master_seed", cfg.master_seed}};
}

PipelineConfig PipelineConfigFromJson(const Json& j) {
  CheckKeys(j,
            {"s_count", "n_test", "top_r", "m_way", "k_shot", "q_query",
             "epsilon", "whole_schedule", "approx_schedule",
             "finetune_schedule", "finetune_batches_per_epoch",
             "n_eval_episodes", "softmax_temperature", "histogram_bins",
             "master_seed"},
            "pipeline");
  PipelineConfig cfg;
  Read(j, "s_count", cfg.s_count);
  Read(j, "n_test", cfg.n_test);
  Read(j, "top_r", cfg.top_r);
  Read(j, "m_way", cfg.m_way);
  Read(j, "k_shot", cfg.k_shot);
  Read(j, "q_query", cfg.q_query);
  Read(j, "epsilon", cfg.epsilon);
  if (j.contains("whole_schedule")) {
    cfg.whole_schedule = ScheduleFromJson(j.at("whole_schedule"));
  }
  if (j.contains("approx_schedule")) {
    cfg.approx_schedule = ScheduleFromJson(j.at("approx_schedule"));
  }
  if (j.contains("finetune_schedule")) {
    cfg.finetune_schedule = ScheduleFromJson(j.at("finetune_schedule"));
  }
  Read(j, "finetune_batches_per_epoch", cfg.finetune_batches_per_epoch);
  Read(j, "n_eval_episodes", cfg.n_eval_episodes);
  Read(j, "softmax_temperature", cfg.softmax_temperature);
  Read(j, "histogram_bins", cfg.histogram_bins);
  Read(j, "master_seed", cfg.master_seed);
  cfg.Validate();
  cfg.ReseedFromMaster();
  return cfg;
}

Json Theorem1ConfigToJson(const Theorem1Config& cfg) {
  const bool constant = cfg.sgd.step.kind == StepSchedule::Kind::kConstant;
  return {{"dim", cfg.dim},
          {"n_train", cfg.n_train},
          {"n_query", cfg.n_query},
          {"n_support", cfg.n_support},
          {"l2_lambda", cfg.l2_lambda},
          {"true_weight_norm", cfg.true_weight_norm},
          {"n_seeds", cfg.n_seeds},
          {"abs_tol", cfg.abs_tol},
          {"solve_tol", cfg.solve_tol},
          {"master_seed", cfg.master_seed},
          {"sgd",
           {{"step",
             {{"kind", constant ? "constant" : "polynomial"},
              {"eta0", cfg.sgd.step.eta0},
              {"exponent", cfg.sgd.step.exponent}}},
            {"noise_sigma", cfg.sgd.noise_sigma},
            {"total_steps", cfg.sgd.total_steps},
            {"checkpoints_per_decade", cfg.sgd.checkpoints_per_decade},
            {"divergence_bound", cfg.sgd.divergence_bound}}}};
}

Theorem1Config Theorem1ConfigFromJson(const Json& j) {
  CheckKeys(j,
            {"dim", "n_train", "n_query", "n_support", "l2_lambda",
             "true_weight_norm", "n_seeds", "abs_tol", "solve_tol",
             "master_seed", "sgd"},
            "theorem1");
  Theorem1Config cfg;
  Read(j, "dim", cfg.dim);
  Read(j, "n_train", cfg.n_train);
  Read(j, "n_query", cfg.n_query);
  Read(j, "n_support", cfg.n_support);
  Read(j, "l2_lambda", cfg.l2_lambda);
  Read(j, "true_weight_norm", cfg.true_weight_norm);
  Read(j, "n_seeds", cfg.n_seeds);
  Read(j, "abs_tol", cfg.abs_tol);
  Read(j, "solve_tol", cfg.solve_tol);
  Read(j, "master_seed", cfg.master_seed);
  if (j.contains("sgd")) {
    const Json& sgd = j.at("sgd");
    CheckKeys(sgd,
              {"step", "noise_sigma", "total_steps", "checkpoints_per_decade",
               "divergence_bound"},
              "theorem1.sgd");
    if (sgd.contains("step")) {
      const Json& step = sgd.at("step");
      CheckKeys(step, {"kind", "eta0", "exponent"}, "theorem1.sgd.step");
      if (step.contains("kind")) {
        const std::string kind = step.at("kind").get<std::string>();
        if (kind == "constant") {
          cfg.sgd.step.kind = StepSchedule::Kind::kConstant;
        } else if (kind == "polynomial") {
          cfg.sgd.step.kind = StepSchedule::Kind::kPolynomial;
        } else {
          throw std::invalid_argument("unknown step kind: " + kind);
        }
      }
      Read(step, "eta0", cfg.sgd.step.eta0);
      Read(step, "exponent", cfg.sgd.step.exponent);
    }
    Read(sgd, "noise_sigma", cfg.sgd.noise_sigma);
    Read(sgd, "total_steps", cfg.sgd.total_steps);
    Read(sgd, "checkpoints_per_decade", cfg.sgd.checkpoints_per_decade);
    Read(sgd, "divergence_bound", cfg.sgd.divergence_bound);
  }
  cfg.Validate();
  return cfg;
}

Json FisherToJson(const FisherDiagonal& fisher) {
  return {{"normalized", fisher.normalized()},
          {"entries", std::vector<double>(fisher.entries().data(),
                                          fisher.entries().data() +
                                              fisher.entries().size())}};
}

Json RankedTaskToJson(const RankedTask& task) {
  return {{"task_id", task.task_id},
          {"score", task.score.value},
          {"assignment", task.assignment.mapping},
          {"assignment_cost", task.assignment.total_cost},
          {"approx_query_accuracy", task.approx_query_accuracy},
          {"approx_epochs", task.approx_epochs}};
}

RankedTask RankedTaskFromJson(const Json& j) {
  RankedTask task;
  task.task_id = j.at("task_id").get<int>();
  task.score.value = j.at("score").get<double>();
  task.assignment.mapping = j.at("assignment").get<std::vector<int>>();
  task.assignment.total_cost = j.at("assignment_cost").get<double>();
  task.approx_query_accuracy = j.at("approx_query_accuracy").get<double>();
  task.approx_epochs = j.at("approx_epochs").get<int>();
  return task;
}

Json ReportToJson(const RunReport& report) {
  Json scores = Json::array();
  for (const RankedTask& task : report.scores) {
    scores.push_back(RankedTaskToJson(task));
  }
  Json top = Json::array();
  for (const RankedTask& task : report.top) top.push_back(RankedTaskToJson(task));
  Json frequency = Json::array();
  for (const auto& [class_id, count] : report.label_frequency) {
    frequency.push_back({{"class_id", class_id}, {"count", count}});
  }
  return {{"mode", report.mode},
          {"scores", scores},
          {"top", top},
          {"selected_labels",
           {{"label_set", report.selected.label_set},
            {"row_indices", report.selected.row_indices}}},
          {"tas_histogram",
           {{"edges", report.tas_histogram.edges},
            {"counts", report.tas_histogram.counts}}},
          {"label_frequency", frequency},
          {"whole_train_accuracy", report.whole_train_accuracy},
          {"before_finetune", AccuracyToJson(report.before_finetune)},
          {"fewshot_accuracy_mean", report.after_finetune.mean},
          {"fewshot_ci95", report.after_finetune.ci95},
          {"timings", report.timings}};
}

RunReport ReportFromJson(const Json& j) {
  RunReport report;
  report.mode = j.at("mode").get<std::string>();
  for (const Json& task : j.at("scores")) {
    report.scores.push_back(RankedTaskFromJson(task));
  }
  for (const Json& task : j.at("top")) {
    report.top.push_back(RankedTaskFromJson(task));
  }
  const Json& selected = j.at("selected_labels");
  report.selected.label_set = selected.at("label_set").get<std::vector<int>>();
  report.selected.row_indices =
      selected.at("row_indices").get<std::vector<int>>();
  report.tas_histogram.edges =
      j.at("tas_histogram").at("edges").get<std::vector<double>>();
  report.tas_histogram.counts =
      j.at("tas_histogram").at("counts").get<std::vector<int>>();
  for (const Json& entry : j.at("label_frequency")) {
    report.label_frequency[entry.at("class_id").get<int>()] =
        entry.at("count").get<int>();
  }
  report.whole_train_accuracy = j.at("whole_train_accuracy").get<double>();
  report.before_finetune = AccuracyFromJson(j.at("before_finetune"));
  report.after_finetune = {j.at("fewshot_accuracy_mean").get<double>(),
                           j.at("fewshot_ci95").get<double>()};
  report.timings = j.at("timings").get<std::map<std::string, double>>();
  return report;
}

std::string HistogramCsv(const Histogram& histogram) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (size_t i = 0; i < histogram.counts.size(); ++i) {
    out += FormatDouble(histogram.edges[i]) + "," +
           FormatDouble(histogram.edges[i + 1]) + "," +
           std::to_string(histogram.counts[i]) + "\n";
  }
  return out;
}

std::string LabelFrequencyCsv(const std::map<int, int>& frequency) {
  std::string out = "class_id,count\n";
  for (const auto& [class_id, count] : frequency) {
    out += std::to_string(class_id) + "," + std::to_string(count) + "\n";
  }
  return out;
}

std::string Theorem1SeriesCsv(const Theorem1Result& result) {
  std::string out = "seed,t,s_t,gap\n";
  for (size_t seed = 0; seed < result.series.size(); ++seed) {
    for (size_t c = 0; c < result.checkpoint_times.size(); ++c) {
      const double s = result.series[seed][c];
      out += std::to_string(seed) + "," +
             std::to_string(result.checkpoint_times[c]) + "," +
             FormatDouble(s) + "," + FormatDouble(std::abs(s - result.s_star)) +
             "\n";
    }
  }
  return out;
}

Json Theorem1VerdictJson(const Theorem1Result& result) {
  return {{"pass", result.verdict.pass},
          {"final_gap_median", result.verdict.final_gap_median},
          {"trend", result.verdict.trend},
          {"checkpoints", result.checkpoint_times},
          {"s_star", result.s_star}};
}

std::string RunId(const Json& config) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(hash));
  return std::string(buffer, 12);
}

}  // namespace tas
