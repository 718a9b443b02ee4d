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

#include "tas/cli.h"

#include <exception>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "tas/io.h"
#include "tas/pipeline.h"
#include "tas/rng.h"
#include "tas/tasks.h"
#include "tas/theorem.h"

namespace tas {

namespace {

Json LoadConfig(const CliOptions& options) {
  if (options.config.empty()) throw std::invalid_argument("--config is required");
  try {
    return Json::parse(ReadFile(options.config));
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(options.config.string() + ": " + e.what());
  }
}

std::filesystem::path Resolve(const CliOptions& options, const std::string& p) {
  const std::filesystem::path path(p);
  if (path.is_absolute()) return path;
  return options.config.parent_path() / path;
}

void PrepareOut(const CliOptions& options) {
  std::filesystem::create_directories(options.out);
}

void WriteJson(const std::filesystem::path& path, const Json& j) {
  WriteFileAtomic(path, j.dump(2) + "\n");
}

struct SyntheticSection {
  SyntheticConfig synthetic;
  std::optional<ClassSplit> split;
};

SyntheticSection ReadSynthetic(const Json& j, const CliOptions& options) {
  SyntheticSection section;
  section.synthetic = SyntheticConfigFromJson(j.at("synthetic"));
  if (j.contains("split")) section.split = ClassSplitFromJson(j.at("split"));
  if (options.seed) {
    section.synthetic.seed = DeriveSeed(*options.seed, SeedStream::kSynthetic);
  }
  return section;
}

Json SyntheticEcho(const SyntheticSection& section) {
  Json echo = {{"synthetic", SyntheticConfigToJson(section.synthetic)}};
  if (section.split) echo["split"] = ClassSplitToJson(*section.split);
  return echo;
}

struct PipelineInputs {
  Dataset train;
  Dataset test;
  NetworkSpec spec;
  PipelineConfig cfg;
  Json echo;
};

PipelineInputs LoadPipelineInputs(const CliOptions& options) {
  const Json config = LoadConfig(options);
  CheckKeys(config, {"data", "network", "pipeline"}, "config");
  PipelineInputs inputs;
  const Json& data = config.at("data");
  CheckKeys(data, {"train_csv", "test_csv", "synthetic", "split"}, "data");
  Json data_echo;
  if (data.contains("synthetic")) {
    if (data.contains("train_csv") || data.contains("test_csv")) {
      throw std::invalid_argument("data takes either csv paths or synthetic");
    }
    const SyntheticSection section = ReadSynthetic(data, options);
    if (!section.split) {
      throw std::invalid_argument("synthetic data needs a class split");
    }
    TrainTestSplit split = SplitClasses(MakeSynthetic(section.synthetic),
                                        section.synthetic, *section.split);
    inputs.train = std::move(split.train);
    inputs.test = std::move(split.test);
    data_echo = SyntheticEcho(section);
  } else {
    const std::string train = data.at("train_csv").get<std::string>();
    const std::string test = data.at("test_csv").get<std::string>();
    inputs.train = LoadCsv(Resolve(options, train).string());
    inputs.test = LoadCsv(Resolve(options, test).string());
    data_echo = {{"train_csv", train}, {"test_csv", test}};
  }

  inputs.spec = NetworkSpecFromJson(config.at("network"));
  if (!config.at("network").contains("head_classes")) {
    inputs.spec.head_classes = inputs.train.num_classes();
  }
  inputs.spec.Validate();
  if (inputs.spec.input_dim() != inputs.train.dim() ||
      inputs.test.dim() != inputs.train.dim()) {
    throw std::invalid_argument("network input width does not match the data");
  }

  inputs.cfg = PipelineConfigFromJson(
      config.contains("pipeline") ? config.at("pipeline") : Json::object());
  if (options.seed) {
    inputs.cfg.master_seed = *options.seed;
    inputs.cfg.ReseedFromMaster();
  }
  inputs.echo = {{"data", data_echo},
                 {"network", NetworkSpecToJson(inputs.spec)},
                 {"pipeline", PipelineConfigToJson(inputs.cfg)}};
  return inputs;
}

}  // namespace

int CmdSynth(const CliOptions& options, std::ostream& log) {
  const Json config = LoadConfig(options);
  CheckKeys(config, {"synthetic", "split"}, "config");
  const SyntheticSection section = ReadSynthetic(config, options);
  const Dataset data = MakeSynthetic(section.synthetic);
  PrepareOut(options);
  WriteFileAtomic(options.out / "dataset.csv", FormatCsv(data));
  log << "dataset.csv: " << data.size() << " rows, " << data.num_classes()
      << " classes\n";
  if (section.split) {
    const TrainTestSplit split =
        SplitClasses(data, section.synthetic, *section.split);
    WriteFileAtomic(options.out / "train.csv", FormatCsv(split.train));
    WriteFileAtomic(options.out / "test.csv", FormatCsv(split.test));
    log << "train.csv: " << split.train.size() << " rows, "
        << split.train.num_classes() << " classes\n"
        << "test.csv: " << split.test.size() << " rows, "
        << split.test.num_classes() << " classes\n";
  }
  return 0;
}

int CmdTas(const CliOptions& options, std::ostream& log) {
  const PipelineInputs inputs = LoadPipelineInputs(options);
  PrepareOut(options);
  const AffinityPhase phase = RunAffinityPhase(
      inputs.train, inputs.test, inputs.spec, inputs.cfg, options.jobs);

  const std::vector<RankedTask> top = RankSources(phase.scores, inputs.cfg.top_r);
  std::vector<double> values;
  Json scores = Json::array();
  for (const RankedTask& task : phase.scores) {
    values.push_back(task.score.value);
    scores.push_back(RankedTaskToJson(task));
  }
  Json top_json = Json::array();
  for (const RankedTask& task : top) top_json.push_back(RankedTaskToJson(task));
  const Histogram histogram = MakeHistogram(values, inputs.cfg.histogram_bins);
  const std::map<int, int> frequency =
      LabelFrequency(top, phase.tasks, inputs.train);

  const Json document = {
      {"run_id", RunId(inputs.echo)},
      {"config", inputs.echo},
      {"whole_train_accuracy", phase.whole_train_accuracy},
      {"scores", scores},
      {"top", top_json},
      {"selected_labels",
       RelatedTrainingSet(top, phase.tasks, inputs.train).label_set},
      {"tas_histogram", {{"edges", histogram.edges}, {"counts", histogram.counts}}},
      {"timings", phase.timings}};
  WriteJson(options.out / "scores.json", document);
  WriteFileAtomic(options.out / "tas_hist.csv", HistogramCsv(histogram));
  WriteFileAtomic(options.out / "label_freq.csv", LabelFrequencyCsv(frequency));
  log << "scored " << phase.scores.size() << " source tasks; best task "
      << top.front().task_id << " with TAS " << top.front().score.value << "\n";
  return 0;
}

int CmdFewshot(const CliOptions& options, std::ostream& log) {
  const AblationMode mode = ParseAblationMode(options.ablation);
  const PipelineInputs inputs = LoadPipelineInputs(options);
  PrepareOut(options);
  const RunReport report = AblationRun(inputs.train, inputs.test, inputs.spec,
                                       inputs.cfg, mode, options.jobs);
  Json document = ReportToJson(report);
  document["run_id"] = RunId(inputs.echo);
  document["config"] = inputs.echo;
  WriteJson(options.out / "report.json", document);
  WriteFileAtomic(options.out / "tas_hist.csv",
                  HistogramCsv(report.tas_histogram));
  WriteFileAtomic(options.out / "label_freq.csv",
                  LabelFrequencyCsv(report.label_frequency));
  log << "mode " << report.mode << ": few-shot accuracy "
      << report.after_finetune.mean << " +- " << report.after_finetune.ci95
      << " (before fine-tuning " << report.before_finetune.mean << ")\n";
  return 0;
}

int CmdTheorem1(const CliOptions& options, std::ostream& log) {
  const Json config = LoadConfig(options);
  CheckKeys(config, {"theorem1"}, "config");
  Theorem1Config cfg = Theorem1ConfigFromJson(
      config.contains("theorem1") ? config.at("theorem1") : Json::object());
  if (options.seed) cfg.master_seed = *options.seed;
  PrepareOut(options);
  const Theorem1Result result = RunTheorem1(cfg, options.jobs);
  Json verdict = Theorem1VerdictJson(result);
  verdict["config"] = Theorem1ConfigToJson(cfg);
  verdict["run_id"] = RunId(verdict["config"]);
  WriteFileAtomic(options.out / "theorem1_series.csv", Theorem1SeriesCsv(result));
  WriteJson(options.out / "theorem1_verdict.json", verdict);
  log << "theorem1 " << (result.verdict.pass ? "PASS" : "FAIL")
      << ": median final gap " << result.verdict.final_gap_median << "\n";
  return result.verdict.pass ? 0 : 1;
}

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Task Affinity Score toolkit"};
  app.require_subcommand(1);
  CliOptions options;
  std::string config;
  std::string out_dir = ".";
  uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config")->required();
    cmd->add_option("--seed", seed, "master seed overriding every config seed");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--jobs", options.jobs, "worker threads")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("-v,--verbose", options.verbose, "progress on stderr");
  };
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
  CLI::App* tas = app.add_subcommand("tas", "score source tasks (phases 1-2)");
  CLI::App* fewshot = app.add_subcommand("fewshot", "full few-shot run");
  CLI::App* theorem1 =
      app.add_subcommand("theorem1", "TAS convergence under averaged SGD");
  for (CLI::App* cmd : {synth, tas, fewshot, theorem1}) add_common(cmd);
  fewshot->add_option("--ablation", options.ablation, "label selection mode")
      ->check(CLI::IsMember({"related", "non_related", "random"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  options.config = config;
  options.out = out_dir;
  for (CLI::App* cmd : {synth, tas, fewshot, theorem1}) {
    if (cmd->count("--seed") > 0) options.seed = seed;
  }

  std::ostream& log = out;
  if (options.verbose) {
    err << "config " << options.config << ", out " << options.out << ", jobs "
        << options.jobs << "\n";
  }
  try {
    int code = 0;
    if (*synth) code = CmdSynth(options, log);
    if (*tas) code = CmdTas(options, log);
    if (*fewshot) code = CmdFewshot(options, log);
    if (*theorem1) code = CmdTheorem1(options, log);
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace tas
