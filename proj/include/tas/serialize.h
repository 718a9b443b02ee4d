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

#ifndef TAS_SERIALIZE_H_
#define TAS_SERIALIZE_H_

// JSON and CSV forms of networks, configs, reports and theorem results.
// Config readers reject unknown keys; missing keys keep their defaults.

#include <map>
#include <string>

#include "json.hpp"
#include "tas/fisher.h"
#include "tas/nnet.h"
#include "tas/pipeline.h"
#include "tas/tasks.h"
#include "tas/theorem.h"

namespace tas {

using Json = nlohmann::json;

// Throws std::invalid_argument naming the first key of `object` that is
// not in `allowed`, or if `object` is not a JSON object.
void CheckKeys(const Json& object, std::initializer_list<const char*> allowed,
               const std::string& context);

// Parameters round-trip bit-exactly.
Json NetworkToJson(const Network& net);
Network NetworkFromJson(const Json& j);

Json NetworkSpecToJson(const NetworkSpec& spec);
NetworkSpec NetworkSpecFromJson(const Json& j);

Json ScheduleToJson(const TrainSchedule& schedule);
TrainSchedule ScheduleFromJson(const Json& j, TrainSchedule defaults = {});

Json SyntheticConfigToJson(const SyntheticConfig& cfg);
SyntheticConfig SyntheticConfigFromJson(const Json& j);

Json ClassSplitToJson(const ClassSplit& split);
ClassSplit ClassSplitFromJson(const Json& j);

Json PipelineConfigToJson(const PipelineConfig& cfg);
PipelineConfig PipelineConfigFromJson(const Json& j);

Json Theorem1ConfigToJson(const Theorem1Config& cfg);
Theorem1Config Theorem1ConfigFromJson(const Json& j);

Json FisherToJson(const FisherDiagonal& fisher);

Json RankedTaskToJson(const RankedTask& task);
RankedTask RankedTaskFromJson(const Json& j);

// Every RunReport field; "timings" is the only non-deterministic member.
Json ReportToJson(const RunReport& report);
RunReport ReportFromJson(const Json& j);

// bin_lo,bin_hi,count
std::string HistogramCsv(const Histogram& histogram);
// class_id,count
std::string LabelFrequencyCsv(const std::map<int, int>& frequency);
// seed,t,s_t,gap
std::string Theorem1SeriesCsv(const Theorem1Result& result);
Json Theorem1VerdictJson(const Theorem1Result& result);

// First 12 hex digits of the FNV-1a hash of the compact dump.
std::string RunId(const Json& config);

}  // namespace tas

#endif  // TAS_SERIALIZE_H_
