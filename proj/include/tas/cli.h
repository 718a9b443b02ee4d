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

#ifndef TAS_CLI_H_
#define TAS_CLI_H_

// Command-line front end: synth, tas, fewshot and theorem1.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "tas/serialize.h"

namespace tas {

struct CliOptions {
  std::filesystem::path config;
  std::optional<uint64_t> seed;
  std::filesystem::path out = ".";
  int jobs = 1;
  std::string ablation = "related";
  bool verbose = false;
};

// Each command returns the process exit code: 0 on success, 1 when
// theorem1 completes with a failing verdict. Errors propagate as exceptions.
int CmdSynth(const CliOptions& options, std::ostream& log);
int CmdTas(const CliOptions& options, std::ostream& log);
int CmdFewshot(const CliOptions& options, std::ostream& log);
int CmdTheorem1(const CliOptions& options, std::ostream& log);

// Parses argv and dispatches. Usage and runtime errors print to `err` and
// return 2.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace tas

#endif  // TAS_CLI_H_
