// Copyright 2026 The cosplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COSPLIT_CLI_HPP_
#define COSPLIT_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace cosplit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Runs one subcommand. args excludes the program name. Summary lines
// (key=value) go to `out`, diagnostics to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Applies ROULETTE_LOG (error | info | debug) to the default logger.
void ConfigureLogging();

// Merges a flat key=value config file into args: each key becomes --key
// unless the flag is already present on the command line.
std::vector<std::string> MergeConfigFile(const std::vector<std::string>& args,
                                         const std::string& config_text);

}  // namespace cosplit::cli

#endif  // COSPLIT_CLI_HPP_
