// Copyright (c) the permubench authors
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


#pragma once

// Command-line front end. Subcommands: run, report, inject, corrupt,
// attack, synth, selftest. Exit codes: 0 success, 1 runtime failure
// (including any failed run in a matrix), 2 usage or configuration error.

#include <iosfwd>
#include <string>
#include <vector>

namespace permubench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Fast invariant checks on randomly initialized models and synthetic data;
// prints one PASS/FAIL line per check and returns true when all pass.
bool selftest(std::ostream& out);

}  // namespace permubench
