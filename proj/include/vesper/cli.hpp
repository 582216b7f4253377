// include/vesper/cli.hpp

// Copyright 2026 The vesper-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VESPER_CLI_HPP_
#define VESPER_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace vesper {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

// Runs one command. `args` excludes the program name. JSON results go to
// `out`, messages and tables to `err`. Exit codes: 0 ok, 2 config or
// contract error, 3 I/O or parse error, 1 anything else.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace vesper

#endif  // VESPER_CLI_HPP_
