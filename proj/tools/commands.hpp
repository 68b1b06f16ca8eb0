/* Copyright 2026 The tbvi Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace tbvi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

// Entry point; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// out[t] = mean(values[t - window + 1 .. t]), clipped at the start.
std::vector<double> rolling_mean(const std::vector<double>& values, std::size_t window);

// git-style blob id: sha1("blob <size>\0" + content), lowercase hex.
std::string content_hash(const std::string& content);

std::vector<long long> parse_int_list(const std::string& text);

}  // namespace tbvi::cli
