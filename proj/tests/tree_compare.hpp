// Copyright 2026 The fedrf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "fedrf/binary_io.hpp"

namespace fedrf::testing {

/// Relative paths of every regular file under `root`, sorted.
inline std::set<std::string> list_files(const std::filesystem::path& root) {
  std::set<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.insert(std::filesystem::relative(e.path(), root).string());
  return out;
}

/// Files that are absent on one side or differ in content; empty when the
/// trees are byte-identical.
inline std::vector<std::string> tree_differences(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto fa = list_files(a), fb = list_files(b);
  std::vector<std::string> diff;
  for (const auto& f : fa)
    if (!fb.count(f) || read_file_bytes((a / f).string()) != read_file_bytes((b / f).string())) diff.push_back(f);
  for (const auto& f : fb)
    if (!fa.count(f)) diff.push_back(f);
  return diff;
}

}  // namespace fedrf::testing
