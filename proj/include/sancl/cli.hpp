// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line front end: synth, train, eval, probe-mask, annotate-heuristic.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sancl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// SHA-1 of "blob <size>\0<bytes>", as git computes object ids.
std::string git_blob_hash(const std::filesystem::path& file);

/// Hash over every regular file below the given paths: SHA-1 of the sorted
/// "<blob hash> <relative path>\n" lines.
std::string inputs_hash(const std::vector<std::filesystem::path>& roots);

}  // namespace sancl::cli
