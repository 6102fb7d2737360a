// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary checkpoint: "SNCL", u32 version, u32 meta length + meta JSON (model
// config and vocabulary), u32 block count, then per parameter: u32 name
// length, name, u32 rows, u32 cols, rows*cols f32. All little-endian.

#include <filesystem>
#include <memory>

#include "sancl/model.hpp"

namespace sancl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const HelpfulnessModel& model, const std::filesystem::path& path);

/// Rebuilds the model described by the checkpoint. When `expected` is given
/// its dimensions must match the stored ones. Throws CheckpointError.
std::unique_ptr<HelpfulnessModel> load_checkpoint(const std::filesystem::path& path,
                                                  const ModelConfig* expected = nullptr);

}  // namespace sancl
