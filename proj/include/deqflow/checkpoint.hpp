// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "deqflow/flow.hpp"

namespace deqflow {

// Layout (all integers little-endian), see docs/checkpoint_format.md:
//   "DQFLOWCK"  u32 version  u32 reserved  u64 header_bytes
//   header: JSON object (architecture, parameter groups, metadata)
//   payload: every parameter as a 64-bit IEEE-754 little-endian double, in
//            group order

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model,
                     const std::string& metadata_json = "{}");

/// Loads a model. If `expected` is given, its architecture must match the
/// checkpoint's exactly or a Load error is thrown.
FlowModel load_checkpoint(const std::filesystem::path& path,
                          const std::optional<FlowConfig>& expected = std::nullopt);

}  // namespace deqflow
