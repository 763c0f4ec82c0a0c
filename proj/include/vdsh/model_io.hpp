// SPDX-License-Identifier: Apache-2.0
//
// Binary model file, all integers and floats little-endian:
//
//   "VDSH"            4 bytes magic
//   version           u32 (currently 1)
//   variant           u8  (0 vdsh, 1 vdsh-s, 2 vdsh-sp)
//   K, V, D, L        u32 each
//   parameters        f64 row-major, in ParamId order, skipping slots the
//                     variant does not use:
//                     W1 b1 W2 b2 W3 b3 W4 b4 G b_w [U c] [W3p b3p W4p b4p]
//   has_thresholds    u8 (0 or 1), followed by K f64 medians when 1
//   crc32             u32 over every preceding byte
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vdsh/model.hpp"

namespace vdsh::model {

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize(const ModelParams& params);
ModelParams deserialize(const std::string& bytes);

// Atomic: writes a temporary file next to `path` and renames it over.
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace vdsh::model
