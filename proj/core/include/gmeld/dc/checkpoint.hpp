#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "gmeld/dc/param_store.hpp"

namespace gmeld::dc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  nlohmann::json meta;  // free-form, stored in the header
};

// Layout: "GMCKPT\0\0" | u32 version | u32 manifest bytes | manifest JSON |
// u32 crc32 of payload | payload of little-endian f64.
// The manifest lists {name, shape, offset} with offsets in bytes from the
// start of the payload.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gmeld::dc
