#pragma once

#include <filesystem>

#include "gmeld/world/world.hpp"

namespace gmeld::world {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// Writes <dir>/spec.json, <dir>/clips.bin and <dir>/checksums.txt.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

// Verifies checksums before parsing; raises ChecksumError, VersionError or
// FormatError on damaged input.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace gmeld::world
