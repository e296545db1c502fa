#pragma once

#include <filesystem>

#include "cube.hpp"

namespace hei {

// HSC cube file:
//   bytes 0-3   magic "HSC1"
//   bytes 4-15  H, W, C as little-endian uint32
//   then        H*W*C little-endian IEEE-754 float32, band-sequential
// HSM mask file:
//   bytes 0-3   magic "HSM1"
//   bytes 4-11  H, W as little-endian uint32
//   then        H*W bytes, each 0 or 1
//
// Loads are bit-exact inverses of saves. Malformed contents raise
// FormatError carrying the byte offset of the defect; saves validate the
// value invariants first and write atomically (temp file + rename), so a
// failed save leaves nothing behind.

HsiCube load_cube(const std::filesystem::path& path);
void save_cube(const HsiCube& cube, const std::filesystem::path& path);

SpatialMask load_mask(const std::filesystem::path& path);
void save_mask(const SpatialMask& mask, const std::filesystem::path& path);

// FNV-1a 64-bit hash of a file's bytes; used by run manifests.
std::uint64_t file_fnv1a(const std::filesystem::path& path);

}  // namespace hei
