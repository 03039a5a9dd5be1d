#pragma once

#include <filesystem>
#include <string>

#include "texgen/common.hpp"

namespace texgen {

/// Binary PPM (P6), 8-bit RGB. In-memory values are in [-1, 1]; the byte
/// mapping is round((x + 1) / 2 * 255) with clamping.
void write_ppm(const std::filesystem::path& path, const Grid& image);
Grid read_ppm(const std::filesystem::path& path);

uint8_t to_byte(double v);
double from_byte(uint8_t b);

/// Quantizes a [-1,1] grid through the 8-bit mapping (what a write/read
/// round trip would produce).
Grid quantize8(const Grid& image);

/// FNV-1a over a file's bytes.
uint64_t file_hash(const std::filesystem::path& path);

}  // namespace texgen
