#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "ulre/metrics.hpp"

namespace ulre {

/// Malformed or inconsistent file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit binary PGM (P5, maxval 255), row-major; values clamped to [0, 1]
/// and rounded to the nearest level.
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// "ULRIMG v1 H W\n" followed by H*W little-endian float32 values.
void write_float_image(const std::filesystem::path& path, const Image& img);
Image read_float_image(const std::filesystem::path& path);

/// Rounds to the 8-bit grid, as a PGM round trip would.
Image quantize8(const Image& img);

}  // namespace ulre
