#pragma once

#include <filesystem>

#include "fpnr/tensor.hpp"

namespace fpnr {

// Binary portable graymap (P5). Sample depth follows maxval: one byte up to
// 255, two big-endian bytes up to 65535.
Tensor read_pgm(const std::filesystem::path& path);

// max_val 255 writes 8-bit samples after clipping to [0, max_val] and
// rounding half away from zero; larger max_val (up to 65535) writes 16-bit
// big-endian samples.
void write_pgm(const std::filesystem::path& path, const Tensor& image, int max_val = 255);

// Raw little-endian f32 plane with a JSON sidecar (path + ".json") holding
// the shape. Lossless for values that fit a float.
Tensor read_raw_f32(const std::filesystem::path& path);
void write_raw_f32(const std::filesystem::path& path, const Tensor& image);

// Reads either format, keyed on the extension (.pgm vs anything else).
Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& image);

}  // namespace fpnr
