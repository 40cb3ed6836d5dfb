#pragma once

#include <cstdint>
#include <vector>

#include "fpnr/tensor.hpp"

namespace fpnr {

inline constexpr int kTextureKinds = 4;

// Procedural grayscale test content in display range: 0 smoothed clouds,
// 1 ramps with interference fringes, 2 rectangular blocks, 3 multi-octave
// value noise. Radiometry is normalized to a mid-gray mean with moderate
// contrast so simulated corruption lands in the expected PSNR regime.
Tensor texture_image(int height, int width, int kind, std::uint64_t seed);

// count images cycling through the kinds, each with its own derived seed.
std::vector<Tensor> texture_bank(int height, int width, int count, std::uint64_t seed);

}  // namespace fpnr
