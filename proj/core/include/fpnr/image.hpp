#pragma once

#include "fpnr/tensor.hpp"

namespace fpnr {

// Neighborhood statistics and layout helpers for rank-2 image tensors.
// All 3x3 windows replicate the border pixel outside the image.

Tensor mean3x3(const Tensor& x);

// Population variance over the replicated 3x3 window, clamped at zero.
Tensor variance3x3(const Tensor& x);

Tensor crop(const Tensor& x, int y0, int x0, int h, int w);

// Replicate-pads by the given margins on each side.
Tensor pad_replicate(const Tensor& x, int top, int bottom, int left, int right);

// The eight axis-aligned symmetries of the square: variants 0..3 rotate
// counterclockwise by 90*variant degrees, variants 4..7 mirror horizontally
// first and then rotate.
Tensor dihedral(const Tensor& x, int variant);

}  // namespace fpnr
