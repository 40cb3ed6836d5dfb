#pragma once

#include <optional>

#include "fpnr/tensor.hpp"

namespace fpnr {

struct MetricReport {
  double psnr_db = 0.0;
  double roughness = 0.0;
  std::optional<int> frame_index;
};

// 10*log10(max_val^2 / MSE). Identical images return +infinity.
double psnr(const Tensor& reference, const Tensor& test, double max_val = 255.0);

// (|h1 * X|_1 + |h2 * X|_1) / |X|_1 where h1 = [1, -1] correlates
// horizontally, h2 vertically, both over the valid region only (no padding):
// the horizontal map is H x (W-1), the vertical map (H-1) x W.
double roughness(const Tensor& image);

MetricReport score(const Tensor& reference, const Tensor& test, double max_val = 255.0);

}  // namespace fpnr
