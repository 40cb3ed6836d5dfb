#include "fpnr/metrics.hpp"

#include <cmath>
#include <limits>

#include "fpnr/common.hpp"

namespace fpnr {

double psnr(const Tensor& reference, const Tensor& test, double max_val) {
  if (!reference.same_shape(test))
    fail(ErrorKind::validation, "psnr: shapes " + reference.shape_str() + " and " + test.shape_str() +
                                    " differ");
  if (max_val <= 0.0) fail(ErrorKind::config, "psnr: max_val must be positive");
  double acc = 0.0;
  for (std::int64_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double roughness(const Tensor& image) {
  if (image.rank() != 2 || image.extent(0) < 2 || image.extent(1) < 2)
    fail(ErrorKind::validation, "roughness: need a rank-2 image at least 2x2, got " + image.shape_str());
  const int h = image.extent(0), w = image.extent(1);
  double denom = 0.0;
  for (std::int64_t i = 0; i < image.size(); ++i) denom += std::abs(image[i]);
  if (denom == 0.0) fail(ErrorKind::validation, "roughness: undefined for the all-zero image");
  double horiz = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) horiz += std::abs(image.at(y, x) - image.at(y, x + 1));
  double vert = 0.0;
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) vert += std::abs(image.at(y, x) - image.at(y + 1, x));
  return (horiz + vert) / denom;
}

MetricReport score(const Tensor& reference, const Tensor& test, double max_val) {
  MetricReport r;
  r.psnr_db = psnr(reference, test, max_val);
  r.roughness = roughness(test);
  return r;
}

}  // namespace fpnr
