#include "fpnr/image.hpp"

#include <algorithm>

#include "fpnr/common.hpp"

namespace fpnr {

namespace {

void require_image(const Tensor& x, const char* op) {
  if (x.rank() != 2)
    fail(ErrorKind::config, std::string(op) + ": expected a rank-2 image, got shape " + x.shape_str());
}

template <typename Fn>
Tensor window3x3(const Tensor& x, Fn&& fn) {
  const int h = x.extent(0), w = x.extent(1);
  Tensor out({h, w});
  double taps[9];
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sy = std::clamp(y + dy, 0, h - 1);
          const int sx = std::clamp(xx + dx, 0, w - 1);
          taps[k++] = x.at(sy, sx);
        }
      out.at(y, xx) = fn(taps);
    }
  return out;
}

}  // namespace

Tensor mean3x3(const Tensor& x) {
  require_image(x, "mean3x3");
  return window3x3(x, [](const double* t) {
    double acc = 0.0;
    for (int i = 0; i < 9; ++i) acc += t[i];
    return acc / 9.0;
  });
}

Tensor variance3x3(const Tensor& x) {
  require_image(x, "variance3x3");
  return window3x3(x, [](const double* t) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < 9; ++i) {
      s += t[i];
      s2 += t[i] * t[i];
    }
    const double mean = s / 9.0;
    return std::max(0.0, s2 / 9.0 - mean * mean);
  });
}

Tensor crop(const Tensor& x, int y0, int x0, int h, int w) {
  require_image(x, "crop");
  if (h <= 0 || w <= 0 || y0 < 0 || x0 < 0 || y0 + h > x.extent(0) || x0 + w > x.extent(1))
    fail(ErrorKind::config, "crop: window " + std::to_string(h) + "x" + std::to_string(w) + "+" +
                                std::to_string(y0) + "+" + std::to_string(x0) +
                                " leaves image " + x.shape_str());
  Tensor out({h, w});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) out.at(y, xx) = x.at(y0 + y, x0 + xx);
  return out;
}

Tensor pad_replicate(const Tensor& x, int top, int bottom, int left, int right) {
  require_image(x, "pad_replicate");
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    fail(ErrorKind::config, "pad_replicate: margins must be nonnegative");
  const int h = x.extent(0), w = x.extent(1);
  Tensor out({h + top + bottom, w + left + right});
  for (int y = 0; y < out.extent(0); ++y)
    for (int xx = 0; xx < out.extent(1); ++xx) {
      const int sy = std::clamp(y - top, 0, h - 1);
      const int sx = std::clamp(xx - left, 0, w - 1);
      out.at(y, xx) = x.at(sy, sx);
    }
  return out;
}

Tensor dihedral(const Tensor& x, int variant) {
  require_image(x, "dihedral");
  if (variant < 0 || variant > 7)
    fail(ErrorKind::config, "dihedral: variant must be 0..7, got " + std::to_string(variant));
  const int h = x.extent(0), w = x.extent(1);
  Tensor base = x;
  if (variant >= 4) {
    Tensor m({h, w});
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) m.at(y, xx) = x.at(y, w - 1 - xx);
    base = std::move(m);
  }
  const int rot = variant % 4;
  for (int r = 0; r < rot; ++r) {
    const int bh = base.extent(0), bw = base.extent(1);
    Tensor t({bw, bh});
    for (int y = 0; y < bh; ++y)
      for (int xx = 0; xx < bw; ++xx) t.at(bw - 1 - xx, y) = base.at(y, xx);
    base = std::move(t);
  }
  return base;
}

}  // namespace fpnr
