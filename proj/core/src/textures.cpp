#include "fpnr/textures.hpp"

#include <algorithm>
#include <cmath>

#include "fpnr/common.hpp"
#include "fpnr/image.hpp"
#include "fpnr/rng.hpp"

namespace fpnr {

namespace {

Tensor white_noise(int h, int w, Rng& rng) {
  Tensor t({h, w});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

Tensor clouds(int h, int w, Rng& rng) {
  Tensor t = white_noise(h, w, rng);
  for (int pass = 0; pass < 12; ++pass) t = mean3x3(t);
  return t;
}

Tensor ramps(int h, int w, Rng& rng) {
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double cx = std::cos(angle), cy = std::sin(angle);
  const double freq1 = rng.uniform(2.0, 6.0), freq2 = rng.uniform(8.0, 18.0);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  Tensor t({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (cx * x + cy * y) / std::max(h, w);
      const double v = (cx * y - cy * x) / std::max(h, w);
      t.at(y, x) = u + 0.3 * std::sin(freq1 * u * 6.2831853 + phase) +
                   0.15 * std::sin(freq2 * v * 6.2831853);
    }
  return t;
}

Tensor blocks(int h, int w, Rng& rng) {
  Tensor t({h, w}, 0.5);
  const int count = 12 + static_cast<int>(rng.uniform_int(10));
  for (int k = 0; k < count; ++k) {
    const int bh = 4 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(4, h / 3))));
    const int bw = 4 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(4, w / 3))));
    const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, h - bh))));
    const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, w - bw))));
    const double level = rng.uniform();
    for (int y = y0; y < std::min(h, y0 + bh); ++y)
      for (int x = x0; x < std::min(w, x0 + bw); ++x) t.at(y, x) = level;
  }
  return mean3x3(t);
}

Tensor value_noise(int h, int w, Rng& rng) {
  Tensor t({h, w});
  double weight = 1.0;
  for (int octave = 0; octave < 3; ++octave) {
    const int cell = std::max(2, std::min(h, w) >> (2 + octave));
    const int gh = h / cell + 2, gw = w / cell + 2;
    Tensor grid = white_noise(gh, gw, rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
        const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
        const double ty = fy - iy, tx = fx - ix;
        const double v = (1 - ty) * ((1 - tx) * grid.at(iy, ix) + tx * grid.at(iy, ix + 1)) +
                         ty * ((1 - tx) * grid.at(iy + 1, ix) + tx * grid.at(iy + 1, ix + 1));
        t.at(y, x) += weight * v;
      }
    weight *= 0.5;
  }
  return t;
}

// Affine-map to the target radiometry, then clamp into display range.
Tensor normalize(Tensor t, double target_mean, double target_std) {
  double mean = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) mean += t[i];
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double d = t[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(t.size());
  const double scale = var > 0.0 ? target_std / std::sqrt(var) : 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = std::clamp(target_mean + (t[i] - mean) * scale, 0.0, 255.0);
  return t;
}

}  // namespace

Tensor texture_image(int height, int width, int kind, std::uint64_t seed) {
  if (height < 8 || width < 8)
    fail(ErrorKind::config, "texture_image: extents must be at least 8, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  if (kind < 0 || kind >= kTextureKinds)
    fail(ErrorKind::config, "texture_image: kind must be 0.." + std::to_string(kTextureKinds - 1) +
                                ", got " + std::to_string(kind));
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(kind) + 101);
  const double target_mean = rng.uniform(85.0, 110.0);
  const double target_std = rng.uniform(30.0, 45.0);
  Tensor t;
  switch (kind) {
    case 0: t = clouds(height, width, rng); break;
    case 1: t = ramps(height, width, rng); break;
    case 2: t = blocks(height, width, rng); break;
    default: t = value_noise(height, width, rng); break;
  }
  return normalize(std::move(t), target_mean, target_std);
}

std::vector<Tensor> texture_bank(int height, int width, int count, std::uint64_t seed) {
  if (count < 0) fail(ErrorKind::config, "texture_bank: count must be nonnegative");
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(texture_image(height, width, i % kTextureKinds,
                                seed + static_cast<std::uint64_t>(i) * 7919));
  return out;
}

}  // namespace fpnr
