#include "fpnr/fpn_sim.hpp"

#include <algorithm>

#include "fpnr/common.hpp"
#include "fpnr/image.hpp"
#include "fpnr/rng.hpp"

namespace fpnr {

const char* to_string(GainGeometry g) {
  return g == GainGeometry::stripe_column ? "stripe_column" : "per_pixel";
}

GainGeometry gain_geometry_from_string(const std::string& s) {
  if (s == "stripe_column") return GainGeometry::stripe_column;
  if (s == "per_pixel") return GainGeometry::per_pixel;
  fail(ErrorKind::config, "unknown gain geometry '" + s + "' (expected stripe_column or per_pixel)");
}

void NoiseSpec::validate() const {
  if (sigma_g < 0.0 || sigma_o < 0.0)
    fail(ErrorKind::config, "noise spec: sigma_g and sigma_o must be nonnegative");
}

FixedPatternNoise make_noise(const NoiseSpec& spec, int height, int width) {
  spec.validate();
  if (height <= 0 || width <= 0)
    fail(ErrorKind::config, "make_noise: extents must be positive, got " + std::to_string(height) +
                                "x" + std::to_string(width));
  Rng rng(spec.seed);
  FixedPatternNoise n;
  n.gain = Tensor({height, width});
  n.offset = Tensor({height, width});
  if (spec.gain_geometry == GainGeometry::stripe_column) {
    std::vector<double> cols(static_cast<std::size_t>(width));
    for (int x = 0; x < width; ++x) cols[static_cast<std::size_t>(x)] = rng.normal(1.0, spec.sigma_g);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) n.gain.at(y, x) = cols[static_cast<std::size_t>(x)];
  } else {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) n.gain.at(y, x) = rng.normal(1.0, spec.sigma_g);
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) n.offset.at(y, x) = rng.normal(0.0, spec.sigma_o);
  return n;
}

Tensor apply_fpn(const Tensor& clean, const FixedPatternNoise& noise) {
  if (!clean.same_shape(noise.gain) || !clean.same_shape(noise.offset))
    fail(ErrorKind::validation, "apply_fpn: image " + clean.shape_str() + " vs noise field " +
                                    noise.gain.shape_str());
  Tensor y = clean;
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = noise.gain[i] * y[i] + noise.offset[i];
  return y;
}

PatchDataset gen_patch_dataset(std::span<const Tensor> source_images, int count, bool augment,
                               std::array<double, 2> sigma_g_range,
                               std::array<double, 2> sigma_o_range, std::uint64_t seed,
                               GainGeometry geometry, std::vector<std::string>* warnings) {
  if (count < 0) fail(ErrorKind::config, "gen_patch_dataset: count must be nonnegative");
  auto check_range = [](std::array<double, 2> r, const char* name) {
    if (r[0] < 0.0 || r[1] < r[0])
      fail(ErrorKind::config, std::string("gen_patch_dataset: bad ") + name + " range [" +
                                  std::to_string(r[0]) + ", " + std::to_string(r[1]) + "]");
  };
  check_range(sigma_g_range, "sigma_g");
  check_range(sigma_o_range, "sigma_o");

  std::vector<int> usable;
  for (std::size_t i = 0; i < source_images.size(); ++i) {
    const Tensor& img = source_images[i];
    if (img.rank() != 2)
      fail(ErrorKind::config, "gen_patch_dataset: source " + std::to_string(i) +
                                  " is not a rank-2 image: " + img.shape_str());
    if (img.extent(0) < kPatchSize || img.extent(1) < kPatchSize) {
      if (warnings)
        warnings->push_back("source " + std::to_string(i) + " (" + img.shape_str() +
                            ") smaller than " + std::to_string(kPatchSize) + "x" +
                            std::to_string(kPatchSize) + " patch, skipped");
      continue;
    }
    usable.push_back(static_cast<int>(i));
  }
  if (count > 0 && usable.empty())
    fail(ErrorKind::validation, "gen_patch_dataset: no source image is large enough for a patch");

  PatchDataset ds;
  ds.seed = seed;
  ds.pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
    PatchPair pp;
    pp.source_index = usable[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(usable.size())))];
    const Tensor& src = source_images[static_cast<std::size_t>(pp.source_index)];
    pp.crop_y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.extent(0) - kPatchSize + 1)));
    pp.crop_x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.extent(1) - kPatchSize + 1)));
    const int variant = augment ? static_cast<int>(rng.uniform_int(8)) : 0;
    pp.augment.flip = variant >= 4;
    pp.augment.rotation_quarters = variant % 4;
    pp.spec.sigma_g = rng.uniform(sigma_g_range[0], sigma_g_range[1]);
    pp.spec.sigma_o = rng.uniform(sigma_o_range[0], sigma_o_range[1]);
    pp.spec.gain_geometry = geometry;
    pp.spec.seed = rng.next_u64();
    pp.clean = dihedral(crop(src, pp.crop_y, pp.crop_x, kPatchSize, kPatchSize), variant);
    pp.corrupted = apply_fpn(pp.clean, make_noise(pp.spec, kPatchSize, kPatchSize));
    ds.pairs.push_back(std::move(pp));
  }
  return ds;
}

std::vector<SequenceFrame> gen_sequence(const Tensor& base_scene, int frame_h, int frame_w,
                                        std::span<const std::array<int, 2>> path,
                                        const FixedPatternNoise& noise) {
  if (base_scene.rank() != 2)
    fail(ErrorKind::config, "gen_sequence: base scene must be rank-2, got " + base_scene.shape_str());
  if (frame_h <= 0 || frame_w <= 0)
    fail(ErrorKind::config, "gen_sequence: frame extents must be positive");
  if (noise.gain.shape() != std::vector<int>{frame_h, frame_w})
    fail(ErrorKind::validation, "gen_sequence: noise field " + noise.gain.shape_str() +
                                    " does not match frame size " + std::to_string(frame_h) + "x" +
                                    std::to_string(frame_w));
  std::vector<SequenceFrame> frames;
  frames.reserve(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    const auto [y0, x0] = path[k];
    if (y0 < 0 || x0 < 0 || y0 + frame_h > base_scene.extent(0) || x0 + frame_w > base_scene.extent(1))
      fail(ErrorKind::validation, "gen_sequence: frame " + std::to_string(k) + " window exits the scene at (" +
                                      std::to_string(y0) + ", " + std::to_string(x0) + ")");
    SequenceFrame f;
    f.clean = crop(base_scene, y0, x0, frame_h, frame_w);
    f.corrupted = apply_fpn(f.clean, noise);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<std::array<int, 2>> bouncing_path(int scene_h, int scene_w, int frame_h, int frame_w,
                                              int frames, int step) {
  if (frames < 0 || step < 0) fail(ErrorKind::config, "bouncing_path: frames and step must be nonnegative");
  const int max_y = scene_h - frame_h;
  const int max_x = scene_w - frame_w;
  if (max_y < 0 || max_x < 0)
    fail(ErrorKind::config, "bouncing_path: frame does not fit in the scene");
  std::vector<std::array<int, 2>> path;
  path.reserve(static_cast<std::size_t>(frames));
  int y = 0, x = 0, vy = step, vx = step;
  for (int k = 0; k < frames; ++k) {
    path.push_back({y, x});
    if (max_y > 0) {
      y += vy;
      while (y < 0 || y > max_y) {
        y = y < 0 ? -y : 2 * max_y - y;
        vy = -vy;
      }
    }
    if (max_x > 0) {
      x += vx;
      while (x < 0 || x > max_x) {
        x = x < 0 ? -x : 2 * max_x - x;
        vx = -vx;
      }
    }
  }
  return path;
}

}  // namespace fpnr
