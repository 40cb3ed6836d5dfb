#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpnr/tensor.hpp"

namespace fpnr {

enum class GainGeometry { stripe_column, per_pixel };

const char* to_string(GainGeometry g);
GainGeometry gain_geometry_from_string(const std::string& s);

struct NoiseSpec {
  double sigma_g = 0.0;
  double sigma_o = 0.0;
  GainGeometry gain_geometry = GainGeometry::stripe_column;
  std::uint64_t seed = 0;

  void validate() const;
};

// Multiplicative gain field (mean 1) and additive offset field (mean 0),
// fixed for the lifetime of a simulated detector.
struct FixedPatternNoise {
  Tensor gain;
  Tensor offset;
};

struct AugmentRecord {
  bool flip = false;
  int rotation_quarters = 0;

  int variant() const { return (flip ? 4 : 0) + rotation_quarters; }
};

struct PatchPair {
  Tensor clean;
  Tensor corrupted;
  NoiseSpec spec;
  AugmentRecord augment;
  int source_index = 0;
  int crop_y = 0;
  int crop_x = 0;
};

struct PatchDataset {
  std::vector<PatchPair> pairs;
  std::uint64_t seed = 0;
};

inline constexpr int kPatchSize = 40;

// Gain draws are normal(1, sigma_g): one draw per column replicated down the
// column for stripe geometry, one per pixel otherwise. Offsets are
// normal(0, sigma_o) per pixel.
FixedPatternNoise make_noise(const NoiseSpec& spec, int height, int width);

// y = gain * x + offset, elementwise, no clipping.
Tensor apply_fpn(const Tensor& clean, const FixedPatternNoise& noise);

// Random 40x40 crops from the usable sources, each optionally put through one
// of the 8 flip/rotation variants, then corrupted with per-patch sigma draws
// from the given ranges. Deterministic for a fixed seed; sources smaller than
// a patch are skipped with a note in `warnings`.
PatchDataset gen_patch_dataset(std::span<const Tensor> source_images, int count, bool augment,
                               std::array<double, 2> sigma_g_range,
                               std::array<double, 2> sigma_o_range, std::uint64_t seed,
                               GainGeometry geometry = GainGeometry::stripe_column,
                               std::vector<std::string>* warnings = nullptr);

struct SequenceFrame {
  Tensor clean;
  Tensor corrupted;
};

// Each path entry is the (row, col) origin of that frame's crop window. The
// same noise field corrupts every frame.
std::vector<SequenceFrame> gen_sequence(const Tensor& base_scene, int frame_h, int frame_w,
                                        std::span<const std::array<int, 2>> path,
                                        const FixedPatternNoise& noise);

// Diagonal constant-speed path that reflects off the scene borders.
std::vector<std::array<int, 2>> bouncing_path(int scene_h, int scene_w, int frame_h, int frame_w,
                                              int frames, int step);

}  // namespace fpnr
