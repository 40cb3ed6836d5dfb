#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpnr/tensor.hpp"

namespace fpnr {

// Per-pixel linear correction X = gain_hat * Y + offset_hat.
struct CalibrationField {
  Tensor gain_hat;
  Tensor offset_hat;

  static CalibrationField identity(int height, int width);
};

enum class TargetFilter { mean3x3 };

const char* to_string(TargetFilter f);
TargetFilter target_filter_from_string(const std::string& s);

// Shared knob set for the scene-based correctors. Each method reads the
// subset that applies to it: NN uses alpha and mu0; FA adds fa_variance_gain;
// TV uses lambda, mu0, and tv_epsilon with p=1.
struct SbSolverConfig {
  double alpha = 1.0;
  double lambda = 0.0;
  int p = 2;
  double mu0 = 5e-6;
  TargetFilter target_filter = TargetFilter::mean3x3;
  double tv_epsilon = 1e-6;
  double fa_variance_gain = 0.05;

  void validate() const;
};

SbSolverConfig nn_default_config();
SbSolverConfig fa_default_config();
SbSolverConfig tv_default_config();

Tensor correct(const Tensor& frame, const CalibrationField& cal);

struct TwoPointResult {
  CalibrationField field;
  // Flat indices of detectors whose low and high mean responses coincide;
  // those get gain 1 and a pure offset fix.
  std::vector<std::int64_t> dead_pixels;
};

// Solves the per-pixel 2x2 linear system mapping each detector's mean low and
// high responses onto the spatial mean response at that level.
TwoPointResult two_point_calibrate(std::span<const Tensor> low_frames,
                                   std::span<const Tensor> high_frames);

// One steepest-descent step against the local-mean target with lambda = 0.
CalibrationField nn_fpnr_update(const Tensor& frame, const CalibrationField& cal,
                                const SbSolverConfig& cfg);

// NN step with the rate damped per pixel by the target's local variance:
// mu_ij = mu0 / (1 + k * var3x3(T)).
CalibrationField fa_fpnr_update(const Tensor& frame, const CalibrationField& cal,
                                const SbSolverConfig& cfg);

// One descent step on the smoothed total-variation objective with alpha = 0,
// phi(t) = sqrt(t^2 + eps^2) over forward differences.
CalibrationField tv_fpnr_update(const Tensor& frame, const CalibrationField& cal,
                                const SbSolverConfig& cfg);

}  // namespace fpnr
