#pragma once

#include <span>

#include "fpnr/autodiff.hpp"
#include "fpnr/rng.hpp"

namespace fpnr {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One ADAM update with bias correction, applied in place using each
// parameter's stored first/second moment state.
void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg);

// Draws from N(0, sqrt(2 / fan_in)). Values are snapped through float so a
// freshly initialized model survives an f32 checkpoint round trip unchanged.
void he_normal_init(Tensor& t, int fan_in, Rng& rng);

}  // namespace fpnr
