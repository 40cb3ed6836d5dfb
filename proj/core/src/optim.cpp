#include "fpnr/optim.hpp"

#include <cmath>

#include "fpnr/common.hpp"

namespace fpnr {

void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
  if (cfg.lr <= 0.0 || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0 || cfg.epsilon <= 0.0)
    fail(ErrorKind::config, "adam: need lr > 0, betas in [0,1), epsilon > 0");
  for (Parameter* p : params) {
    p->step_count += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step_count));
    for (std::int64_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
      p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

void he_normal_init(Tensor& t, int fan_in, Rng& rng) {
  if (fan_in <= 0) fail(ErrorKind::config, "he_normal_init: fan_in must be positive");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>(static_cast<float>(rng.normal(0.0, stddev)));
}

}  // namespace fpnr
