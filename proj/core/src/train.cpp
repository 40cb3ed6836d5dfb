#include <cmath>
#include <numeric>
#include <ostream>

#include "fpnr/cascade.hpp"
#include "fpnr/common.hpp"
#include "fpnr/optim.hpp"
#include "fpnr/rng.hpp"

namespace fpnr {

void TrainConfig::validate() const {
  if (epochs < 0) fail(ErrorKind::config, "train config: epochs must be nonnegative");
  if (batch_size < 1) fail(ErrorKind::config, "train config: batch_size must be at least 1");
  if (lr0 <= 0.0) fail(ErrorKind::config, "train config: lr0 must be positive");
  if (lr_decay_epochs < 1) fail(ErrorKind::config, "train config: lr_decay_epochs must be at least 1");
  if (max_steps < 0) fail(ErrorKind::config, "train config: max_steps must be nonnegative");
}

namespace {

Tensor stack_patches(const PatchDataset& ds, const std::vector<int>& order, std::size_t first,
                     std::size_t count, bool corrupted) {
  const Tensor& probe = ds.pairs[0].clean;
  const int h = probe.extent(0), w = probe.extent(1);
  Tensor out({static_cast<int>(count), 1, h, w});
  const std::size_t item = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < count; ++i) {
    const PatchPair& pp = ds.pairs[static_cast<std::size_t>(order[first + i])];
    const Tensor& src = corrupted ? pp.corrupted : pp.clean;
    std::copy(src.data(), src.data() + item, out.data() + i * item);
  }
  return out;
}

}  // namespace

TrainResult train_model(const PatchDataset& dataset, const TrainConfig& cfg, CascadeModel& model,
                        std::ostream* progress) {
  cfg.validate();
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (dataset.pairs.empty()) fail(ErrorKind::validation, "train_model: dataset is empty");
  const Tensor& probe = dataset.pairs[0].clean;
  if (probe.extent(0) % 2 != 0 || probe.extent(1) % 2 != 0)
    fail(ErrorKind::validation, "train_model: patches must be even-sized, got " + probe.shape_str());
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i)
    if (!dataset.pairs[i].clean.same_shape(probe) || !dataset.pairs[i].corrupted.same_shape(probe))
      fail(ErrorKind::validation, "train_model: pair " + std::to_string(i) + " shape differs from " +
                                      probe.shape_str());

  std::vector<Parameter*> params;
  for (auto& [name, p] : model.named_parameters()) params.push_back(p);

  std::vector<int> order(dataset.pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    AdamConfig adam;
    adam.lr = cfg.lr0 * std::pow(0.1, epoch / cfg.lr_decay_epochs);
    Rng shuffle_rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(i));
      std::swap(order[i - 1], order[j]);
    }

    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count =
          std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - first);
      Graph g;
      Var y = g.input(stack_patches(dataset, order, first, count, true));
      Tensor clean = stack_patches(dataset, order, first, count, false);
      CascadeVars v = cascade_forward(g, y, model);
      Var loss = g.mse_loss(v.x_hat, clean);
      if (cfg.intermediate_supervision)
        loss = g.add(loss, g.mse_loss(v.calibrated, std::move(clean)));

      const double loss_value = g.value(loss)[0];
      const int batch_index = static_cast<int>(first / static_cast<std::size_t>(cfg.batch_size));
      if (!std::isfinite(loss_value))
        fail(ErrorKind::validation, "train_model: loss is not finite at epoch " +
                                        std::to_string(epoch) + " batch " +
                                        std::to_string(batch_index) + " (lr " +
                                        std::to_string(adam.lr) + ")");
      g.backward(loss);
      adam_step(params, adam);
      result.loss_history.push_back(loss_value);
      result.steps += 1;
      if (progress && (batch_index == 0 || result.steps % 25 == 0))
        *progress << "step " << result.steps << " epoch " << epoch << " lr " << adam.lr
                  << " loss " << loss_value << "\n";
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) return result;
    }
  }
  return result;
}

}  // namespace fpnr
