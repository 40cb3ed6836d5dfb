#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fpnr/autodiff.hpp"
#include "fpnr/fpn_sim.hpp"
#include "fpnr/tensor.hpp"

namespace fpnr {

struct ConvLayer {
  ConvSpec spec;
  Activation act = Activation::relu;
  Parameter weight;
  Parameter bias;
};

struct DenseLayer {
  Activation act = Activation::relu;
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
};

// Three full-resolution branches (dilated, standard, pool/conv/sub-pixel)
// concatenated and fused back to the trunk width.
struct CfConvUnit {
  ConvLayer dia_conv;
  ConvLayer std_conv_1;
  ConvLayer sp_conv;
  ConvLayer fuse_conv;
};

// Spatial mask from a three-conv chain, channel mask from pooled dense
// layers; both gate the identity trunk.
struct ScnauUnit {
  ConvLayer spatial_1;
  ConvLayer spatial_2;
  ConvLayer spatial_3;
  DenseLayer channel_1;
  DenseLayer channel_2;
  DenseLayer channel_3;
};

struct Feb {
  CfConvUnit cf;
  ScnauUnit scnau;
};

struct Subnet {
  ConvLayer head;
  std::vector<Feb> febs;
  ConvLayer out;
};

// Channel widths after applying the width_scale knob. The sub-pixel branch
// width stays a multiple of the shuffle factor squared.
struct CascadeWidths {
  int trunk = 64;
  int half = 32;
  int subpixel = 32;
  int dense_1 = 256;
  int dense_2 = 512;

  static CascadeWidths from_scale(double width_scale);
};

inline constexpr int kFebCount = 5;
inline constexpr int kSubpixelUpscale = 2;

struct CascadeModel {
  double width_scale = 1.0;
  // Subnet inputs are multiplied by this before the head conv so display
  // range values land in the activations' responsive region. The residual
  // rescaling in the forward pass stays in input units.
  double input_scale = 1.0 / 255.0;
  CascadeWidths widths;
  Subnet gain_subnet;
  Subnet offset_subnet;

  // he_normal weights everywhere except the identity-start layers: both
  // subnet output convs are zeroed with bias 1 (gain) and 0 (offset), so the
  // untrained model maps y to itself exactly.
  static CascadeModel create(double width_scale, std::uint64_t seed);

  // Stable name -> parameter listing; pointers stay valid while the model
  // object itself is neither moved nor destroyed.
  std::vector<std::pair<std::string, Parameter*>> named_parameters();
  std::int64_t parameter_count();
};

struct ScnauTaps {
  Tensor spatial_mask;
  Tensor channel_mask;
};

Var cf_conv_forward(Graph& g, Var x, CfConvUnit& unit);

// identity_masks replaces both computed masks with ones (test hook); taps, if
// given, receive the mask values actually applied.
Var scnau_forward(Graph& g, Var x, ScnauUnit& unit, ScnauTaps* taps = nullptr,
                  bool identity_masks = false);

struct SubnetTaps {
  std::vector<ScnauTaps> febs;
};

struct CascadeTaps {
  SubnetTaps gain;
  SubnetTaps offset;
};

struct CascadeVars {
  Var x_hat;
  Var gain;
  Var calibrated;
  Var offset;
};

// gain = gain_subnet(y); calibrated = gain * y; offset = offset_subnet(calibrated);
// x_hat = calibrated + offset. taps, if given, receives the attention masks of
// every block in both subnets.
CascadeVars cascade_forward(Graph& g, Var y, CascadeModel& model,
                            CascadeTaps* taps = nullptr);

struct ModelOutput {
  Tensor x_hat;
  Tensor gain;
  Tensor offset;
};

// Inference wrapper. Accepts a rank-2 image or a [B,1,H,W] batch; H and W
// must be even and at least 2 so the pooling branch restores the extent.
ModelOutput model_forward(const Tensor& y, CascadeModel& model);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double lr0 = 0.001;
  int lr_decay_epochs = 25;  // divide lr by 10 each time this many epochs pass
  std::uint64_t seed = 0;
  bool intermediate_supervision = false;
  int max_steps = 0;  // 0 = run all epochs; otherwise stop after this many optimizer steps

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_history;
  int steps = 0;
};

// Joint MSE training of both subnets on shuffled mini-batches with the
// stepped learning-rate schedule. Aborts with the batch index and current lr
// if the loss stops being finite.
TrainResult train_model(const PatchDataset& dataset, const TrainConfig& cfg, CascadeModel& model,
                        std::ostream* progress = nullptr);

}  // namespace fpnr
