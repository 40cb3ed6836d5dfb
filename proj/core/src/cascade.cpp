#include "fpnr/cascade.hpp"

#include <array>
#include <cmath>

#include "fpnr/common.hpp"
#include "fpnr/optim.hpp"
#include "fpnr/rng.hpp"

namespace fpnr {

namespace {

int scale_channels(int base, double s) {
  return std::max(8, static_cast<int>(std::llround(base * s)));
}

ConvLayer make_conv(int cin, int cout, int kernel, int dilation, int padding, Activation act) {
  ConvLayer l;
  l.spec.in_channels = cin;
  l.spec.out_channels = cout;
  l.spec.kernel_h = kernel;
  l.spec.kernel_w = kernel;
  l.spec.dilation = dilation;
  l.spec.padding = padding;
  l.act = act;
  l.weight = Parameter(Tensor({cout, cin, kernel, kernel}));
  l.bias = Parameter(Tensor({cout}));
  return l;
}

DenseLayer make_dense(int nin, int nout, Activation act) {
  DenseLayer l;
  l.act = act;
  l.weight = Parameter(Tensor({nin, nout}));
  l.bias = Parameter(Tensor({nout}));
  return l;
}

Subnet make_subnet(const CascadeWidths& w) {
  Subnet s;
  s.head = make_conv(1, w.trunk, 3, 1, 1, Activation::relu);
  s.febs.resize(kFebCount);
  for (Feb& f : s.febs) {
    f.cf.dia_conv = make_conv(w.trunk, w.half, 3, 2, 2, Activation::relu);
    f.cf.std_conv_1 = make_conv(w.trunk, w.trunk, 3, 1, 1, Activation::relu);
    f.cf.sp_conv = make_conv(w.trunk, w.subpixel, 3, 1, 1, Activation::relu);
    const int r2 = kSubpixelUpscale * kSubpixelUpscale;
    const int concat = w.half + w.trunk + w.subpixel / r2;
    f.cf.fuse_conv = make_conv(concat, w.trunk, 3, 1, 1, Activation::relu);
    f.scnau.spatial_1 = make_conv(w.trunk, w.trunk, 3, 1, 1, Activation::relu);
    f.scnau.spatial_2 = make_conv(w.trunk, w.half, 3, 1, 1, Activation::relu);
    f.scnau.spatial_3 = make_conv(w.half, w.trunk, 1, 1, 0, Activation::sigmoid);
    f.scnau.channel_1 = make_dense(w.trunk, w.dense_1, Activation::relu);
    f.scnau.channel_2 = make_dense(w.dense_1, w.dense_2, Activation::relu);
    f.scnau.channel_3 = make_dense(w.dense_2, w.trunk, Activation::sigmoid);
  }
  s.out = make_conv(w.trunk, 1, 1, 1, 0, Activation::linear);
  return s;
}

void collect_subnet(const std::string& prefix, Subnet& s,
                    std::vector<std::pair<std::string, Parameter*>>& out) {
  auto conv = [&out](const std::string& name, ConvLayer& l) {
    out.emplace_back(name + ".w", &l.weight);
    out.emplace_back(name + ".b", &l.bias);
  };
  auto dense = [&out](const std::string& name, DenseLayer& l) {
    out.emplace_back(name + ".w", &l.weight);
    out.emplace_back(name + ".b", &l.bias);
  };
  conv(prefix + ".head", s.head);
  for (std::size_t i = 0; i < s.febs.size(); ++i) {
    const std::string fp = prefix + ".feb" + std::to_string(i);
    Feb& f = s.febs[i];
    conv(fp + ".cf.dia", f.cf.dia_conv);
    conv(fp + ".cf.std", f.cf.std_conv_1);
    conv(fp + ".cf.sp", f.cf.sp_conv);
    conv(fp + ".cf.fuse", f.cf.fuse_conv);
    conv(fp + ".scnau.sp1", f.scnau.spatial_1);
    conv(fp + ".scnau.sp2", f.scnau.spatial_2);
    conv(fp + ".scnau.sp3", f.scnau.spatial_3);
    dense(fp + ".scnau.fc1", f.scnau.channel_1);
    dense(fp + ".scnau.fc2", f.scnau.channel_2);
    dense(fp + ".scnau.fc3", f.scnau.channel_3);
  }
  conv(prefix + ".out", s.out);
}

int weight_fan_in(const Tensor& w) {
  if (w.rank() == 4) return w.extent(1) * w.extent(2) * w.extent(3);
  return w.extent(0);
}

Var conv_forward(Graph& g, Var x, ConvLayer& l) {
  return g.activate(g.conv2d(x, l.weight, l.bias, l.spec), l.act);
}

Var dense_forward(Graph& g, Var x, DenseLayer& l) {
  return g.activate(g.dense(x, l.weight, l.bias), l.act);
}

Var subnet_forward(Graph& g, Var y, Subnet& s, double input_scale, SubnetTaps* taps) {
  if (taps) taps->febs.resize(s.febs.size());
  Var x = conv_forward(g, g.scale(y, input_scale), s.head);
  for (std::size_t i = 0; i < s.febs.size(); ++i) {
    Feb& f = s.febs[i];
    x = cf_conv_forward(g, x, f.cf);
    x = scnau_forward(g, x, f.scnau, taps ? &taps->febs[i] : nullptr);
  }
  return conv_forward(g, x, s.out);
}

}  // namespace

CascadeWidths CascadeWidths::from_scale(double width_scale) {
  if (!(width_scale > 0.0) || width_scale > 16.0)
    fail(ErrorKind::config, "width_scale must be in (0, 16], got " + std::to_string(width_scale));
  CascadeWidths w;
  w.trunk = scale_channels(64, width_scale);
  w.half = scale_channels(32, width_scale);
  const int r2 = kSubpixelUpscale * kSubpixelUpscale;
  w.subpixel = std::max(8, static_cast<int>(std::llround(32 * width_scale / r2)) * r2);
  w.dense_1 = scale_channels(256, width_scale);
  w.dense_2 = scale_channels(512, width_scale);
  return w;
}

CascadeModel CascadeModel::create(double width_scale, std::uint64_t seed) {
  CascadeModel m;
  m.width_scale = width_scale;
  m.widths = CascadeWidths::from_scale(width_scale);
  m.gain_subnet = make_subnet(m.widths);
  m.offset_subnet = make_subnet(m.widths);

  Rng rng(seed);
  for (auto& [name, p] : m.named_parameters()) {
    if (p->value.rank() >= 2) he_normal_init(p->value, weight_fan_in(p->value), rng);
  }
  m.gain_subnet.out.weight.value.fill(0.0);
  m.gain_subnet.out.bias.value.fill(1.0);
  m.offset_subnet.out.weight.value.fill(0.0);
  m.offset_subnet.out.bias.value.fill(0.0);
  return m;
}

std::vector<std::pair<std::string, Parameter*>> CascadeModel::named_parameters() {
  std::vector<std::pair<std::string, Parameter*>> out;
  collect_subnet("gain", gain_subnet, out);
  collect_subnet("offset", offset_subnet, out);
  return out;
}

std::int64_t CascadeModel::parameter_count() {
  std::int64_t n = 0;
  for (auto& [name, p] : named_parameters()) n += p->value.size();
  return n;
}

Var cf_conv_forward(Graph& g, Var x, CfConvUnit& unit) {
  Var dia = conv_forward(g, x, unit.dia_conv);
  Var std1 = conv_forward(g, x, unit.std_conv_1);
  Var sp = g.pixel_shuffle(conv_forward(g, g.max_pool2(x), unit.sp_conv), kSubpixelUpscale);
  const std::array<Var, 3> branches{dia, std1, sp};
  return conv_forward(g, g.concat_channels(branches), unit.fuse_conv);
}

Var scnau_forward(Graph& g, Var x, ScnauUnit& unit, ScnauTaps* taps, bool identity_masks) {
  Var spatial = conv_forward(g, conv_forward(g, conv_forward(g, x, unit.spatial_1), unit.spatial_2),
                             unit.spatial_3);
  Var pooled = g.global_avg_pool(x);
  Var channel = dense_forward(
      g, dense_forward(g, dense_forward(g, pooled, unit.channel_1), unit.channel_2),
      unit.channel_3);
  if (identity_masks) {
    spatial = g.input(Tensor(g.value(spatial).shape(), 1.0));
    channel = g.input(Tensor(g.value(channel).shape(), 1.0));
  }
  if (taps) {
    taps->spatial_mask = g.value(spatial);
    taps->channel_mask = g.value(channel);
  }
  return g.mul(spatial, g.mul_channel(x, channel));
}

CascadeVars cascade_forward(Graph& g, Var y, CascadeModel& model, CascadeTaps* taps) {
  CascadeVars v;
  v.gain = subnet_forward(g, y, model.gain_subnet, model.input_scale, taps ? &taps->gain : nullptr);
  v.calibrated = g.mul(v.gain, y);
  v.offset = subnet_forward(g, v.calibrated, model.offset_subnet, model.input_scale,
                            taps ? &taps->offset : nullptr);
  v.x_hat = g.add(v.calibrated, v.offset);
  return v;
}

ModelOutput model_forward(const Tensor& y, CascadeModel& model) {
  Tensor batched;
  bool flat = false;
  if (y.rank() == 2) {
    batched = Tensor({1, 1, y.extent(0), y.extent(1)},
                     std::vector<double>(y.data(), y.data() + y.size()));
    flat = true;
  } else if (y.rank() == 4 && y.extent(1) == 1) {
    batched = y;
  } else {
    fail(ErrorKind::config, "model_forward: expected a rank-2 image or [B,1,H,W] batch, got " +
                                y.shape_str());
  }
  const int h = batched.extent(2), w = batched.extent(3);
  if (h < 2 || w < 2)
    fail(ErrorKind::config, "model_forward: extent " + std::to_string(h) + "x" + std::to_string(w) +
                                " is too small for the pooling path");
  if (h % 2 != 0 || w % 2 != 0)
    fail(ErrorKind::config, "model_forward: extents must be even (pool/shuffle round trip), got " +
                                std::to_string(h) + "x" + std::to_string(w));

  Graph g;
  CascadeVars v = cascade_forward(g, g.input(std::move(batched)), model);
  ModelOutput out;
  out.x_hat = g.value(v.x_hat);
  out.gain = g.value(v.gain);
  out.offset = g.value(v.offset);
  if (flat) {
    const std::vector<int> shape{y.extent(0), y.extent(1)};
    auto unwrap = [&shape](const Tensor& t) {
      return Tensor(shape, std::vector<double>(t.data(), t.data() + t.size()));
    };
    out.x_hat = unwrap(out.x_hat);
    out.gain = unwrap(out.gain);
    out.offset = unwrap(out.offset);
  }
  return out;
}

}  // namespace fpnr
