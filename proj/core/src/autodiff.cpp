#include "fpnr/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>

#include "fpnr/common.hpp"
#include "fpnr/gemm.hpp"

namespace fpnr {

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0)
    fail(ErrorKind::config, "conv spec needs positive channel counts, got in=" +
                                std::to_string(in_channels) + " out=" + std::to_string(out_channels));
  if (kernel_h <= 0 || kernel_w <= 0 || dilation <= 0 || stride <= 0 || padding < 0)
    fail(ErrorKind::config, "conv spec has a non-positive kernel/dilation/stride or negative padding");
}

namespace {

// Unpacks x (cin planes of h*w) into the [K x oh*ow] patch matrix used by the
// GEMM path, K = cin*kh*kw. Out-of-image taps become zeros.
void im2col(const double* x, int cin, int h, int w, const ConvSpec& s, int oh,
            int ow, double* col) {
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int ic = 0; ic < cin; ++ic) {
    const double* plane = x + static_cast<std::size_t>(ic) * h * w;
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      for (int kx = 0; kx < s.kernel_w; ++kx) {
        double* row = col + (static_cast<std::size_t>(ic) * s.kernel_h * s.kernel_w +
                             static_cast<std::size_t>(ky) * s.kernel_w + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky * s.dilation;
          double* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx * s.dilation;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds the patch matrix back onto the image grid.
void col2im_add(const double* col, int cin, int h, int w, const ConvSpec& s,
                int oh, int ow, double* dx) {
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int ic = 0; ic < cin; ++ic) {
    double* plane = dx + static_cast<std::size_t>(ic) * h * w;
    for (int ky = 0; ky < s.kernel_h; ++ky) {
      for (int kx = 0; kx < s.kernel_w; ++kx) {
        const double* row = col + (static_cast<std::size_t>(ic) * s.kernel_h * s.kernel_w +
                                   static_cast<std::size_t>(ky) * s.kernel_w + kx) * ohw;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky * s.dilation;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * ow;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx * s.dilation;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank)
    fail(ErrorKind::config, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got shape " + t.shape_str());
}

}  // namespace

Var Graph::emit(Tensor value, bool requires_grad, std::function<void(Graph&)> back) {
  assert(value.all_finite());
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Graph::value(Var v) const { return at(v).value; }

const Tensor* Graph::grad(Var v) const {
  return at(v).has_grad ? &at(v).grad : nullptr;
}

Var Graph::input(Tensor v) { return emit(std::move(v), false, nullptr); }

Var Graph::variable(Tensor v) { return emit(std::move(v), true, nullptr); }

Var Graph::param(Parameter& p) {
  params_.push_back(&p);
  Parameter* pp = &p;
  Var out = emit(p.value, true, nullptr);
  const std::uint32_t id = out.id;
  nodes_[id].backprop = [id, pp](Graph& g) {
    const Tensor& gd = g.nodes_[id].grad;
    for (std::int64_t i = 0; i < gd.size(); ++i) pp->grad[i] += gd[i];
  };
  return out;
}

Var Graph::conv2d(Var xv, Parameter& w, Parameter& b, const ConvSpec& spec) {
  spec.validate();
  const Tensor& x = value(xv);
  require_rank(x, 4, "conv2d");
  const int batch = x.extent(0), cin = x.extent(1), h = x.extent(2), wdt = x.extent(3);
  if (cin != spec.in_channels)
    fail(ErrorKind::config, "conv2d: input has " + std::to_string(cin) + " channels, spec expects " +
                                std::to_string(spec.in_channels));
  const std::vector<int> wshape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (w.value.shape() != wshape)
    fail(ErrorKind::config, "conv2d: weight shape " + w.value.shape_str() + " does not match spec " +
                                Tensor::shape_str(wshape));
  if (b.value.shape() != std::vector<int>{spec.out_channels})
    fail(ErrorKind::config, "conv2d: bias shape " + b.value.shape_str() + " must be [" +
                                std::to_string(spec.out_channels) + "]");
  const int oh = spec.out_extent_h(h), ow = spec.out_extent_w(wdt);
  if (oh < 1 || ow < 1)
    fail(ErrorKind::config, "conv2d: output extent " + std::to_string(oh) + "x" + std::to_string(ow) +
                                " collapses for input " + x.shape_str());

  const int cout = spec.out_channels;
  const int k = cin * spec.kernel_h * spec.kernel_w;
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_item = static_cast<std::size_t>(cin) * h * wdt;
  const std::size_t out_item = static_cast<std::size_t>(cout) * ohw;

  Tensor out({batch, cout, oh, ow});
  std::vector<double> col(static_cast<std::size_t>(k) * ohw);
  for (int n = 0; n < batch; ++n) {
    im2col(x.data() + n * in_item, cin, h, wdt, spec, oh, ow, col.data());
    detail::gemm(false, false, cout, static_cast<int>(ohw), k, 1.0, w.value.data(), k,
                 col.data(), static_cast<int>(ohw), 0.0, out.data() + n * out_item,
                 static_cast<int>(ohw));
    for (int oc = 0; oc < cout; ++oc) {
      double* plane = out.data() + n * out_item + oc * ohw;
      const double bias = b.value[oc];
      for (std::size_t i = 0; i < ohw; ++i) plane[i] += bias;
    }
  }

  params_.push_back(&w);
  params_.push_back(&b);
  Parameter* wp = &w;
  Parameter* bp = &b;
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), true, nullptr);
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [=](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    const Tensor& xval = g.nodes_[xid].value;
    const bool need_dx = g.wants_grad(xid);
    std::vector<double> colbuf(static_cast<std::size_t>(k) * ohw);
    std::vector<double> dcol(need_dx ? colbuf.size() : 0);
    Tensor* dxt = need_dx ? &g.grad_buffer(xid) : nullptr;
    for (int n = 0; n < batch; ++n) {
      const double* gslab = gd.data() + n * out_item;
      for (int oc = 0; oc < cout; ++oc) {
        const double* plane = gslab + oc * ohw;
        double acc = 0.0;
        for (std::size_t i = 0; i < ohw; ++i) acc += plane[i];
        bp->grad[oc] += acc;
      }
      im2col(xval.data() + n * in_item, cin, h, wdt, spec, oh, ow, colbuf.data());
      detail::gemm(false, true, cout, k, static_cast<int>(ohw), 1.0, gslab,
                   static_cast<int>(ohw), colbuf.data(), static_cast<int>(ohw), 1.0,
                   wp->grad.data(), k);
      if (need_dx) {
        detail::gemm(true, false, k, static_cast<int>(ohw), cout, 1.0, wp->value.data(), k,
                     gslab, static_cast<int>(ohw), 0.0, dcol.data(), static_cast<int>(ohw));
        col2im_add(dcol.data(), cin, h, wdt, spec, oh, ow, dxt->data() + n * in_item);
      }
    }
  };
  return ov;
}

Var Graph::pixel_shuffle(Var xv, int upscale) {
  const Tensor& x = value(xv);
  require_rank(x, 4, "pixel_shuffle");
  if (upscale <= 0) fail(ErrorKind::config, "pixel_shuffle: upscale must be positive");
  const int r = upscale, r2 = r * r;
  const int batch = x.extent(0), cin = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (cin % r2 != 0)
    fail(ErrorKind::config, "pixel_shuffle: " + std::to_string(cin) + " channels not divisible by r^2=" +
                                std::to_string(r2));
  const int cout = cin / r2;
  Tensor out({batch, cout, h * r, w * r});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < cout; ++c)
      for (int dy = 0; dy < r; ++dy)
        for (int dx = 0; dx < r; ++dx) {
          const int ic = c * r2 + dy * r + dx;
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
              out.at(n, c, r * y + dy, r * xx + dx) = x.at(n, ic, y, xx);
        }

  const bool needs = wants_grad(xv.id);
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [=](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    Tensor& dx = g.grad_buffer(xid);
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < cout; ++c)
        for (int dy = 0; dy < r; ++dy)
          for (int dxx = 0; dxx < r; ++dxx) {
            const int ic = c * r2 + dy * r + dxx;
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx)
                dx.at(n, ic, y, xx) += gd.at(n, c, r * y + dy, r * xx + dxx);
          }
  };
  return ov;
}

Var Graph::max_pool2(Var xv) {
  const Tensor& x = value(xv);
  require_rank(x, 4, "max_pool2");
  const int batch = x.extent(0), ch = x.extent(1), h = x.extent(2), w = x.extent(3);
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out({batch, ch, oh, ow});
  // Odd extents replicate the last row/column; ties go to the first source
  // position in row-major window scan order.
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(batch) * ch * oh * ow);
  std::size_t oi = 0;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx, ++oi) {
          double best = 0.0;
          std::int64_t best_idx = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int sy = std::min(2 * y + dy, h - 1);
              const int sx = std::min(2 * xx + dx, w - 1);
              const double v = x.at(n, c, sy, sx);
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = ((static_cast<std::int64_t>(n) * ch + c) * h + sy) * w + sx;
              }
            }
          out.at(n, c, y, xx) = best;
          argmax[oi] = best_idx;
        }

  const bool needs = wants_grad(xv.id);
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, xid, argmax = std::move(argmax)](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    Tensor& dx = g.grad_buffer(xid);
    for (std::int64_t i = 0; i < gd.size(); ++i) dx[argmax[static_cast<std::size_t>(i)]] += gd[i];
  };
  return ov;
}

Var Graph::global_avg_pool(Var xv) {
  const Tensor& x = value(xv);
  require_rank(x, 4, "global_avg_pool");
  const int batch = x.extent(0), ch = x.extent(1), h = x.extent(2), w = x.extent(3);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  Tensor out({batch, ch});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c) {
      const double* plane = x.data() + (static_cast<std::size_t>(n) * ch + c) * h * w;
      double acc = 0.0;
      for (int i = 0; i < h * w; ++i) acc += plane[i];
      out.at(n, c) = acc * inv;
    }

  const bool needs = wants_grad(xv.id);
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [=](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    Tensor& dx = g.grad_buffer(xid);
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < ch; ++c) {
        const double gv = gd.at(n, c) * inv;
        double* plane = dx.data() + (static_cast<std::size_t>(n) * ch + c) * h * w;
        for (int i = 0; i < h * w; ++i) plane[i] += gv;
      }
  };
  return ov;
}

Var Graph::dense(Var xv, Parameter& w, Parameter& b) {
  const Tensor& x = value(xv);
  require_rank(x, 2, "dense");
  require_rank(w.value, 2, "dense weights");
  const int batch = x.extent(0), nin = x.extent(1);
  if (w.value.extent(0) != nin)
    fail(ErrorKind::config, "dense: input width " + std::to_string(nin) + " does not match weight shape " +
                                w.value.shape_str());
  const int nout = w.value.extent(1);
  if (b.value.shape() != std::vector<int>{nout})
    fail(ErrorKind::config, "dense: bias shape " + b.value.shape_str() + " must be [" + std::to_string(nout) + "]");

  Tensor out({batch, nout});
  detail::gemm(false, false, batch, nout, nin, 1.0, x.data(), nin, w.value.data(), nout, 0.0,
               out.data(), nout);
  for (int n = 0; n < batch; ++n)
    for (int j = 0; j < nout; ++j) out.at(n, j) += b.value[j];

  params_.push_back(&w);
  params_.push_back(&b);
  Parameter* wp = &w;
  Parameter* bp = &b;
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), true, nullptr);
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [=](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    const Tensor& xval = g.nodes_[xid].value;
    for (int n = 0; n < batch; ++n)
      for (int j = 0; j < nout; ++j) bp->grad[j] += gd.at(n, j);
    detail::gemm(true, false, nin, nout, batch, 1.0, xval.data(), nin, gd.data(), nout, 1.0,
                 wp->grad.data(), nout);
    if (g.wants_grad(xid)) {
      Tensor& dx = g.grad_buffer(xid);
      detail::gemm(false, true, batch, nin, nout, 1.0, gd.data(), nout, wp->value.data(), nout,
                   1.0, dx.data(), nin);
    }
  };
  return ov;
}

Var Graph::activate(Var xv, Activation kind) {
  const Tensor& x = value(xv);
  Tensor out = x;
  switch (kind) {
    case Activation::linear:
      break;
    case Activation::relu:
      for (std::int64_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
      break;
    case Activation::sigmoid:
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
      break;
  }

  const bool needs = wants_grad(xv.id);
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, xid, kind](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    const Tensor& y = g.nodes_[oid].value;
    Tensor& dx = g.grad_buffer(xid);
    switch (kind) {
      case Activation::linear:
        for (std::int64_t i = 0; i < gd.size(); ++i) dx[i] += gd[i];
        break;
      case Activation::relu:
        for (std::int64_t i = 0; i < gd.size(); ++i)
          if (y[i] > 0.0) dx[i] += gd[i];
        break;
      case Activation::sigmoid:
        for (std::int64_t i = 0; i < gd.size(); ++i) dx[i] += gd[i] * y[i] * (1.0 - y[i]);
        break;
    }
  };
  return ov;
}

Var Graph::scale(Var xv, double factor) {
  const Tensor& x = value(xv);
  Tensor out = x;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= factor;

  const bool needs = wants_grad(xv.id);
  const std::uint32_t xid = xv.id;
  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, xid, factor](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    Tensor& dx = g.grad_buffer(xid);
    for (std::int64_t i = 0; i < gd.size(); ++i) dx[i] += gd[i] * factor;
  };
  return ov;
}

Var Graph::concat_channels(std::span<const Var> xs) {
  if (xs.empty()) fail(ErrorKind::config, "concat_channels: no inputs");
  const Tensor& first = value(xs[0]);
  require_rank(first, 4, "concat_channels");
  const int batch = first.extent(0), h = first.extent(2), w = first.extent(3);
  int ctotal = 0;
  bool needs = false;
  for (Var v : xs) {
    const Tensor& t = value(v);
    require_rank(t, 4, "concat_channels");
    if (t.extent(0) != batch || t.extent(2) != h || t.extent(3) != w)
      fail(ErrorKind::config, "concat_channels: shape " + t.shape_str() + " does not align with " +
                                  first.shape_str());
    ctotal += t.extent(1);
    needs = needs || wants_grad(v.id);
  }

  Tensor out({batch, ctotal, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<std::uint32_t> ids;
  std::vector<int> channels;
  for (Var v : xs) {
    ids.push_back(v.id);
    channels.push_back(value(v).extent(1));
  }
  for (int n = 0; n < batch; ++n) {
    std::size_t coff = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const Tensor& t = nodes_[ids[k]].value;
      const std::size_t block = static_cast<std::size_t>(channels[k]) * plane;
      std::memcpy(out.data() + (static_cast<std::size_t>(n) * ctotal) * plane + coff,
                  t.data() + static_cast<std::size_t>(n) * block, block * sizeof(double));
      coff += block;
    }
  }

  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, batch, ctotal, plane, ids, channels](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    for (int n = 0; n < batch; ++n) {
      std::size_t coff = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const std::size_t block = static_cast<std::size_t>(channels[k]) * plane;
        if (g.wants_grad(ids[k])) {
          Tensor& dx = g.grad_buffer(ids[k]);
          const double* src = gd.data() + (static_cast<std::size_t>(n) * ctotal) * plane + coff;
          double* dst = dx.data() + static_cast<std::size_t>(n) * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
        coff += block;
      }
    }
  };
  return ov;
}

Var Graph::elementwise(Var av, Var bv, EwOp op, Broadcast broadcast) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  Tensor out;
  if (broadcast == Broadcast::none) {
    if (!a.same_shape(b))
      fail(ErrorKind::config, "elementwise: shapes " + a.shape_str() + " and " + b.shape_str() +
                                  " differ");
    out = a;
    if (op == EwOp::add)
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
    else
      for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  } else {
    require_rank(a, 4, "elementwise(channel_scalar)");
    require_rank(b, 2, "elementwise(channel_scalar) rhs");
    if (a.extent(0) != b.extent(0) || a.extent(1) != b.extent(1))
      fail(ErrorKind::config, "elementwise(channel_scalar): " + a.shape_str() + " vs " + b.shape_str());
    const int batch = a.extent(0), ch = a.extent(1);
    const std::size_t plane = static_cast<std::size_t>(a.extent(2)) * a.extent(3);
    out = a;
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < ch; ++c) {
        const double s = b.at(n, c);
        double* p = out.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
        if (op == EwOp::add)
          for (std::size_t i = 0; i < plane; ++i) p[i] += s;
        else
          for (std::size_t i = 0; i < plane; ++i) p[i] *= s;
      }
  }

  const bool needs = wants_grad(av.id) || wants_grad(bv.id);
  const std::uint32_t aid = av.id, bid = bv.id;
  Var ov = emit(std::move(out), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, aid, bid, op, broadcast](Graph& g) {
    const Tensor& gd = g.nodes_[oid].grad;
    const Tensor& a = g.nodes_[aid].value;
    const Tensor& b = g.nodes_[bid].value;
    if (broadcast == Broadcast::none) {
      if (g.wants_grad(aid)) {
        Tensor& da = g.grad_buffer(aid);
        if (op == EwOp::add)
          for (std::int64_t i = 0; i < gd.size(); ++i) da[i] += gd[i];
        else
          for (std::int64_t i = 0; i < gd.size(); ++i) da[i] += gd[i] * b[i];
      }
      if (g.wants_grad(bid)) {
        Tensor& db = g.grad_buffer(bid);
        if (op == EwOp::add)
          for (std::int64_t i = 0; i < gd.size(); ++i) db[i] += gd[i];
        else
          for (std::int64_t i = 0; i < gd.size(); ++i) db[i] += gd[i] * a[i];
      }
    } else {
      const int batch = a.extent(0), ch = a.extent(1);
      const std::size_t plane = static_cast<std::size_t>(a.extent(2)) * a.extent(3);
      if (g.wants_grad(aid)) {
        Tensor& da = g.grad_buffer(aid);
        for (int n = 0; n < batch; ++n)
          for (int c = 0; c < ch; ++c) {
            const double s = (op == EwOp::mul) ? b.at(n, c) : 1.0;
            const double* gp = gd.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
            double* dp = da.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dp[i] += gp[i] * s;
          }
      }
      if (g.wants_grad(bid)) {
        Tensor& db = g.grad_buffer(bid);
        for (int n = 0; n < batch; ++n)
          for (int c = 0; c < ch; ++c) {
            const double* gp = gd.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
            const double* ap = a.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
            double acc = 0.0;
            if (op == EwOp::mul)
              for (std::size_t i = 0; i < plane; ++i) acc += gp[i] * ap[i];
            else
              for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
            db.at(n, c) += acc;
          }
      }
    }
  };
  return ov;
}

Var Graph::sum(Var xv) {
  const Tensor& x = value(xv);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x[i];

  const bool needs = wants_grad(xv.id);
  const std::uint32_t xid = xv.id;
  Var ov = emit(Tensor::scalar(acc), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, xid](Graph& g) {
    const double gv = g.nodes_[oid].grad[0];
    Tensor& dx = g.grad_buffer(xid);
    for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += gv;
  };
  return ov;
}

Var Graph::mse_loss(Var predv, Tensor target, double weight) {
  const Tensor& pred = value(predv);
  if (!pred.same_shape(target))
    fail(ErrorKind::config, "mse_loss: prediction " + pred.shape_str() + " vs target " +
                                target.shape_str());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }

  const bool needs = wants_grad(predv.id);
  const std::uint32_t pid = predv.id;
  Var ov = emit(Tensor::scalar(weight * acc * inv_n), needs, nullptr);
  if (!needs) return ov;
  const std::uint32_t oid = ov.id;
  nodes_[oid].backprop = [oid, pid, target = std::move(target), inv_n, weight](Graph& g) {
    const double gv = g.nodes_[oid].grad[0] * 2.0 * weight * inv_n;
    const Tensor& pred = g.nodes_[pid].value;
    Tensor& dp = g.grad_buffer(pid);
    for (std::int64_t i = 0; i < dp.size(); ++i) dp[i] += gv * (pred[i] - target[i]);
  };
  return ov;
}

void Graph::backward(Var loss) {
  if (consumed_) fail(ErrorKind::stale_tape, "backward already ran on this recording; rebuild the forward pass");
  consumed_ = true;
  if (value(loss).size() != 1)
    fail(ErrorKind::config, "backward: loss must be scalar, got shape " + value(loss).shape_str());

  std::vector<Parameter*> uniq = params_;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (Parameter* p : uniq) p->zero_grad();

  grad_buffer(loss.id)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backprop) n.backprop(*this);
  }
}

}  // namespace fpnr
