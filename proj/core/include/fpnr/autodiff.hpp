#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fpnr/tensor.hpp"

namespace fpnr {

enum class Activation { linear, relu, sigmoid };

// Geometry of one 2-D cross-correlation. Padding is zero-fill, applied
// symmetrically; dilation inserts (dilation-1) zeros between kernel taps.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int dilation = 1;
  int stride = 1;
  int padding = 0;

  int out_extent_h(int in) const {
    return (in + 2 * padding - dilation * (kernel_h - 1) - 1) / stride + 1;
  }
  int out_extent_w(int in) const {
    return (in + 2 * padding - dilation * (kernel_w - 1) - 1) / stride + 1;
  }
  void validate() const;
};

// Learnable tensor with its gradient and ADAM state.
struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor v)
      : value(std::move(v)),
        grad(Tensor::zeros_like(value)),
        adam_m(Tensor::zeros_like(value)),
        adam_v(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

struct Var {
  std::uint32_t id = 0;
};

enum class EwOp { add, mul };
enum class Broadcast { none, channel_scalar };

// Records one forward pass as a tape of nodes and replays it in reverse for
// gradients. One graph instance is single-threaded; independent graphs may
// run concurrently. Parameters must not change between forward and backward.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves. input() carries no gradient demand; variable() is a leaf whose
  // gradient is wanted (finite-difference checks use it); param() binds a
  // Parameter so backward() accumulates into p.grad.
  Var input(Tensor v);
  Var variable(Tensor v);
  Var param(Parameter& p);

  Var conv2d(Var x, Parameter& w, Parameter& b, const ConvSpec& spec);
  Var pixel_shuffle(Var x, int upscale);
  Var max_pool2(Var x);
  Var global_avg_pool(Var x);
  Var dense(Var x, Parameter& w, Parameter& b);
  Var activate(Var x, Activation kind);
  Var scale(Var x, double factor);
  Var concat_channels(std::span<const Var> xs);
  Var elementwise(Var a, Var b, EwOp op, Broadcast broadcast = Broadcast::none);
  Var sum(Var x);
  Var mse_loss(Var pred, Tensor target, double weight = 1.0);

  Var add(Var a, Var b) { return elementwise(a, b, EwOp::add); }
  Var mul(Var a, Var b) { return elementwise(a, b, EwOp::mul); }
  Var mul_channel(Var x, Var per_channel) {
    return elementwise(x, per_channel, EwOp::mul, Broadcast::channel_scalar);
  }

  const Tensor& value(Var v) const;

  // Reverse sweep from a scalar loss. Zeroes the grads of every bound
  // parameter first, then accumulates. A second call without a fresh
  // forward recording raises a stale-tape error.
  void backward(Var loss);

  // Gradient buffer of a node, or nullptr when backward never reached it.
  const Tensor* grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Graph&)> backprop;
  };

  Var emit(Tensor value, bool requires_grad, std::function<void(Graph&)> back);
  Node& at(Var v) { return nodes_[v.id]; }
  const Node& at(Var v) const { return nodes_[v.id]; }
  Tensor& grad_buffer(std::uint32_t id);
  bool wants_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<Parameter*> params_;
  bool consumed_ = false;
};

}  // namespace fpnr
