#include "fpnr/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fpnr/common.hpp"

namespace fpnr {

namespace {

std::int64_t checked_volume(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) fail(ErrorKind::config, "tensor extent must be positive, got shape " + Tensor::shape_str(shape));
    n *= e;
    if (n > (std::int64_t{1} << 40)) fail(ErrorKind::config, "tensor too large: shape " + Tensor::shape_str(shape));
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(checked_volume(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(checked_volume(shape_)), fill);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_volume(shape_) != static_cast<std::int64_t>(data_.size()))
    fail(ErrorKind::config, "tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str());
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace fpnr
