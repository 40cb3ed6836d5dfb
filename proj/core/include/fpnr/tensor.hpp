#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fpnr {

// Dense N-D array of doubles, row-major, channel-planar within each batch
// element. Rank 4 is the working shape of the network code ([B,C,H,W]);
// rank 1 and 2 show up for biases, pooled features and dense layers.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 4-D accessors; bounds are the caller's business on the hot paths.
  double& at(int b, int c, int y, int x) {
    return data_[flat(b, c, y, x)];
  }
  double at(int b, int c, int y, int x) const {
    return data_[flat(b, c, y, x)];
  }
  double& at(int i, int j) {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  double at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }

  void fill(double v);
  bool all_finite() const;

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);

 private:
  std::size_t flat(int b, int c, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace fpnr
