// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#ifndef E2E_TENSOR_HPP_
#define E2E_TENSOR_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace e2e {

/// Dense row-major tensor of doubles. Shapes are small (rank <= 3 in
/// practice); all math in this toolkit is double precision, checkpoints
/// store float.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  // 2-D accessors (row-major)
  double& at(int r, int c) { return v_[static_cast<size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return v_[static_cast<size_t>(r) * shape_[1] + c]; }
  double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  int rows() const { return shape_.empty() ? 0 : shape_[0]; }
  int cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  void fill(double x);
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> v_;
};

/// C = A * B for 2-D tensors (m x k) * (k x n).
void matmul(const Tensor& a, const Tensor& b, Tensor* out);
/// out += a^T * b  (used for weight gradients)
void matmul_at_b_accum(const Tensor& a, const Tensor& b, Tensor* out);
/// out += a * b^T
void matmul_a_bt_accum(const Tensor& a, const Tensor& b, Tensor* out);

}  // namespace e2e

#endif  // E2E_TENSOR_HPP_
