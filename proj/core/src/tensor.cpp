// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace e2e {

static int64_t product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), v_(static_cast<size_t>(product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), v_(std::move(values)) {
  if (static_cast<int64_t>(v_.size()) != product(shape_))
    throw std::invalid_argument("tensor value count does not match shape");
}

void Tensor::fill(double x) {
  for (auto& e : v_) e = x;
}

bool Tensor::all_finite() const {
  for (double e : v_)
    if (!std::isfinite(e)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

void matmul(const Tensor& a, const Tensor& b, Tensor* out) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw std::invalid_argument("matmul inner dims mismatch");
  if (out->rank() != 2 || out->dim(0) != m || out->dim(1) != n)
    *out = Tensor({m, n});
  else
    out->fill(0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out->data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<size_t>(p) * n;
      double* orow = po + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_at_b_accum(const Tensor& a, const Tensor& b, Tensor* out) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != m) throw std::invalid_argument("matmul_at_b dims mismatch");
  if (out->dim(0) != k || out->dim(1) != n)
    throw std::invalid_argument("matmul_at_b output shape mismatch");
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out->data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<size_t>(i) * n;
      double* orow = po + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_a_bt_accum(const Tensor& a, const Tensor& b, Tensor* out) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw std::invalid_argument("matmul_a_bt dims mismatch");
  if (out->dim(0) != m || out->dim(1) != n)
    throw std::invalid_argument("matmul_a_bt output shape mismatch");
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out->data();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      const double* arow = pa + static_cast<size_t>(i) * k;
      const double* brow = pb + static_cast<size_t>(j) * k;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      po[static_cast<size_t>(i) * n + j] += s;
    }
  }
}

}  // namespace e2e
