#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mmt/common.hpp"

namespace mmt {

// Dense row-major tensor. Compute precision is float by default; tests
// instantiate the double variants.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), v(size_t(count(shape))) {}
  Tensor(std::vector<int64_t> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (int64_t(v.size()) != count(shape)) fail_usage("tensor data does not match shape");
  }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }
  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, T value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  int64_t size() const { return int64_t(v.size()); }
  int ndim() const { return int(shape.size()); }
  int64_t dim(int i) const { return shape[size_t(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  bool finite() const {
    for (T x : v)
      if (!std::isfinite(double(x))) return false;
    return true;
  }
  void debug_check_finite() const { assert(finite() && "tensor contains NaN/Inf"); }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Trainable value: tensor plus a gradient accumulator of the same shape.
// The accumulator is materialized on first use so huge models can be built
// for parameter counting without doubling memory.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> val) : name(std::move(n)), value(std::move(val)) {}

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor<T>::zeros(value.shape);
  }
  void zero_grad() {
    ensure_grad();
    std::fill(grad.v.begin(), grad.v.end(), T(0));
  }
  int64_t size() const { return value.size(); }
};

}  // namespace mmt
