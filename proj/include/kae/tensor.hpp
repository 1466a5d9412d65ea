#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "kae/rng.hpp"

namespace kae {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of doubles, rank 1 or 2, with an optional
// gradient buffer of the same shape. Gradients are allocated lazily the
// first time something accumulates into them.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return values.size() == 1; }

  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? size() / rows() : shape[1]; }

  double item() const {
    if (!is_scalar()) throw std::logic_error("Tensor::item: tensor is not scalar");
    return values[0];
  }

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }

  void zero_grad() { grad.clear(); }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += "x";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }

  static TensorPtr make(std::vector<std::size_t> shape, std::vector<double> values,
                        bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("Tensor: shape dimensions must be positive");
      n *= d;
    }
    if (shape.empty()) n = values.size() == 1 ? 1 : 0;
    if (n != values.size())
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                  " does not match " + std::to_string(values.size()) +
                                  " values");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    return t;
  }

  static TensorPtr zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static TensorPtr scalar(double v) { return make({1}, {v}); }

  static TensorPtr randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0,
                         bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, stddev);
    return make(std::move(shape), std::move(v), requires_grad);
  }

  static TensorPtr uniform(std::vector<std::size_t> shape, Rng& rng, double lo,
                           double hi, bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return make(std::move(shape), std::move(v), requires_grad);
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

}  // namespace kae
