#include "kae/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "kae/kernels.hpp"

namespace kae {

namespace {

void check_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2)
    throw std::invalid_argument(std::string(who) + ": expected a rank-2 tensor, got " +
                                Tensor::shape_str(t.shape));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!same_shape(a, b))
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                Tensor::shape_str(a.shape) + " vs " +
                                Tensor::shape_str(b.shape));
}

void check_nonempty(const Tensor& t, const char* who) {
  if (t.values.empty())
    throw std::domain_error(std::string(who) + ": empty tensor");
}

// grad += s * g, allocating grad on first use.
void axpy_grad(Tensor& t, const std::vector<double>& g, double s) {
  t.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) t.grad[i] += s * g[i];
}

}  // namespace

void Tape::record(const TensorPtr& out, std::function<void()> back) {
  nodes_.push_back({out, std::move(back)});
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b, bool trans_a,
                       bool trans_b) {
  check_rank2(*a, "matmul");
  check_rank2(*b, "matmul");
  const std::size_t m = trans_a ? a->shape[1] : a->shape[0];
  const std::size_t ka = trans_a ? a->shape[0] : a->shape[1];
  const std::size_t kb = trans_b ? b->shape[1] : b->shape[0];
  const std::size_t n = trans_b ? b->shape[0] : b->shape[1];
  if (ka != kb)
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                Tensor::shape_str(a->shape) + (trans_a ? "^T" : "") +
                                " x " + Tensor::shape_str(b->shape) +
                                (trans_b ? "^T" : ""));
  auto out = Tensor::zeros({m, n});
  kernels::matmul(a->values.data(), b->values.data(), out->values.data(), m, ka, n,
                  trans_a, trans_b, false);
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad) {
    const std::size_t k = ka;
    record(out, [a, b, out, m, k, n, trans_a, trans_b]() {
      const double* g = out->grad.data();
      if (a->requires_grad) {
        a->ensure_grad();
        if (!trans_a)  // dA_eff = g . B_eff^T
          kernels::matmul(g, b->values.data(), a->grad.data(), m, n, k, false,
                          !trans_b, true);
        else  // dA = B_eff . g^T
          kernels::matmul(b->values.data(), g, a->grad.data(), k, n, m, trans_b,
                          true, true);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        if (!trans_b)  // dB_eff = A_eff^T . g
          kernels::matmul(a->values.data(), g, b->grad.data(), k, m, n, !trans_a,
                          false, true);
        else  // dB = g^T . A_eff
          kernels::matmul(g, a->values.data(), b->grad.data(), n, m, k, true,
                          trans_a, true);
      }
    });
  }
  return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "add");
  auto out = Tensor::zeros(a->shape);
  kernels::zip(a->values.data(), b->values.data(), out->values.data(), a->size(),
               [](double x, double y) { return x + y; });
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    record(out, [a, b, out]() {
      if (a->requires_grad) axpy_grad(*a, out->grad, 1.0);
      if (b->requires_grad) axpy_grad(*b, out->grad, 1.0);
    });
  return out;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "sub");
  auto out = Tensor::zeros(a->shape);
  kernels::zip(a->values.data(), b->values.data(), out->values.data(), a->size(),
               [](double x, double y) { return x - y; });
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    record(out, [a, b, out]() {
      if (a->requires_grad) axpy_grad(*a, out->grad, 1.0);
      if (b->requires_grad) axpy_grad(*b, out->grad, -1.0);
    });
  return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "mul");
  auto out = Tensor::zeros(a->shape);
  kernels::zip(a->values.data(), b->values.data(), out->values.data(), a->size(),
               [](double x, double y) { return x * y; });
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i)
          a->grad[i] += out->grad[i] * b->values[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i)
          b->grad[i] += out->grad[i] * a->values[i];
      }
    });
  return out;
}

TensorPtr Tape::div(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "div");
  auto out = Tensor::zeros(a->shape);
  kernels::zip(a->values.data(), b->values.data(), out->values.data(), a->size(),
               [](double x, double y) { return x / y; });
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i)
          a->grad[i] += out->grad[i] / b->values[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->grad.size(); ++i)
          b->grad[i] -= out->grad[i] * a->values[i] / (b->values[i] * b->values[i]);
      }
    });
  return out;
}

TensorPtr Tape::emax(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "emax");
  auto out = Tensor::zeros(a->shape);
  kernels::zip(a->values.data(), b->values.data(), out->values.data(), a->size(),
               [](double x, double y) { return x >= y ? x : y; });
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    record(out, [a, b, out]() {
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        if (a->values[i] >= b->values[i]) {
          if (a->requires_grad) a->grad[i] += out->grad[i];
        } else if (b->requires_grad) {
          b->grad[i] += out->grad[i];
        }
      }
    });
  return out;
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
  auto out = Tensor::zeros(a->shape);
  kernels::map(a->values.data(), out->values.data(), a->size(),
               [c](double x) { return c * x; });
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, c]() { axpy_grad(*a, out->grad, c); });
  return out;
}

TensorPtr Tape::add_rowvec(const TensorPtr& x, const TensorPtr& v) {
  check_rank2(*x, "add_rowvec");
  if (v->rank() != 1 || v->shape[0] != x->shape[1])
    throw std::invalid_argument("add_rowvec: vector " + Tensor::shape_str(v->shape) +
                                " does not match row width of " +
                                Tensor::shape_str(x->shape));
  const std::size_t rows = x->shape[0], cols = x->shape[1];
  auto out = Tensor::zeros(x->shape);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out->values[i * cols + j] = x->values[i * cols + j] + v->values[j];
  out->requires_grad = recording && (x->requires_grad || v->requires_grad);
  if (out->requires_grad)
    record(out, [x, v, out, rows, cols]() {
      if (x->requires_grad) axpy_grad(*x, out->grad, 1.0);
      if (v->requires_grad) {
        v->ensure_grad();
        for (std::size_t j = 0; j < cols; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < rows; ++i) acc += out->grad[i * cols + j];
          v->grad[j] += acc;
        }
      }
    });
  return out;
}

TensorPtr Tape::unary(const TensorPtr& a, std::vector<std::size_t> out_shape,
                      const std::function<void(const Tensor&, Tensor&)>& fwd,
                      const std::function<void(Tensor&, const Tensor&)>& bwd) {
  auto out = Tensor::zeros(std::move(out_shape));
  fwd(*a, *out);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, bwd]() {
      a->ensure_grad();
      bwd(*a, *out);
    });
  return out;
}

TensorPtr Tape::tanh(const TensorPtr& a) {
  return unary(
      a, a->shape,
      [](const Tensor& in, Tensor& out) {
        kernels::map(in.values.data(), out.values.data(), in.size(),
                     [](double x) { return std::tanh(x); });
      },
      [](Tensor& in, const Tensor& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
          in.grad[i] += out.grad[i] * (1.0 - out.values[i] * out.values[i]);
      });
}

TensorPtr Tape::relu(const TensorPtr& a) {
  return unary(
      a, a->shape,
      [](const Tensor& in, Tensor& out) {
        kernels::map(in.values.data(), out.values.data(), in.size(),
                     [](double x) { return x > 0.0 ? x : 0.0; });
      },
      [](Tensor& in, const Tensor& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
          if (in.values[i] > 0.0) in.grad[i] += out.grad[i];
      });
}

TensorPtr Tape::square(const TensorPtr& a) {
  return unary(
      a, a->shape,
      [](const Tensor& in, Tensor& out) {
        kernels::map(in.values.data(), out.values.data(), in.size(),
                     [](double x) { return x * x; });
      },
      [](Tensor& in, const Tensor& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
          in.grad[i] += out.grad[i] * 2.0 * in.values[i];
      });
}

TensorPtr Tape::cos(const TensorPtr& a) {
  return unary(
      a, a->shape,
      [](const Tensor& in, Tensor& out) {
        kernels::map(in.values.data(), out.values.data(), in.size(),
                     [](double x) { return std::cos(x); });
      },
      [](Tensor& in, const Tensor& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
          in.grad[i] -= out.grad[i] * std::sin(in.values[i]);
      });
}

TensorPtr Tape::sum(const TensorPtr& a) {
  check_nonempty(*a, "sum");
  double acc = 0.0;
  for (double v : a->values) acc += v;
  auto out = Tensor::scalar(acc);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out]() {
      a->ensure_grad();
      const double g = out->grad[0];
      for (double& gi : a->grad) gi += g;
    });
  return out;
}

TensorPtr Tape::mean(const TensorPtr& a) {
  check_nonempty(*a, "mean");
  double acc = 0.0;
  for (double v : a->values) acc += v;
  const double inv = 1.0 / static_cast<double>(a->size());
  auto out = Tensor::scalar(acc * inv);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, inv]() {
      a->ensure_grad();
      const double g = out->grad[0] * inv;
      for (double& gi : a->grad) gi += g;
    });
  return out;
}

TensorPtr Tape::max(const TensorPtr& a) {
  check_nonempty(*a, "max");
  std::size_t arg = 0;
  double best = a->values[0];
  for (std::size_t i = 1; i < a->size(); ++i)
    if (a->values[i] > best) {
      best = a->values[i];
      arg = i;
    }
  auto out = Tensor::scalar(best);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, arg]() {
      a->ensure_grad();
      a->grad[arg] += out->grad[0];
    });
  return out;
}

TensorPtr Tape::sq_norm(const TensorPtr& a) {
  check_nonempty(*a, "sq_norm");
  double acc = 0.0;
  for (double v : a->values) acc += v * v;
  auto out = Tensor::scalar(acc);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out]() {
      a->ensure_grad();
      const double g = out->grad[0];
      for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += 2.0 * g * a->values[i];
    });
  return out;
}

TensorPtr Tape::row_sqnorm(const TensorPtr& a) {
  check_rank2(*a, "row_sqnorm");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  auto out = Tensor::zeros({rows});
  kernels::row_sqnorm(a->values.data(), out->values.data(), rows, cols);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, rows, cols]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i) {
        const double g = 2.0 * out->grad[i];
        for (std::size_t j = 0; j < cols; ++j)
          a->grad[i * cols + j] += g * a->values[i * cols + j];
      }
    });
  return out;
}

TensorPtr Tape::row_max(const TensorPtr& a) {
  check_rank2(*a, "row_max");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  auto out = Tensor::zeros({rows});
  auto args = std::make_shared<std::vector<std::size_t>>(rows);
  kernels::row_max(a->values.data(), out->values.data(), args->data(), rows, cols);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, args, rows, cols]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i)
        a->grad[i * cols + (*args)[i]] += out->grad[i];
    });
  return out;
}

TensorPtr Tape::column(const TensorPtr& a, std::size_t j) {
  check_rank2(*a, "column");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  if (j >= cols)
    throw std::invalid_argument("column: index " + std::to_string(j) +
                                " out of range for " + Tensor::shape_str(a->shape));
  auto out = Tensor::zeros({rows});
  for (std::size_t i = 0; i < rows; ++i) out->values[i] = a->values[i * cols + j];
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, j, rows, cols]() {
      a->ensure_grad();
      for (std::size_t i = 0; i < rows; ++i) a->grad[i * cols + j] += out->grad[i];
    });
  return out;
}

TensorPtr Tape::entry(const TensorPtr& a, std::size_t i) {
  if (i >= a->size())
    throw std::invalid_argument("entry: index " + std::to_string(i) +
                                " out of range for " + Tensor::shape_str(a->shape));
  auto out = Tensor::scalar(a->values[i]);
  out->requires_grad = recording && a->requires_grad;
  if (out->requires_grad)
    record(out, [a, out, i]() {
      a->ensure_grad();
      a->grad[i] += out->grad[0];
    });
  return out;
}

TensorPtr Tape::tridiagonal_matrix(const TensorPtr& diag, const TensorPtr& lower,
                                   const TensorPtr& upper) {
  const std::size_t d = diag->size();
  if (d < 1 || lower->size() != d - 1 || upper->size() != d - 1)
    throw std::invalid_argument(
        "tridiagonal_matrix: need diagonals of lengths d, d-1, d-1");
  auto out = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) out->values[i * d + i] = diag->values[i];
  for (std::size_t i = 0; i + 1 < d; ++i) {
    out->values[i * d + i + 1] = upper->values[i];
    out->values[(i + 1) * d + i] = lower->values[i];
  }
  out->requires_grad = recording && (diag->requires_grad || lower->requires_grad ||
                                     upper->requires_grad);
  if (out->requires_grad)
    record(out, [diag, lower, upper, out, d]() {
      if (diag->requires_grad) {
        diag->ensure_grad();
        for (std::size_t i = 0; i < d; ++i) diag->grad[i] += out->grad[i * d + i];
      }
      if (upper->requires_grad) {
        upper->ensure_grad();
        for (std::size_t i = 0; i + 1 < d; ++i)
          upper->grad[i] += out->grad[i * d + i + 1];
      }
      if (lower->requires_grad) {
        lower->ensure_grad();
        for (std::size_t i = 0; i + 1 < d; ++i)
          lower->grad[i] += out->grad[(i + 1) * d + i];
      }
    });
  return out;
}

TensorPtr Tape::jordan_matrix(const TensorPtr& a, const TensorPtr& b) {
  const std::size_t nblocks = a->size();
  if (b->size() != nblocks)
    throw std::invalid_argument("jordan_matrix: parameter vectors differ in length");
  const std::size_t d = 2 * nblocks;
  auto out = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < nblocks; ++i) {
    const std::size_t p = 2 * i;
    out->values[p * d + p] = a->values[i];
    out->values[p * d + p + 1] = b->values[i];
    out->values[(p + 1) * d + p] = -b->values[i];
    out->values[(p + 1) * d + p + 1] = a->values[i];
  }
  out->requires_grad = recording && (a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    record(out, [a, b, out, nblocks, d]() {
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (std::size_t i = 0; i < nblocks; ++i) {
        const std::size_t p = 2 * i;
        if (a->requires_grad)
          a->grad[i] += out->grad[p * d + p] + out->grad[(p + 1) * d + p + 1];
        if (b->requires_grad)
          b->grad[i] += out->grad[p * d + p + 1] - out->grad[(p + 1) * d + p];
      }
    });
  return out;
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    throw std::logic_error("backward: loss must be scalar, got " +
                           Tensor::shape_str(loss->shape));
  if (!loss->requires_grad) return;  // nothing reachable requires gradients
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad.empty()) continue;  // dead branch
    it->back();
  }
}

}  // namespace kae
