#pragma once

#include <cstddef>
#include <cstdint>

// Dense compute kernels behind the tensor/tape layer.
//
// Every parallel kernel assigns each output element to exactly one thread
// and evaluates it with a fixed arithmetic order, so results are
// bit-identical for any thread count and bit-identical to the serial
// reference in kae::kernels::ref. The reference implementations are kept
// for parity tests and for the bench_kernels tool.

namespace kae::kernels {

// Upper bound on threads used by the parallel kernels (clamped to >= 1).
// Grid-search workers set this to 1 so worker-level parallelism and
// kernel-level parallelism do not oversubscribe each other.
int max_threads();
void set_max_threads(int n);

// c = op(a) x op(b), with op(x) = x or x^T per flag. a is m-by-k and b is
// k-by-n after applying the flags; c is m-by-n. accumulate=true adds into c.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n,
            bool trans_a, bool trans_b, bool accumulate);

// out[i] = sum_j x[i][j]^2
void row_sqnorm(const double* x, double* out, std::size_t rows, std::size_t cols);

// out[i] = max_j x[i][j], argmax[i] = first maximizing j
void row_max(const double* x, double* out, std::size_t* argmax,
             std::size_t rows, std::size_t cols);

namespace ref {
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n,
            bool trans_a, bool trans_b, bool accumulate);
void row_sqnorm(const double* x, double* out, std::size_t rows, std::size_t cols);
void row_max(const double* x, double* out, std::size_t* argmax,
             std::size_t rows, std::size_t cols);
}  // namespace ref

// Elementwise maps. Parallel for large n, serial below the grain size;
// either way each element is computed independently (bit-exact).
inline constexpr std::size_t kMapGrain = 1 << 12;

namespace detail {
bool parallel_region(std::size_t work);
}

template <class F>
void map(const double* x, double* y, std::size_t n, F f) {
  if (detail::parallel_region(n)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      y[i] = f(x[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
  }
}

template <class F>
void zip(const double* a, const double* b, double* y, std::size_t n, F f) {
  if (detail::parallel_region(n)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      y[i] = f(a[i], b[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
  }
}

namespace ref {
template <class F>
void map(const double* x, double* y, std::size_t n, F f) {
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}
template <class F>
void zip(const double* a, const double* b, double* y, std::size_t n, F f) {
  for (std::size_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}
}  // namespace ref

}  // namespace kae::kernels
