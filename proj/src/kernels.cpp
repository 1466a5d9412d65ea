#include "kae/kernels.hpp"

#include <algorithm>
#include <atomic>

#include <omp.h>

namespace kae::kernels {

namespace {
std::atomic<int> g_max_threads{0};  // 0 = use the OpenMP default

int effective_threads() {
  int n = g_max_threads.load(std::memory_order_relaxed);
  if (n <= 0) n = omp_get_max_threads();
  return std::max(1, n);
}
}  // namespace

int max_threads() { return effective_threads(); }

void set_max_threads(int n) { g_max_threads.store(n, std::memory_order_relaxed); }

namespace detail {
bool parallel_region(std::size_t work) {
  return work >= kMapGrain && effective_threads() > 1 && !omp_in_parallel();
}
}  // namespace detail

namespace {

// Row-parallel matmul body. Each output row is produced by one thread with
// k ascending in the inner accumulation, matching the serial reference.
template <bool TA, bool TB, bool Acc>
void matmul_body(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n, bool parallel) {
  const auto A = [&](std::size_t i, std::size_t p) {
    return TA ? a[p * m + i] : a[i * k + p];
  };
  const std::int64_t mi = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < mi; ++i) {
    double* crow = c + i * n;
    if constexpr (!Acc) {
      std::fill(crow, crow + n, 0.0);
    }
    if constexpr (!TB) {
      // c[i,:] += A(i,p) * b[p,:]  (unit-stride over the output row)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A(i, p);
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    } else {
      // b is n-by-k; rows of b are the columns of op(b).
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = crow[j];
        for (std::size_t p = 0; p < k; ++p) acc += A(i, p) * brow[p];
        crow[j] = acc;
      }
    }
  }
}

void matmul_dispatch(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n,
                     bool ta, bool tb, bool acc) {
  const bool par = m > 1 && m * n * k >= (1u << 14) && effective_threads() > 1 &&
                   !omp_in_parallel();
  if (!ta && !tb) {
    acc ? matmul_body<false, false, true>(a, b, c, m, k, n, par)
        : matmul_body<false, false, false>(a, b, c, m, k, n, par);
  } else if (!ta && tb) {
    acc ? matmul_body<false, true, true>(a, b, c, m, k, n, par)
        : matmul_body<false, true, false>(a, b, c, m, k, n, par);
  } else if (ta && !tb) {
    acc ? matmul_body<true, false, true>(a, b, c, m, k, n, par)
        : matmul_body<true, false, false>(a, b, c, m, k, n, par);
  } else {
    acc ? matmul_body<true, true, true>(a, b, c, m, k, n, par)
        : matmul_body<true, true, false>(a, b, c, m, k, n, par);
  }
}

void row_sqnorm_body(const double* x, double* out, std::size_t rows,
                     std::size_t cols, bool parallel) {
  const std::int64_t r = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < r; ++i) {
    const double* row = x + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * row[j];
    out[i] = acc;
  }
}

void row_max_body(const double* x, double* out, std::size_t* argmax,
                  std::size_t rows, std::size_t cols, bool parallel) {
  const std::int64_t r = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < r; ++i) {
    const double* row = x + i * cols;
    double best = row[0];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      if (row[j] > best) {
        best = row[j];
        arg = j;
      }
    }
    out[i] = best;
    if (argmax) argmax[i] = arg;
  }
}

}  // namespace

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n,
            bool trans_a, bool trans_b, bool accumulate) {
  matmul_dispatch(a, b, c, m, k, n, trans_a, trans_b, accumulate);
}

void row_sqnorm(const double* x, double* out, std::size_t rows, std::size_t cols) {
  row_sqnorm_body(x, out, rows, cols, detail::parallel_region(rows * cols));
}

void row_max(const double* x, double* out, std::size_t* argmax,
             std::size_t rows, std::size_t cols) {
  row_max_body(x, out, argmax, rows, cols, detail::parallel_region(rows * cols));
}

namespace ref {

// Naive triple loop, independent of the optimized body above. The inner
// accumulation runs k ascending, the same per-element order the parallel
// kernel uses, so the two agree bit-for-bit.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n,
            bool trans_a, bool trans_b, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void row_sqnorm(const double* x, double* out, std::size_t rows, std::size_t cols) {
  row_sqnorm_body(x, out, rows, cols, false);
}

void row_max(const double* x, double* out, std::size_t* argmax,
             std::size_t rows, std::size_t cols) {
  row_max_body(x, out, argmax, rows, cols, false);
}

}  // namespace ref

}  // namespace kae::kernels
