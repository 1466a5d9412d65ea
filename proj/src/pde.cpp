#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <vector>

#include "kae/dynamics.hpp"

namespace kae::dynamics {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

bool finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_boundary(const Equation& eq, std::span<const double> u0) {
  if (static_cast<int>(u0.size()) != eq.state_dim)
    throw std::invalid_argument("solve_pde: grid function has " +
                                std::to_string(u0.size()) + " samples, expected " +
                                std::to_string(eq.state_dim));
  if (eq.boundary == Boundary::dirichlet_zero &&
      (u0.front() != 0.0 || u0.back() != 0.0))
    throw std::invalid_argument("solve_pde: initial condition violates the zero "
                                "Dirichlet boundary");
  if (eq.boundary == Boundary::periodic && u0.front() != u0.back())
    throw std::invalid_argument("solve_pde: initial condition is not periodic");
}

// Second difference of the interior; Dirichlet endpoints stay pinned at 0.
void laplacian_interior(std::span<const double> u, double inv_dx2,
                        std::vector<double>& out) {
  const std::size_t n = u.size();
  out.assign(n, 0.0);
  for (std::size_t j = 1; j + 1 < n; ++j)
    out[j] = (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_dx2;
}

Trajectory record_shell(const Equation& eq, std::span<const double> u0, double dt,
                        std::size_t n_steps) {
  Trajectory out;
  out.equation = eq.name;
  out.dt = dt;
  out.state_dim = eq.state_dim;
  out.states.resize((n_steps + 1) * out.state_dim);
  std::copy(u0.begin(), u0.end(), out.states.begin());
  return out;
}

Trajectory solve_heat(const Equation& eq, std::span<const double> u0, double dt,
                      std::size_t n_steps) {
  const std::size_t n = eq.state_dim;
  const double dx = eq.domain_length / static_cast<double>(n - 1);
  const double dt_sub_max = 0.4 * dx * dx;
  const std::size_t substeps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / dt_sub_max)));
  const double h = dt / static_cast<double>(substeps);
  const double inv_dx2 = 1.0 / (dx * dx);

  Trajectory out = record_shell(eq, u0, dt, n_steps);
  std::vector<double> u(u0.begin(), u0.end());
  std::vector<double> deriv;
  const RhsFn rhs = [&](std::span<const double> s) {
    laplacian_interior(s, inv_dx2, deriv);
    return deriv;
  };
  for (std::size_t i = 1; i <= n_steps; ++i) {
    for (std::size_t k = 0; k < substeps; ++k) u = rk4_step(rhs, u, h);
    u[0] = 0.0;
    u[n - 1] = 0.0;
    if (!finite(u)) throw IntegrationBlowup(i);
    std::copy(u.begin(), u.end(), out.states.begin() + i * n);
  }
  return out;
}

// First-order system (u, v = u_t); only u is recorded. Initial velocity is
// zero, which keeps the recorded u-sequence a function of u0 alone.
Trajectory solve_wave(const Equation& eq, std::span<const double> u0, double dt,
                      std::size_t n_steps) {
  const std::size_t n = eq.state_dim;
  const double dx = eq.domain_length / static_cast<double>(n - 1);
  const double dt_sub_max = 0.9 * dx;
  const std::size_t substeps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / dt_sub_max)));
  const double h = dt / static_cast<double>(substeps);
  const double inv_dx2 = 1.0 / (dx * dx);

  Trajectory out = record_shell(eq, u0, dt, n_steps);
  std::vector<double> s(2 * n, 0.0);
  std::copy(u0.begin(), u0.end(), s.begin());
  std::vector<double> deriv(2 * n);
  const RhsFn rhs = [&](std::span<const double> uv) {
    std::fill(deriv.begin(), deriv.end(), 0.0);
    for (std::size_t j = 1; j + 1 < n; ++j) {
      deriv[j] = uv[n + j];
      deriv[n + j] = (uv[j - 1] - 2.0 * uv[j] + uv[j + 1]) * inv_dx2;
    }
    return deriv;
  };
  for (std::size_t i = 1; i <= n_steps; ++i) {
    for (std::size_t k = 0; k < substeps; ++k) s = rk4_step(rhs, s, h);
    s[0] = 0.0;
    s[n - 1] = 0.0;
    s[n] = 0.0;
    s[2 * n - 1] = 0.0;
    if (!finite(s)) throw IntegrationBlowup(i);
    std::copy(s.begin(), s.begin() + n, out.states.begin() + i * n);
  }
  return out;
}

// Central-difference diffusion plus upwinded advection.
Trajectory solve_burgers(const Equation& eq, std::span<const double> u0, double dt,
                         std::size_t n_steps) {
  const std::size_t n = eq.state_dim;
  const double dx = eq.domain_length / static_cast<double>(n - 1);
  const double inv_dx2 = 1.0 / (dx * dx);
  const double inv_dx = 1.0 / dx;

  Trajectory out = record_shell(eq, u0, dt, n_steps);
  std::vector<double> u(u0.begin(), u0.end());
  std::vector<double> deriv(n);
  const RhsFn rhs = [&](std::span<const double> s) {
    std::fill(deriv.begin(), deriv.end(), 0.0);
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const double diff = (s[j - 1] - 2.0 * s[j] + s[j + 1]) * inv_dx2;
      const double ux = s[j] > 0.0 ? (s[j] - s[j - 1]) * inv_dx
                                   : (s[j + 1] - s[j]) * inv_dx;
      deriv[j] = diff - s[j] * ux;
    }
    return deriv;
  };
  for (std::size_t i = 1; i <= n_steps; ++i) {
    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    const double dt_diff = 0.4 * dx * dx;
    const double dt_adv = umax > 0.0 ? 0.5 * dx / umax : dt;
    const double dt_sub_max = std::min(dt_diff, dt_adv);
    const std::size_t substeps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / dt_sub_max)));
    const double h = dt / static_cast<double>(substeps);
    for (std::size_t k = 0; k < substeps; ++k) u = rk4_step(rhs, u, h);
    u[0] = 0.0;
    u[n - 1] = 0.0;
    if (!finite(u)) throw IntegrationBlowup(i);
    std::copy(u.begin(), u.end(), out.states.begin() + i * n);
  }
  return out;
}

std::mutex g_fftw_plan_mutex;  // FFTW's planner is not thread-safe

// Pseudo-spectral workspace over the m unique points of the periodic grid.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(std::size_t m, double domain_length)
      : m_(m), nfreq_(m / 2 + 1), scale_(1.0 / static_cast<double>(m)) {
    real_ = fftw_alloc_real(m_);
    spec_ = fftw_alloc_complex(nfreq_);
    spec2_ = fftw_alloc_complex(nfreq_);
    {
      std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
      fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(m_), real_, spec_, FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_c2r_1d(static_cast<int>(m_), spec2_, real_, FFTW_ESTIMATE);
    }
    wavenumbers_.resize(nfreq_);
    for (std::size_t k = 0; k < nfreq_; ++k)
      wavenumbers_[k] = 2.0 * kPi * static_cast<double>(k) / domain_length;
  }

  ~SpectralWorkspace() {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(spec_);
    fftw_free(spec2_);
  }

  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  void forward(std::span<const double> u) {
    std::copy(u.begin(), u.end(), real_);
    fftw_execute(fwd_);
  }

  // real <- irfft(spec2), normalized.
  void inverse() {
    fftw_execute(bwd_);
    for (std::size_t j = 0; j < m_; ++j) real_[j] *= scale_;
  }

  std::size_t unique_points() const { return m_; }
  std::size_t n_freq() const { return nfreq_; }
  double wavenumber(std::size_t k) const { return wavenumbers_[k]; }
  fftw_complex* spec() { return spec_; }
  fftw_complex* spec2() { return spec2_; }
  const double* real() const { return real_; }

 private:
  std::size_t m_, nfreq_;
  double scale_;
  double* real_;
  fftw_complex* spec_;
  fftw_complex* spec2_;
  fftw_plan fwd_, bwd_;
  std::vector<double> wavenumbers_;
};

// u_t = 6 u u_x - u_xxx with 2/3-rule dealiasing: the state is kept
// band-limited below the dealias cutoff, so the quadratic term cannot
// alias back into retained modes.
Trajectory solve_kdv(const Equation& eq, std::span<const double> u0, double dt,
                     std::size_t n_steps) {
  const std::size_t n = eq.state_dim;
  const std::size_t m = n - 1;  // unique periodic points
  SpectralWorkspace ws(m, eq.domain_length);
  const std::size_t cutoff = (2 * (m / 2)) / 3;  // 2/3 of the Nyquist index

  std::vector<double> u(u0.begin(), u0.begin() + m);
  std::vector<double> ux(m), rhs_buf(m);
  std::vector<double> uhat_re(ws.n_freq()), uhat_im(ws.n_freq());

  const auto apply_cutoff = [&](fftw_complex* s) {
    for (std::size_t k = 0; k < ws.n_freq(); ++k) {
      if (k > cutoff) {
        s[k][0] = 0.0;
        s[k][1] = 0.0;
      }
    }
  };

  const RhsFn rhs = [&](std::span<const double> s) {
    ws.forward(s);
    // u_x from ik * u_hat (dealiased).
    for (std::size_t k = 0; k < ws.n_freq(); ++k) {
      const double kap = ws.wavenumber(k);
      const double re = ws.spec()[k][0], im = ws.spec()[k][1];
      ws.spec2()[k][0] = -kap * im;
      ws.spec2()[k][1] = kap * re;
    }
    apply_cutoff(ws.spec2());
    ws.inverse();
    for (std::size_t j = 0; j < m; ++j) ux[j] = ws.real()[j];
    // Nonlinear product in physical space, then its dealiased spectrum
    // plus the dispersive term ik^3 * u_hat.
    for (std::size_t j = 0; j < m; ++j) rhs_buf[j] = 6.0 * s[j] * ux[j];
    for (std::size_t k = 0; k < ws.n_freq(); ++k) {
      uhat_re[k] = ws.spec()[k][0];
      uhat_im[k] = ws.spec()[k][1];
    }
    ws.forward(rhs_buf);
    for (std::size_t k = 0; k < ws.n_freq(); ++k) {
      const double kap = ws.wavenumber(k);
      const double k3 = kap * kap * kap;
      ws.spec2()[k][0] = ws.spec()[k][0] - k3 * uhat_im[k];
      ws.spec2()[k][1] = ws.spec()[k][1] + k3 * uhat_re[k];
    }
    apply_cutoff(ws.spec2());
    ws.inverse();
    return std::vector<double>(ws.real(), ws.real() + m);
  };

  // RK4 stability under the dispersive term sets dt_sub ~ dx^3.
  const double kap_max = ws.wavenumber(std::min(cutoff, ws.n_freq() - 1));
  const double dt_sub_max = 1.4 / std::max(1.0, kap_max * kap_max * kap_max);
  const std::size_t substeps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / dt_sub_max)));
  const double h = dt / static_cast<double>(substeps);

  Trajectory out = record_shell(eq, u0, dt, n_steps);
  for (std::size_t i = 1; i <= n_steps; ++i) {
    for (std::size_t k = 0; k < substeps; ++k) u = rk4_step(rhs, u, h);
    if (!finite(u)) throw IntegrationBlowup(i);
    std::copy(u.begin(), u.end(), out.states.begin() + i * n);
    out.states[i * n + m] = u[0];  // duplicated periodic endpoint
  }
  return out;
}

}  // namespace

Trajectory solve_pde(const Equation& eq, std::span<const double> u0, double dt,
                     std::size_t n_steps, const GenerationOptions&) {
  if (dt <= 0.0) throw std::invalid_argument("solve_pde: dt must be positive");
  check_boundary(eq, u0);
  if (eq.name == "heat") return solve_heat(eq, u0, dt, n_steps);
  if (eq.name == "wave") return solve_wave(eq, u0, dt, n_steps);
  if (eq.name == "burgers") return solve_burgers(eq, u0, dt, n_steps);
  if (eq.name == "kdv") return solve_kdv(eq, u0, dt, n_steps);
  throw std::domain_error("solve_pde: '" + eq.name + "' is not a PDE");
}

}  // namespace kae::dynamics
