#include "kae/dynamics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "kae/kernels.hpp"

namespace kae::dynamics {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

bool finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

const std::vector<std::string>& equation_names() {
  static const std::vector<std::string> names = {
      "shm", "pendulum", "lorenz", "fluid_attractor", "heat", "wave", "burgers", "kdv"};
  return names;
}

Equation make_equation(const std::string& name, const GenerationOptions& opts) {
  if (opts.grid_size < 8)
    throw std::invalid_argument("grid_size must be at least 8");
  if (name == "shm") return {name, EquationKind::ode, 2, Boundary::none, 0.0};
  if (name == "pendulum") return {name, EquationKind::ode, 2, Boundary::none, 0.0};
  if (name == "lorenz") return {name, EquationKind::ode, 3, Boundary::none, 0.0};
  if (name == "fluid_attractor")
    return {name, EquationKind::ode, 3, Boundary::none, 0.0};
  if (name == "heat" || name == "wave" || name == "burgers")
    return {name, EquationKind::pde, opts.grid_size, Boundary::dirichlet_zero, 1.0};
  if (name == "kdv")
    return {name, EquationKind::pde, opts.grid_size, Boundary::periodic, 2.0 * kPi};
  throw std::domain_error("unknown equation '" + name + "'");
}

std::vector<double> ode_rhs(const Equation& eq, std::span<const double> s,
                            const GenerationOptions& opts) {
  if (static_cast<int>(s.size()) != eq.state_dim)
    throw std::invalid_argument("ode_rhs: state has dimension " +
                                std::to_string(s.size()) + ", expected " +
                                std::to_string(eq.state_dim));
  if (eq.name == "shm") return {s[1], -s[0]};
  if (eq.name == "pendulum") return {s[1], -std::sin(s[0])};
  if (eq.name == "lorenz") {
    const double x = s[0], y = s[1], z = s[2];
    if (opts.classical_lorenz)
      return {10.0 * (y - x), x * (28.0 - z) - y, x * y - (8.0 / 3.0) * z};
    return {y - x, x - x * z - y, x * y - z};
  }
  if (eq.name == "fluid_attractor") {
    const double x = s[0], y = s[1], z = s[2];
    if (opts.stable_fluid) {
      // Damped mean-field variant: z relaxes onto the paraboloid x^2 + y^2.
      const double mu = 0.1, lam = 10.0;
      return {mu * x - y + x * z, x + mu * y + y * z, -lam * (z - x * x - y * y)};
    }
    return {x - y + x * z, x + y + y * z, x * x + y * y + z};
  }
  throw std::domain_error("ode_rhs: '" + eq.name + "' is not an ODE");
}

std::vector<double> rk4_step(const RhsFn& rhs, std::span<const double> s, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
  const std::size_t n = s.size();
  std::vector<double> k1 = rhs(s);
  std::vector<double> tmp(n);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
  std::vector<double> k2 = rhs(tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
  std::vector<double> k3 = rhs(tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + dt * k3[i];
  std::vector<double> k4 = rhs(tmp);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = s[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

std::vector<double> rk4_step(const Equation& eq, std::span<const double> s, double dt,
                             const GenerationOptions& opts) {
  auto out = rk4_step(
      [&](std::span<const double> x) { return ode_rhs(eq, x, opts); }, s, dt);
  if (!finite(out)) throw IntegrationBlowup(0);
  return out;
}

std::vector<double> sample_initial(const Equation& eq, Rng& rng,
                                   const GenerationOptions& opts) {
  if (eq.kind == EquationKind::ode) {
    if (eq.name == "shm")
      return {rng.uniform(-opts.shm_range, opts.shm_range),
              rng.uniform(-opts.shm_range, opts.shm_range)};
    if (eq.name == "pendulum")
      return {rng.uniform(-opts.pendulum_theta_range, opts.pendulum_theta_range), 0.0};
    const double r = eq.name == "lorenz" ? opts.lorenz_range : opts.fluid_range;
    return {rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)};
  }

  const std::size_t n = eq.state_dim;
  std::vector<double> u(n, 0.0);
  if (eq.boundary == Boundary::dirichlet_zero) {
    // Truncated sine series; vanishes by construction at x=0 and x=L, and
    // the endpoints are forced to exact zeros.
    std::vector<double> coef(opts.fourier_modes);
    for (int k = 1; k <= opts.fourier_modes; ++k)
      coef[k - 1] = rng.normal(0.0, 1.0 / k);
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(n - 1);
      double acc = 0.0;
      for (int k = 1; k <= opts.fourier_modes; ++k)
        acc += coef[k - 1] * std::sin(k * kPi * x);
      u[j] = acc;
    }
    u[0] = 0.0;
    u[n - 1] = 0.0;
    return u;
  }

  // Periodic: random Fourier series on the first n-1 points; the stored
  // right endpoint duplicates the left one exactly.
  const std::size_t m = n - 1;
  std::vector<double> ak(opts.fourier_modes), bk(opts.fourier_modes);
  const double c0 = rng.normal(0.0, 1.0);
  for (int k = 1; k <= opts.fourier_modes; ++k) {
    ak[k - 1] = rng.normal(0.0, 1.0 / k);
    bk[k - 1] = rng.normal(0.0, 1.0 / k);
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double t = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(m);
    double acc = c0;
    for (int k = 1; k <= opts.fourier_modes; ++k)
      acc += ak[k - 1] * std::cos(k * t) + bk[k - 1] * std::sin(k * t);
    u[j] = acc;
  }
  u[m] = u[0];
  return u;
}

Trajectory solve_ode(const Equation& eq, std::span<const double> s0, double dt,
                     std::size_t n_steps, const GenerationOptions& opts) {
  if (dt <= 0.0) throw std::invalid_argument("solve_ode: dt must be positive");
  Trajectory out;
  out.equation = eq.name;
  out.dt = dt;
  out.state_dim = eq.state_dim;
  out.states.resize((n_steps + 1) * out.state_dim);
  std::copy(s0.begin(), s0.end(), out.states.begin());
  std::vector<double> s(s0.begin(), s0.end());
  for (std::size_t i = 1; i <= n_steps; ++i) {
    s = rk4_step([&](std::span<const double> x) { return ode_rhs(eq, x, opts); }, s, dt);
    if (!finite(s)) throw IntegrationBlowup(i);
    std::copy(s.begin(), s.end(), out.states.begin() + i * out.state_dim);
  }
  return out;
}

void Dataset::validate() const {
  if (trajectories.empty()) throw std::invalid_argument("Dataset: no trajectories");
  for (const auto& t : trajectories) {
    if (t.state_dim != static_cast<std::size_t>(equation.state_dim) ||
        t.n_steps() != n_steps || t.dt != dt || t.equation != equation.name)
      throw std::invalid_argument("Dataset: inhomogeneous trajectory shapes");
    if (!finite(t.states)) throw std::invalid_argument("Dataset: non-finite entries");
  }
}

Dataset generate_dataset(const Equation& eq, std::size_t n_traj, std::size_t n_steps,
                         double dt, std::int64_t seed, Split split,
                         const GenerationOptions& opts) {
  if (n_traj == 0 || n_steps == 0)
    throw std::invalid_argument("generate_dataset: counts must be positive");
  if (dt <= 0.0) throw std::invalid_argument("generate_dataset: dt must be positive");
  Dataset ds;
  ds.equation = eq;
  ds.dt = dt;
  ds.n_steps = n_steps;
  ds.split = split;
  ds.seed = seed;
  ds.trajectories.resize(n_traj);

  // Each trajectory owns an rng stream keyed by (seed, index), so the loop
  // parallelizes without changing any bit of the output.
  std::exception_ptr error;
  const std::int64_t nt = static_cast<std::int64_t>(n_traj);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads()) \
    if (eq.kind == EquationKind::pde && kernels::max_threads() > 1 && !omp_in_parallel())
  for (std::int64_t i = 0; i < nt; ++i) {
    try {
      Rng rng(Rng::mix(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(i)));
      auto s0 = sample_initial(eq, rng, opts);
      ds.trajectories[i] = eq.kind == EquationKind::ode
                               ? solve_ode(eq, s0, dt, n_steps, opts)
                               : solve_pde(eq, s0, dt, n_steps, opts);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return ds;
}

namespace {

constexpr char kDatasetMagic[8] = {'K', 'A', 'E', 'D', 'A', 'T', 'A', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_dataset: cannot open '" + path + "'");
  os.write(kDatasetMagic, sizeof(kDatasetMagic));
  const std::uint32_t name_len = static_cast<std::uint32_t>(ds.equation.name.size());
  write_pod(os, name_len);
  os.write(ds.equation.name.data(), name_len);
  write_pod(os, static_cast<std::uint8_t>(ds.equation.kind));
  write_pod(os, static_cast<std::uint8_t>(ds.equation.boundary));
  write_pod(os, static_cast<std::uint8_t>(ds.split));
  write_pod(os, static_cast<std::uint64_t>(ds.trajectories.size()));
  write_pod(os, static_cast<std::uint64_t>(ds.n_steps));
  write_pod(os, static_cast<std::uint64_t>(ds.equation.state_dim));
  write_pod(os, ds.dt);
  write_pod(os, ds.equation.domain_length);
  write_pod(os, static_cast<std::int64_t>(ds.seed));
  for (const auto& t : ds.trajectories)
    os.write(reinterpret_cast<const char*>(t.states.data()),
             static_cast<std::streamsize>(t.states.size() * sizeof(double)));
  if (!os) throw std::runtime_error("save_dataset: write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw std::runtime_error("load_dataset: '" + path + "' is not a dataset file");
  Dataset ds;
  const auto name_len = read_pod<std::uint32_t>(is);
  ds.equation.name.resize(name_len);
  is.read(ds.equation.name.data(), name_len);
  ds.equation.kind = static_cast<EquationKind>(read_pod<std::uint8_t>(is));
  ds.equation.boundary = static_cast<Boundary>(read_pod<std::uint8_t>(is));
  ds.split = static_cast<Split>(read_pod<std::uint8_t>(is));
  const auto n_traj = read_pod<std::uint64_t>(is);
  ds.n_steps = read_pod<std::uint64_t>(is);
  ds.equation.state_dim = static_cast<int>(read_pod<std::uint64_t>(is));
  ds.dt = read_pod<double>(is);
  ds.equation.domain_length = read_pod<double>(is);
  ds.seed = read_pod<std::int64_t>(is);
  ds.trajectories.resize(n_traj);
  const std::size_t block = (ds.n_steps + 1) * ds.equation.state_dim;
  for (auto& t : ds.trajectories) {
    t.equation = ds.equation.name;
    t.dt = ds.dt;
    t.state_dim = ds.equation.state_dim;
    t.states.resize(block);
    is.read(reinterpret_cast<char*>(t.states.data()),
            static_cast<std::streamsize>(block * sizeof(double)));
  }
  if (!is) throw std::runtime_error("load_dataset: truncated file '" + path + "'");
  ds.validate();
  return ds;
}

}  // namespace kae::dynamics
