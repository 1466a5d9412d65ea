#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kae/rng.hpp"

namespace kae::dynamics {

enum class EquationKind { ode, pde };
enum class Boundary { none, dirichlet_zero, periodic };

// Thrown when an integrator produces non-finite values.
struct IntegrationBlowup : std::runtime_error {
  std::size_t step;
  explicit IntegrationBlowup(std::size_t step_)
      : std::runtime_error("integration produced non-finite values at step " +
                           std::to_string(step_)),
        step(step_) {}
};

// Data-generation knobs. Every value the underlying references leave open
// is configurable here; the defaults are documented in the README.
struct GenerationOptions {
  int grid_size = 128;      // stored samples per PDE state, both endpoints included
  int fourier_modes = 8;    // modes in random initial conditions
  // Swap in the classical chaotic parameterization of the Lorenz-style system.
  bool classical_lorenz = false;
  // Swap in the damped mean-field variant of the cylinder-wake system.
  bool stable_fluid = false;
  double shm_range = 1.0;            // x0, v0 ~ U[-r, r]
  double pendulum_theta_range = 2.5; // theta0 ~ U[-r, r], omega0 = 0
  double lorenz_range = 1.0;         // U[-r, r]^3
  double fluid_range = 0.2;          // U[-r, r]^3
};

struct Equation {
  std::string name;
  EquationKind kind = EquationKind::ode;
  int state_dim = 0;  // ODE dimension, or stored grid size for a PDE
  Boundary boundary = Boundary::none;
  double domain_length = 0.0;  // PDE spatial domain [0, L]
};

// Names: shm, pendulum, lorenz, fluid_attractor, heat, wave, burgers, kdv.
Equation make_equation(const std::string& name, const GenerationOptions& opts = {});
const std::vector<std::string>& equation_names();

// Right-hand side of the first-order ODE system (second-order equations are
// reduced to (position, velocity) states).
std::vector<double> ode_rhs(const Equation& eq, std::span<const double> s,
                            const GenerationOptions& opts = {});

// One classical 4th-order Runge-Kutta step of the given ODE.
std::vector<double> rk4_step(const Equation& eq, std::span<const double> s, double dt,
                             const GenerationOptions& opts = {});

// Generic RK4 step used by the solvers; rhs(state) -> derivative.
using RhsFn = std::function<std::vector<double>(std::span<const double>)>;
std::vector<double> rk4_step(const RhsFn& rhs, std::span<const double> s, double dt);

struct Trajectory {
  std::string equation;
  double dt = 0.0;
  std::size_t state_dim = 0;
  std::vector<double> states;  // (n_steps+1) x state_dim, row-major; row 0 = initial

  std::size_t n_steps() const { return states.size() / state_dim - 1; }
  std::span<const double> row(std::size_t i) const {
    return {states.data() + i * state_dim, state_dim};
  }
  double at(std::size_t step, std::size_t j) const {
    return states[step * state_dim + j];
  }
};

enum class Split : std::uint8_t { train = 0, test = 1 };

struct Dataset {
  Equation equation;
  double dt = 0.0;
  std::size_t n_steps = 0;
  Split split = Split::train;
  std::int64_t seed = 0;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  void validate() const;  // non-empty, homogeneous shapes, finite entries
};

// Random initial condition: ODE ranges per GenerationOptions; Dirichlet PDEs
// draw a truncated sine series (exact zeros at both endpoints); the periodic
// PDE draws a random Fourier series (stored endpoint duplicates the first
// sample exactly).
std::vector<double> sample_initial(const Equation& eq, Rng& rng,
                                   const GenerationOptions& opts = {});

Trajectory solve_ode(const Equation& eq, std::span<const double> s0, double dt,
                     std::size_t n_steps, const GenerationOptions& opts = {});

// Method-of-lines (heat/wave/burgers) or pseudo-spectral (kdv) solve with
// internally chosen stable substeps; records every dt. Boundary conditions
// hold exactly at every recorded step.
Trajectory solve_pde(const Equation& eq, std::span<const double> u0, double dt,
                     std::size_t n_steps, const GenerationOptions& opts = {});

// Pure function of its arguments: trajectory i uses the rng stream derived
// from seed and i, so serial and parallel generation agree bit-for-bit.
Dataset generate_dataset(const Equation& eq, std::size_t n_traj, std::size_t n_steps,
                         double dt, std::int64_t seed, Split split,
                         const GenerationOptions& opts = {});

// Binary container; byte layout is documented in docs/formats.md and the
// round trip is bit-exact.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace kae::dynamics
