#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "kae/tape.hpp"

namespace kae::koopman {

enum class Activation { tanh, relu };

struct MlpConfig {
  std::vector<int> widths;  // input, hidden..., output; at least one hidden layer
  Activation activation = Activation::tanh;
};

// Fully connected network. The activation follows every layer except the
// last, which stays linear.
struct Mlp {
  MlpConfig config;
  std::vector<TensorPtr> weights;  // [out x in] per layer
  std::vector<TensorPtr> biases;   // [out] per layer

  TensorPtr forward(Tape& tape, const TensorPtr& x) const;
  std::vector<TensorPtr> params() const;
  static Mlp init(const MlpConfig& cfg, Rng& rng);
};

enum class OperatorKind { dense, tridiagonal, jordan };

std::string to_string(OperatorKind k);
OperatorKind operator_kind_from_string(const std::string& s);

// The latent-space transition matrix in one of three parameterizations.
// Structured kinds store only their free parameters, so masked entries are
// structurally zero rather than zeroed by hand.
struct KoopmanOperator {
  OperatorKind kind = OperatorKind::dense;
  int dim = 0;
  TensorPtr dense;                // dense: [d x d]
  TensorPtr diag, lower, upper;   // tridiagonal: lengths d, d-1, d-1
  TensorPtr block_a, block_b;     // jordan: lengths d/2 each

  TensorPtr matrix(Tape& tape) const;  // dense materialization
  std::vector<TensorPtr> params() const;
  std::size_t param_count() const;  // d^2, 3d-2, or d

  // Jordan spectrum {a_i +- b_i i}. Throws unless kind == jordan.
  std::vector<std::complex<double>> eigenvalues() const;

  // Near-identity start; repeated applications stay bounded and the
  // determinant starts near 1.
  static KoopmanOperator init_near_identity(OperatorKind kind, int dim, Rng& rng);
};

struct ModelOptions {
  std::vector<int> hidden;  // empty = two layers of width max(64, 2*encoding_dim)
  Activation activation = Activation::tanh;
};

struct KoopmanModel {
  int state_dim = 0;
  int encoding_dim = 0;
  Mlp encoder, decoder;
  KoopmanOperator op;

  TensorPtr encode(Tape& tape, const TensorPtr& states) const;
  TensorPtr decode(Tape& tape, const TensorPtr& latents) const;
  std::vector<TensorPtr> params() const;
};

KoopmanModel init_model(int state_dim, int encoding_dim, OperatorKind kind,
                        std::uint64_t seed, const ModelOptions& opts = {});

struct RolloutDivergence : std::runtime_error {
  std::size_t step;
  explicit RolloutDivergence(std::size_t step_)
      : std::runtime_error("rollout produced non-finite values at step " +
                           std::to_string(step_)),
        step(step_) {}
};

struct RolloutResult {
  TensorPtr e0;                    // encoded initial state [B x d]
  TensorPtr operator_matrix;       // the materialized K used for every step
  std::vector<TensorPtr> latents;  // K^i e0 for i = 1..n
  std::vector<TensorPtr> preds;    // decode(latents[i])
};

// Applies the same materialized operator n times in latent space without
// re-encoding, decoding each iterate.
RolloutResult rollout(Tape& tape, const KoopmanModel& model, const TensorPtr& s0,
                      std::size_t n);

// Checkpoint container; byte layout in docs/formats.md, round-trip bit-exact.
void save_model(const KoopmanModel& model, const std::string& path);
KoopmanModel load_model(const std::string& path);

}  // namespace kae::koopman
