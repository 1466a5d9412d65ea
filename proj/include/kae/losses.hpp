#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kae/koopman.hpp"

namespace kae::losses {

enum class AccuracyTerm { full, max, discounted };
enum class EmbeddingTerm { none, reconstruction, consistency, metric };
enum class OperatorTerm { none, norm, isometry, unitary, determinant };
enum class AuxiliaryTerm { none, absolute_max, energy };

std::string to_string(AccuracyTerm t);
std::string to_string(EmbeddingTerm t);
std::string to_string(OperatorTerm t);
std::string to_string(AuxiliaryTerm t);
AccuracyTerm accuracy_from_string(const std::string& s);
EmbeddingTerm embedding_from_string(const std::string& s);
OperatorTerm operator_from_string(const std::string& s);
AuxiliaryTerm auxiliary_from_string(const std::string& s);

// One training objective: the selected terms plus their weights.
struct LossConfig {
  AccuracyTerm accuracy = AccuracyTerm::full;
  EmbeddingTerm embedding = EmbeddingTerm::none;
  OperatorTerm op = OperatorTerm::none;
  AuxiliaryTerm auxiliary = AuxiliaryTerm::none;
  double lambda = 1.0;  // discount factor for the discounted accuracy term
  double weight_accuracy = 1.0;
  double weight_embedding = 1.0;
  double weight_operator = 1.0;
  double weight_auxiliary = 1.0;
  int power_iterations = 10;   // norm term spectral estimate
  int isometry_samples = 64;   // fresh latent draws per call
  // Alternative reading of the isometry term: apply K to encodings of the
  // batch states instead of fresh latent samples.
  bool isometry_on_encoded = false;

  // The determinant term needs a structured form; the energy term needs
  // pendulum data. Throws a std::invalid_argument naming the offender.
  void validate(koopman::OperatorKind form, const std::string& equation) const;
};

struct LossBreakdown {
  double accuracy = 0.0;
  double embedding = 0.0;
  double operator_term = 0.0;
  double auxiliary = 0.0;
  double total = 0.0;
  TensorPtr total_tensor;  // scalar on the tape
};

// A mini-batch of trajectories: the initial states plus the n target states.
struct Batch {
  TensorPtr initial;               // [B x S]
  std::vector<TensorPtr> targets;  // n entries of [B x S], steps 1..n
  std::size_t steps() const { return targets.size(); }
};

// Persistent state the loss terms carry across calls.
struct LossState {
  std::vector<double> power_vector;  // norm term start vector, kept between calls
};

// --- accuracy ---------------------------------------------------------
// Batch mean of (1/n) sum_i lambda^i |pred_i - v_i|^2 (lambda = 1 for the
// full loss); the max variant takes the per-sample max over steps instead.
TensorPtr full_accuracy(Tape& tape, const std::vector<TensorPtr>& preds,
                        const std::vector<TensorPtr>& targets);
TensorPtr max_accuracy(Tape& tape, const std::vector<TensorPtr>& preds,
                       const std::vector<TensorPtr>& targets);
TensorPtr discounted_accuracy(Tape& tape, const std::vector<TensorPtr>& preds,
                              const std::vector<TensorPtr>& targets, double lambda);

// --- embedding --------------------------------------------------------
TensorPtr reconstruction_loss(Tape& tape, const koopman::KoopmanModel& model,
                              const Batch& batch);
TensorPtr consistency_loss(Tape& tape, const koopman::KoopmanModel& model,
                           const std::vector<TensorPtr>& latents, const Batch& batch);
// Mean over pairs of | |E(v)-E(v')|^2 - |v-v'|^2 |^2.
TensorPtr metric_loss_pairs(Tape& tape, const koopman::KoopmanModel& model,
                            const TensorPtr& first, const TensorPtr& second);
// Production form: derangement pairing of the batch targets, reshuffled per call.
TensorPtr metric_loss(Tape& tape, const koopman::KoopmanModel& model,
                      const Batch& batch, Rng& rng);

// --- operator ---------------------------------------------------------
// (|K|^2 - 1)^2 with the spectral norm squared estimated by a fixed number
// of power-iteration steps, differentiable through the iteration. The
// start vector persists in state between calls.
TensorPtr norm_loss(Tape& tape, const TensorPtr& op_matrix, LossState& state,
                    int iterations);
// Mean of (|K z|^2 - |z|^2)^2 over the given sample rows.
TensorPtr isometry_loss(Tape& tape, const TensorPtr& op_matrix,
                        const TensorPtr& samples);
TensorPtr unitary_loss(Tape& tape, const TensorPtr& op_matrix);  // |K K^T - I|_F^2

// Linear-time determinant of the tridiagonal parameterization via the
// three-term recursion, with a running power-of-two exponent so partial
// determinants never overflow or underflow.
TensorPtr det_tridiagonal(Tape& tape, const TensorPtr& diag, const TensorPtr& lower,
                          const TensorPtr& upper);
// prod_i (a_i^2 + b_i^2), same exponent guard.
TensorPtr det_jordan(Tape& tape, const TensorPtr& block_a, const TensorPtr& block_b);
// (det K - 1)^2; rejects the dense form.
TensorPtr determinant_loss(Tape& tape, const koopman::KoopmanOperator& op);

// --- auxiliary --------------------------------------------------------
// Batch mean of the per-sample max over steps and components of the
// squared prediction error.
TensorPtr absolute_max_loss(Tape& tape, const std::vector<TensorPtr>& preds,
                            const std::vector<TensorPtr>& targets);
// Pendulum energy drift: mean over steps of (H(pred_i) - H(ref))^2 with
// H(theta, omega) = omega^2/2 + 1 - cos(theta) and ref the model's step-0
// output decode(encode(v0)).
TensorPtr energy_loss(Tape& tape, const std::vector<TensorPtr>& preds,
                      const TensorPtr& reference);

// Assembles the weighted objective from the rollout of the batch. The
// accuracy term is always present.
LossBreakdown total_loss(Tape& tape, const koopman::KoopmanModel& model,
                         const Batch& batch, const LossConfig& cfg, LossState& state,
                         Rng& rng, const std::string& equation);

}  // namespace kae::losses
