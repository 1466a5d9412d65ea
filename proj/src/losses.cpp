#include "kae/losses.hpp"

#include <cmath>

namespace kae::losses {

std::string to_string(AccuracyTerm t) {
  switch (t) {
    case AccuracyTerm::full: return "full";
    case AccuracyTerm::max: return "max";
    case AccuracyTerm::discounted: return "discounted";
  }
  return "?";
}

std::string to_string(EmbeddingTerm t) {
  switch (t) {
    case EmbeddingTerm::none: return "none";
    case EmbeddingTerm::reconstruction: return "reconstruction";
    case EmbeddingTerm::consistency: return "consistency";
    case EmbeddingTerm::metric: return "metric";
  }
  return "?";
}

std::string to_string(OperatorTerm t) {
  switch (t) {
    case OperatorTerm::none: return "none";
    case OperatorTerm::norm: return "norm";
    case OperatorTerm::isometry: return "isometry";
    case OperatorTerm::unitary: return "unitary";
    case OperatorTerm::determinant: return "determinant";
  }
  return "?";
}

std::string to_string(AuxiliaryTerm t) {
  switch (t) {
    case AuxiliaryTerm::none: return "none";
    case AuxiliaryTerm::absolute_max: return "absolute_max";
    case AuxiliaryTerm::energy: return "energy";
  }
  return "?";
}

AccuracyTerm accuracy_from_string(const std::string& s) {
  if (s == "full") return AccuracyTerm::full;
  if (s == "max") return AccuracyTerm::max;
  if (s == "discounted") return AccuracyTerm::discounted;
  throw std::invalid_argument("unknown accuracy term '" + s + "'");
}

EmbeddingTerm embedding_from_string(const std::string& s) {
  if (s == "none") return EmbeddingTerm::none;
  if (s == "reconstruction") return EmbeddingTerm::reconstruction;
  if (s == "consistency") return EmbeddingTerm::consistency;
  if (s == "metric") return EmbeddingTerm::metric;
  throw std::invalid_argument("unknown embedding term '" + s + "'");
}

OperatorTerm operator_from_string(const std::string& s) {
  if (s == "none") return OperatorTerm::none;
  if (s == "norm") return OperatorTerm::norm;
  if (s == "isometry") return OperatorTerm::isometry;
  if (s == "unitary") return OperatorTerm::unitary;
  if (s == "determinant") return OperatorTerm::determinant;
  throw std::invalid_argument("unknown operator term '" + s + "'");
}

AuxiliaryTerm auxiliary_from_string(const std::string& s) {
  if (s == "none") return AuxiliaryTerm::none;
  if (s == "absolute" || s == "absolute_max") return AuxiliaryTerm::absolute_max;
  if (s == "energy") return AuxiliaryTerm::energy;
  throw std::invalid_argument("unknown auxiliary term '" + s + "'");
}

void LossConfig::validate(koopman::OperatorKind form, const std::string& equation) const {
  if (lambda <= 0.0 || lambda > 1.0)
    throw std::invalid_argument("loss: lambda must lie in (0, 1]");
  for (double w : {weight_accuracy, weight_embedding, weight_operator, weight_auxiliary})
    if (w <= 0.0) throw std::invalid_argument("loss: term weights must be positive");
  if (op == OperatorTerm::determinant && form == koopman::OperatorKind::dense)
    throw std::invalid_argument(
        "loss: the determinant term requires a tridiagonal or jordan operator form");
  if (auxiliary == AuxiliaryTerm::energy && equation != "pendulum")
    throw std::invalid_argument("loss: the energy term is only valid for pendulum data");
  if (power_iterations < 1)
    throw std::invalid_argument("loss: power_iterations must be positive");
  if (isometry_samples < 1)
    throw std::invalid_argument("loss: isometry_samples must be positive");
}

namespace {

void check_pred_targets(const std::vector<TensorPtr>& preds,
                        const std::vector<TensorPtr>& targets) {
  if (preds.empty() || preds.size() != targets.size())
    throw std::invalid_argument("accuracy loss: need equally many predictions and targets");
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (!same_shape(*preds[i], *targets[i]))
      throw std::invalid_argument("accuracy loss: prediction/target shape mismatch at step " +
                                  std::to_string(i + 1));
}

}  // namespace

TensorPtr discounted_accuracy(Tape& tape, const std::vector<TensorPtr>& preds,
                              const std::vector<TensorPtr>& targets, double lambda) {
  check_pred_targets(preds, targets);
  const std::size_t n = preds.size();
  const double batch = static_cast<double>(preds[0]->shape[0]);
  TensorPtr acc;
  double w = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    w *= lambda;  // step i+1 carries lambda^(i+1)
    auto term = tape.scale(tape.sq_norm(tape.sub(preds[i], targets[i])), w);
    acc = acc ? tape.add(acc, term) : term;
  }
  return tape.scale(acc, 1.0 / (static_cast<double>(n) * batch));
}

TensorPtr full_accuracy(Tape& tape, const std::vector<TensorPtr>& preds,
                        const std::vector<TensorPtr>& targets) {
  return discounted_accuracy(tape, preds, targets, 1.0);
}

TensorPtr max_accuracy(Tape& tape, const std::vector<TensorPtr>& preds,
                       const std::vector<TensorPtr>& targets) {
  check_pred_targets(preds, targets);
  TensorPtr worst;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto err = tape.row_sqnorm(tape.sub(preds[i], targets[i]));
    worst = worst ? tape.emax(worst, err) : err;
  }
  return tape.mean(worst);
}

TensorPtr reconstruction_loss(Tape& tape, const koopman::KoopmanModel& model,
                              const Batch& batch) {
  const std::size_t n = batch.steps();
  const double bsz = static_cast<double>(batch.initial->shape[0]);
  TensorPtr acc;
  for (std::size_t i = 0; i < n; ++i) {
    auto recon = model.decode(tape, model.encode(tape, batch.targets[i]));
    auto term = tape.sq_norm(tape.sub(recon, batch.targets[i]));
    acc = acc ? tape.add(acc, term) : term;
  }
  return tape.scale(acc, 1.0 / (static_cast<double>(n) * bsz));
}

TensorPtr consistency_loss(Tape& tape, const koopman::KoopmanModel& model,
                           const std::vector<TensorPtr>& latents, const Batch& batch) {
  const std::size_t n = batch.steps();
  if (latents.size() != n)
    throw std::invalid_argument("consistency loss: latent iterates do not match steps");
  const double bsz = static_cast<double>(batch.initial->shape[0]);
  TensorPtr acc;
  for (std::size_t i = 0; i < n; ++i) {
    auto enc = model.encode(tape, batch.targets[i]);
    auto term = tape.sq_norm(tape.sub(latents[i], enc));
    acc = acc ? tape.add(acc, term) : term;
  }
  return tape.scale(acc, 1.0 / (static_cast<double>(n) * bsz));
}

TensorPtr metric_loss_pairs(Tape& tape, const koopman::KoopmanModel& model,
                            const TensorPtr& first, const TensorPtr& second) {
  if (!same_shape(*first, *second))
    throw std::invalid_argument("metric loss: pair shape mismatch");
  auto enc_dist = tape.row_sqnorm(tape.sub(model.encode(tape, first),
                                           model.encode(tape, second)));
  auto phys_dist = tape.row_sqnorm(tape.sub(first, second));
  return tape.mean(tape.square(tape.sub(enc_dist, phys_dist)));
}

TensorPtr metric_loss(Tape& tape, const koopman::KoopmanModel& model,
                      const Batch& batch, Rng& rng) {
  // Flatten the batch targets into one pool of states and pair each state
  // with its image under a random derangement.
  const std::size_t n = batch.steps();
  const std::size_t bsz = batch.initial->shape[0];
  const std::size_t cols = batch.initial->shape[1];
  const std::size_t total = n * bsz;
  if (total < 2)
    throw std::invalid_argument("metric loss: need at least two states to pair");
  auto pool = Tensor::zeros({total, cols});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(batch.targets[i]->values.begin(), batch.targets[i]->values.end(),
              pool->values.begin() + i * bsz * cols);

  // Sattolo's algorithm yields a uniform cyclic permutation: no fixed points.
  std::vector<std::size_t> perm(total);
  for (std::size_t i = 0; i < total; ++i) perm[i] = i;
  for (std::size_t i = total - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(i)]);

  auto partner = Tensor::zeros({total, cols});
  for (std::size_t i = 0; i < total; ++i)
    std::copy(pool->values.begin() + perm[i] * cols,
              pool->values.begin() + (perm[i] + 1) * cols,
              partner->values.begin() + i * cols);
  return metric_loss_pairs(tape, model, pool, partner);
}

TensorPtr norm_loss(Tape& tape, const TensorPtr& op_matrix, LossState& state,
                    int iterations) {
  const std::size_t d = op_matrix->shape[0];
  if (state.power_vector.size() != d) {
    // Deterministic start: the normalized all-ones vector.
    state.power_vector.assign(d, 1.0 / std::sqrt(static_cast<double>(d)));
  }
  auto w = Tensor::make({d, 1}, std::vector<double>(state.power_vector));
  TensorPtr wt = w;
  for (int it = 0; it < iterations; ++it) {
    auto kw = tape.matmul(op_matrix, wt);             // K w
    wt = tape.matmul(op_matrix, kw, true, false);     // K^T K w
  }
  // Rayleigh quotient |K w|^2 / |w|^2 estimates the squared spectral norm.
  auto kw = tape.matmul(op_matrix, wt);
  auto sigma_sq = tape.div(tape.sq_norm(kw), tape.sq_norm(wt));
  auto loss = tape.square(tape.sub(sigma_sq, Tensor::scalar(1.0)));

  // Persist the iterate (normalized, outside the tape) for the next call.
  double nrm = 0.0;
  for (double v : wt->values) nrm += v * v;
  nrm = std::sqrt(nrm);
  if (std::isfinite(nrm) && nrm > 0.0)
    for (std::size_t i = 0; i < d; ++i) state.power_vector[i] = wt->values[i] / nrm;
  return loss;
}

TensorPtr isometry_loss(Tape& tape, const TensorPtr& op_matrix,
                        const TensorPtr& samples) {
  if (samples->rank() != 2 || samples->shape[1] != op_matrix->shape[0])
    throw std::invalid_argument("isometry loss: samples " +
                                Tensor::shape_str(samples->shape) +
                                " do not match the operator dimension");
  auto mapped = tape.matmul(samples, op_matrix, false, true);
  auto diff = tape.sub(tape.row_sqnorm(mapped), tape.row_sqnorm(samples));
  return tape.mean(tape.square(diff));
}

TensorPtr unitary_loss(Tape& tape, const TensorPtr& op_matrix) {
  const std::size_t d = op_matrix->shape[0];
  auto kkt = tape.matmul(op_matrix, op_matrix, false, true);
  auto identity = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) identity->values[i * d + i] = 1.0;
  return tape.sq_norm(tape.sub(kkt, identity));
}

namespace {

// Renormalizes the two trailing partial determinants by a power of two
// (exact in binary floating point) and accumulates the exponent.
void renormalize(Tape& tape, TensorPtr& hi, TensorPtr& lo, long& exponent) {
  const double mag = std::abs(hi->values[0]);
  if (mag == 0.0 || !std::isfinite(mag)) return;
  int e = 0;
  std::frexp(mag, &e);  // mag = f * 2^e, f in [0.5, 1)
  if (e == 0 || e == 1) return;
  const double s = std::ldexp(1.0, -(e - 1));  // brings |hi| into [1, 2)
  hi = tape.scale(hi, s);
  lo = tape.scale(lo, s);
  exponent += e - 1;
}

}  // namespace

TensorPtr det_tridiagonal(Tape& tape, const TensorPtr& diag, const TensorPtr& lower,
                          const TensorPtr& upper) {
  const std::size_t d = diag->size();
  if (d < 1 || lower->size() != d - 1 || upper->size() != d - 1)
    throw std::invalid_argument("det_tridiagonal: need lengths d, d-1, d-1");
  // det(A_m) = a_m det(A_{m-1}) - b_{m-1} c_{m-1} det(A_{m-2})
  TensorPtr prev2 = Tensor::scalar(1.0);  // det(A_0)
  TensorPtr det = tape.mul(tape.entry(diag, 0), prev2);
  long exponent = 0;
  for (std::size_t m = 1; m < d; ++m) {
    TensorPtr a_m = tape.entry(diag, m);
    TensorPtr bc = tape.mul(tape.entry(upper, m - 1), tape.entry(lower, m - 1));
    TensorPtr next = tape.sub(tape.mul(a_m, det), tape.mul(bc, prev2));
    prev2 = det;
    det = next;
    renormalize(tape, det, prev2, exponent);
  }
  return tape.scale(det, std::ldexp(1.0, static_cast<int>(exponent)));
}

TensorPtr det_jordan(Tape& tape, const TensorPtr& block_a, const TensorPtr& block_b) {
  if (block_a->size() != block_b->size() || block_a->size() == 0)
    throw std::invalid_argument("det_jordan: need equally many a and b parameters");
  TensorPtr det = Tensor::scalar(1.0);
  long exponent = 0;
  for (std::size_t i = 0; i < block_a->size(); ++i) {
    auto a = tape.entry(block_a, i);
    auto b = tape.entry(block_b, i);
    auto factor = tape.add(tape.square(a), tape.square(b));
    det = tape.mul(det, factor);
    const double mag = std::abs(det->values[0]);
    if (mag > 0.0 && std::isfinite(mag)) {
      int e = 0;
      std::frexp(mag, &e);
      if (e != 0 && e != 1) {
        det = tape.scale(det, std::ldexp(1.0, -(e - 1)));
        exponent += e - 1;
      }
    }
  }
  return tape.scale(det, std::ldexp(1.0, static_cast<int>(exponent)));
}

TensorPtr determinant_loss(Tape& tape, const koopman::KoopmanOperator& op) {
  TensorPtr det;
  switch (op.kind) {
    case koopman::OperatorKind::dense:
      throw std::invalid_argument(
          "determinant loss: not available for the dense form; use tridiagonal or jordan");
    case koopman::OperatorKind::tridiagonal:
      det = det_tridiagonal(tape, op.diag, op.lower, op.upper);
      break;
    case koopman::OperatorKind::jordan:
      det = det_jordan(tape, op.block_a, op.block_b);
      break;
  }
  return tape.square(tape.sub(det, Tensor::scalar(1.0)));
}

TensorPtr absolute_max_loss(Tape& tape, const std::vector<TensorPtr>& preds,
                            const std::vector<TensorPtr>& targets) {
  check_pred_targets(preds, targets);
  TensorPtr worst;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto sq = tape.square(tape.sub(preds[i], targets[i]));
    worst = worst ? tape.emax(worst, sq) : sq;
  }
  return tape.mean(tape.row_max(worst));
}

namespace {

// H(theta, omega) = omega^2 / 2 + 1 - cos(theta), per batch row.
TensorPtr pendulum_energy(Tape& tape, const TensorPtr& states) {
  if (states->rank() != 2 || states->shape[1] != 2)
    throw std::invalid_argument("energy loss: pendulum states must be [B x 2]");
  auto theta = tape.column(states, 0);
  auto omega = tape.column(states, 1);
  auto kinetic = tape.scale(tape.square(omega), 0.5);
  auto potential = tape.sub(Tensor::make({states->shape[0]},
                                         std::vector<double>(states->shape[0], 1.0)),
                            tape.cos(theta));
  return tape.add(kinetic, potential);
}

}  // namespace

TensorPtr energy_loss(Tape& tape, const std::vector<TensorPtr>& preds,
                      const TensorPtr& reference) {
  if (preds.empty()) throw std::invalid_argument("energy loss: no predictions");
  auto ref_energy = pendulum_energy(tape, reference);
  TensorPtr acc;
  for (const auto& p : preds) {
    auto drift = tape.sub(pendulum_energy(tape, p), ref_energy);
    auto term = tape.mean(tape.square(drift));
    acc = acc ? tape.add(acc, term) : term;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(preds.size()));
}

LossBreakdown total_loss(Tape& tape, const koopman::KoopmanModel& model,
                         const Batch& batch, const LossConfig& cfg, LossState& state,
                         Rng& rng, const std::string& equation) {
  cfg.validate(model.op.kind, equation);
  if (batch.targets.empty()) throw std::invalid_argument("total_loss: empty batch");

  auto roll = koopman::rollout(tape, model, batch.initial, batch.steps());

  LossBreakdown out;
  TensorPtr acc_term;
  switch (cfg.accuracy) {
    case AccuracyTerm::full:
      acc_term = full_accuracy(tape, roll.preds, batch.targets);
      break;
    case AccuracyTerm::max:
      acc_term = max_accuracy(tape, roll.preds, batch.targets);
      break;
    case AccuracyTerm::discounted:
      acc_term = discounted_accuracy(tape, roll.preds, batch.targets, cfg.lambda);
      break;
  }
  out.accuracy = acc_term->item();
  TensorPtr total = tape.scale(acc_term, cfg.weight_accuracy);

  TensorPtr emb_term;
  switch (cfg.embedding) {
    case EmbeddingTerm::none: break;
    case EmbeddingTerm::reconstruction:
      emb_term = reconstruction_loss(tape, model, batch);
      break;
    case EmbeddingTerm::consistency:
      emb_term = consistency_loss(tape, model, roll.latents, batch);
      break;
    case EmbeddingTerm::metric:
      emb_term = metric_loss(tape, model, batch, rng);
      break;
  }
  if (emb_term) {
    out.embedding = emb_term->item();
    total = tape.add(total, tape.scale(emb_term, cfg.weight_embedding));
  }

  TensorPtr op_term;
  switch (cfg.op) {
    case OperatorTerm::none: break;
    case OperatorTerm::norm:
      op_term = norm_loss(tape, roll.operator_matrix, state, cfg.power_iterations);
      break;
    case OperatorTerm::isometry: {
      TensorPtr samples;
      if (cfg.isometry_on_encoded) {
        samples = model.encode(tape, batch.initial);
      } else {
        const std::size_t d = static_cast<std::size_t>(model.encoding_dim);
        samples = Tensor::randn({static_cast<std::size_t>(cfg.isometry_samples), d}, rng);
      }
      op_term = isometry_loss(tape, roll.operator_matrix, samples);
      break;
    }
    case OperatorTerm::unitary:
      op_term = unitary_loss(tape, roll.operator_matrix);
      break;
    case OperatorTerm::determinant:
      op_term = determinant_loss(tape, model.op);
      break;
  }
  if (op_term) {
    out.operator_term = op_term->item();
    total = tape.add(total, tape.scale(op_term, cfg.weight_operator));
  }

  TensorPtr aux_term;
  switch (cfg.auxiliary) {
    case AuxiliaryTerm::none: break;
    case AuxiliaryTerm::absolute_max:
      aux_term = absolute_max_loss(tape, roll.preds, batch.targets);
      break;
    case AuxiliaryTerm::energy: {
      auto reference = model.decode(tape, roll.e0);
      aux_term = energy_loss(tape, roll.preds, reference);
      break;
    }
  }
  if (aux_term) {
    out.auxiliary = aux_term->item();
    total = tape.add(total, tape.scale(aux_term, cfg.weight_auxiliary));
  }

  out.total = total->item();
  out.total_tensor = total;
  return out;
}

}  // namespace kae::losses
