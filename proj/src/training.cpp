#include "kae/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace kae::training {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
  if (lr < 0.0) throw std::invalid_argument("train: lr must be >= 0");
  if (clip && *clip <= 0.0) throw std::invalid_argument("train: clip must be positive");
  if (eval_interval < 1 || (epochs > 0 && eval_interval > epochs))
    throw std::invalid_argument("train: eval_interval must lie in [1, epochs]");
}

losses::Batch make_batch(const dynamics::Dataset& ds,
                         const std::vector<std::size_t>& indices) {
  const std::size_t b = indices.size();
  const std::size_t s = ds.equation.state_dim;
  const std::size_t n = ds.n_steps;
  losses::Batch batch;
  batch.initial = Tensor::zeros({b, s});
  for (std::size_t r = 0; r < b; ++r) {
    auto row = ds.trajectories[indices[r]].row(0);
    std::copy(row.begin(), row.end(), batch.initial->values.begin() + r * s);
  }
  batch.targets.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) {
    auto t = Tensor::zeros({b, s});
    for (std::size_t r = 0; r < b; ++r) {
      auto row = ds.trajectories[indices[r]].row(i);
      std::copy(row.begin(), row.end(), t->values.begin() + r * s);
    }
    batch.targets.push_back(std::move(t));
  }
  return batch;
}

double evaluate(const koopman::KoopmanModel& model, const dynamics::Dataset& test) {
  if (test.trajectories.empty())
    throw std::invalid_argument("evaluate: empty test set");
  constexpr std::size_t kChunk = 64;
  double err_sum = 0.0;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const std::size_t stop = std::min(test.size(), start + kChunk);
    std::vector<std::size_t> idx(stop - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    auto batch = make_batch(test, idx);
    Tape tape;
    tape.recording = false;
    auto roll = koopman::rollout(tape, model, batch.initial, batch.steps());
    // Sum over samples of the per-trajectory mean-over-steps squared error.
    TensorPtr acc;
    for (std::size_t i = 0; i < batch.steps(); ++i) {
      auto e = tape.row_sqnorm(tape.sub(roll.preds[i], batch.targets[i]));
      acc = acc ? tape.add(acc, e) : e;
    }
    auto per_sample = tape.scale(acc, 1.0 / static_cast<double>(batch.steps()));
    err_sum += tape.sum(per_sample)->item();
  }
  return err_sum / static_cast<double>(test.size());
}

History fit(koopman::KoopmanModel& model, const dynamics::Dataset& train,
            const dynamics::Dataset& test, const TrainConfig& cfg) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.equation.state_dim != model.state_dim)
    throw std::invalid_argument("fit: dataset state dimension " +
                                std::to_string(train.equation.state_dim) +
                                " does not match the model's " +
                                std::to_string(model.state_dim));
  cfg.loss.validate(model.op.kind, train.equation.name);

  History history;
  if (cfg.epochs == 0) return history;

  auto params = model.params();
  Adam optimizer(params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  losses::LossState loss_state;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const double inf = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    // Fisher-Yates with the epoch-derived stream.
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);

    losses::LossBreakdown epoch_mean;
    std::size_t n_batches = 0;
    bool diverged = false;

    for (std::size_t start = 0; start < order.size() && !diverged;
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      auto batch = make_batch(train, idx);
      Tape tape;
      try {
        auto breakdown = losses::total_loss(tape, model, batch, cfg.loss, loss_state,
                                            rng, train.equation.name);
        if (!std::isfinite(breakdown.total)) {
          diverged = true;
          break;
        }
        tape.backward(breakdown.total_tensor);
        if (cfg.clip) clip_gradients(params, *cfg.clip);
        optimizer.step();
        epoch_mean.accuracy += breakdown.accuracy;
        epoch_mean.embedding += breakdown.embedding;
        epoch_mean.operator_term += breakdown.operator_term;
        epoch_mean.auxiliary += breakdown.auxiliary;
        epoch_mean.total += breakdown.total;
        ++n_batches;
      } catch (const koopman::RolloutDivergence&) {
        diverged = true;
      }
    }

    if (diverged) {
      history.diverged = true;
      history.diverged_epoch = epoch;
      // Remaining eval points carry infinite error so downstream analyses
      // can rank the run without special cases.
      for (int e = epoch; e <= cfg.epochs; ++e) {
        if (e % cfg.eval_interval != 0 && e != cfg.epochs) continue;
        EvalRecord rec;
        rec.epoch = e;
        rec.train_loss.total = inf;
        rec.test_error = inf;
        rec.wall_seconds = seconds_since(t0);
        history.records.push_back(rec);
      }
      return history;
    }

    if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) {
      EvalRecord rec;
      rec.epoch = epoch;
      const double inv = n_batches ? 1.0 / static_cast<double>(n_batches) : 0.0;
      rec.train_loss.accuracy = epoch_mean.accuracy * inv;
      rec.train_loss.embedding = epoch_mean.embedding * inv;
      rec.train_loss.operator_term = epoch_mean.operator_term * inv;
      rec.train_loss.auxiliary = epoch_mean.auxiliary * inv;
      rec.train_loss.total = epoch_mean.total * inv;
      rec.test_error = evaluate(model, test);
      rec.wall_seconds = seconds_since(t0);
      history.records.push_back(rec);
    }
  }
  return history;
}

}  // namespace kae::training
