#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kae/dynamics.hpp"
#include "kae/losses.hpp"
#include "kae/optim.hpp"

namespace kae::training {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  std::optional<double> clip = 1.0;  // nullopt disables clipping
  std::uint64_t seed = 0;
  losses::LossConfig loss;
  int eval_interval = 1;  // epochs between test evaluations

  void validate() const;
};

struct EvalRecord {
  int epoch = 0;
  losses::LossBreakdown train_loss;  // epoch mean per term
  double test_error = 0.0;           // mean full accuracy over the test set
  double wall_seconds = 0.0;         // cumulative, monotonic clock
};

struct History {
  std::vector<EvalRecord> records;
  bool diverged = false;
  int diverged_epoch = -1;  // first epoch that produced non-finite values
};

// Mean over test trajectories of the full accuracy of a full-horizon
// rollout. Pure; never touches model or optimizer state.
double evaluate(const koopman::KoopmanModel& model, const dynamics::Dataset& test);

// Seeded deterministic loop: per epoch, shuffle trajectories with the
// epoch-derived stream, roll out each mini-batch over the full horizon,
// assemble the configured objective, clip if configured, and step. A
// divergence aborts training; the remaining eval records carry infinite
// error and the history is flagged.
History fit(koopman::KoopmanModel& model, const dynamics::Dataset& train,
            const dynamics::Dataset& test, const TrainConfig& cfg);

// Builds the [B x S] initial/target tensors for the given trajectory indices.
losses::Batch make_batch(const dynamics::Dataset& ds,
                         const std::vector<std::size_t>& indices);

}  // namespace kae::training
