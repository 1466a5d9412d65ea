#pragma once

#include <cstdint>
#include <vector>

#include "kae/tensor.hpp"

namespace kae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Keeps first- and
// second-moment accumulators per parameter; step() consumes and zeroes the
// gradients.
class Adam {
 public:
  Adam(std::vector<TensorPtr> params, AdamConfig cfg = {});

  void step();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<TensorPtr>& params() const { return params_; }

 private:
  std::vector<TensorPtr> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

// Scales all gradients by max_norm/norm when their global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
double clip_gradients(const std::vector<TensorPtr>& params, double max_norm);

}  // namespace kae
