#include "kae/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kae {

Adam::Adam(std::vector<TensorPtr> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.lr < 0.0) throw std::invalid_argument("Adam: learning rate must be >= 0");
  if (cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 <= 0.0 || cfg_.beta2 >= 1.0)
    throw std::invalid_argument("Adam: moment decay rates must lie in (0,1)");
  if (cfg_.eps <= 0.0) throw std::invalid_argument("Adam: eps must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_)
    if (p->grad.empty())
      throw std::logic_error("Adam::step: parameter has no gradient; run backward first");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = *params_[pi];
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

double clip_gradients(const std::vector<TensorPtr>& params, double max_norm) {
  if (max_norm <= 0.0)
    throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const auto& p : params) {
    if (p->grad.empty())
      throw std::logic_error("clip_gradients: parameter has no gradient");
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params)
      for (double& g : p->grad) g *= s;
  }
  return norm;
}

}  // namespace kae
