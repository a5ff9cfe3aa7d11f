#include "gapfill/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gapfill {

void adam_step(std::span<double> params, std::span<const double> grads, std::vector<double>& m,
               std::vector<double>& v, std::uint64_t step, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw std::invalid_argument("adam_step: buffer size mismatch");
  }
  if (step == 0) throw std::invalid_argument("adam_step: step is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)) {
  state_.config = cfg;
  state_.first_moment.reserve(params_.size());
  state_.second_moment.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.defined()) throw std::invalid_argument("AdamOptimizer: undefined parameter");
    state_.first_moment.emplace_back(p.numel(), 0.0);
    state_.second_moment.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++state_.step;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;  // parameter untouched this pass
    adam_step(p.mutable_data(), p.grad(), state_.first_moment[i], state_.second_moment[i],
              state_.step, state_.config);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace gapfill
