#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gapfill/tensor.hpp"

namespace gapfill {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  AdamConfig config;
};

/// One bias-corrected Adam update on a single parameter buffer. `step` is the
/// 1-based step count after this update.
void adam_step(std::span<double> params, std::span<const double> grads, std::vector<double>& m,
               std::vector<double>& v, std::uint64_t step, const AdamConfig& cfg);

/// Owns moment buffers for a fixed parameter list; step() consumes the
/// gradients accumulated on the tensors.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg = {});

  void step();
  void zero_grad();
  std::uint64_t step_count() const { return state_.step; }
  const AdamConfig& config() const { return state_.config; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace gapfill
