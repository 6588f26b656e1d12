#pragma once

#include "mmamba/layers.hpp"

#include <cstdint>
#include <vector>

namespace mmamba {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;  // decoupled, only on parameters flagged for decay
  double clip_norm = 1.0;      // global gradient norm clip, <= 0 disables
};

class AdamW {
 public:
  AdamW(ParamSet& params, AdamWConfig config);

  /// Applies one update from the accumulated gradients, then clears them.
  /// Returns the gradient norm before clipping.
  double step();
  void zero_grad();

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return steps_; }

  // Exposed for checkpointing.
  std::vector<Values>& first_moments() { return m_; }
  std::vector<Values>& second_moments() { return v_; }
  const std::vector<Values>& first_moments() const { return m_; }
  const std::vector<Values>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  ParamSet* params_;
  AdamWConfig config_;
  std::vector<Values> m_;
  std::vector<Values> v_;
  std::int64_t steps_ = 0;
};

}  // namespace mmamba
