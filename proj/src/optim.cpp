#include "mmamba/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mmamba {

AdamW::AdamW(ParamSet& params, AdamWConfig config) : params_(&params), config_(config) {
  for (const auto& p : params.items()) {
    m_.push_back(Values::Zero(p.tensor.size()));
    v_.push_back(Values::Zero(p.tensor.size()));
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_->items()) p.tensor.zero_grad();
}

double AdamW::step() {
  auto& items = params_->items();
  if (items.size() != m_.size()) throw std::logic_error("parameter set changed after optimizer creation");
  std::vector<Values> grads;
  grads.reserve(items.size());
  double sq = 0.0;
  for (auto& p : items) {
    grads.push_back(p.tensor.grad());
    sq += grads.back().square().sum();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip = config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;

  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Values g = grads[i] * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.square();
    Values& w = items[i].tensor.mutable_values();
    if (items[i].decay) w *= 1.0 - config_.lr * config_.weight_decay;
    w -= config_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + config_.eps);
  }
  zero_grad();
  return norm;
}

}  // namespace mmamba
