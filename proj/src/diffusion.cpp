#include "mmamba/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mmamba {

DiffusionSchedule build_schedule(Index steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("diffusion needs at least one step");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_end < beta_start) {
    throw std::invalid_argument("beta range must satisfy 0 < start <= end < 1");
  }
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  long double prod = 1.0L;
  for (Index t = 0; t < steps; ++t) {
    const double frac = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
    s.beta(t) = beta_start + (beta_end - beta_start) * frac;
    s.alpha(t) = 1.0 - s.beta(t);
    prod *= 1.0L - static_cast<long double>(s.beta(t));
    s.alpha_bar(t) = static_cast<double>(prod);
  }
  return s;
}

double alpha_bar_at(const DiffusionSchedule& s, int t) {
  if (t == kCleanStep) return 1.0;
  if (t < 0 || t >= s.steps) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(s.steps) + ")");
  }
  return s.alpha_bar(t);
}

namespace {

// Per-batch coefficient broadcast over [T,B,C].
Tensor batch_coefficient(std::span<const int> t, const DiffusionSchedule& s, bool noise_part) {
  Values c(static_cast<Index>(t.size()));
  for (std::size_t b = 0; b < t.size(); ++b) {
    const double ab = alpha_bar_at(s, t[b]);
    c(static_cast<Index>(b)) = std::sqrt(noise_part ? 1.0 - ab : ab);
  }
  return Tensor({1, static_cast<Index>(t.size()), 1}, std::move(c));
}

void require_batch(const Tensor& z, std::span<const int> t) {
  if (z.rank() != 3 || z.dim(1) != static_cast<Index>(t.size())) {
    throw std::invalid_argument("expected [T,B,C] with one timestep per batch entry");
  }
}

}  // namespace

Tensor q_sample(const DiffusionSchedule& s, const Tensor& z0, std::span<const int> t,
                const Tensor& eps) {
  require_batch(z0, t);
  if (eps.shape() != z0.shape()) throw std::invalid_argument("noise must match z0");
  return z0 * batch_coefficient(t, s, false) + eps * batch_coefficient(t, s, true);
}

Tensor training_loss(const NoisePredictor& model, const DiffusionSchedule& s, const Tensor& z0,
                     std::span<const int> t, const Tensor& eps, const Tensor& cond) {
  Tensor diff = model(q_sample(s, z0, t, eps), t, cond) - eps;
  return mean(diff * diff);
}

NoisePredictor guided(NoisePredictor model, Tensor null_cond, double guidance) {
  if (guidance == 1.0) return model;
  return [model = std::move(model), null_cond = std::move(null_cond), guidance](
             const Tensor& z, std::span<const int> t, const Tensor& cond) {
    Tensor e_null = model(z, t, null_cond);
    return e_null + (model(z, t, cond) - e_null) * guidance;
  };
}

Tensor predict_x0(const DiffusionSchedule& s, const Tensor& z_t, int t, const Tensor& eps) {
  const double ab = alpha_bar_at(s, t);
  return (z_t - eps * std::sqrt(1.0 - ab)) * (1.0 / std::sqrt(ab));
}

Tensor ddim_step(const DiffusionSchedule& s, const NoisePredictor& model, const Tensor& z_t, int t,
                 int t_prev, const Tensor& cond, double eta, Rng& rng, double clip_x0) {
  if (!(t > t_prev) || t_prev < kCleanStep) {
    throw std::invalid_argument("ddim_step needs t > t_prev >= clean, got " + std::to_string(t) +
                                " -> " + std::to_string(t_prev));
  }
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta must lie in [0, 1]");
  if (z_t.rank() != 3) throw std::invalid_argument("ddim_step expects [T,B,C]");
  const double ab = alpha_bar_at(s, t);
  const double ab_prev = alpha_bar_at(s, t_prev);
  const std::vector<int> steps(static_cast<std::size_t>(z_t.dim(1)), t);
  Tensor eps = model(z_t, steps, cond);
  Tensor x0 = predict_x0(s, z_t, t, eps);
  if (clip_x0 > 0.0) {
    // The clamped estimate implies its own noise, which then drives the direction term.
    x0 = Tensor(x0.shape(), x0.values().cwiseMax(-clip_x0).cwiseMin(clip_x0));
    eps = (z_t - x0 * std::sqrt(ab)) * (1.0 / std::sqrt(1.0 - ab));
  }
  if (t_prev == kCleanStep) return x0;

  const double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double direction = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  Tensor out = x0 * std::sqrt(ab_prev) + eps * direction;
  if (sigma > 0.0) out = out + randn(z_t.shape(), rng, sigma);
  return out;
}

std::vector<int> sampling_timesteps(Index train_steps, int steps) {
  if (steps < 1 || steps > train_steps) {
    throw std::invalid_argument("sampling steps must lie in [1, " + std::to_string(train_steps) + "]");
  }
  const Index stride = train_steps / steps;
  std::vector<int> out;
  for (int i = 0; i < steps; ++i) out.push_back(static_cast<int>(train_steps - 1 - i * stride));
  return out;
}

Tensor sample_loop(const DiffusionSchedule& s, const NoisePredictor& model, const Shape& shape,
                   const Tensor& cond, const SampleOptions& options, Rng& rng) {
  NoGradGuard no_grad;
  const auto steps = sampling_timesteps(s.steps, options.steps);
  const double eta = options.ddpm ? 1.0 : options.eta;
  Tensor z = randn(shape, rng);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int prev = i + 1 < steps.size() ? steps[i + 1] : kCleanStep;
    z = ddim_step(s, model, z, steps[i], prev, cond, eta, rng, options.clip_x0);
  }
  return z;
}

}  // namespace mmamba
