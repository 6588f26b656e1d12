#pragma once

// Gaussian diffusion over latent sequences with epsilon prediction.

#include "mmamba/ops.hpp"
#include "mmamba/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace mmamba {

struct DiffusionSchedule {
  Index steps = 0;
  Values beta;
  Values alpha;
  Values alpha_bar;  // cumulative product, accumulated in long double
};

/// Linear beta from beta_start to beta_end over `steps` entries.
DiffusionSchedule build_schedule(Index steps, double beta_start = 1e-4, double beta_end = 2e-2);

/// Target index meaning "fully denoised"; its cumulative alpha is exactly 1.
inline constexpr int kCleanStep = -1;

double alpha_bar_at(const DiffusionSchedule& s, int t);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, one timestep per batch entry of [T,B,C].
Tensor q_sample(const DiffusionSchedule& s, const Tensor& z0, std::span<const int> t,
                const Tensor& eps);

/// (z_t, t per batch entry, cond) -> epsilon estimate.
using NoisePredictor =
    std::function<Tensor(const Tensor& z_t, std::span<const int> t, const Tensor& cond)>;

/// Mean squared error between eps and the prediction at q_sample(z0, t, eps).
Tensor training_loss(const NoisePredictor& model, const DiffusionSchedule& s, const Tensor& z0,
                     std::span<const int> t, const Tensor& eps, const Tensor& cond);

/// Classifier-free blend eps_null + scale * (eps_cond - eps_null). Scale 1 returns
/// the conditional predictor unchanged.
NoisePredictor guided(NoisePredictor model, Tensor null_cond, double guidance);

/// x0 estimate (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
Tensor predict_x0(const DiffusionSchedule& s, const Tensor& z_t, int t, const Tensor& eps);

/// One DDIM move from t to t_prev (kCleanStep allowed); eta = 1 gives the
/// ancestral DDPM posterior over the same stride. clip_x0 > 0 clamps the x0
/// estimate elementwise to [-clip_x0, clip_x0] (not differentiable).
Tensor ddim_step(const DiffusionSchedule& s, const NoisePredictor& model, const Tensor& z_t, int t,
                 int t_prev, const Tensor& cond, double eta, Rng& rng, double clip_x0 = 0.0);

/// Evenly strided descending timesteps starting at steps - 1.
std::vector<int> sampling_timesteps(Index train_steps, int steps);

struct SampleOptions {
  int steps = 50;
  double eta = 0.0;
  bool ddpm = false;  // ancestral sampling, same as eta = 1
  double clip_x0 = 0.0;  // 0 disables
};

/// Starts from N(0, I) of `shape` and walks the strided timesteps down to clean.
Tensor sample_loop(const DiffusionSchedule& s, const NoisePredictor& model, const Shape& shape,
                   const Tensor& cond, const SampleOptions& options, Rng& rng);

}  // namespace mmamba
