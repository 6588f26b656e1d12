#pragma once

// End-to-end train / sample / eval on synthetic motion.

#include "mmamba/autoencoder.hpp"
#include "mmamba/checkpoint.hpp"
#include "mmamba/condition.hpp"
#include "mmamba/config.hpp"
#include "mmamba/denoiser.hpp"
#include "mmamba/diffusion.hpp"
#include "mmamba/motion.hpp"
#include "mmamba/optim.hpp"

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace mmamba {

/// Autoencoder, condition table and denoiser with their shared registry.
/// Parameter names under "vae." belong to the autoencoder; the rest are
/// trained by the diffusion objective.
struct Model {
  RunConfig config;
  ParamSet params;
  Autoencoder vae;
  ConditionTable cond;
  Denoiser denoiser;
  DiffusionSchedule schedule;
  ChannelNorm norm;
  double latent_scale = 1.0;  // multiplies encoder means into unit RMS
  bool vae_trained = false;

  /// Deterministic in config.seed and the shape keys of config.
  static std::unique_ptr<Model> make(const RunConfig& config);

  /// Parameters updated by the diffusion objective.
  ParamSet diffusion_params() const;
  NoisePredictor predictor() const;
  /// Scaled latent [tokens, d] of one raw clip, posterior mean.
  Values encode(const MotionSequence& m) const;
  /// Scaled latent -> raw clip with velocities recomputed from positions.
  MotionSequence decode(std::span<const double> latent, Index frames, int label) const;
};

DenoiserConfig denoiser_config(const RunConfig& config);

/// Checkpoint of the model plus optional optimizer state and training RNG.
Checkpoint make_checkpoint(const Model& model, const AdamW* opt, const ParamSet* opt_params, const Rng* rng);
/// Copies weights, normalization and flags. Throws CheckpointError when the
/// manifest disagrees with the model's parameter names or shapes.
void restore_model(Model& model, const Checkpoint& ck);
void restore_optimizer(AdamW& opt, const ParamSet& opt_params, const Checkpoint& ck);

/// Dataset seeds derived from the run seed, one per purpose.
enum class DataRole : std::uint64_t { train = 1, validation, eval, eval_long, probe, sample, noise };
std::uint64_t role_seed(std::uint64_t seed, DataRole role);

/// Trains the autoencoder on `data` and fits normalization and latent scale.
void train_model_autoencoder(Model& model, const MotionDataset& data, std::ostream& log);

struct TrainReport {
  std::vector<double> losses;                         // every step of this run and earlier ones
  std::vector<std::pair<long, double>> validation;    // (step, loss), step 0 is the untrained model
  double vae_mse = 0.0;                               // held-out autoencoder MSE, normalized units
  long start_step = 0;
  long final_step = 0;
};

/// Writes <out>/checkpoint.mmck, <out>/loss.csv, <out>/val.csv and
/// <out>/config.txt; echoes the effective config to the log first.
TrainReport run_train(const RunConfig& config, std::ostream& log);

/// Classifier-free guided DDIM latents for the given classes, [tokens, B, d].
Tensor sample_latents(const Model& model, std::span<const int> classes, Rng& rng);
/// Generates one clip per (class, frames) pair, batched internally.
MotionDataset generate_motion(const Model& model, std::span<const int> classes, std::span<const Index> frames,
                              std::uint64_t seed);

/// Loads <out>/checkpoint.mmck into a model built from config.
std::unique_ptr<Model> load_trained(const RunConfig& config);

/// Writes <out>/samples.mmds and <out>/samples.csv; returns the samples.
MotionDataset run_sample(const RunConfig& config, std::ostream& log);

struct EvalReport {
  double fd_full = 0.0;
  double fd_long = 0.0;
  double probe_accuracy = 0.0;
  std::vector<double> class_accuracy;
  double diversity_generated = 0.0;
  double diversity_real = 0.0;
  long full_count = 0;
  long long_count = 0;
};

EvalReport evaluate(const Model& model, const RunConfig& config);
/// Writes <out>/metrics.csv.
EvalReport run_eval(const RunConfig& config, std::ostream& log);

}  // namespace mmamba
