#pragma once

// Run settings shared by every command: defaults, key=value files, echo.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmamba {

/// Bad flag, key or value; the CLI maps it to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;
  long depth = 5;           // encoder/decoder pairs
  long latent_dim = 256;    // d of the 2 x d latent
  long steps = 2000;        // denoiser optimizer steps
  long batch = 64;
  double lr = 1e-4;
  long epochs = 10;         // autoencoder epochs
  double vae_lr = 3e-5;
  double kl_weight = 1e-4;
  long train_clips = 800;
  long val_clips = 128;
  long val_every = 100;
  double cond_dropout = 0.1;
  double guidance = 2.0;
  long sample_steps = 50;
  double clip_x0 = 5.0;     // bound on the sampler's x0 estimate in unit-scale latents
  long train_timesteps = 1000;
  std::string out = "run";
  bool resume = false;
  long class_id = -1;       // -1 cycles through every class
  long count = 16;
  long frames = 0;          // 0 draws a length per sample
  long eval_clips = 400;
  long long_clips = 120;
  long bench_width = 32;
  long bench_min_t = 64;
  long bench_max_t = 4096;
  long bench_repeats = 5;

  /// Throws UsageError on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value" lines; blank lines and '#' comments are skipped.
  void apply_text(const std::string& text);
  void load_file(const std::string& path);
  /// Every key in a fixed order, one "key=value" per line. Feeding it back
  /// through apply_text reproduces this config exactly.
  std::string to_text() const;
  static std::vector<std::string> keys();
};

}  // namespace mmamba
