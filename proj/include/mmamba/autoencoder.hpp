#pragma once

// Sequence autoencoder: variable-length motion <-> fixed latent tokens.

#include "mmamba/layers.hpp"
#include "mmamba/motion.hpp"
#include "mmamba/optim.hpp"

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace mmamba {

struct AutoencoderConfig {
  Index latent_tokens = 2;
  Index latent_dim = 256;
  Index hidden = 32;  // per-frame encoder width
  Index decoder_hidden = 128;
  Index heads = 4;
  Index basis = 64;    // Fourier functions over 0..3 Hz, cos/sin pairs
  double ridge = 1.0;  // regularizer of the clip-level least-squares fit
  Index max_frames = kMaxFrames;
};

struct Posterior {
  Tensor mu;      // [tokens, dim]
  Tensor logvar;  // [tokens, dim]
};

/// Encoder: ridge least-squares coefficients of the clip on a fixed Fourier
/// basis feed a linear map to the latent; attention pooling of per-frame
/// features with one learned query per latent token adds a residual.
/// Decoder: frame t reads row t of a learned query table [max_frames, basis]
/// and mixes it through a latent-dependent readout [basis, channels].
/// Residual heads start at zero.
struct Autoencoder {
  AutoencoderConfig config;
  Linear frame_in, frame_mid;
  Tensor queries;  // [tokens, hidden]
  Attention pool;
  Linear token_mid, mu_head, logvar_head;
  Linear coef_in;   // basis * channels -> tokens * dim
  Linear coef_out;  // tokens * dim -> basis * channels
  Linear ctx_in;
  Linear readout;  // decoder_hidden -> basis * channels
  Linear offset;   // decoder_hidden -> channels
  Tensor frame_queries;  // [max_frames, basis]

  static Autoencoder make(const AutoencoderConfig& config, const Init& init);

  /// Ridge coefficients [basis, channels] of normalized frames [L, channels].
  Tensor coefficients(const Tensor& frames) const;
  /// normalized frames [L, channels]
  Posterior encode(const Tensor& frames) const;
  /// z [tokens, dim] -> normalized frames [frames, channels]
  Tensor decode(const Tensor& z, Index frames) const;
};

/// Fixed Fourier basis [frames, count]: columns alternate cos and sin at
/// frequencies 3 Hz * (k / 2) / (count / 2).
Eigen::MatrixXd fourier_basis(Index frames, Index count);

/// Sets coef_in and coef_out to the whitened principal subspace of the
/// training coefficients, so training starts from the best linear code.
void initialize_from_data(Autoencoder& ae, const std::vector<Frames>& normalized);

/// Sinusoidal frame-position features [frames, 24].
Tensor frame_position_features(Index frames);

struct AutoencoderTrainOptions {
  int epochs = 10;
  Index batch = 16;
  double lr = 3e-5;  // fine-tuning rate on top of the data initialization
  double kl_weight = 1e-4;
  bool data_init = true;  // see initialize_from_data
  std::uint64_t seed = 0;
};

struct AutoencoderLoss {
  Tensor total;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// Reconstruction MSE plus kl_weight * KL(q || N(0, I)) for one normalized clip.
/// With sample = false the posterior mean is decoded.
AutoencoderLoss autoencoder_loss(const Autoencoder& ae, const Frames& normalized, double kl_weight,
                                 Rng* sample_rng);

/// Trains in place; returns the mean loss of every epoch. Throws on an empty dataset.
std::vector<double> train_autoencoder(Autoencoder& ae, ParamSet& params, const MotionDataset& data,
                                      const ChannelNorm& norm, const AutoencoderTrainOptions& options,
                                      const std::function<void(int, double)>& on_epoch = {});

/// Mean per-element reconstruction MSE of normalized clips using posterior means.
double reconstruction_mse(const Autoencoder& ae, const MotionDataset& data, const ChannelNorm& norm);

Tensor frames_tensor(const Frames& f);
Frames tensor_frames(const Tensor& t);

}  // namespace mmamba
