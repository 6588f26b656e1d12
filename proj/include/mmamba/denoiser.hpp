#pragma once

// Symmetric encoder / mixer / decoder noise predictor over latent tokens.

#include "mmamba/blocks.hpp"
#include "mmamba/layers.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mmamba {

struct DenoiserConfig {
  Index depth = 5;           // encoder/decoder pairs, 2 * depth + 1 layers in total
  Index tokens = 2;
  Index channels = 256;
  Index expand = 1;          // HTM inner width = expand * channels
  Index state = 16;
  Index conv_width = 4;
  Index spatial_expand = 4;  // BSM inner width = spatial_expand * tokens
  Index condition_dim = 64;
  Index heads = 4;
  Index train_steps = 1000;  // valid timesteps are [0, train_steps)
};

/// Sinusoidal features [B, dim]: first half sin(t * f_i), second half cos(t * f_i)
/// with f_i = 10000^(-i / half).
Tensor sinusoidal_embedding(std::span<const int> t, Index dim, Index max_t);

struct Mixer {
  LayerNorm norm_self, norm_cross, norm_ffn;
  Attention self_attn, cross_attn;
  FeedForward ffn;

  static Mixer make(const Init& init, const std::string& name, Index channels, Index heads);
  /// tokens [T,B,C], cond [1,B,C]. weights receives self-attention probabilities.
  Tensor operator()(const Tensor& tokens, const Tensor& cond, Tensor* weights = nullptr) const;
};

struct DenoiserLayer {
  HTMBlock htm;
  BSMBlock bsm;
  Tensor operator()(const Tensor& x) const { return bsm(htm(x)); }
};

/// Per-layer selective scan counts of the HTM blocks, recorded during forward.
struct DenoiserTrace {
  std::vector<std::uint64_t> encoder_htm_scans;
  std::vector<std::uint64_t> decoder_htm_scans;
};

struct Denoiser {
  DenoiserConfig config;
  ScanSchedule schedule;
  Linear time_in, time_out;
  Linear cond_proj;
  std::vector<DenoiserLayer> encoders;
  Mixer mixer;
  std::vector<Linear> fuse;  // concat(skip, h) -> C, one per decoder
  std::vector<DenoiserLayer> decoders;
  Linear head;  // zero-initialized; no norm ahead of it, so the output can track the scale of z_t

  static Denoiser make(const DenoiserConfig& config, const Init& init);

  /// Timestep features after the two-layer projection, [B, C].
  Tensor timestep_embed(std::span<const int> t) const;

  /// z_t [T,B,C], t per batch entry, cond [B, condition_dim] -> noise estimate [T,B,C].
  /// Decoder j runs after the mixer in order j = 0..N-1, fuses the skip from
  /// encoder N-1-j and uses decoder_scans[j], which equals that encoder's count.
  Tensor operator()(const Tensor& z_t, std::span<const int> t, const Tensor& cond,
                    DenoiserTrace* trace = nullptr) const;
};

}  // namespace mmamba
