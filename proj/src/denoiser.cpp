#include "mmamba/denoiser.hpp"

#include <cmath>
#include <stdexcept>

namespace mmamba {

Tensor sinusoidal_embedding(std::span<const int> t, Index dim, Index max_t) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep embedding width must be even");
  const Index half = dim / 2;
  const Index batch = static_cast<Index>(t.size());
  Values out(batch * dim);
  for (Index b = 0; b < batch; ++b) {
    if (t[b] < 0 || t[b] >= max_t) {
      throw std::out_of_range("timestep " + std::to_string(t[b]) + " outside [0, " +
                              std::to_string(max_t) + ")");
    }
    for (Index i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
      out(b * dim + i) = std::sin(t[b] * freq);
      out(b * dim + half + i) = std::cos(t[b] * freq);
    }
  }
  return Tensor({batch, dim}, std::move(out));
}

Mixer Mixer::make(const Init& init, const std::string& name, Index channels, Index heads) {
  const Init s = init.sub(name);
  Mixer m;
  m.norm_self = LayerNorm::make(s, "norm_self", channels);
  m.self_attn = Attention::make(s, "self_attn", channels, heads);
  m.norm_cross = LayerNorm::make(s, "norm_cross", channels);
  m.cross_attn = Attention::make(s, "cross_attn", channels, heads);
  m.norm_ffn = LayerNorm::make(s, "norm_ffn", channels);
  m.ffn = FeedForward::make(s, "ffn", channels, 4 * channels);
  return m;
}

Tensor Mixer::operator()(const Tensor& tokens, const Tensor& cond, Tensor* weights) const {
  Tensor n = norm_self(tokens);
  Tensor h = tokens + self_attn(n, n, weights);
  h = h + cross_attn(norm_cross(h), cond);
  return h + ffn(norm_ffn(h));
}

Denoiser Denoiser::make(const DenoiserConfig& config, const Init& init) {
  Denoiser d;
  d.config = config;
  d.schedule = build_scan_schedule(config.depth);
  const Index C = config.channels;
  d.time_in = Linear::make(init, "time_in", C, C);
  d.time_out = Linear::make(init, "time_out", C, C);
  d.cond_proj = Linear::make(init, "cond_proj", config.condition_dim, C);

  const MambaDims dims{C, config.expand * C, config.state, config.conv_width};
  const Index spatial = config.spatial_expand * config.tokens;
  auto layer = [&](const std::string& name, int scans) {
    const Init s = init.sub(name);
    return DenoiserLayer{HTMBlock::make(s, "htm", dims, scans),
                         BSMBlock::make(s, "bsm", config.tokens, spatial, config.state,
                                        config.conv_width)};
  };
  for (Index i = 0; i < config.depth; ++i) {
    d.encoders.push_back(layer("enc" + std::to_string(i), d.schedule.encoder_scans[i]));
  }
  d.mixer = Mixer::make(init, "mixer", C, config.heads);
  for (Index j = 0; j < config.depth; ++j) {
    d.fuse.push_back(Linear::make(init, "fuse" + std::to_string(j), 2 * C, C));
    d.decoders.push_back(layer("dec" + std::to_string(j), d.schedule.decoder_scans[j]));
  }
  d.head = Linear::make(init, "head", C, C, true, true);
  return d;
}

Tensor Denoiser::timestep_embed(std::span<const int> t) const {
  return time_out(silu(time_in(sinusoidal_embedding(t, config.channels, config.train_steps))));
}

Tensor Denoiser::operator()(const Tensor& z_t, std::span<const int> t, const Tensor& cond,
                            DenoiserTrace* trace) const {
  const Index T = config.tokens, C = config.channels;
  if (z_t.rank() != 3 || z_t.dim(0) != T || z_t.dim(2) != C) {
    throw std::invalid_argument("denoiser expects [" + std::to_string(T) + ",B," +
                                std::to_string(C) + "], got " + shape_string(z_t.shape()));
  }
  const Index B = z_t.dim(1);
  if (static_cast<Index>(t.size()) != B) throw std::invalid_argument("one timestep per batch entry");
  if (cond.shape() != Shape{B, config.condition_dim}) {
    throw std::invalid_argument("condition must be [B," + std::to_string(config.condition_dim) +
                                "], got " + shape_string(cond.shape()));
  }
  if (trace) *trace = {};
  auto run = [trace](const DenoiserLayer& layer, const Tensor& x,
                     std::vector<std::uint64_t>* counts) {
    const auto before = selective_scan_count();
    Tensor h = layer.htm(x);
    if (trace) counts->push_back(selective_scan_count() - before);
    return layer.bsm(h);
  };

  Tensor h = z_t + reshape(timestep_embed(t), {1, B, C});
  std::vector<Tensor> skips;
  for (const auto& enc : encoders) {
    h = run(enc, h, trace ? &trace->encoder_htm_scans : nullptr);
    skips.push_back(h);
  }
  h = mixer(h, reshape(cond_proj(cond), {1, B, C}));
  const std::size_t N = decoders.size();
  for (std::size_t j = 0; j < N; ++j) {
    h = fuse[j](concat({skips[N - 1 - j], h}, 2));
    h = run(decoders[j], h, trace ? &trace->decoder_htm_scans : nullptr);
  }
  return head(h);
}

}  // namespace mmamba
