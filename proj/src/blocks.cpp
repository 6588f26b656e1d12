#include "mmamba/blocks.hpp"

#include "mmamba/scalar_math.hpp"

#include <cmath>
#include <stdexcept>

namespace mmamba {

ScanSchedule build_scan_schedule(Index depth) {
  if (depth < 1) throw std::invalid_argument("scan schedule depth must be >= 1");
  ScanSchedule s;
  s.depth = depth;
  for (Index i = 0; i < depth; ++i) s.encoder_scans.push_back(static_cast<int>(2 * (depth - i) - 1));
  s.decoder_scans.assign(s.encoder_scans.rbegin(), s.encoder_scans.rend());
  return s;
}

Index default_dt_rank(Index inner) { return (inner + 15) / 16; }

SelectiveBranch SelectiveBranch::make(const Init& init, const std::string& name, Index inner,
                                      Index state, Index conv_width) {
  if (inner < 1 || state < 1 || conv_width < 1) {
    throw std::invalid_argument("selective branch needs positive inner, state and conv width");
  }
  const Init s = init.sub(name);
  const Index rank = default_dt_rank(inner);
  SelectiveBranch b;
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(conv_width));
  b.conv_kernel = s.custom("conv_kernel", uniform({inner, conv_width}, s.rng(), -conv_bound, conv_bound), false);
  b.conv_bias = s.zeros("conv_bias", {inner});
  b.x_proj = Linear::make(s, "x_proj", inner, rank + 2 * state, false);
  b.dt_proj = Linear::make(s, "dt_proj", rank, inner, true);

  // Initial step sizes log-uniform in [1e-3, 1e-1], stored through softplus.
  std::uniform_real_distribution<double> log_step(std::log(1e-3), std::log(1e-1));
  Values& bias = b.dt_proj.bias.mutable_values();
  for (Index e = 0; e < inner; ++e) bias(e) = softplus_inverse(std::exp(log_step(s.rng())));

  Values a_log(inner * state);
  for (Index e = 0; e < inner; ++e) {
    for (Index n = 0; n < state; ++n) a_log(e * state + n) = std::log(static_cast<double>(n + 1));
  }
  b.A_log = s.custom("A_log", Tensor({inner, state}, std::move(a_log)), false);
  b.D = s.constant("D", {inner}, 1.0);
  return b;
}

Tensor SelectiveBranch::operator()(const Tensor& x, InputDiscretization mode) const {
  const Index N = state(), R = dt_rank();
  Tensor xc = silu(conv1d_depthwise(x, conv_kernel) + conv_bias);
  Tensor proj = x_proj(xc);
  Tensor delta = softplus(dt_proj(narrow(proj, 2, 0, R)));
  SelectiveParams sel{narrow(proj, 2, R, N), narrow(proj, 2, R + N, N), delta};
  return selective_scan(-exp(A_log), D, sel, xc, mode);
}

HTMBlock HTMBlock::make(const Init& init, const std::string& name, const MambaDims& dims,
                        int scan_count, bool zero_out) {
  if (scan_count < 1 || scan_count % 2 == 0) {
    throw std::invalid_argument("HTM scan count must be a positive odd integer");
  }
  const Init s = init.sub(name);
  HTMBlock b;
  b.norm = LayerNorm::make(s, "norm", dims.channels);
  b.in_proj = Linear::make(s, "in_proj", dims.channels, 2 * dims.inner, false);
  for (int i = 0; i < scan_count; ++i) {
    b.scans.push_back(SelectiveBranch::make(s, "scan" + std::to_string(i), dims.inner,
                                            dims.state, dims.conv_width));
  }
  b.out_proj = Linear::make(s, "out_proj", dims.inner, dims.channels, false, zero_out);
  return b;
}

Tensor HTMBlock::operator()(const Tensor& z) const {
  if (z.rank() != 3 || z.dim(2) != in_proj.in()) {
    throw std::invalid_argument("HTM block expects [T,B," + std::to_string(in_proj.in()) +
                                "], got " + shape_string(z.shape()));
  }
  const Index E = out_proj.in();
  // Pre-norm keeps the gated product, quadratic in its input, at a fixed scale.
  Tensor xz = in_proj(norm(z));
  Tensor x = narrow(xz, 2, 0, E);
  Tensor gate = narrow(xz, 2, E, E);
  // Every scan reads the same x; the mean keeps the scale independent of k.
  Tensor acc = scans.front()(x);
  for (std::size_t i = 1; i < scans.size(); ++i) acc = acc + scans[i](x);
  if (scans.size() > 1) acc = acc * (1.0 / static_cast<double>(scans.size()));
  return z + out_proj(acc * silu(gate));
}

BSMBlock BSMBlock::make(const Init& init, const std::string& name, Index tokens, Index inner,
                        Index state, Index conv_width, bool zero_out) {
  const Init s = init.sub(name);
  BSMBlock b;
  b.norm = LayerNorm::make(s, "norm", tokens);
  b.in_proj = Linear::make(s, "in_proj", tokens, 2 * inner, false);
  b.forward_branch = SelectiveBranch::make(s, "forward", inner, state, conv_width);
  b.backward_branch = SelectiveBranch::make(s, "backward", inner, state, conv_width);
  b.out_proj = Linear::make(s, "out_proj", inner, tokens, false, zero_out);
  return b;
}

Tensor BSMBlock::operator()(const Tensor& z) const {
  if (z.rank() != 3 || z.dim(0) != in_proj.in()) {
    throw std::invalid_argument("BSM block expects " + std::to_string(in_proj.in()) +
                                " tokens, got " + shape_string(z.shape()));
  }
  const Index E = out_proj.in();
  Tensor xz = in_proj(norm(permute(z, {2, 1, 0})));
  Tensor x = narrow(xz, 2, 0, E);
  Tensor gate = silu(narrow(xz, 2, E, E));
  Tensor y_fwd = forward_branch(x);
  Tensor y_bwd = flip(backward_branch(flip(x, 0)), 0);
  Tensor y = y_fwd * gate + y_bwd * gate;
  return z + permute(out_proj(y), {2, 1, 0});
}

Tensor reverse_channels(const Tensor& z) { return flip(z, 2); }

Index mamba_layer_param_count(Index channels, Index inner, Index state, Index conv_width) {
  const Index rank = default_dt_rank(inner);
  return 2 * channels                    // input norm
         + channels * 2 * inner          // in_proj
         + inner * conv_width + inner    // conv kernel and bias
         + inner * (rank + 2 * state)    // x_proj
         + rank * inner + inner          // dt_proj
         + inner * state + inner         // A_log and D
         + inner * channels;             // out_proj
}

Index transformer_block_param_count(Index channels) {
  const Index d = channels;
  return 4 * d * d + 4 * d     // q, k, v, o with biases
         + 8 * d * d + 5 * d   // d -> 4d -> d with biases
         + 4 * d;              // two layer norms
}

}  // namespace mmamba
