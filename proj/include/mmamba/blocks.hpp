#pragma once

// Hierarchical temporal (HTM) and bidirectional spatial (BSM) Mamba blocks.
// Both map a [T,B,C] latent sequence to the same shape and add a residual.

#include "mmamba/layers.hpp"
#include "mmamba/ssm.hpp"

#include <vector>

namespace mmamba {

/// Odd scan counts per U-Net depth: encoders descend 2N-1, ..., 1 toward the
/// bottleneck and decoders mirror them on the way back up.
struct ScanSchedule {
  Index depth = 0;
  std::vector<int> encoder_scans;
  std::vector<int> decoder_scans;
};

ScanSchedule build_scan_schedule(Index depth);

/// Low-rank width of the step-size projection, ceil(inner / 16).
Index default_dt_rank(Index inner);

/// One conv + selective SSM parameter set operating on [T,B,E].
struct SelectiveBranch {
  Tensor conv_kernel;  // [E,w]
  Tensor conv_bias;    // [E]
  Linear x_proj;       // E -> R + 2N, no bias
  Linear dt_proj;      // R -> E, bias sets the initial step size
  Tensor A_log;        // [E,N], A = -exp(A_log)
  Tensor D;            // [E]

  static SelectiveBranch make(const Init& init, const std::string& name, Index inner,
                              Index state, Index conv_width);
  Index state() const { return A_log.dim(1); }
  Index dt_rank() const { return dt_proj.in(); }
  /// conv -> silu -> selective scan.
  Tensor operator()(const Tensor& x, InputDiscretization mode = InputDiscretization::euler) const;
};

struct MambaDims {
  Index channels = 64;
  Index inner = 64;
  Index state = 16;
  Index conv_width = 4;
};

struct HTMBlock {
  LayerNorm norm;   // over C, ahead of the projection
  Linear in_proj;   // C -> 2E, split into x-path and gate
  std::vector<SelectiveBranch> scans;
  Linear out_proj;  // E -> C

  static HTMBlock make(const Init& init, const std::string& name, const MambaDims& dims,
                       int scan_count, bool zero_out = false);
  int scan_count() const { return static_cast<int>(scans.size()); }
  Tensor operator()(const Tensor& z) const;
};

/// Scans run over the channel axis: [T,B,C] is rearranged to [C,B,T], so
/// tokens become features and the block is tied to its token count.
struct BSMBlock {
  LayerNorm norm;   // over T
  Linear in_proj;   // T -> 2E
  SelectiveBranch forward_branch;
  SelectiveBranch backward_branch;
  Linear out_proj;  // E -> T

  static BSMBlock make(const Init& init, const std::string& name, Index tokens, Index inner,
                       Index state, Index conv_width, bool zero_out = false);
  Tensor operator()(const Tensor& z) const;
};

/// Reverses axis 2 of a [T,B,C] tensor.
Tensor reverse_channels(const Tensor& z);

/// Closed-form parameter counts behind the per-layer comparison.
Index mamba_layer_param_count(Index channels, Index inner, Index state, Index conv_width);
Index transformer_block_param_count(Index channels);

}  // namespace mmamba
