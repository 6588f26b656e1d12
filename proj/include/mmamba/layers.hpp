#pragma once

// Named parameter registry and the small dense layers built on it.

#include "mmamba/ops.hpp"
#include "mmamba/tensor.hpp"

#include <string>
#include <vector>

namespace mmamba {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool decay = false;  // weight decay applies to weight matrices only
};

/// Ordered collection of trainable tensors. Handles are shared, so layers and
/// the registry observe the same storage.
class ParamSet {
 public:
  Tensor add(std::string name, Tensor init, bool decay);

  const std::vector<Parameter>& items() const { return params_; }
  std::vector<Parameter>& items() { return params_; }
  Index count() const;
  /// Total scalar count of parameters whose name starts with prefix.
  Index count(const std::string& prefix) const;
  const Parameter& find(const std::string& name) const;

 private:
  std::vector<Parameter> params_;
};

/// Registers parameters under a dotted prefix and draws their initial values.
class Init {
 public:
  Init(ParamSet& set, Rng& rng, std::string prefix = "");

  Init sub(const std::string& name) const;
  Rng& rng() const { return *rng_; }

  /// [in,out] matrix, uniform in +-1/sqrt(in).
  Tensor weight(const std::string& name, Index in, Index out) const;
  Tensor zeros(const std::string& name, Shape shape, bool decay = false) const;
  Tensor constant(const std::string& name, Shape shape, double value) const;
  Tensor custom(const std::string& name, Tensor value, bool decay) const;

 private:
  std::string full(const std::string& name) const;

  ParamSet* set_;
  Rng* rng_;
  std::string prefix_;
};

struct Linear {
  Tensor weight;  // [in,out]
  Tensor bias;    // [out] or undefined

  static Linear make(const Init& init, const std::string& name, Index in, Index out,
                     bool with_bias = true, bool zero = false);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  Index in() const { return weight.dim(0); }
  Index out() const { return weight.dim(1); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm make(const Init& init, const std::string& name, Index width);
  Tensor operator()(const Tensor& x) const { return layernorm(x, gain, bias); }
};

/// Multi-head scaled dot-product attention on [T,B,C] sequences.
struct Attention {
  Linear q, k, v, o;
  Index heads = 1;

  static Attention make(const Init& init, const std::string& name, Index channels, Index heads);
  /// query [Tq,B,C], context [Tk,B,C] -> [Tq,B,C]. If weights is non-null it
  /// receives the attention probabilities as [B*heads, Tq, Tk].
  Tensor operator()(const Tensor& query, const Tensor& context, Tensor* weights = nullptr) const;
};

/// Two-layer perceptron with silu in between.
struct FeedForward {
  Linear up, down;

  static FeedForward make(const Init& init, const std::string& name, Index channels,
                          Index hidden);
  Tensor operator()(const Tensor& x) const { return down(silu(up(x))); }
};

/// Pre-norm transformer encoder block: self-attention and a 4x feed-forward,
/// each wrapped in a residual. Used as the parameter and speed baseline.
struct TransformerBlock {
  LayerNorm norm1, norm2;
  Attention attn;
  FeedForward ffn;

  static TransformerBlock make(const Init& init, const std::string& name, Index channels,
                               Index heads);
  Tensor operator()(const Tensor& x) const;
};

}  // namespace mmamba
