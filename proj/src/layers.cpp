#include "mmamba/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace mmamba {

Tensor ParamSet::add(std::string name, Tensor init, bool decay) {
  for (const auto& p : params_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  init.set_requires_grad(true);
  params_.push_back({std::move(name), init, decay});
  return init;
}

Index ParamSet::count() const { return count(""); }

Index ParamSet::count(const std::string& prefix) const {
  Index total = 0;
  for (const auto& p : params_) {
    if (p.name.compare(0, prefix.size(), prefix) == 0) total += p.tensor.size();
  }
  return total;
}

const Parameter& ParamSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named " + name);
}

Init::Init(ParamSet& set, Rng& rng, std::string prefix)
    : set_(&set), rng_(&rng), prefix_(std::move(prefix)) {}

Init Init::sub(const std::string& name) const { return Init(*set_, *rng_, full(name)); }

std::string Init::full(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

Tensor Init::weight(const std::string& name, Index in, Index out) const {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return set_->add(full(name), uniform({in, out}, *rng_, -bound, bound), true);
}

Tensor Init::zeros(const std::string& name, Shape shape, bool decay) const {
  return set_->add(full(name), Tensor::zeros(std::move(shape)), decay);
}

Tensor Init::constant(const std::string& name, Shape shape, double value) const {
  return set_->add(full(name), Tensor::full(std::move(shape), value), false);
}

Tensor Init::custom(const std::string& name, Tensor value, bool decay) const {
  return set_->add(full(name), std::move(value), decay);
}

Linear Linear::make(const Init& init, const std::string& name, Index in, Index out,
                    bool with_bias, bool zero) {
  const Init s = init.sub(name);
  Linear l;
  l.weight = zero ? s.zeros("weight", {in, out}, true) : s.weight("weight", in, out);
  if (with_bias) l.bias = s.zeros("bias", {out});
  return l;
}

LayerNorm LayerNorm::make(const Init& init, const std::string& name, Index width) {
  const Init s = init.sub(name);
  return {s.constant("gain", {width}, 1.0), s.zeros("bias", {width})};
}

Attention Attention::make(const Init& init, const std::string& name, Index channels,
                          Index heads) {
  if (heads < 1 || channels % heads != 0) {
    throw std::invalid_argument("attention heads must divide the channel count");
  }
  const Init s = init.sub(name);
  Attention a;
  a.q = Linear::make(s, "q", channels, channels);
  a.k = Linear::make(s, "k", channels, channels);
  a.v = Linear::make(s, "v", channels, channels);
  a.o = Linear::make(s, "o", channels, channels);
  a.heads = heads;
  return a;
}

namespace {

// [T,B,C] -> [B*H, T, C/H]
Tensor split_heads(const Tensor& x, Index heads) {
  const Index T = x.dim(0), B = x.dim(1), C = x.dim(2);
  Tensor h = permute(reshape(x, {T, B, heads, C / heads}), {1, 2, 0, 3});
  return reshape(h, {B * heads, T, C / heads});
}

// [B*H, T, C/H] -> [T,B,C]
Tensor merge_heads(const Tensor& x, Index batch, Index heads) {
  const Index T = x.dim(1), width = x.dim(2);
  Tensor h = permute(reshape(x, {batch, heads, T, width}), {2, 0, 1, 3});
  return reshape(h, {T, batch, heads * width});
}

}  // namespace

Tensor Attention::operator()(const Tensor& query, const Tensor& context, Tensor* weights) const {
  if (query.rank() != 3 || context.rank() != 3 || query.dim(1) != context.dim(1)) {
    throw std::invalid_argument("attention expects [T,B,C] query and context with equal B");
  }
  const Index batch = query.dim(1);
  const Index width = query.dim(2) / heads;
  Tensor qh = split_heads(q(query), heads);
  Tensor kh = split_heads(k(context), heads);
  Tensor vh = split_heads(v(context), heads);
  Tensor scores = bmm(qh, permute(kh, {0, 2, 1})) * (1.0 / std::sqrt(static_cast<double>(width)));
  Tensor probs = softmax(scores);
  if (weights) *weights = probs;
  return o(merge_heads(bmm(probs, vh), batch, heads));
}

FeedForward FeedForward::make(const Init& init, const std::string& name, Index channels,
                              Index hidden) {
  const Init s = init.sub(name);
  return {Linear::make(s, "up", channels, hidden), Linear::make(s, "down", hidden, channels)};
}

TransformerBlock TransformerBlock::make(const Init& init, const std::string& name,
                                        Index channels, Index heads) {
  const Init s = init.sub(name);
  TransformerBlock b;
  b.norm1 = LayerNorm::make(s, "norm1", channels);
  b.attn = Attention::make(s, "attn", channels, heads);
  b.norm2 = LayerNorm::make(s, "norm2", channels);
  b.ffn = FeedForward::make(s, "ffn", channels, 4 * channels);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  Tensor n = norm1(x);
  Tensor h = x + attn(n, n);
  return h + ffn(norm2(h));
}

}  // namespace mmamba
