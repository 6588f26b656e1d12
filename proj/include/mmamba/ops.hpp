#pragma once

#include "mmamba/tensor.hpp"

#include <random>
#include <span>
#include <vector>

namespace mmamba {

using Rng = std::mt19937_64;

// Elementwise binary ops broadcast numpy-style: shapes are right-aligned and
// each extent must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
/// Throws NumericError on an exact zero entry.
Tensor reciprocal(const Tensor& x);
/// (e^x - 1) / x with the limit 1 at x = 0.
Tensor exprel(const Tensor& x);
/// scale * x + shift.
Tensor affine(const Tensor& x, double scale, double shift = 0.0);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double s) { return affine(x, s); }
inline Tensor operator*(double s, const Tensor& x) { return affine(x, s); }

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [g,m,k] x [g,k,n] -> [g,m,n]
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor narrow(const Tensor& x, std::size_t axis, Index start, Index length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor flip(const Tensor& x, std::size_t axis);

/// Causal depthwise convolution over the leading axis of x[T,B,E] with one
/// length-w kernel per channel: y[t] = sum_j kernel[e,j] * x[t-j].
Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernel);

/// Normalizes over the last axis (eps 1e-5 on the variance), then applies
/// gain and bias.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Gathers rows of table[K,D] -> [ids.size(), D].
Tensor index_rows(const Tensor& table, std::span<const int> ids);

/// x[..., in] * weight[in, out] (+ bias[out]).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);
Tensor uniform(Shape shape, Rng& rng, double low, double high);

}  // namespace mmamba
