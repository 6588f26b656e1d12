#include "mmamba/ops.hpp"

#include "mmamba/scalar_math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace mmamba {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct BroadcastPlan {
  Shape out;
  bool a_identity = true;
  bool b_identity = true;
  std::vector<Index> a_index;
  std::vector<Index> b_index;
};

std::vector<Index> broadcast_index(const Shape& src, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t pad = rank - src.size();
  std::vector<Index> stride(rank, 0);
  Index running = 1;
  for (std::size_t k = rank; k-- > pad;) {
    const Index extent = src[k - pad];
    stride[k] = extent == 1 ? 0 : running;
    running *= extent;
  }
  const Index n = numel(out);
  std::vector<Index> index(static_cast<std::size_t>(n));
  std::vector<Index> counter(rank, 0);
  Index offset = 0;
  for (Index i = 0; i < n; ++i) {
    index[static_cast<std::size_t>(i)] = offset;
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      offset += stride[k];
      if (counter[k] < out[k]) break;
      offset -= stride[k] * counter[k];
      counter[k] = 0;
    }
  }
  return index;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const Index ea = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
    const Index eb = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw std::invalid_argument("shapes " + shape_string(a) + " and " + shape_string(b) +
                                  " are not broadcastable");
    }
    plan.out[k] = std::max(ea, eb);
  }
  plan.a_identity = numel(a) == numel(plan.out);
  plan.b_identity = numel(b) == numel(plan.out);
  if (!plan.a_identity) plan.a_index = broadcast_index(a, plan.out);
  if (!plan.b_identity) plan.b_index = broadcast_index(b, plan.out);
  return plan;
}

Values gather(const Values& v, bool identity, const std::vector<Index>& index) {
  if (identity) return v;
  Values out(static_cast<Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) out(static_cast<Index>(i)) = v(index[i]);
  return out;
}

void scatter_add(Values& dst, const Values& src, bool identity, const std::vector<Index>& index) {
  if (identity) {
    dst += src;
    return;
  }
  for (std::size_t i = 0; i < index.size(); ++i) dst(index[i]) += src(static_cast<Index>(i));
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& x, Forward forward, Derivative derivative) {
  Values y = forward(x.values());
  Values xv = x.values();
  Values yv = y;
  return make_op_result(x.shape(), std::move(y), {x},
                        [xv = std::move(xv), yv = std::move(yv), derivative](
                            const Values& g, std::span<Values* const> gin) {
                          *gin[0] += g * derivative(xv, yv);
                        });
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + " expects rank " + std::to_string(rank) +
                                ", got " + shape_string(t.shape()));
  }
}

struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw std::invalid_argument("axis out of range");
  AxisSplit s;
  for (std::size_t k = 0; k < axis; ++k) s.outer *= shape[k];
  s.extent = shape[axis];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) s.inner *= shape[k];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  Values out = gather(a.values(), plan.a_identity, plan.a_index) +
               gather(b.values(), plan.b_identity, plan.b_index);
  Shape shape = plan.out;
  return make_op_result(std::move(shape), std::move(out), {a, b},
                        [plan = std::move(plan)](const Values& g, std::span<Values* const> gin) {
                          if (gin[0]) scatter_add(*gin[0], g, plan.a_identity, plan.a_index);
                          if (gin[1]) scatter_add(*gin[1], g, plan.b_identity, plan.b_index);
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  Values out = gather(a.values(), plan.a_identity, plan.a_index) -
               gather(b.values(), plan.b_identity, plan.b_index);
  Shape shape = plan.out;
  return make_op_result(std::move(shape), std::move(out), {a, b},
                        [plan = std::move(plan)](const Values& g, std::span<Values* const> gin) {
                          if (gin[0]) scatter_add(*gin[0], g, plan.a_identity, plan.a_index);
                          if (gin[1]) scatter_add(*gin[1], -g, plan.b_identity, plan.b_index);
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  Values av = gather(a.values(), plan.a_identity, plan.a_index);
  Values bv = gather(b.values(), plan.b_identity, plan.b_index);
  Values out = av * bv;
  Shape shape = plan.out;
  return make_op_result(
      std::move(shape), std::move(out), {a, b},
      [plan = std::move(plan), av = std::move(av), bv = std::move(bv)](
          const Values& g, std::span<Values* const> gin) {
        if (gin[0]) scatter_add(*gin[0], g * bv, plan.a_identity, plan.a_index);
        if (gin[1]) scatter_add(*gin[1], g * av, plan.b_identity, plan.b_index);
      });
}

Tensor neg(const Tensor& x) {
  return make_op_result(x.shape(), -x.values(), {x},
                        [](const Values& g, std::span<Values* const> gin) { *gin[0] -= g; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](const Values& v) -> Values { return v.exp(); },
      [](const Values&, const Values& y) -> Values { return y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](const Values& v) -> Values { return 1.0 / (1.0 + (-v).exp()); },
      [](const Values&, const Values& y) -> Values { return y * (1.0 - y); });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](const Values& v) -> Values { return v / (1.0 + (-v).exp()); },
      [](const Values& v, const Values&) -> Values {
        Values s = 1.0 / (1.0 + (-v).exp());
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x,
      [](const Values& v) -> Values {
        return v.unaryExpr(&mmamba::softplus<double>);
      },
      [](const Values& v, const Values&) -> Values { return 1.0 / (1.0 + (-v).exp()); });
}

Tensor reciprocal(const Tensor& x) {
  if ((x.values() == 0.0).any()) throw NumericError("reciprocal of exact zero");
  return unary(
      x, [](const Values& v) -> Values { return v.inverse(); },
      [](const Values&, const Values& y) -> Values { return -y.square(); });
}

Tensor exprel(const Tensor& x) {
  return unary(
      x, [](const Values& v) -> Values { return v.unaryExpr(&mmamba::exprel<double>); },
      [](const Values& v, const Values&) -> Values { return v.unaryExpr(&mmamba::exprel_derivative<double>); });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return make_op_result(x.shape(), scale * x.values() + shift, {x},
                        [scale](const Values& g, std::span<Values* const> gin) {
                          *gin[0] += scale * g;
                        });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul inner extents differ: " + shape_string(a.shape()) +
                                " x " + shape_string(b.shape()));
  }
  Values out(m * n);
  MatrixMap(out.data(), m, n).noalias() =
      ConstMatrixMap(a.values().data(), m, k) * ConstMatrixMap(b.values().data(), k, n);
  return make_op_result(
      {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](const Values& g, std::span<Values* const> gin) {
        ConstMatrixMap gm(g.data(), m, n);
        if (gin[0]) {
          MatrixMap(gin[0]->data(), m, k).noalias() +=
              gm * ConstMatrixMap(b.values().data(), k, n).transpose();
        }
        if (gin[1]) {
          MatrixMap(gin[1]->data(), k, n).noalias() +=
              ConstMatrixMap(a.values().data(), m, k).transpose() * gm;
        }
      });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const Index groups = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != groups || b.dim(1) != k) {
    throw std::invalid_argument("bmm shape mismatch: " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  Values out(groups * m * n);
  for (Index g = 0; g < groups; ++g) {
    MatrixMap(out.data() + g * m * n, m, n).noalias() =
        ConstMatrixMap(a.values().data() + g * m * k, m, k) *
        ConstMatrixMap(b.values().data() + g * k * n, k, n);
  }
  return make_op_result(
      {groups, m, n}, std::move(out), {a, b},
      [a, b, groups, m, k, n](const Values& grad, std::span<Values* const> gin) {
        for (Index g = 0; g < groups; ++g) {
          ConstMatrixMap gm(grad.data() + g * m * n, m, n);
          if (gin[0]) {
            MatrixMap(gin[0]->data() + g * m * k, m, k).noalias() +=
                gm * ConstMatrixMap(b.values().data() + g * k * n, k, n).transpose();
          }
          if (gin[1]) {
            MatrixMap(gin[1]->data() + g * k * n, k, n).noalias() +=
                ConstMatrixMap(a.values().data() + g * m * k, m, k).transpose() * gm;
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  return make_op_result({}, Values::Constant(1, x.values().sum()), {x},
                        [](const Values& g, std::span<Values* const> gin) {
                          gin[0]->array() += g(0);
                        });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  return make_op_result({}, Values::Constant(1, x.values().sum() / n), {x},
                        [n](const Values& g, std::span<Values* const> gin) {
                          gin[0]->array() += g(0) / n;
                        });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Index inferred = -1;
  Index known = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (shape[k] == -1) {
      if (inferred >= 0) throw std::invalid_argument("reshape allows one inferred extent");
      inferred = static_cast<Index>(k);
    } else {
      known *= shape[k];
    }
  }
  if (inferred >= 0 && known > 0) shape[static_cast<std::size_t>(inferred)] = x.size() / known;
  if (numel(shape) != x.size()) {
    throw std::invalid_argument("cannot reshape " + shape_string(x.shape()) + " to " +
                                shape_string(shape));
  }
  return make_op_result(std::move(shape), x.values(), {x},
                        [](const Values& g, std::span<Values* const> gin) { *gin[0] += g; });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) throw std::invalid_argument("permute needs one axis per dimension");
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw std::invalid_argument("permute axes must be a permutation");
    seen[a] = true;
  }
  std::vector<Index> in_stride(rank, 1);
  for (std::size_t k = rank; k-- > 1;) in_stride[k - 1] = in_stride[k] * in[k];
  Shape out_shape(rank);
  std::vector<Index> stride(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    out_shape[k] = in[axes[k]];
    stride[k] = in_stride[axes[k]];
  }
  const Index n = x.size();
  std::vector<Index> source(static_cast<std::size_t>(n));
  std::vector<Index> counter(rank, 0);
  Index offset = 0;
  for (Index i = 0; i < n; ++i) {
    source[static_cast<std::size_t>(i)] = offset;
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      offset += stride[k];
      if (counter[k] < out_shape[k]) break;
      offset -= stride[k] * counter[k];
      counter[k] = 0;
    }
  }
  Values out(n);
  const Values& v = x.values();
  for (Index i = 0; i < n; ++i) out(i) = v(source[static_cast<std::size_t>(i)]);
  return make_op_result(std::move(out_shape), std::move(out), {x},
                        [source = std::move(source)](const Values& g,
                                                     std::span<Values* const> gin) {
                          for (std::size_t i = 0; i < source.size(); ++i) {
                            (*gin[0])(source[i]) += g(static_cast<Index>(i));
                          }
                        });
}

Tensor narrow(const Tensor& x, std::size_t axis, Index start, Index length) {
  const AxisSplit s = split_axis(x.shape(), axis);
  if (start < 0 || length < 1 || start + length > s.extent) {
    throw std::invalid_argument("narrow range [" + std::to_string(start) + ", +" +
                                std::to_string(length) + ") outside axis of extent " +
                                std::to_string(s.extent));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  Values out(s.outer * length * s.inner);
  const Values& v = x.values();
  for (Index o = 0; o < s.outer; ++o) {
    out.segment(o * length * s.inner, length * s.inner) =
        v.segment((o * s.extent + start) * s.inner, length * s.inner);
  }
  return make_op_result(std::move(shape), std::move(out), {x},
                        [s, start, length](const Values& g, std::span<Values* const> gin) {
                          for (Index o = 0; o < s.outer; ++o) {
                            gin[0]->segment((o * s.extent + start) * s.inner,
                                            length * s.inner) +=
                                g.segment(o * length * s.inner, length * s.inner);
                          }
                        });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw std::invalid_argument("concat axis out of range");
  Index total = 0;
  std::vector<Index> extents;
  for (const Tensor& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) throw std::invalid_argument("concat rank mismatch");
    extents.push_back(probe[axis]);
    total += probe[axis];
    probe[axis] = shape[axis];
    if (probe != shape) throw std::invalid_argument("concat shapes differ off-axis");
  }
  const AxisSplit s = split_axis(shape, axis);
  shape[axis] = total;
  Values out(s.outer * total * s.inner);
  Index offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Values& v = parts[p].values();
    const Index block = extents[p] * s.inner;
    for (Index o = 0; o < s.outer; ++o) {
      out.segment((o * total + offset) * s.inner, block) = v.segment(o * block, block);
    }
    offset += extents[p];
  }
  return make_op_result(std::move(shape), std::move(out), parts,
                        [s, total, extents](const Values& g, std::span<Values* const> gin) {
                          Index off = 0;
                          for (std::size_t p = 0; p < extents.size(); ++p) {
                            const Index block = extents[p] * s.inner;
                            if (gin[p]) {
                              for (Index o = 0; o < s.outer; ++o) {
                                gin[p]->segment(o * block, block) +=
                                    g.segment((o * total + off) * s.inner, block);
                              }
                            }
                            off += extents[p];
                          }
                        });
}

Tensor flip(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Values out(x.size());
  const Values& v = x.values();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.extent; ++i) {
      out.segment((o * s.extent + i) * s.inner, s.inner) =
          v.segment((o * s.extent + s.extent - 1 - i) * s.inner, s.inner);
    }
  }
  return make_op_result(x.shape(), std::move(out), {x},
                        [s](const Values& g, std::span<Values* const> gin) {
                          for (Index o = 0; o < s.outer; ++o) {
                            for (Index i = 0; i < s.extent; ++i) {
                              gin[0]->segment((o * s.extent + s.extent - 1 - i) * s.inner,
                                              s.inner) +=
                                  g.segment((o * s.extent + i) * s.inner, s.inner);
                            }
                          }
                        });
}

Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 3, "conv1d_depthwise");
  require_rank(kernel, 2, "conv1d_depthwise kernel");
  const Index steps = x.dim(0), batch = x.dim(1), channels = x.dim(2);
  const Index width = kernel.dim(1);
  if (kernel.dim(0) != channels) {
    throw std::invalid_argument("conv1d kernel has " + std::to_string(kernel.dim(0)) +
                                " channels, input has " + std::to_string(channels));
  }
  const Index lane = batch * channels;
  const Values& xv = x.values();
  const Values& kv = kernel.values();
  Values out = Values::Zero(x.size());
  for (Index t = 0; t < steps; ++t) {
    for (Index j = 0; j < width && j <= t; ++j) {
      for (Index b = 0; b < batch; ++b) {
        out.segment(t * lane + b * channels, channels) +=
            kv(Eigen::seqN(j, channels, width)) *
            xv.segment((t - j) * lane + b * channels, channels);
      }
    }
  }
  return make_op_result(
      x.shape(), std::move(out), {x, kernel},
      [x, kernel, steps, batch, channels, width, lane](const Values& g,
                                                       std::span<Values* const> gin) {
        const Values& xv = x.values();
        const Values& kv = kernel.values();
        for (Index t = 0; t < steps; ++t) {
          for (Index j = 0; j < width && j <= t; ++j) {
            for (Index b = 0; b < batch; ++b) {
              const auto gseg = g.segment(t * lane + b * channels, channels);
              if (gin[0]) {
                gin[0]->segment((t - j) * lane + b * channels, channels) +=
                    kv(Eigen::seqN(j, channels, width)) * gseg;
              }
              if (gin[1]) {
                (*gin[1])(Eigen::seqN(j, channels, width)) +=
                    gseg * xv.segment((t - j) * lane + b * channels, channels);
              }
            }
          }
        }
      });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  if (x.rank() < 1) throw std::invalid_argument("layernorm needs at least one axis");
  const Index width = x.shape().back();
  if (gain.size() != width || bias.size() != width) {
    throw std::invalid_argument("layernorm gain/bias must have " + std::to_string(width) +
                                " entries");
  }
  constexpr double kEps = 1e-5;
  const Index rows = x.size() / width;
  ConstMatrixMap xm(x.values().data(), rows, width);
  Values normalized(x.size());
  Values inv_std(rows);
  MatrixMap nm(normalized.data(), rows, width);
  for (Index r = 0; r < rows; ++r) {
    const double mu = xm.row(r).mean();
    const double var = (xm.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + kEps);
    nm.row(r) = (xm.row(r).array() - mu) * inv_std(r);
  }
  Values out(x.size());
  MatrixMap om(out.data(), rows, width);
  const auto g_row = gain.values().matrix().transpose();
  const auto b_row = bias.values().matrix().transpose();
  for (Index r = 0; r < rows; ++r) {
    om.row(r) = (nm.row(r).array() * g_row.array() + b_row.array()).matrix();
  }
  return make_op_result(
      x.shape(), std::move(out), {x, gain, bias},
      [normalized = std::move(normalized), inv_std = std::move(inv_std), gain, rows, width](
          const Values& g, std::span<Values* const> gin) {
        ConstMatrixMap gm(g.data(), rows, width);
        ConstMatrixMap nm(normalized.data(), rows, width);
        const Eigen::RowVectorXd gain_row = gain.values().matrix().transpose();
        if (gin[1]) *gin[1] += (gm.array() * nm.array()).colwise().sum().transpose();
        if (gin[2]) *gin[2] += gm.array().colwise().sum().transpose();
        if (gin[0]) {
          MatrixMap gx(gin[0]->data(), rows, width);
          for (Index r = 0; r < rows; ++r) {
            const Eigen::RowVectorXd gh = gm.row(r).cwiseProduct(gain_row);
            const double mean_gh = gh.mean();
            const double mean_ghn = gh.cwiseProduct(nm.row(r)).mean();
            gx.row(r).array() +=
                inv_std(r) * (gh.array() - mean_gh - nm.row(r).array() * mean_ghn);
          }
        }
      });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1) throw std::invalid_argument("softmax needs at least one axis");
  const Index width = x.shape().back();
  const Index rows = x.size() / width;
  ConstMatrixMap xm(x.values().data(), rows, width);
  Values out(x.size());
  MatrixMap om(out.data(), rows, width);
  for (Index r = 0; r < rows; ++r) {
    om.row(r) = (xm.row(r).array() - xm.row(r).maxCoeff()).exp().matrix();
    om.row(r) /= om.row(r).sum();
  }
  Values y = out;
  return make_op_result(x.shape(), std::move(out), {x},
                        [y = std::move(y), rows, width](const Values& g,
                                                        std::span<Values* const> gin) {
                          ConstMatrixMap gm(g.data(), rows, width);
                          ConstMatrixMap ym(y.data(), rows, width);
                          MatrixMap gx(gin[0]->data(), rows, width);
                          for (Index r = 0; r < rows; ++r) {
                            const double dot = gm.row(r).dot(ym.row(r));
                            gx.row(r).array() += ym.row(r).array() * (gm.row(r).array() - dot);
                          }
                        });
}

Tensor index_rows(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "index_rows");
  const Index rows = table.dim(0), width = table.dim(1);
  if (ids.empty()) throw std::invalid_argument("index_rows needs at least one id");
  std::vector<int> idx(ids.begin(), ids.end());
  const Index count = static_cast<Index>(idx.size());
  Values out(count * width);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) {
      throw std::out_of_range("row id " + std::to_string(idx[i]) + " outside table of " +
                              std::to_string(rows) + " rows");
    }
    out.segment(static_cast<Index>(i) * width, width) =
        table.values().segment(idx[i] * width, width);
  }
  return make_op_result({count, width}, std::move(out), {table},
                        [idx = std::move(idx), width](const Values& g,
                                                      std::span<Values* const> gin) {
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            gin[0]->segment(idx[i] * width, width) +=
                                g.segment(static_cast<Index>(i) * width, width);
                          }
                        });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear weight");
  const Index in = weight.dim(0), out = weight.dim(1);
  if (x.rank() < 1 || x.shape().back() != in) {
    throw std::invalid_argument("linear expects trailing extent " + std::to_string(in) +
                                ", got " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = out;
  const bool flat = x.rank() == 2;
  Tensor y = matmul(flat ? x : reshape(x, {-1, in}), weight);
  if (bias.defined()) y = add(y, bias);
  return flat ? y : reshape(y, std::move(out_shape));
}

Tensor randn(Shape shape, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  const Index n = numel(shape);
  Values v(n);
  for (Index i = 0; i < n; ++i) v(i) = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor uniform(Shape shape, Rng& rng, double low, double high) {
  std::uniform_real_distribution<double> dist(low, high);
  const Index n = numel(shape);
  Values v(n);
  for (Index i = 0; i < n; ++i) v(i) = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace mmamba
