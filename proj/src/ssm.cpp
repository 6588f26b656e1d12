#include "mmamba/ssm.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace mmamba {

namespace {

thread_local std::uint64_t g_selective_scans = 0;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

std::uint64_t selective_scan_count() { return g_selective_scans; }

LaneSequence<double> to_lanes(const Tensor& x) {
  require(x.rank() == 3, "expected a [T,B,E] sequence, got " + shape_string(x.shape()));
  return Eigen::Map<const LaneSequence<double>>(x.values().data(), x.dim(0), x.dim(1) * x.dim(2));
}

Tensor from_lanes(const LaneSequence<double>& lanes, Index batch, Index channels) {
  require(lanes.cols() == batch * channels, "lane count does not match batch * channels");
  Values v = Eigen::Map<const Values>(lanes.data(), lanes.size());
  return Tensor({lanes.rows(), batch, channels}, std::move(v));
}

DiscretizedTensors discretize(const Tensor& A, const Tensor& B, const Tensor& log_delta,
                              InputDiscretization mode) {
  require(A.rank() == 2 && B.shape() == A.shape(), "A and B must both be [E,N]");
  require(log_delta.size() == A.dim(0), "log_delta must have one entry per channel");
  const Tensor delta = reshape(exp(log_delta), {A.dim(0), 1});
  const Tensor dA = mul(A, delta);
  const Tensor dB = mul(B, delta);
  if (mode == InputDiscretization::zoh) return {exp(dA), mul(exprel(dA), dB)};
  return {exp(dA), dB};
}

Tensor linear_scan(const Tensor& A_bar, const Tensor& B_bar, const Tensor& C, const Tensor& D,
                   const Tensor& x) {
  require(x.rank() == 3, "linear_scan input must be [T,B,E]");
  const Index T = x.dim(0), batch = x.dim(1), E = x.dim(2);
  require(A_bar.rank() == 2 && A_bar.dim(0) == E, "A_bar must be [E,N]");
  const Index N = A_bar.dim(1);
  require(B_bar.shape() == A_bar.shape() && C.shape() == A_bar.shape(),
          "B_bar and C must match A_bar");
  require(D.size() == E, "D must have one entry per channel");

  const bool keep_history = Tape::active() != nullptr;
  const double* a = A_bar.values().data();
  const double* bb = B_bar.values().data();
  const double* c = C.values().data();
  const double* d = D.values().data();
  const double* xv = x.values().data();

  Values y(x.size());
  std::vector<double> state(static_cast<std::size_t>(batch * E * N), 0.0);
  auto history = std::make_shared<std::vector<double>>();
  if (keep_history) history->resize(static_cast<std::size_t>(T * batch * E * N));
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < batch; ++b) {
      for (Index e = 0; e < E; ++e) {
        const Index lane = (t * batch + b) * E + e;
        const double xt = xv[lane];
        double* h = state.data() + (b * E + e) * N;
        double acc = d[e] * xt;
        for (Index n = 0; n < N; ++n) {
          const Index p = e * N + n;
          h[n] = a[p] * h[n] + bb[p] * xt;
          acc += c[p] * h[n];
        }
        y(lane) = acc;
        if (keep_history) std::copy(h, h + N, history->data() + lane * N);
      }
    }
  }

  return make_op_result(
      x.shape(), std::move(y), {A_bar, B_bar, C, D, x},
      [history, A_bar, B_bar, C, D, x, T, batch, E, N](const Values& gy,
                                                       std::span<Values* const> gin) {
        const double* a = A_bar.values().data();
        const double* bb = B_bar.values().data();
        const double* c = C.values().data();
        const double* d = D.values().data();
        const double* xv = x.values().data();
        const double* hist = history->data();
        std::vector<double> gh(static_cast<std::size_t>(batch * E * N), 0.0);
        for (Index t = T - 1; t >= 0; --t) {
          for (Index b = 0; b < batch; ++b) {
            for (Index e = 0; e < E; ++e) {
              const Index lane = (t * batch + b) * E + e;
              const double g = gy(lane);
              const double xt = xv[lane];
              const double* h = hist + lane * N;
              const double* h_prev = t > 0 ? hist + ((t - 1) * batch + b) * E * N + e * N : nullptr;
              double* ghl = gh.data() + (b * E + e) * N;
              if (gin[3]) (*gin[3])(e) += g * xt;
              double gx = g * d[e];
              for (Index n = 0; n < N; ++n) {
                const Index p = e * N + n;
                if (gin[2]) (*gin[2])(p) += g * h[n];
                ghl[n] += g * c[p];
                gx += ghl[n] * bb[p];
                if (gin[1]) (*gin[1])(p) += ghl[n] * xt;
                if (gin[0] && h_prev) (*gin[0])(p) += ghl[n] * h_prev[n];
                ghl[n] *= a[p];
              }
              if (gin[4]) (*gin[4])(lane) += gx;
            }
          }
        }
      });
}

Tensor selective_scan(const Tensor& A, const Tensor& D, const SelectiveParams& params,
                      const Tensor& x, InputDiscretization mode) {
  require(x.rank() == 3, "selective_scan input must be [T,B,E]");
  const Index T = x.dim(0), batch = x.dim(1), E = x.dim(2);
  require(A.rank() == 2 && A.dim(0) == E, "A must be [E,N] with E = " + std::to_string(E));
  const Index N = A.dim(1);
  require(D.size() == E, "D must have one entry per channel");
  require(params.delta.shape() == x.shape(), "delta must match x " + shape_string(x.shape()));
  const Shape state_shape{T, batch, N};
  require(params.B.shape() == state_shape && params.C.shape() == state_shape,
          "selective B and C must be " + shape_string(state_shape));
  if ((params.delta.values() <= 0.0).any()) {
    throw std::domain_error("selective_scan requires delta > 0 everywhere, min " +
                            std::to_string(params.delta.values().minCoeff()));
  }
  ++g_selective_scans;

  const bool zoh = mode == InputDiscretization::zoh;
  const bool keep_history = Tape::active() != nullptr;
  const double* av = A.values().data();
  const double* dv = D.values().data();
  const double* bv = params.B.values().data();
  const double* cv = params.C.values().data();
  const double* deltav = params.delta.values().data();
  const double* xv = x.values().data();

  Values y(x.size());
  std::vector<double> state(static_cast<std::size_t>(batch * E * N), 0.0);
  // States and decays per step, kept only when a backward pass may follow.
  auto history = std::make_shared<std::vector<double>>();
  auto decays = std::make_shared<std::vector<double>>();
  if (keep_history) {
    history->resize(static_cast<std::size_t>(T * batch * E * N));
    decays->resize(history->size());
  }
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < batch; ++b) {
      const double* Bt = bv + (t * batch + b) * N;
      const double* Ct = cv + (t * batch + b) * N;
      for (Index e = 0; e < E; ++e) {
        const Index lane = (t * batch + b) * E + e;
        const double xt = xv[lane];
        const double dt = deltav[lane];
        double* h = state.data() + (b * E + e) * N;
        double acc = dv[e] * xt;
        double* dec = keep_history ? decays->data() + lane * N : nullptr;
        for (Index n = 0; n < N; ++n) {
          const double z = dt * av[e * N + n];
          const double coef = zoh ? dt * exprel(z) : dt;
          const double decay = std::exp(z);
          if (dec) dec[n] = decay;
          h[n] = decay * h[n] + coef * Bt[n] * xt;
          acc += Ct[n] * h[n];
        }
        y(lane) = acc;
        if (keep_history) std::copy(h, h + N, history->data() + lane * N);
      }
    }
  }

  return make_op_result(
      x.shape(), std::move(y), {A, D, params.B, params.C, params.delta, x},
      [history, decays, A, D, params, x, T, batch, E, N, zoh](const Values& gy,
                                                       std::span<Values* const> gin) {
        const double* av = A.values().data();
        const double* dv = D.values().data();
        const double* bv = params.B.values().data();
        const double* cv = params.C.values().data();
        const double* deltav = params.delta.values().data();
        const double* xv = x.values().data();
        const double* hist = history->data();
        const double* decs = decays->data();
        Values* gA = gin[0];
        Values* gD = gin[1];
        Values* gB = gin[2];
        Values* gC = gin[3];
        Values* gdelta = gin[4];
        Values* gx = gin[5];
        std::vector<double> gh(static_cast<std::size_t>(batch * E * N), 0.0);
        for (Index t = T - 1; t >= 0; --t) {
          for (Index b = 0; b < batch; ++b) {
            const Index row = (t * batch + b) * N;
            const double* Bt = bv + row;
            const double* Ct = cv + row;
            for (Index e = 0; e < E; ++e) {
              const Index lane = (t * batch + b) * E + e;
              const double g = gy(lane);
              const double xt = xv[lane];
              const double dt = deltav[lane];
              const double* h = hist + lane * N;
              const double* dec = decs + lane * N;
              const double* h_prev = t > 0 ? hist + ((t - 1) * batch + b) * E * N + e * N : nullptr;
              double* ghl = gh.data() + (b * E + e) * N;
              if (gD) (*gD)(e) += g * xt;
              double g_x = g * dv[e];
              double g_dt = 0.0;
              for (Index n = 0; n < N; ++n) {
                const Index p = e * N + n;
                const double a = av[p];
                const double z = dt * a;
                const double decay = dec[n];
                const double rel = zoh ? exprel(z) : 1.0;
                const double coef = dt * rel;
                if (gC) (*gC)(row + n) += g * h[n];
                ghl[n] += g * Ct[n];
                const double gh_n = ghl[n];
                g_x += gh_n * coef * Bt[n];
                if (gB) (*gB)(row + n) += gh_n * coef * xt;
                const double g_coef = gh_n * Bt[n] * xt;
                const double g_z = h_prev ? gh_n * h_prev[n] * decay : 0.0;
                // coef = dt * exprel(dt * a) under ZOH, dt under Euler.
                double dcoef_ddt = 1.0;
                double dcoef_da = 0.0;
                if (zoh) {
                  const double rel_prime = exprel_derivative(z);
                  dcoef_ddt = rel + z * rel_prime;
                  dcoef_da = dt * dt * rel_prime;
                }
                if (gA) (*gA)(p) += g_z * dt + g_coef * dcoef_da;
                g_dt += g_z * a + g_coef * dcoef_ddt;
                ghl[n] = gh_n * decay;
              }
              if (gx) (*gx)(lane) += g_x;
              if (gdelta) (*gdelta)(lane) += g_dt;
            }
          }
        }
      });
}

}  // namespace mmamba
