#include "doctest.h"
#include "gradcheck.hpp"

#include "mmamba/ssm.hpp"

#include <cmath>

using namespace mmamba;
using mmamba::testing::check_gradients;
using mmamba::testing::random_tensor;
using mmamba::testing::weighted_sum;

namespace {

ContinuousSSM<double> scalar_ssm(double a, double b, double delta) {
  ContinuousSSM<double> ssm;
  ssm.A = StateArray<double>::Constant(1, 1, a);
  ssm.B = StateArray<double>::Constant(1, 1, b);
  ssm.C = StateArray<double>::Constant(1, 1, 1.0);
  ssm.D = ChannelArray<double>::Zero(1);
  ssm.log_delta = ChannelArray<double>::Constant(1, std::log(delta));
  return ssm;
}

DiscreteSSM<double> scalar_discrete(double a_bar, double b_bar, double c, double d) {
  DiscreteSSM<double> s;
  s.A_bar = StateArray<double>::Constant(1, 1, a_bar);
  s.B_bar = StateArray<double>::Constant(1, 1, b_bar);
  s.C = StateArray<double>::Constant(1, 1, c);
  s.D = ChannelArray<double>::Constant(1, d);
  return s;
}

ContinuousSSM<double> random_stable(Rng& rng, Index E, Index N) {
  std::uniform_real_distribution<double> neg(-2.0, -0.05);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> log_step(std::log(1e-2), 0.0);
  ContinuousSSM<double> ssm;
  ssm.A = StateArray<double>::NullaryExpr(E, N, [&] { return neg(rng); });
  ssm.B = StateArray<double>::NullaryExpr(E, N, [&] { return sym(rng); });
  ssm.C = StateArray<double>::NullaryExpr(E, N, [&] { return sym(rng); });
  ssm.D = ChannelArray<double>::NullaryExpr(E, [&] { return sym(rng); });
  ssm.log_delta = ChannelArray<double>::NullaryExpr(E, [&] { return log_step(rng); });
  return ssm;
}

LaneSequence<double> random_lanes(Rng& rng, Index T, Index lanes) {
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  return LaneSequence<double>::NullaryExpr(T, lanes, [&] { return sym(rng); });
}

double relative_error(const LaneSequence<double>& a, const LaneSequence<double>& b) {
  return (a - b).abs().maxCoeff() / std::max(b.abs().maxCoeff(), 1e-300);
}

Tensor to_tensor(const StateArray<double>& a) {
  return Tensor({a.rows(), a.cols()}, Values(Eigen::Map<const Values>(a.data(), a.size())));
}

Tensor to_tensor(const ChannelArray<double>& a) { return Tensor({a.size()}, Values(a)); }

}  // namespace

TEST_CASE("discretize_zoh closed forms") {
  auto d0 = discretize_zoh(scalar_ssm(0.0, 1.0, 0.1));
  CHECK(d0.A_bar(0, 0) == 1.0);
  CHECK(d0.B_bar(0, 0) == doctest::Approx(0.1).epsilon(1e-15));

  auto d1 = discretize_zoh(scalar_ssm(-1.0, 1.0, std::log(2.0)));
  CHECK(d1.A_bar(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d1.B_bar(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  auto d2 = discretize_zoh(scalar_ssm(-1.0, 1.0, 50.0));
  CHECK(d2.A_bar(0, 0) < 1e-20);
  CHECK(d2.B_bar(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  // Near-zero guard returns the analytic limit delta * B.
  auto tiny = discretize_zoh(scalar_ssm(-1e-10, 2.0, 0.5));
  CHECK(tiny.B_bar(0, 0) == 1.0);
}

TEST_CASE("discretized A is inside the unit disc for stable systems") {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    auto d = discretize_zoh(random_stable(rng, 4, 4));
    CHECK((d.A_bar.abs() < 1.0).all());
  }
  auto init = ContinuousSSM<double>::real_diagonal(3, 4, 0.1);
  CHECK((init.A < 0.0).all());
  CHECK(init.A(2, 3) == -4.0);
}

TEST_CASE("scan_sequential hand unrolls") {
  LaneSequence<double> x(3, 1);
  x << 1, 0, 0;
  auto y = scan_sequential(scalar_discrete(0.5, 1.0, 1.0, 0.0), x);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(1, 0) == 0.5);
  CHECK(y(2, 0) == 0.25);

  Rng rng(8);
  auto ssm = discretize_zoh(random_stable(rng, 3, 2));
  CHECK((scan_sequential(ssm, LaneSequence<double>(LaneSequence<double>::Zero(5, 6))) == 0.0).all());

  ssm.A_bar.setZero();
  auto xr = random_lanes(rng, 6, 6);
  auto memoryless = scan_sequential(ssm, xr);
  for (Index t = 0; t < 6; ++t) {
    for (Index lane = 0; lane < 6; ++lane) {
      const Index e = lane % 3;
      const double expected = (ssm.C.row(e) * ssm.B_bar.row(e)).sum() * xr(t, lane) + ssm.D(e) * xr(t, lane);
      CHECK(memoryless(t, lane) == doctest::Approx(expected).epsilon(1e-14));
    }
  }
}

TEST_CASE("associative combine is associative") {
  Rng rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto element = [&] {
    return ScanElement<double>{StateArray<double>::NullaryExpr(3, 4, [&] { return u(rng); }),
                               StateArray<double>::NullaryExpr(3, 4, [&] { return u(rng); })};
  };
  for (int i = 0; i < 50; ++i) {
    auto p = element(), q = element(), r = element();
    auto left = combine(combine(p, q), r);
    auto right = combine(p, combine(q, r));
    CHECK((left.a - right.a).abs().maxCoeff() < 1e-12);
    CHECK((left.b - right.b).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("scan_associative matches scan_sequential") {
  Rng rng(21);
  std::uniform_int_distribution<Index> len(1, 256), small(1, 4);
  for (int i = 0; i < 30; ++i) {
    const Index E = small(rng), N = small(rng), B = small(rng), T = len(rng);
    auto d = discretize_zoh(random_stable(rng, E, N));
    auto x = random_lanes(rng, T, B * E);
    CHECK(relative_error(scan_associative(d, x), scan_sequential(d, x)) < 1e-10);
  }
  auto d = discretize_zoh(random_stable(rng, 2, 3));
  auto x = random_lanes(rng, 1, 4);
  CHECK((scan_associative(d, x) == scan_sequential(d, x)).all());
}

TEST_CASE("kernel_materialize") {
  auto k = kernel_materialize(scalar_discrete(0.5, 1.0, 1.0, 0.0), 3);
  CHECK(k(0, 0) == 1.0);
  CHECK(k(0, 1) == 0.5);
  CHECK(k(0, 2) == 0.25);
  CHECK((kernel_materialize(scalar_discrete(0.5, 1.0, 0.0, 0.0), 4) == 0.0).all());
  CHECK_THROWS_AS(kernel_materialize(scalar_discrete(0.5, 1.0, 1.0, 0.0), 0), std::invalid_argument);

  Rng rng(34);
  for (int i = 0; i < 10; ++i) {
    auto d = discretize_zoh(random_stable(rng, 3, 5));
    auto x = random_lanes(rng, 40, 6);
    auto conv = convolve_kernel(kernel_materialize(d, 40), d.D, x);
    CHECK(relative_error(conv, scan_sequential(d, x)) < 1e-10);
  }
}

TEST_CASE("three-way equivalence on random LTI systems") {
  Rng rng(55);
  std::uniform_int_distribution<Index> len(1, 512), width(1, 8);
  for (int i = 0; i < 12; ++i) {
    const Index E = width(rng), N = width(rng), T = len(rng);
    auto d = discretize_zoh(random_stable(rng, E, N));
    auto x = random_lanes(rng, T, E);
    auto seq = scan_sequential(d, x);
    CHECK(relative_error(scan_associative(d, x), seq) < 1e-8);
    CHECK(relative_error(convolve_kernel(kernel_materialize(d, T), d.D, x), seq) < 1e-8);
  }
}

TEST_CASE("scan outputs respect the stability bound") {
  Rng rng(89);
  for (int i = 0; i < 20; ++i) {
    auto d = discretize_zoh(random_stable(rng, 4, 6));
    auto x = random_lanes(rng, 200, 8);
    const double bound = (d.C.abs().maxCoeff() * d.B_bar.abs().maxCoeff() /
                              (1.0 - d.A_bar.abs().maxCoeff()) * d.states() +
                          d.D.abs().maxCoeff()) *
                         x.abs().maxCoeff();
    CHECK(scan_sequential(d, x).abs().maxCoeff() <= bound);
  }
}

TEST_CASE("selective_scan reduces to the LTI scan") {
  Rng rng(144);
  for (auto mode : {InputDiscretization::euler, InputDiscretization::zoh}) {
    const Index T = 17, B = 2, N = 3;
    ContinuousSSM<double> ssm = random_stable(rng, 1, N);
    ssm.log_delta(0) = std::log(0.3);
    auto d = discretize(ssm, mode);
    auto x = random_lanes(rng, T, B);

    Values b_rows(T * B * N), c_rows(T * B * N);
    for (Index r = 0; r < T * B; ++r) {
      b_rows.segment(r * N, N) = ssm.B.row(0).transpose();
      c_rows.segment(r * N, N) = ssm.C.row(0).transpose();
    }
    SelectiveParams sel{Tensor({T, B, N}, b_rows), Tensor({T, B, N}, c_rows),
                        Tensor::full({T, B, 1}, 0.3)};
    Tensor y = selective_scan(to_tensor(ssm.A), to_tensor(ssm.D), sel, from_lanes(x, B, 1), mode);
    CHECK(relative_error(to_lanes(y), scan_sequential(d, x)) < 1e-10);
  }
}

TEST_CASE("selective_scan hand instance and zero input") {
  const double ln2 = std::log(2.0);
  SelectiveParams sel{Tensor::full({2, 1, 1}, 1.0), Tensor::full({2, 1, 1}, 1.0),
                      Tensor::full({2, 1, 1}, ln2)};
  Tensor A({1, 1}, {-1.0});
  Tensor D({1}, {0.0});
  Tensor y = selective_scan(A, D, sel, Tensor::full({2, 1, 1}, 1.0));
  CHECK(y.values()(0) == doctest::Approx(ln2).epsilon(1e-14));
  CHECK(y.values()(1) == doctest::Approx(1.5 * ln2).epsilon(1e-14));
  CHECK(y.values()(1) == doctest::Approx(1.0397).epsilon(1e-4));

  Rng rng(3);
  SelectiveParams r{random_tensor({4, 2, 3}, rng), random_tensor({4, 2, 3}, rng),
                    random_tensor({4, 2, 5}, rng, 0.01, 1.0)};
  Tensor zero = selective_scan(random_tensor({5, 3}, rng, -2, -0.1), random_tensor({5}, rng), r,
                               Tensor::zeros({4, 2, 5}));
  CHECK((zero.values() == 0.0).all());

  r.delta.mutable_values()(3) = 0.0;
  CHECK_THROWS_AS(selective_scan(random_tensor({5, 3}, rng, -2, -0.1), random_tensor({5}, rng), r,
                                 Tensor::zeros({4, 2, 5})),
                  std::domain_error);
}

TEST_CASE("selective_scan counts executions") {
  const auto before = selective_scan_count();
  SelectiveParams sel{Tensor::full({1, 1, 1}, 1.0), Tensor::full({1, 1, 1}, 1.0),
                      Tensor::full({1, 1, 1}, 0.5)};
  selective_scan(Tensor({1, 1}, {-1.0}), Tensor({1}, {0.0}), sel, Tensor::full({1, 1, 1}, 1.0));
  selective_scan(Tensor({1, 1}, {-1.0}), Tensor({1}, {0.0}), sel, Tensor::full({1, 1, 1}, 1.0));
  CHECK(selective_scan_count() - before == 2);
}

TEST_CASE("LTI gradients wrt A, B, C, D, log_delta and x") {
  Rng rng(610);
  std::uniform_int_distribution<Index> len(1, 8), width(1, 4);
  for (int trial = 0; trial < 6; ++trial) {
    const Index T = len(rng), E = width(rng), N = width(rng), B = width(rng);
    const auto mode = trial % 2 == 0 ? InputDiscretization::zoh : InputDiscretization::euler;
    auto loss = [mode](const std::vector<Tensor>& in) {
      auto d = discretize(in[0], in[1], in[4], mode);
      return weighted_sum(linear_scan(d.A_bar, d.B_bar, in[2], in[3], in[5]), 99);
    };
    auto report = check_gradients(
        {random_tensor({E, N}, rng, -2.0, -0.1), random_tensor({E, N}, rng),
         random_tensor({E, N}, rng), random_tensor({E}, rng), random_tensor({E}, rng, -2.0, 0.5),
         random_tensor({T, B, E}, rng)},
        loss);
    INFO("worst input " << report.worst_input);
    CHECK(report.worst_relative < 1e-6);
  }
}

TEST_CASE("selective_scan gradients match finite differences") {
  Rng rng(987);
  std::uniform_int_distribution<Index> len(1, 8), width(1, 4);
  for (int trial = 0; trial < 8; ++trial) {
    const Index T = len(rng), E = width(rng), N = width(rng), B = width(rng);
    const auto mode = trial % 2 == 0 ? InputDiscretization::euler : InputDiscretization::zoh;
    auto loss = [mode](const std::vector<Tensor>& in) {
      SelectiveParams sel{in[2], in[3], in[4]};
      return weighted_sum(selective_scan(in[0], in[1], sel, in[5], mode), 7);
    };
    auto report = check_gradients(
        {random_tensor({E, N}, rng, -2.0, -0.1), random_tensor({E}, rng),
         random_tensor({T, B, N}, rng), random_tensor({T, B, N}, rng),
         random_tensor({T, B, E}, rng, 0.05, 1.5), random_tensor({T, B, E}, rng)},
        loss);
    INFO("worst input " << report.worst_input);
    CHECK(report.worst_relative < 1e-6);
  }
}
