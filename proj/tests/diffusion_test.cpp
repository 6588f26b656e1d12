#include "doctest.h"

#include "mmamba/diffusion.hpp"

#include <cmath>

using namespace mmamba;

namespace {

// Epsilon that a perfect model would return when every sample is `center`.
NoisePredictor delta_oracle(const DiffusionSchedule& s, Tensor center) {
  return [&s, center](const Tensor& z, std::span<const int> t, const Tensor&) {
    const double ab = alpha_bar_at(s, t[0]);
    return (z - center * std::sqrt(ab)) * (1.0 / std::sqrt(1.0 - ab));
  };
}

NoisePredictor zero_model() {
  return [](const Tensor& z, std::span<const int>, const Tensor&) { return Tensor::zeros(z.shape()); };
}

}  // namespace

TEST_CASE("linear schedule endpoints and monotonicity") {
  auto s = build_schedule(1000);
  CHECK(s.beta(0) == 1e-4);
  CHECK(s.beta(999) == doctest::Approx(2e-2).epsilon(1e-14));
  CHECK(s.alpha_bar(0) == doctest::Approx(0.9999).epsilon(1e-15));
  for (Index t = 1; t < 1000; ++t) {
    CHECK(s.beta(t) >= s.beta(t - 1));
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }
  CHECK(s.alpha_bar(999) > 0.0);
  CHECK(s.alpha_bar(999) < 1e-3);
  CHECK(alpha_bar_at(s, kCleanStep) == 1.0);
  CHECK_THROWS_AS(build_schedule(0), std::invalid_argument);
  CHECK_THROWS_AS(alpha_bar_at(s, 1000), std::out_of_range);
}

TEST_CASE("q_sample endpoint identities") {
  // A one-entry schedule with beta -> 0 has abar = 1; beta close to 1 drives abar toward 0.
  Rng rng(1);
  Tensor z0 = randn({2, 3, 4}, rng);
  Tensor eps = randn({2, 3, 4}, rng);
  const std::vector<int> clean(3, kCleanStep);
  CHECK((q_sample(build_schedule(10), z0, clean, eps).values() == z0.values()).all());

  DiffusionSchedule pure;
  pure.steps = 1;
  pure.beta = Values::Constant(1, 1.0);
  pure.alpha = Values::Zero(1);
  pure.alpha_bar = Values::Zero(1);
  const std::vector<int> zero(3, 0);
  CHECK((q_sample(pure, z0, zero, eps).values() == eps.values()).all());
}

TEST_CASE("q_sample preserves unit variance") {
  auto s = build_schedule(1000);
  Rng rng(2);
  const Index n = 100000;
  for (int t : {0, 250, 999}) {
    Tensor z0 = randn({1, n, 1}, rng);
    Tensor eps = randn({1, n, 1}, rng);
    const std::vector<int> steps(n, t);
    const Values z = q_sample(s, z0, steps, eps).values();
    const double m = z.mean();
    const double var = (z - m).square().sum() / static_cast<double>(n - 1);
    CHECK(std::abs(var - 1.0) < 0.02);
    // 3 sigma of the sample mean around 0.
    CHECK(std::abs(m) < 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("training loss") {
  auto s = build_schedule(1000);
  Rng rng(3);
  Tensor z0 = randn({2, 4000, 4}, rng);
  Tensor eps = randn({2, 4000, 4}, rng);
  std::vector<int> t(4000);
  std::uniform_int_distribution<int> pick(0, 999);
  for (int& v : t) v = pick(rng);
  const double zero_loss = training_loss(zero_model(), s, z0, t, eps, Tensor()).item();
  CHECK(std::abs(zero_loss - 1.0) < 0.05);
  auto echo = [&eps](const Tensor&, std::span<const int>, const Tensor&) { return eps; };
  CHECK(training_loss(echo, s, z0, t, eps, Tensor()).item() == 0.0);
}

TEST_CASE("ddim step recovers x0 under the oracle") {
  auto s = build_schedule(1000);
  Rng rng(4);
  Tensor center = randn({2, 3, 5}, rng);
  auto oracle = delta_oracle(s, center);
  for (int t : {999, 500, 20, 0}) {
    const std::vector<int> steps(3, t);
    Tensor z_t = q_sample(s, center, steps, randn({2, 3, 5}, rng));
    Tensor eps = oracle(z_t, steps, Tensor());
    CHECK((predict_x0(s, z_t, t, eps).values() - center.values()).abs().maxCoeff() < 1e-10);
    Tensor clean = ddim_step(s, oracle, z_t, t, kCleanStep, Tensor(), 0.0, rng);
    CHECK((clean.values() == predict_x0(s, z_t, t, eps).values()).all());
  }
  Tensor z = randn({2, 3, 5}, rng);
  CHECK_THROWS_AS(ddim_step(s, oracle, z, 10, 10, Tensor(), 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(ddim_step(s, oracle, z, 10, 5, Tensor(), 1.5, rng), std::invalid_argument);
}

TEST_CASE("sampling loop") {
  auto s = build_schedule(1000);
  CHECK(sampling_timesteps(1000, 1) == std::vector<int>{999});
  auto fifty = sampling_timesteps(1000, 50);
  CHECK(fifty.size() == 50);
  CHECK(fifty.front() == 999);
  CHECK(fifty.back() == 19);
  CHECK_THROWS_AS(sampling_timesteps(1000, 0), std::invalid_argument);

  Rng rng(5);
  Tensor center = randn({2, 4, 3}, rng);
  auto oracle = delta_oracle(s, center);
  for (bool ddpm : {false, true}) {
    Rng r(6);
    Tensor out = sample_loop(s, oracle, {2, 4, 3}, Tensor(), {50, 0.0, ddpm}, r);
    CHECK(out.shape() == Shape{2, 4, 3});
    CHECK((out.values() - center.values()).abs().maxCoeff() < 1e-6);
  }

  // One step is a single move from the last training step to clean.
  auto model = [](const Tensor& z, std::span<const int>, const Tensor&) { return z * 0.3; };
  Rng a(7), b(7);
  Tensor looped = sample_loop(s, model, {2, 2, 2}, Tensor(), {1, 0.0, false}, a);
  Tensor start = randn({2, 2, 2}, b);
  Tensor direct = ddim_step(s, model, start, 999, kCleanStep, Tensor(), 0.0, b);
  CHECK((looped.values() == direct.values()).all());

  Rng c(8), d(8);
  CHECK((sample_loop(s, model, {2, 2, 2}, Tensor(), {}, c).values() ==
         sample_loop(s, model, {2, 2, 2}, Tensor(), {}, d).values())
            .all());
}

TEST_CASE("guidance scale one is the conditional model") {
  auto model = [](const Tensor& z, std::span<const int>, const Tensor& cond) {
    return z * cond.item();
  };
  Rng rng(9);
  Tensor z = randn({2, 2, 2}, rng);
  const std::vector<int> t{3, 3};
  Tensor cond = Tensor::scalar(2.0);
  Tensor null = Tensor::scalar(0.5);
  CHECK((guided(model, null, 1.0)(z, t, cond).values() == model(z, t, cond).values()).all());
  // 0.5 z + 3 (2 z - 0.5 z) = 5 z
  Tensor g = guided(model, null, 3.0)(z, t, cond);
  CHECK((g.values() - 5.0 * z.values()).abs().maxCoeff() < 1e-12);
}
