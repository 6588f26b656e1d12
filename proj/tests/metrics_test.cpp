#include "doctest.h"

#include "mmamba/metrics.hpp"
#include "mmamba/motion.hpp"

#include <random>

using namespace mmamba;

namespace {

GaussianStats stats(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return {std::move(mean), std::move(cov)}; }

}  // namespace

TEST_CASE("frechet distance closed forms") {
  auto a = stats(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  auto b = stats(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1));
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(frechet_distance(a, a) == doctest::Approx(0.0));

  // 1-D: (mu1 - mu2)^2 + (sigma1 - sigma2)^2.
  auto c = stats(Eigen::VectorXd::Constant(1, 0.5), Eigen::MatrixXd::Constant(1, 1, 9.0));
  CHECK(frechet_distance(a, c) == doctest::Approx(0.25 + 4.0).epsilon(1e-13));

  // Commuting diagonal covariances: sum of per-axis closed forms.
  Eigen::Vector3d s1(1.0, 4.0, 0.25), s2(2.0, 1.0, 1.0);
  auto d = stats(Eigen::Vector3d(1, 2, 3), s1.asDiagonal());
  auto e = stats(Eigen::Vector3d(0, 2, 5), s2.asDiagonal());
  double expect = 1.0 + 4.0;
  for (int i = 0; i < 3; ++i) expect += std::pow(std::sqrt(s1(i)) - std::sqrt(s2(i)), 2.0);
  CHECK(frechet_distance(d, e) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("frechet distance is symmetric and nonnegative on random stats") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd x(6, 6), y(6, 6), r(6, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n01(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = n01(rng);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = n01(rng);
    auto a = stats(x.col(0), x * x.transpose());
    auto b = stats(x.col(1), y * y.transpose());
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-10));
    // r r^T is rank deficient, exercising the clamp. Square roots of
    // eigenvalues at rounding level limit agreement to about sqrt(eps).
    auto c = stats(x.col(2), r * r.transpose());
    const double ac = frechet_distance(a, c), ca = frechet_distance(c, a);
    CHECK(ac >= 0.0);
    CHECK(ac == doctest::Approx(ca).epsilon(1e-6));
  }
}

TEST_CASE("frechet distance rejects mismatched shapes") {
  auto a = stats(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  auto b = stats(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  CHECK_THROWS_AS(frechet_distance(a, b), std::invalid_argument);
  auto c = stats(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 3));
  CHECK_THROWS_AS(frechet_distance(a, c), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_stats(Eigen::MatrixXd::Zero(1, 4)), std::invalid_argument);
}

TEST_CASE("gaussian stats are unbiased moments") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 3, 4, 5, 9;
  auto s = gaussian_stats(x);
  CHECK(s.mean(0) == doctest::Approx(3.0));
  CHECK(s.mean(1) == doctest::Approx(5.0));
  CHECK(s.cov(0, 0) == doctest::Approx(4.0));
  CHECK(s.cov(1, 1) == doctest::Approx(13.0));
  CHECK(s.cov(0, 1) == doctest::Approx(7.0));
}

TEST_CASE("real-vs-real distance is small on disjoint halves") {
  auto all = generate_dataset(800, 21);
  MotionDataset a, b;
  for (std::size_t i = 0; i < all.items.size(); ++i) (i < 400 ? a : b).items.push_back(all.items[i]);
  CHECK(frechet_distance(gaussian_stats(feature_matrix(a)), gaussian_stats(feature_matrix(b))) < 0.1);
}

TEST_CASE("linear probe separates shifted clusters") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd x(300, 4);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 300; ++i) {
    const int c = static_cast<int>(i % 3);
    y.push_back(c);
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = 0.3 * n01(rng) + (j == c ? 3.0 : 0.0);
  }
  auto probe = LinearProbe::fit(x, y, 3);
  CHECK(probe.accuracy(x, y) == 1.0);
  CHECK(probe.predict(Eigen::Vector4d(0, 0, 3, 0)) == 2);
  CHECK_THROWS_AS(LinearProbe::fit(x, {0, 1}, 3), std::invalid_argument);
}

TEST_CASE("linear probe ignores features that are constant in training") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd x(200, 3);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 200; ++i) {
    const int c = static_cast<int>(i % 2);
    y.push_back(c);
    x(i, 0) = 0.3 * n01(rng) + (c == 1 ? 2.0 : 0.0);
    x(i, 1) = 0.3 * n01(rng);
    x(i, 2) = 0.7;
  }
  auto probe = LinearProbe::fit(x, y, 2);
  // A small offset on the constant column must not override the informative one.
  CHECK(probe.predict(Eigen::Vector3d(2.0, 0.0, 0.71)) == 1);
  CHECK(probe.predict(Eigen::Vector3d(0.0, 0.0, 0.69)) == 0);
  CHECK(probe.predict(Eigen::Vector3d(2.0, 0.0, -5.0)) == 1);
}

TEST_CASE("diversity is the mean pairwise distance") {
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, 3, 4, 0, 8;
  CHECK(mean_pairwise_distance(x) == doctest::Approx((5.0 + 8.0 + 5.0) / 3.0));
  CHECK_THROWS_AS(mean_pairwise_distance(Eigen::MatrixXd::Zero(1, 2)), std::invalid_argument);
}
