#include "doctest.h"

#include "mmamba/autoencoder.hpp"
#include "mmamba/metrics.hpp"
#include "mmamba/motion.hpp"

#include <array>
#include <cmath>
#include <sstream>

using namespace mmamba;

TEST_CASE("generator is deterministic and validates its class") {
  for (int c = 0; c < kClasses; ++c) {
    auto a = generate_synthetic_motion(c, 57, 99);
    auto b = generate_synthetic_motion(c, 57, 99);
    CHECK(a.label == c);
    CHECK(a.frames() == 57);
    CHECK((a.data == b.data).all());
    CHECK_FALSE((a.data == generate_synthetic_motion(c, 57, 100).data).all());
  }
  CHECK_THROWS_AS(generate_synthetic_motion(kClasses, 20, 0), std::out_of_range);
  CHECK_THROWS_AS(generate_synthetic_motion(-1, 20, 0), std::out_of_range);
  CHECK(class_name(2) == "jump");
}

TEST_CASE("velocities are first differences of positions") {
  for (int c = 0; c < kClasses; ++c) {
    auto m = generate_synthetic_motion(c, 196, 5 + c);
    CHECK(velocity_residual(m) < 1e-9);
    for (Index j = 0; j < kJoints; ++j) CHECK(m.data.block(0, j * kFeatures + 3, 1, 3).isZero());
  }
}

TEST_CASE("jump height is a concave parabola between contacts") {
  const int jump = static_cast<int>(MotionClass::jump);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto m = generate_synthetic_motion(jump, 196, seed);
    const double ground = m.data(0, 1);
    int flight_triples = 0;
    double second = 0.0;
    for (Index t = 1; t + 1 < m.frames(); ++t) {
      const double a = m.data(t - 1, 1), b = m.data(t, 1), c = m.data(t + 1, 1);
      // Contact frames sit at standing height, whatever else happens.
      if (std::min({a, b, c}) <= 0.9 + 1e-12) continue;
      const double d2 = a - 2.0 * b + c;
      CHECK(d2 < 0.0);
      // A parabola in time has one constant second difference.
      if (flight_triples++ == 0) second = d2;
      CHECK(d2 == doctest::Approx(second).epsilon(1e-9));
    }
    CHECK(flight_triples > 20);
    CHECK(ground >= 0.9);
    int contacts = 0;
    for (Index t = 0; t < m.frames(); ++t) contacts += m.data(t, 1) == 0.9 ? 1 : 0;
    CHECK(contacts > 10);
  }
}

TEST_CASE("dataset is class balanced, ranged and round-trips") {
  auto ds = generate_dataset(80, 3);
  std::array<int, kClasses> count{};
  for (const auto& m : ds.items) {
    ++count[static_cast<std::size_t>(m.label)];
    CHECK(m.frames() >= kMinFrames);
    CHECK(m.frames() <= kMaxFrames);
  }
  for (int c : count) CHECK(c == 10);

  std::stringstream buf;
  write_dataset(buf, ds);
  auto back = read_dataset(buf);
  REQUIRE(back.items.size() == ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    CHECK(back.items[i].label == ds.items[i].label);
    CHECK((back.items[i].data == ds.items[i].data).all());
  }

  // Header is little-endian with the documented field order.
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "MMDS");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == kJoints);
  CHECK(bytes[16] == kFeatures);
  CHECK(bytes[20] == 80);

  std::stringstream bad("MMDX");
  CHECK_THROWS(read_dataset(bad));
}

TEST_CASE("class signature is linearly separable") {
  auto train = generate_dataset(800, 1);
  auto test = generate_dataset(400, 2);
  auto probe = LinearProbe::fit(feature_matrix(train), labels(train), kClasses);
  CHECK(probe.accuracy(feature_matrix(test), labels(test)) >= 0.95);
}

TEST_CASE("channel normalization inverts") {
  auto ds = generate_dataset(24, 4);
  auto norm = ChannelNorm::fit(ds);
  const Frames& x = ds.items[3].data;
  CHECK(((norm.denormalize(norm.normalize(x)) - x).abs().maxCoeff()) < 1e-12);
  CHECK((norm.scale >= 1e-3).all());
}

TEST_CASE("autoencoder shapes and length guard") {
  ParamSet params;
  Rng rng(1);
  AutoencoderConfig cfg;
  cfg.latent_dim = 32;
  auto ae = Autoencoder::make(cfg, Init(params, rng));
  for (const auto& p : params.items()) CHECK(p.name.rfind("vae.", 0) == 0);
  auto m = generate_synthetic_motion(0, 40, 1);
  auto q = ae.encode(frames_tensor(m.data));
  CHECK(q.mu.shape() == Shape{2, 32});
  CHECK(q.logvar.shape() == Shape{2, 32});
  CHECK(ae.decode(q.mu, 77).shape() == Shape{77, kChannels});
  CHECK_THROWS_AS(ae.decode(q.mu, kMaxFrames + 1), std::invalid_argument);
  CHECK_THROWS_AS(ae.decode(q.mu, 0), std::invalid_argument);
  CHECK_THROWS_AS(ae.encode(Tensor::zeros({kMaxFrames + 1, kChannels})), std::invalid_argument);

  // Encoding at inference uses the posterior mean, so it is repeatable.
  auto again = ae.encode(frames_tensor(m.data));
  CHECK((again.mu.values() == q.mu.values()).all());
}

TEST_CASE("zero kl weight is the plain reconstruction objective") {
  ParamSet params;
  Rng rng(2);
  AutoencoderConfig cfg;
  cfg.latent_dim = 16;
  auto ae = Autoencoder::make(cfg, Init(params, rng));
  auto m = generate_synthetic_motion(4, 30, 2);
  auto l = autoencoder_loss(ae, m.data, 0.0, nullptr);
  CHECK(l.total.item() == l.reconstruction);
  auto y = ae.decode(ae.encode(frames_tensor(m.data)).mu, 30);
  const double mse = (tensor_frames(y) - m.data).square().mean();
  CHECK(l.reconstruction == doctest::Approx(mse).epsilon(1e-12));
  auto weighted = autoencoder_loss(ae, m.data, 0.5, nullptr);
  CHECK(weighted.total.item() == doctest::Approx(weighted.reconstruction + 0.5 * weighted.kl).epsilon(1e-12));
}

TEST_CASE("seeded autoencoder training reproduces its losses") {
  auto ds = generate_dataset(48, 7);
  auto norm = ChannelNorm::fit(ds);
  auto run = [&] {
    ParamSet params;
    Rng rng(5);
    AutoencoderConfig cfg;
    cfg.latent_dim = 8;
    auto ae = Autoencoder::make(cfg, Init(params, rng));
    AutoencoderTrainOptions opt;
    opt.epochs = 2;
    opt.seed = 9;
    return train_autoencoder(ae, params, ds, norm, opt);
  };
  CHECK(run() == run());

  ParamSet params;
  Rng rng(5);
  auto ae = Autoencoder::make(AutoencoderConfig{}, Init(params, rng));
  CHECK_THROWS_AS(train_autoencoder(ae, params, MotionDataset{}, norm, AutoencoderTrainOptions{}),
                  std::invalid_argument);
}

TEST_CASE("trained autoencoder reconstructs held-out clips") {
  auto train = generate_dataset(800, 1);
  auto test = generate_dataset(200, 2);
  auto norm = ChannelNorm::fit(train);
  ParamSet params;
  Rng rng(3);
  auto ae = Autoencoder::make(AutoencoderConfig{}, Init(params, rng));
  const double untrained = reconstruction_mse(ae, test, norm);

  AutoencoderTrainOptions opt;
  opt.epochs = 4;
  opt.seed = 1;
  auto losses = train_autoencoder(ae, params, train, norm, opt);
  int falling = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) falling += losses[i] < losses[i - 1] ? 1 : 0;
  CHECK(falling >= static_cast<int>(0.9 * static_cast<double>(losses.size() - 1)));

  const double trained = reconstruction_mse(ae, test, norm);
  MESSAGE("held-out MSE untrained " << untrained << " trained " << trained);
  CHECK(trained < untrained);
  CHECK(trained <= 0.05);

  // Latent usage and scale on training clips.
  NoGradGuard no_grad;
  const Index dims = ae.config.latent_tokens * ae.config.latent_dim;
  Eigen::MatrixXd codes(static_cast<Index>(train.items.size()), dims);
  for (std::size_t i = 0; i < train.items.size(); ++i) {
    auto q = ae.encode(frames_tensor(norm.normalize(train.items[i].data)));
    codes.row(static_cast<Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(q.mu.values().data(), dims);
  }
  const double rms = std::sqrt(codes.array().square().mean());
  CHECK(rms >= 0.5);
  CHECK(rms <= 2.0);
  const Eigen::RowVectorXd mean = codes.colwise().mean();
  const Eigen::RowVectorXd var = (codes.rowwise() - mean).array().square().colwise().mean();
  CHECK((var.array() > 1e-3).count() >= static_cast<Index>(0.9 * static_cast<double>(dims)));
}
