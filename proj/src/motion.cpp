#include "mmamba/motion.hpp"

#include "mmamba/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mmamba {

namespace {

using Vec3 = Eigen::Vector3d;

constexpr double kTau = 2.0 * std::numbers::pi;

// Rest pose, root first.
const std::array<Vec3, kJoints> kRest = {Vec3(0.0, 0.9, 0.0), Vec3(-0.35, 0.9, 0.0),
                                         Vec3(0.35, 0.9, 0.0), Vec3(-0.12, 0.0, 0.0),
                                         Vec3(0.12, 0.0, 0.0)};

enum Joint { root, hand_l, hand_r, foot_l, foot_r };

struct Style {
  double amp;    // amplitude multiplier
  double freq;   // frequency multiplier
  double phase;  // radians
  double sign;   // +-1, direction choices
};

using Pose = std::array<Vec3, kJoints>;

Pose pose_at(MotionClass c, double s, const Style& st) {
  Pose p = kRest;
  const double a = st.amp;
  switch (c) {
    case MotionClass::walk: {
      const double w = kTau * 1.0 * st.freq * s + st.phase;
      p[foot_l].z() += 0.25 * a * std::sin(w);
      p[foot_r].z() -= 0.25 * a * std::sin(w);
      p[foot_l].y() += 0.08 * a * std::max(0.0, std::sin(w));
      p[foot_r].y() += 0.08 * a * std::max(0.0, -std::sin(w));
      p[hand_l].z() -= 0.15 * a * std::sin(w);
      p[hand_r].z() += 0.15 * a * std::sin(w);
      p[root].y() += 0.02 * a * std::cos(2.0 * w);
      break;
    }
    case MotionClass::run: {
      const double w = kTau * 1.6 * st.freq * s + st.phase;
      p[foot_l].z() += 0.4 * a * std::sin(w);
      p[foot_r].z() -= 0.4 * a * std::sin(w);
      p[foot_l].y() += 0.2 * a * std::max(0.0, std::sin(w));
      p[foot_r].y() += 0.2 * a * std::max(0.0, -std::sin(w));
      p[hand_l].z() -= 0.3 * a * std::sin(w);
      p[hand_r].z() += 0.3 * a * std::sin(w);
      p[hand_l].y() += 0.1;
      p[hand_r].y() += 0.1;
      p[root].y() += 0.06 * a * std::abs(std::cos(w));
      p[root].z() += 0.05;
      break;
    }
    case MotionClass::jump: {
      // Ballistic flight for 60% of each period, standing contact otherwise.
      const double period = 1.1 * st.freq;
      const double flight = 0.6 * period;
      double k = std::fmod(s + st.phase / kTau * period, period);
      double lift = 0.0;
      if (k < flight) {
        const double u = k / flight;
        lift = 0.4 * a * 4.0 * u * (1.0 - u);
      }
      for (auto& j : p) j.y() += lift;
      p[hand_l].y() += 0.5 * lift;
      p[hand_r].y() += 0.5 * lift;
      break;
    }
    case MotionClass::turn: {
      const double heading = st.phase + st.sign * 1.0 * st.freq * s;
      const double step = 0.04 * a * std::sin(kTau * 1.2 * s + st.phase);
      p[foot_l].y() += std::max(0.0, step);
      p[foot_r].y() += std::max(0.0, -step);
      const double c0 = std::cos(heading), s0 = std::sin(heading);
      for (Index j = 1; j < kJoints; ++j) {
        const Vec3 off = p[j] - p[root];
        p[j] = p[root] + Vec3(c0 * off.x() + s0 * off.z(), off.y(), -s0 * off.x() + c0 * off.z());
      }
      break;
    }
    case MotionClass::wave: {
      const double w = kTau * 1.5 * st.freq * s + st.phase;
      Joint hand = st.sign > 0 ? hand_r : hand_l;
      p[hand].y() = 1.5;
      p[hand].x() += st.sign * 0.15 * a * std::sin(w);
      p[hand].z() += 0.1;
      p[root].x() += 0.01 * a * std::sin(0.5 * w);
      break;
    }
    case MotionClass::squat: {
      const double w = kTau * 0.5 * st.freq * s + st.phase;
      const double depth = 0.3 * a * 0.5 * (1.0 - std::cos(w));
      p[root].y() -= depth;
      p[hand_l].y() -= depth;
      p[hand_r].y() -= depth;
      p[hand_l].z() += depth;
      p[hand_r].z() += depth;
      break;
    }
    case MotionClass::kick: {
      const double w = kTau * 0.7 * st.freq * s + st.phase;
      const double pulse = std::pow(std::max(0.0, std::sin(w)), 3.0);
      Joint foot = st.sign > 0 ? foot_r : foot_l;
      p[foot].z() += 0.5 * a * pulse;
      p[foot].y() += 0.4 * a * pulse;
      p[hand_l].z() -= 0.1 * a * pulse;
      p[hand_r].z() -= 0.1 * a * pulse;
      break;
    }
    case MotionClass::sidestep: {
      const double w = kTau * 0.6 * st.freq * s + st.phase;
      const double shift = 0.25 * a * std::sin(w);
      p[root].x() += shift;
      p[hand_l].x() += shift;
      p[hand_r].x() += shift;
      p[foot_l].x() += 0.25 * a * std::sin(w + 0.6);
      p[foot_r].x() += 0.25 * a * std::sin(w - 0.6);
      p[foot_l].y() += 0.05 * a * std::max(0.0, std::cos(w));
      p[foot_r].y() += 0.05 * a * std::max(0.0, -std::cos(w));
      break;
    }
  }
  return p;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view class_name(int class_id) {
  static constexpr std::array<std::string_view, kClasses> names = {
      "walk", "run", "jump", "turn", "wave", "squat", "kick", "sidestep"};
  if (class_id < 0 || class_id >= kClasses) throw std::out_of_range("unknown motion class");
  return names[static_cast<std::size_t>(class_id)];
}

void recompute_velocities(Frames& data) {
  for (Index j = 0; j < kJoints; ++j) {
    auto pos = data.middleCols(j * kFeatures, 3);
    auto vel = data.middleCols(j * kFeatures + 3, 3);
    vel.row(0).setZero();
    for (Index t = 1; t < data.rows(); ++t) vel.row(t) = pos.row(t) - pos.row(t - 1);
  }
}

MotionSequence generate_synthetic_motion(int class_id, Index frames, std::uint64_t seed) {
  if (class_id < 0 || class_id >= kClasses) {
    throw std::out_of_range("unknown motion class " + std::to_string(class_id));
  }
  if (frames < 1) throw std::invalid_argument("motion needs at least one frame");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(class_id), static_cast<std::uint32_t>(frames)};
  Rng rng(seq);
  std::uniform_real_distribution<double> amp(0.85, 1.15), freq(0.96, 1.04), phase(0.0, kTau);
  std::bernoulli_distribution coin(0.5);
  Style st{amp(rng), freq(rng), phase(rng), 1.0};
  st.sign = coin(rng) ? 1.0 : -1.0;

  MotionSequence m;
  m.label = class_id;
  m.data.resize(frames, kChannels);
  const auto c = static_cast<MotionClass>(class_id);
  for (Index t = 0; t < frames; ++t) {
    const Pose p = pose_at(c, static_cast<double>(t) / kFps, st);
    for (Index j = 0; j < kJoints; ++j) {
      m.data.block(t, j * kFeatures, 1, 3) = p[j].transpose().array();
    }
  }
  recompute_velocities(m.data);
  return m;
}

double velocity_residual(const MotionSequence& m) {
  Frames copy = m.data;
  recompute_velocities(copy);
  return (copy - m.data).abs().maxCoeff();
}

Eigen::VectorXd motion_features(const MotionSequence& m) {
  Eigen::VectorXd f(kFeatureDim);
  for (Index j = 0; j < kJoints; ++j) {
    const Eigen::ArrayXXd pos = m.data.middleCols(j * kFeatures, 3);
    const Eigen::ArrayXXd vel = m.data.middleCols(j * kFeatures + 3, 3);
    const Eigen::Array3d mu = pos.colwise().mean().transpose();
    const Eigen::Array3d sd =
        ((pos.rowwise() - mu.transpose()).square().colwise().mean().transpose()).sqrt();
    f(5 * j) = mu.y();
    f(5 * j + 1) = sd.x();
    f(5 * j + 2) = sd.y();
    f(5 * j + 3) = sd.z();
    f(5 * j + 4) = vel.square().rowwise().sum().sqrt().mean() * kFps;
  }
  return f;
}

Eigen::MatrixXd feature_matrix(const MotionDataset& ds) {
  Eigen::MatrixXd out(static_cast<Index>(ds.items.size()), kFeatureDim);
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    out.row(static_cast<Index>(i)) = motion_features(ds.items[i]).transpose();
  }
  return out;
}

std::vector<int> labels(const MotionDataset& ds) {
  std::vector<int> out;
  out.reserve(ds.items.size());
  for (const auto& m : ds.items) out.push_back(m.label);
  return out;
}

MotionDataset generate_dataset(Index count, std::uint64_t seed, Index min_frames,
                               Index max_frames) {
  if (min_frames < 1 || max_frames < min_frames) throw std::invalid_argument("bad frame range");
  MotionDataset ds;
  ds.items.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(i));
    const Index frames = min_frames + static_cast<Index>(s % static_cast<std::uint64_t>(max_frames - min_frames + 1));
    ds.items.push_back(generate_synthetic_motion(static_cast<int>(i % kClasses), frames, s));
  }
  return ds;
}

void write_dataset(std::ostream& out, const MotionDataset& ds) {
  out.write("MMDS", 4);
  io::write<std::uint32_t>(out, 1);
  io::write<std::uint32_t>(out, 1);
  io::write<std::uint32_t>(out, kJoints);
  io::write<std::uint32_t>(out, kFeatures);
  io::write<std::uint64_t>(out, ds.items.size());
  for (const auto& m : ds.items) {
    io::write<std::int32_t>(out, m.label);
    io::write<std::uint64_t>(out, static_cast<std::uint64_t>(m.frames()));
    io::write_doubles(out, m.data.data(), static_cast<std::size_t>(m.data.size()));
  }
}

MotionDataset read_dataset(std::istream& in) {
  io::expect_magic(in, "MMDS");
  if (io::read<std::uint32_t>(in) != 1) throw std::runtime_error("unsupported dataset version");
  if (io::read<std::uint32_t>(in) != 1) throw std::runtime_error("dataset dtype must be f64");
  if (io::read<std::uint32_t>(in) != kJoints || io::read<std::uint32_t>(in) != kFeatures) {
    throw std::runtime_error("dataset skeleton does not match 5 joints x 6 features");
  }
  const auto count = io::read<std::uint64_t>(in);
  MotionDataset ds;
  for (std::uint64_t i = 0; i < count; ++i) {
    MotionSequence m;
    m.label = io::read<std::int32_t>(in);
    const auto frames = io::read<std::uint64_t>(in);
    if (m.label < 0 || m.label >= kClasses || frames < 1 || frames > 100000) {
      throw std::runtime_error("corrupt dataset record " + std::to_string(i));
    }
    m.data.resize(static_cast<Index>(frames), kChannels);
    io::read_doubles(in, m.data.data(), static_cast<std::size_t>(m.data.size()));
    ds.items.push_back(std::move(m));
  }
  return ds;
}

void save_dataset(const std::string& path, const MotionDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_dataset(out, ds);
  if (!out) throw std::runtime_error("write failed for " + path);
}

MotionDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_dataset(in);
}

ChannelNorm ChannelNorm::fit(const MotionDataset& ds) {
  if (ds.items.empty()) throw std::invalid_argument("cannot fit normalization on an empty dataset");
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(kChannels), sq = Eigen::ArrayXd::Zero(kChannels);
  double n = 0.0;
  for (const auto& m : ds.items) {
    sum += m.data.colwise().sum().transpose();
    sq += m.data.square().colwise().sum().transpose();
    n += static_cast<double>(m.frames());
  }
  ChannelNorm norm;
  norm.mean = sum / n;
  // Channels that never move keep unit scale.
  norm.scale = (sq / n - norm.mean.square()).max(0.0).sqrt().max(1e-3);
  return norm;
}

Frames ChannelNorm::normalize(const Frames& raw) const {
  return (raw.rowwise() - mean.transpose()).rowwise() / scale.transpose();
}

Frames ChannelNorm::denormalize(const Frames& normalized) const {
  return (normalized.rowwise() * scale.transpose()).rowwise() + mean.transpose();
}

}  // namespace mmamba
