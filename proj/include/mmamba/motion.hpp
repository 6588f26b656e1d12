#pragma once

// Synthetic in-place motion clips on a five-joint toy skeleton.

#include "mmamba/ops.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mmamba {

inline constexpr Index kJoints = 5;      // root, hand_l, hand_r, foot_l, foot_r
inline constexpr Index kFeatures = 6;    // position xyz, velocity xyz
inline constexpr Index kChannels = kJoints * kFeatures;
inline constexpr int kClasses = 8;
inline constexpr double kFps = 20.0;
inline constexpr Index kMinFrames = 16;
inline constexpr Index kMaxFrames = 196;
inline constexpr Index kFeatureDim = 5 * kJoints;

enum class MotionClass : int { walk, run, jump, turn, wave, squat, kick, sidestep };

std::string_view class_name(int class_id);

using Frames = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// frames x (joint * 6 + {px,py,pz,vx,vy,vz}). Velocity is the per-frame
/// position difference with v_0 = 0.
struct MotionSequence {
  int label = 0;
  Frames data;
  Index frames() const { return data.rows(); }
};

/// Deterministic in (class_id, frames, seed).
MotionSequence generate_synthetic_motion(int class_id, Index frames, std::uint64_t seed);

/// Largest |v_t - (p_t - p_{t-1})| over the clip.
double velocity_residual(const MotionSequence& m);

/// Frames with velocities recomputed from positions.
void recompute_velocities(Frames& data);

/// Per joint: mean height, std of x, y, z and mean speed (units per second).
Eigen::VectorXd motion_features(const MotionSequence& m);

struct MotionDataset {
  std::vector<MotionSequence> items;
};

/// One motion_features row per clip.
Eigen::MatrixXd feature_matrix(const MotionDataset& ds);
std::vector<int> labels(const MotionDataset& ds);

/// Round-robin classes, lengths uniform in [min_frames, max_frames].
MotionDataset generate_dataset(Index count, std::uint64_t seed, Index min_frames = kMinFrames,
                               Index max_frames = kMaxFrames);

/// Binary layout, little-endian:
///   "MMDS" | u32 version=1 | u32 dtype=1 (f64) | u32 joints | u32 features | u64 count
///   per sequence: i32 label | u64 frames | f64[frames * joints * features]
void write_dataset(std::ostream& out, const MotionDataset& ds);
MotionDataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const MotionDataset& ds);
MotionDataset load_dataset(const std::string& path);

/// Per-channel normalization statistics over all frames.
struct ChannelNorm {
  Eigen::ArrayXd mean;
  Eigen::ArrayXd scale;

  static ChannelNorm fit(const MotionDataset& ds);
  Frames normalize(const Frames& raw) const;
  Frames denormalize(const Frames& normalized) const;
};

}  // namespace mmamba
