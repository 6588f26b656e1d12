#pragma once

// Toy-space evaluation metrics over motion feature vectors.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace mmamba {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
};

/// Rows are samples. Needs at least two rows.
GaussianStats gaussian_stats(const Eigen::MatrixXd& samples);

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)). The square root is taken as
/// (S1^(1/2) S2 S1^(1/2))^(1/2) through symmetric eigendecompositions with
/// negative eigenvalues clamped at 0. Throws on mismatched or non-square input.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// One-vs-rest ridge regression on standardized features. Features that are
/// constant in the training set are ignored.
class LinearProbe {
 public:
  static LinearProbe fit(const Eigen::MatrixXd& samples, const std::vector<int>& labels, int classes,
                         double ridge = 1e-2);
  int predict(const Eigen::VectorXd& x) const;
  double accuracy(const Eigen::MatrixXd& samples, const std::vector<int>& labels) const;

 private:
  Eigen::VectorXd mean_, inv_scale_;  // inv_scale_ is 0 for constant features
  Eigen::MatrixXd weights_;  // [features + 1, classes]
};

/// Mean Euclidean distance over all unordered pairs of rows.
double mean_pairwise_distance(const Eigen::MatrixXd& samples);

}  // namespace mmamba
