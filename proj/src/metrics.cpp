#include "mmamba/metrics.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace mmamba {

namespace {

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

GaussianStats gaussian_stats(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw std::invalid_argument("gaussian stats need at least two samples");
  GaussianStats s;
  s.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::Index n = a.mean.size();
  if (a.cov.rows() != n || a.cov.cols() != n || b.mean.size() != n || b.cov.rows() != n || b.cov.cols() != n) {
    throw std::invalid_argument("frechet distance needs matching square covariances");
  }
  const Eigen::MatrixXd ra = sqrt_psd(a.cov);
  Eigen::MatrixXd inner = ra * b.cov * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  // Rounding can leave a tiny negative value for identical inputs.
  return std::max(d, 0.0);
}

LinearProbe LinearProbe::fit(const Eigen::MatrixXd& samples, const std::vector<int>& labels, int classes,
                             double ridge) {
  if (samples.rows() == 0 || static_cast<std::size_t>(samples.rows()) != labels.size()) {
    throw std::invalid_argument("probe needs one label per sample");
  }
  LinearProbe p;
  p.mean_ = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - p.mean_.transpose();
  const Eigen::VectorXd sd =
      (centered.colwise().squaredNorm() / static_cast<double>(samples.rows())).cwiseSqrt().transpose();
  // A feature that is constant in training carries no class signal; any
  // deviation from it would otherwise be blown up by a near-zero scale.
  p.inv_scale_ = Eigen::VectorXd::Zero(sd.size());
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (sd(j) > 1e-9 * std::max(1.0, std::abs(p.mean_(j)))) p.inv_scale_(j) = 1.0 / sd(j);
  }
  const Eigen::Index f = samples.cols();
  Eigen::MatrixXd x(samples.rows(), f + 1);
  x.leftCols(f) = centered * p.inv_scale_.asDiagonal();
  x.col(f).setOnes();
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(samples.rows(), classes, -1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("probe label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().head(f).array() += ridge * static_cast<double>(samples.rows());
  p.weights_ = gram.ldlt().solve(x.transpose() * y);
  return p;
}

int LinearProbe::predict(const Eigen::VectorXd& x) const {
  const Eigen::Index f = mean_.size();
  if (x.size() != f) throw std::invalid_argument("probe feature size mismatch");
  const Eigen::VectorXd z = (x - mean_).cwiseProduct(inv_scale_);
  const Eigen::VectorXd score = weights_.topRows(f).transpose() * z + weights_.row(f).transpose();
  Eigen::Index best = 0;
  score.maxCoeff(&best);
  return static_cast<int>(best);
}

double LinearProbe::accuracy(const Eigen::MatrixXd& samples, const std::vector<int>& labels) const {
  if (samples.rows() == 0 || static_cast<std::size_t>(samples.rows()) != labels.size()) {
    throw std::invalid_argument("probe needs one label per sample");
  }
  int hits = 0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    hits += predict(samples.row(i).transpose()) == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.rows());
}

double mean_pairwise_distance(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw std::invalid_argument("diversity needs at least two samples");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) total += (samples.row(i) - samples.row(j)).norm();
  }
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace mmamba
