#include <cmath>

#include "kgbo/kernels.hpp"

namespace kgbo::kernels {

namespace {
const double kSqrt5 = std::sqrt(5.0);
}

double matern52(double r, double signal_variance) {
  const double s = kSqrt5 * r;
  return signal_variance * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

namespace serial {

void matern52_gram(const Eigen::MatrixXd& scaled, double signal_variance, Eigen::MatrixXd& out) {
  const Eigen::Index n = scaled.cols();
  out.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out(j, j) = signal_variance;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double k = matern52((scaled.col(i) - scaled.col(j)).norm(), signal_variance);
      out(i, j) = k;
      out(j, i) = k;
    }
  }
}

void matern52_cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double signal_variance, Eigen::MatrixXd& out) {
  out.resize(a.cols(), b.cols());
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) out(i, j) = matern52((a.col(i) - b.col(j)).norm(), signal_variance);
}

void lengthscale_traces(const Eigen::MatrixXd& scaled, double signal_variance, const Eigen::MatrixXd& weights,
                        Eigen::VectorXd& out) {
  const Eigen::Index d = scaled.rows();
  const Eigen::Index n = scaled.cols();
  out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::VectorXd delta = scaled.col(i) - scaled.col(j);
      const double s = kSqrt5 * delta.norm();
      // dk/dlog(l_k) = sigma^2 (5/3) (1 + sqrt5 r) exp(-sqrt5 r) * (delta_k / l_k)^2
      const double common = weights(i, j) * signal_variance * (5.0 / 3.0) * (1.0 + s) * std::exp(-s);
      out += common * delta.cwiseAbs2();
    }
  }
}

void acquisition_scores(const AcquisitionKind& kind, std::span<const double> means, std::span<const double> variances,
                        double best, std::span<double> out) {
  for (std::size_t i = 0; i < means.size(); ++i) out[i] = acquisition_score(kind, means[i], variances[i], best);
}

void dot_columns(const Eigen::MatrixXd& embeddings, const Eigen::VectorXd& query, std::span<double> out) {
  for (Eigen::Index i = 0; i < embeddings.cols(); ++i) out[static_cast<std::size_t>(i)] = embeddings.col(i).dot(query);
}

}  // namespace serial
}  // namespace kgbo::kernels
