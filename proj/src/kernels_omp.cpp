#include <cmath>
#include <vector>

#include "kgbo/kernels.hpp"

namespace kgbo::kernels::omp {

namespace {
const double kSqrt5 = std::sqrt(5.0);
// Below this many pairwise evaluations the fork/join cost dominates.
constexpr Eigen::Index kMinParallelWork = 4096;
}  // namespace

void matern52_gram(const Eigen::MatrixXd& scaled, double signal_variance, Eigen::MatrixXd& out) {
  const Eigen::Index n = scaled.cols();
  out.resize(n, n);
#pragma omp parallel for schedule(dynamic, 16) if (n * n > kMinParallelWork)
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
#pragma omp parallel for schedule(static) if (a.cols() * b.cols() > kMinParallelWork)
  for (Eigen::Index j = 0; j < b.cols(); ++j)
    for (Eigen::Index i = 0; i < a.cols(); ++i) out(i, j) = matern52((a.col(i) - b.col(j)).norm(), signal_variance);
}

void lengthscale_traces(const Eigen::MatrixXd& scaled, double signal_variance, const Eigen::MatrixXd& weights,
                        Eigen::VectorXd& out) {
  const Eigen::Index d = scaled.rows();
  const Eigen::Index n = scaled.cols();
  // Per-row partial sums, reduced in row order so the result does not depend
  // on the thread count.
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(d, n);
#pragma omp parallel for schedule(dynamic, 8) if (n * n > kMinParallelWork)
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const Eigen::VectorXd delta = scaled.col(i) - scaled.col(j);
      const double s = kSqrt5 * delta.norm();
      const double common = weights(i, j) * signal_variance * (5.0 / 3.0) * (1.0 + s) * std::exp(-s);
      acc += common * delta.cwiseAbs2();
    }
    partial.col(i) = acc;
  }
  out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) out += partial.col(i);
}

void acquisition_scores(const AcquisitionKind& kind, std::span<const double> means, std::span<const double> variances,
                        double best, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(means.size());
#pragma omp parallel for schedule(static) if (n > kMinParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u] = acquisition_score(kind, means[u], variances[u], best);
  }
}

void dot_columns(const Eigen::MatrixXd& embeddings, const Eigen::VectorXd& query, std::span<double> out) {
  const Eigen::Index n = embeddings.cols();
#pragma omp parallel for schedule(static) if (n * embeddings.rows() > kMinParallelWork)
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = embeddings.col(i).dot(query);
}

}  // namespace kgbo::kernels::omp
