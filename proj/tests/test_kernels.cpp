#include <gtest/gtest.h>

#include <vector>

#include "kgbo/kernels.hpp"
#include "kgbo/rng.hpp"

using namespace kgbo;

namespace {

Eigen::MatrixXd points(Rng& rng, Eigen::Index d, Eigen::Index n) {
  Eigen::MatrixXd x(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) x(i, j) = 3.0 * uniform01(rng);
  return x;
}

}  // namespace

TEST(Kernels, GramAndCrossAgree) {
  Rng rng(1);
  for (Eigen::Index n : {1, 7, 130}) {
    const auto a = points(rng, 4, n), b = points(rng, 4, n + 3);
    Eigen::MatrixXd s, o;
    kernels::serial::matern52_gram(a, 1.7, s);
    kernels::omp::matern52_gram(a, 1.7, o);
    EXPECT_EQ(s, o);
    EXPECT_EQ(s, s.transpose());
    kernels::serial::matern52_cross(a, b, 0.8, s);
    kernels::omp::matern52_cross(a, b, 0.8, o);
    EXPECT_EQ(s, o);
    ASSERT_EQ(s.rows(), n);
    ASSERT_EQ(s.cols(), n + 3);
    EXPECT_DOUBLE_EQ(s(0, 0), kernels::matern52((a.col(0) - b.col(0)).norm(), 0.8));
  }
}

TEST(Kernels, LengthscaleTracesAgree) {
  Rng rng(2);
  const auto a = points(rng, 3, 60);
  Eigen::MatrixXd w = Eigen::MatrixXd::Random(60, 60);
  w = (w + w.transpose()).eval();
  Eigen::VectorXd s, o;
  kernels::serial::lengthscale_traces(a, 1.1, w, s);
  kernels::omp::lengthscale_traces(a, 1.1, w, o);
  ASSERT_EQ(s.size(), 3);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(s(k), o(k), 1e-12 * std::max(1.0, std::abs(s(k))));
}

TEST(Kernels, AcquisitionScoresAgree) {
  Rng rng(3);
  const std::size_t n = 5000;
  std::vector<double> m(n), v(n), s(n), o(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = standard_normal(rng), v[i] = uniform01(rng);
  v[0] = 0.0;
  for (const auto& k : {AcquisitionKind::ei(), AcquisitionKind::upper_confidence(2.0), AcquisitionKind::log_ei()}) {
    kernels::serial::acquisition_scores(k, m, v, 0.5, s);
    kernels::omp::acquisition_scores(k, m, v, 0.5, o);
    EXPECT_EQ(s, o);
    EXPECT_EQ(s[3], acquisition_score(k, m[3], v[3], 0.5));
  }
}

TEST(Kernels, DotColumnsAgree) {
  Rng rng(4);
  const auto e = points(rng, 16, 3000);
  const Eigen::VectorXd q = points(rng, 16, 1).col(0);
  std::vector<double> s(3000), o(3000);
  kernels::serial::dot_columns(e, q, s);
  kernels::omp::dot_columns(e, q, o);
  EXPECT_EQ(s, o);
  EXPECT_NEAR(s[17], e.col(17).dot(q), 1e-12);
}
