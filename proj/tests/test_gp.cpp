#include <gtest/gtest.h>

#include <numbers>

#include "kgbo/acquisition.hpp"
#include "kgbo/error.hpp"
#include "kgbo/gp.hpp"
#include "kgbo/rng.hpp"
#include "oracles.hpp"

using namespace kgbo;

namespace {

GPHyperparams hyper(Eigen::Index d, double ls, double sv, double noise, double m0 = 0.0) {
  GPHyperparams h;
  h.lengthscales = Eigen::VectorXd::Constant(d, ls);
  h.signal_variance = sv;
  h.noise_variance = noise;
  h.constant_mean = m0;
  return h;
}

Eigen::MatrixXd random_inputs(Rng& rng, Eigen::Index d, Eigen::Index n) {
  Eigen::MatrixXd x(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) x(i, j) = uniform01(rng);
  return x;
}

}  // namespace

TEST(Kernel, Identities) {
  const Eigen::VectorXd ls = Eigen::VectorXd::Constant(2, 0.7);
  Eigen::VectorXd a(2), b(2);
  a << 0.1, 0.4;
  b << 0.9, -0.3;
  EXPECT_DOUBLE_EQ(matern52(a, a, ls, 2.5), 2.5);
  EXPECT_DOUBLE_EQ(matern52(a, b, ls, 1.0), matern52(b, a, ls, 1.0));
  EXPECT_NEAR(matern52(a, b, ls, 1.3), oracle::matern52(a, b, ls, 1.3), 1e-15);
  Eigen::VectorXd far = b * 1e3;
  EXPECT_LT(matern52(a, far, ls, 1.0), 1e-100);
  // r = 1: (1 + sqrt5 + 5/3) exp(-sqrt5)
  Eigen::VectorXd one = Eigen::VectorXd::Zero(1), zero = Eigen::VectorXd::Zero(1);
  one(0) = 1.0;
  EXPECT_NEAR(matern52(zero, one, Eigen::VectorXd::Ones(1), 1.0), 0.5239941088318203, 1e-15);
}

TEST(Gp, MatchesDenseOracle) {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(uniform_below(rng, 4));
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(uniform_below(rng, 8));
    const auto x = random_inputs(rng, d, n);
    Eigen::VectorXd y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = standard_normal(rng) * 3.0, w(i) = 0.2 + 0.8 * uniform01(rng);
    auto h = hyper(d, 0.3 + uniform01(rng), 0.5 + uniform01(rng), 1e-3 + 0.1 * uniform01(rng), uniform01(rng));
    for (Eigen::Index i = 0; i < d; ++i) h.lengthscales(i) *= 0.5 + uniform01(rng);
    const GPModel gp(x, y, w, h);
    const auto q = random_inputs(rng, d, 1).col(0).eval();
    const auto p = gp.predict(q);
    const auto o = oracle::dense_posterior(x, y, w, h.lengthscales, h.signal_variance, h.noise_variance,
                                           h.constant_mean, q);
    EXPECT_NEAR(p.mean, o.mean, 1e-9 * std::max(1.0, std::abs(o.mean)));
    EXPECT_NEAR(p.latent_variance, std::max(o.latent_variance, 0.0), 1e-9 * std::max(1.0, o.latent_variance));
    EXPECT_DOUBLE_EQ(p.variance, p.latent_variance + h.noise_variance);
  }
}

TEST(Gp, LmlGradientMatchesFiniteDifferences) {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 2, n = 10;
    const auto x = random_inputs(rng, d, n);
    Eigen::VectorXd y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(5 * x(0, i)) + x(1, i), w(i) = 0.3 + 0.7 * uniform01(rng);
    auto h = hyper(d, 0.4, 1.2, 0.05, 0.1);
    h.lengthscales(1) = 0.9;
    Eigen::VectorXd g;
    log_marginal_likelihood(x, y, w, h, &g);
    ASSERT_EQ(g.size(), d + 3);
    auto at = [&](Eigen::Index k, double eps) {
      GPHyperparams t = h;
      if (k < d) t.lengthscales(k) *= std::exp(eps);
      else if (k == d) t.signal_variance *= std::exp(eps);
      else if (k == d + 1) t.noise_variance *= std::exp(eps);
      else t.constant_mean += eps;
      return log_marginal_likelihood(x, y, w, t);
    };
    for (Eigen::Index k = 0; k < d + 3; ++k) {
      const double fd = (at(k, 1e-5) - at(k, -1e-5)) / 2e-5;
      EXPECT_NEAR(g(k), fd, 1e-4 * std::max(1e-2, std::abs(fd))) << "component " << k;
    }
  }
}

TEST(Gp, ConstantTargetsPredictTheConstant) {
  Rng rng(3);
  const auto x = random_inputs(rng, 3, 12);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(12, 42.0);
  const GPModel gp = fit_gp(x, y, Eigen::VectorXd::Ones(12));
  for (int i = 0; i < 10; ++i) {
    const auto p = gp.predict(random_inputs(rng, 3, 1).col(0));
    EXPECT_NEAR(p.mean, 42.0, 1e-6);
    EXPECT_TRUE(std::isfinite(p.variance));
  }
}

TEST(Gp, FittedModelInterpolatesSmoothFunction) {
  const Eigen::Index n = 8;
  Eigen::MatrixXd x(1, n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) x(0, i) = static_cast<double>(i) / (n - 1), y(i) = std::sin(2 * x(0, i));
  const GPModel gp = fit_gp(x, y, Eigen::VectorXd::Ones(n));
  for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(gp.predict(x.col(i)).mean, y(i), 1e-2);
  Eigen::VectorXd mid(1);
  mid << 0.5 / (n - 1);
  EXPECT_NEAR(gp.predict(mid).mean, std::sin(2 * mid(0)), 5e-2);
  EXPECT_GE(gp.diagnostics().starts, 1);
  EXPECT_EQ(gp.diagnostics().fit_points, static_cast<std::size_t>(n));
}

TEST(Gp, NoiseToZeroInterpolatesExactly) {
  Rng rng(11);
  const auto x = random_inputs(rng, 2, 6);
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) y(i) = standard_normal(rng);
  const GPModel gp(x, y, Eigen::VectorXd::Ones(6), hyper(2, 0.5, 1.0, 1e-12));
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(gp.predict(x.col(i)).mean, y(i), 1e-6);
    EXPECT_NEAR(gp.predict(x.col(i)).latent_variance, 0.0, 1e-6);
  }
}

TEST(Gp, FarQueriesRevertToPrior) {
  Rng rng(12);
  const auto x = random_inputs(rng, 2, 5);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) y(i) = 10.0 + standard_normal(rng);
  const GPModel gp(x, y, Eigen::VectorXd::Ones(5), hyper(2, 0.2, 4.0, 0.01, 3.0));
  Eigen::VectorXd far(2);
  far << 500.0, -500.0;
  const auto p = gp.predict(far);
  EXPECT_NEAR(p.mean, 3.0, 1e-9);
  EXPECT_NEAR(p.latent_variance, 4.0, 1e-9);
}

TEST(Gp, LowerWeightMeansLessInfluence) {
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 10.0;
  Eigen::VectorXd q(1);
  q << 1.0;
  double prev = INFINITY;
  for (double w : {1.0, 0.5, 0.1, 0.01}) {
    Eigen::VectorXd wt(2);
    wt << 1.0, w;
    const double m = GPModel(x, y, wt, hyper(1, 0.3, 1.0, 0.5)).predict(q).mean;
    EXPECT_LT(m, prev);
    prev = m;
  }
  Eigen::VectorXd bad(2);
  bad << 1.0, 0.0;
  EXPECT_THROW(GPModel(x, y, bad, hyper(1, 0.3, 1.0, 0.5)), ValueError);
  bad << 1.0, 1.5;
  EXPECT_THROW(GPModel(x, y, bad, hyper(1, 0.3, 1.0, 0.5)), ValueError);
}

TEST(Gp, DuplicatePointsUseJitter) {
  Eigen::MatrixXd x(1, 3);
  x << 0.5, 0.5, 0.5;
  Eigen::VectorXd y(3);
  y << 1.0, 1.0, 1.0;
  const GPModel gp(x, y, Eigen::VectorXd::Ones(3), hyper(1, 1.0, 1.0, 0.0));
  EXPECT_GT(gp.diagnostics().jitter, 0.0);
  EXPECT_NEAR(gp.predict(x.col(0)).mean, 1.0, 1e-3);
}

TEST(Gp, IndefiniteMatrixIsNumericalError) {
  Eigen::MatrixXd k(2, 2);
  k << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(robust_cholesky(k), NumericalError);
  double jitter = -1;
  robust_cholesky(Eigen::MatrixXd::Identity(3, 3), &jitter);
  EXPECT_EQ(jitter, 0.0);
}

TEST(Gp, FitRejectsBadInput) {
  Eigen::MatrixXd x(1, 1);
  x << 0.0;
  EXPECT_THROW(fit_gp(x, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)), SchemaError);
  Eigen::MatrixXd x2(1, 2);
  x2 << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, NAN;
  EXPECT_THROW(fit_gp(x2, y, Eigen::VectorXd::Ones(2)), ValueError);
}

TEST(Gp, HyperparamJsonRoundTrip) {
  auto h = hyper(3, 0.4, 1.5, 0.02, -1.0);
  h.lengthscales(2) = 2.0;
  const auto back = GPHyperparams::from_json(h.to_json());
  EXPECT_EQ(back.lengthscales, h.lengthscales);
  EXPECT_EQ(back.signal_variance, h.signal_variance);
  EXPECT_EQ(back.noise_variance, h.noise_variance);
  EXPECT_EQ(back.constant_mean, h.constant_mean);
}

TEST(Gp, FitIsDeterministic) {
  Rng rng(5);
  const auto x = random_inputs(rng, 2, 20);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) y(i) = x(0, i) * 3 - x(1, i) * x(1, i);
  GPFitConfig cfg;
  cfg.seed = 9;
  const auto a = fit_gp(x, y, Eigen::VectorXd::Ones(20), cfg);
  const auto b = fit_gp(x, y, Eigen::VectorXd::Ones(20), cfg);
  EXPECT_EQ(a.hyperparams().to_json(), b.hyperparams().to_json());
}

TEST(Acquisition, ExpectedImprovementClosedForm) {
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0), 0.3989, 1e-4);
  EXPECT_EQ(expected_improvement(3.0, 0.0, 1.0), 2.0);
  EXPECT_EQ(expected_improvement(1.0, 0.0, 3.0), 0.0);
  // EI(mu, s, b) = s * h((mu - b) / s)
  const double z = 0.7;
  EXPECT_NEAR(expected_improvement(2.0 + 0.7 * 1.5, 1.5, 2.0), 1.5 * (normal_pdf(z) + z * normal_cdf(z)), 1e-14);
  // monotone in mean and in sigma
  EXPECT_LT(expected_improvement(0.0, 1.0, 1.0), expected_improvement(0.5, 1.0, 1.0));
  EXPECT_LT(expected_improvement(0.0, 1.0, 1.0), expected_improvement(0.0, 2.0, 1.0));
}

TEST(Acquisition, LogHMatchesDirectFormula) {
  for (double z : {-0.99, -0.5, 0.0, 0.3, 1.0, 3.0})
    EXPECT_NEAR(log_h(z), std::log(normal_pdf(z) + z * normal_cdf(z)), 1e-12);
  for (double z : {-1.5, -3.0, -6.0, -12.0}) {
    const long double zz = z;
    const long double pdf = std::exp(-0.5L * zz * zz) / std::sqrt(2.0L * std::numbers::pi_v<long double>);
    const long double cdf = 0.5L * std::erfc(-zz / std::sqrt(2.0L));
    EXPECT_NEAR(log_h(z), static_cast<double>(std::log(pdf + zz * cdf)), 1e-6 * std::abs(log_h(z))) << z;
  }
  // tail: log h(z) ~ -z^2/2 - log sqrt(2 pi) - 2 log|z|
  const double z = -40.0;
  EXPECT_NEAR(log_h(z), -0.5 * z * z - 0.5 * std::log(2 * std::numbers::pi) - 2 * std::log(40.0), 1e-2);
  EXPECT_TRUE(std::isfinite(log_h(-1e9)));
}

TEST(Acquisition, ErfcxAgreesWithDefinition) {
  for (double x : {-2.0, 0.0, 0.5, 3.0, 10.0, 25.0}) EXPECT_NEAR(erfcx(x), std::exp(x * x) * std::erfc(x), 1e-12 * erfcx(x));
  // continuity across the asymptotic switch
  EXPECT_NEAR(erfcx(26.0 - 1e-9), erfcx(26.0), 1e-10 * erfcx(26.0));
  EXPECT_NEAR(erfcx(1e6), 1.0 / (1e6 * std::sqrt(std::numbers::pi)), 1e-18);
}

TEST(Acquisition, LogEiIsLogOfRegularisedEi) {
  const double eta = 0.001;
  for (double m : {-2.0, 0.0, 1.0})
    for (double s : {0.1, 1.0, 3.0}) {
      const double direct = std::log(expected_improvement(m, s, 0.5) + eta * s);
      EXPECT_NEAR(log_expected_improvement(m, s, 0.5, eta), direct, 1e-10);
    }
  // far below the incumbent the value stays finite and ordered
  const double a = log_expected_improvement(-30.0, 1.0, 0.0, 1e-300);
  const double b = log_expected_improvement(-25.0, 1.0, 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_LT(a, b);
}

TEST(Acquisition, UcbWithZeroBetaIsTheMean) {
  const auto k = AcquisitionKind::upper_confidence(0.0);
  EXPECT_EQ(acquisition_score(k, 3.5, 4.0, 1.0), 3.5);
  EXPECT_EQ(acquisition_score(AcquisitionKind::upper_confidence(2.0), 3.5, 4.0, 1.0), 7.5);
  EXPECT_EQ(acquisition_score(AcquisitionKind::ei(), 3.0, 0.0, 1.0), 2.0);
}

TEST(Acquisition, KindJson) {
  for (const auto& k : {AcquisitionKind::ei(), AcquisitionKind::upper_confidence(1.5), AcquisitionKind::log_ei(0.01)})
    EXPECT_EQ(AcquisitionKind::from_json(k.to_json()), k);
  EXPECT_EQ(AcquisitionKind::from_json("UCB"), AcquisitionKind::upper_confidence(2.0));
  EXPECT_THROW(AcquisitionKind::from_json("PI"), SchemaError);
  EXPECT_THROW(AcquisitionKind::from_json(json{{"kind", "LogEI"}, {"eta", 0.0}}), SchemaError);
}
