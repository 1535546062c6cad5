#include "kgbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "kgbo/error.hpp"
#include "kgbo/kernels.hpp"
#include "kgbo/rng.hpp"

namespace kgbo {

namespace {

// Search box in standardized-target units; inputs live in [0, 1].
constexpr double kLogLsMin = -3.0;   // l ~ 0.05
constexpr double kLogLsMax = 3.0;    // l ~ 20
constexpr double kLogSigMin = -3.0;
constexpr double kLogSigMax = 3.0;
constexpr double kLogNoiseMin = -13.8;  // 1e-6
constexpr double kLogNoiseMax = 0.0;
constexpr double kMeanAbsMax = 3.0;

Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& xs, const Eigen::VectorXd& ls) {
  return ls.cwiseInverse().asDiagonal() * xs;
}

struct Factorized {
  Eigen::MatrixXd chol;
  Eigen::VectorXd alpha;
  double jitter = 0.0;
};

Eigen::MatrixXd noisy_gram(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& weights, const GPHyperparams& h) {
  Eigen::MatrixXd k;
  kernels::matern52_gram(scale_columns(inputs, h.lengthscales), h.signal_variance, k);
  for (Eigen::Index i = 0; i < k.rows(); ++i) k(i, i) += h.noise_variance / weights(i);
  return k;
}

Factorized factorize(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
                     const GPHyperparams& h) {
  Factorized f;
  f.chol = robust_cholesky(noisy_gram(inputs, weights, h), &f.jitter);
  const Eigen::VectorXd centered = targets.array() - h.constant_mean;
  f.alpha = f.chol.triangularView<Eigen::Lower>().solve(centered);
  f.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(f.alpha);
  return f;
}

Eigen::VectorXd pack(const GPHyperparams& h) {
  const Eigen::Index d = h.lengthscales.size();
  Eigen::VectorXd p(d + 3);
  p.head(d) = h.lengthscales.array().log();
  p(d) = std::log(h.signal_variance);
  p(d + 1) = std::log(h.noise_variance);
  p(d + 2) = h.constant_mean;
  return p;
}

GPHyperparams unpack(const Eigen::VectorXd& p) {
  const Eigen::Index d = p.size() - 3;
  GPHyperparams h;
  h.lengthscales = p.head(d).array().exp();
  h.signal_variance = std::exp(p(d));
  h.noise_variance = std::exp(p(d + 1));
  h.constant_mean = p(d + 2);
  return h;
}

void project(Eigen::VectorXd& p) {
  const Eigen::Index d = p.size() - 3;
  for (Eigen::Index i = 0; i < d; ++i) p(i) = std::clamp(p(i), kLogLsMin, kLogLsMax);
  p(d) = std::clamp(p(d), kLogSigMin, kLogSigMax);
  p(d + 1) = std::clamp(p(d + 1), kLogNoiseMin, kLogNoiseMax);
  p(d + 2) = std::clamp(p(d + 2), -kMeanAbsMax, kMeanAbsMax);
}

double safe_lml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, const Eigen::VectorXd& p,
                Eigen::VectorXd* grad) {
  try {
    const double v = log_marginal_likelihood(x, y, w, unpack(p), grad);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  } catch (const NumericalError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Projected gradient ascent with Barzilai-Borwein steps and Armijo backtracking.
double ascend(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, Eigen::VectorXd& p,
              int max_iterations, int& iterations) {
  project(p);
  Eigen::VectorXd g(p.size());
  double f = safe_lml(x, y, w, p, &g);
  if (!std::isfinite(f)) return f;
  double step = 0.1 / std::max(1.0, g.norm());
  Eigen::VectorXd p_prev = p, g_prev = g;
  for (int it = 0; it < max_iterations; ++it) {
    ++iterations;
    bool accepted = false;
    Eigen::VectorXd cand, g_new(p.size());
    double f_new = f;
    for (int bt = 0; bt < 20; ++bt) {
      cand = p + step * g;
      project(cand);
      f_new = safe_lml(x, y, w, cand, &g_new);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * g.dot(cand - p)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    p_prev = p;
    g_prev = g;
    p = cand;
    const double improvement = f_new - f;
    f = f_new;
    g = g_new;
    const Eigen::VectorXd s = p - p_prev;
    const Eigen::VectorXd yk = g - g_prev;
    const double sy = s.dot(yk);
    // Ascent on a locally concave objective has s.y < 0.
    step = sy < 0.0 ? std::clamp(-s.squaredNorm() / sy, 1e-6, 10.0) : std::min(step * 2.0, 10.0);
    if (s.norm() < 1e-7 || std::abs(improvement) < 1e-9 * std::max(1.0, std::abs(f))) break;
  }
  return f;
}

std::vector<Eigen::Index> fit_subset(const Eigen::VectorXd& weights, std::size_t cap) {
  const auto n = static_cast<std::size_t>(weights.size());
  std::vector<Eigen::Index> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<Eigen::Index>(i);
  if (n <= cap) return all;
  std::vector<Eigen::Index> real, soft;
  for (std::size_t i = 0; i < n; ++i) (weights(static_cast<Eigen::Index>(i)) >= 1.0 ? real : soft).push_back(all[i]);
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < real.size() && out.size() < cap; ++i) out.push_back(real[i]);
  const std::size_t room = cap - out.size();
  for (std::size_t i = 0; i < room && !soft.empty(); ++i) out.push_back(soft[i * soft.size() / room]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

json GPHyperparams::to_json() const {
  return {{"lengthscales", std::vector<double>(lengthscales.data(), lengthscales.data() + lengthscales.size())},
          {"signal_variance", signal_variance},
          {"noise_variance", noise_variance},
          {"constant_mean", constant_mean}};
}

GPHyperparams GPHyperparams::from_json(const json& j) {
  GPHyperparams h;
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  h.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  h.signal_variance = j.at("signal_variance").get<double>();
  h.noise_variance = j.at("noise_variance").get<double>();
  h.constant_mean = j.at("constant_mean").get<double>();
  return h;
}

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& lengthscales,
                double signal_variance) {
  const double r = ((a - b).array() / lengthscales.array()).matrix().norm();
  return kernels::matern52(r, signal_variance);
}

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& k, double* jitter_used) {
  const double scale = std::max(k.diagonal().mean(), std::numeric_limits<double>::min());
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() == Eigen::Success) {
    if (jitter_used) *jitter_used = 0.0;
    return llt.matrixL();
  }
  for (double rel = 1e-8; rel <= 1e-4 * 1.0000001; rel *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += rel * scale;
    llt.compute(kj);
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = rel * scale;
      return llt.matrixL();
    }
  }
  throw NumericalError("kernel matrix is not positive definite even with jitter 1e-4");
}

GPModel::GPModel(Eigen::MatrixXd inputs, Eigen::VectorXd targets, Eigen::VectorXd weights, GPHyperparams hyper)
    : inputs_(std::move(inputs)), targets_(std::move(targets)), weights_(std::move(weights)), hyper_(std::move(hyper)) {
  if (targets_.size() != inputs_.cols() || weights_.size() != inputs_.cols())
    throw SchemaError("GP inputs, targets and weights disagree in length");
  if (hyper_.lengthscales.size() != inputs_.rows()) throw SchemaError("GP lengthscale count does not match inputs");
  for (Eigen::Index i = 0; i < weights_.size(); ++i)
    if (!(weights_(i) > 0.0 && weights_(i) <= 1.0)) throw ValueError("GP point weights must lie in (0, 1]");
  scaled_ = scale_columns(inputs_, hyper_.lengthscales);
  if (inputs_.cols() > 0) {
    auto f = factorize(inputs_, targets_, weights_, hyper_);
    chol_ = std::move(f.chol);
    alpha_ = std::move(f.alpha);
    diag_.jitter = f.jitter;
  }
}

Eigen::MatrixXd GPModel::scale(const Eigen::MatrixXd& xs) const { return scale_columns(xs, hyper_.lengthscales); }

void GPModel::predict_latent(const Eigen::MatrixXd& xs, Eigen::VectorXd& mean, Eigen::VectorXd& variance) const {
  const Eigen::Index m = xs.cols();
  mean = Eigen::VectorXd::Constant(m, hyper_.constant_mean);
  variance = Eigen::VectorXd::Constant(m, hyper_.signal_variance);
  if (inputs_.cols() == 0) return;
  Eigen::MatrixXd kx;
  kernels::matern52_cross(scaled_, scale(xs), hyper_.signal_variance, kx);  // n x m
  mean += kx.transpose() * alpha_;
  chol_.triangularView<Eigen::Lower>().solveInPlace(kx);
  variance -= kx.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (variance(i) < 0.0) variance(i) = 0.0;  // round-off below 1e-12 relative
  }
}

Prediction GPModel::predict(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw SchemaError("query dimension does not match the GP");
  Eigen::VectorXd mean, var;
  predict_latent(x, mean, var);
  return {mean(0), var(0) + hyper_.noise_variance, var(0)};
}

double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               const Eigen::VectorXd& weights, const GPHyperparams& h, Eigen::VectorXd* gradient) {
  const Eigen::Index n = inputs.cols();
  const Eigen::Index d = inputs.rows();
  const Eigen::MatrixXd scaled = scale_columns(inputs, h.lengthscales);
  Eigen::MatrixXd ks;
  kernels::matern52_gram(scaled, h.signal_variance, ks);
  Eigen::MatrixXd k = ks;
  for (Eigen::Index i = 0; i < n; ++i) k(i, i) += h.noise_variance / weights(i);
  double jitter = 0.0;
  const Eigen::MatrixXd chol = robust_cholesky(k, &jitter);
  const Eigen::VectorXd centered = targets.array() - h.constant_mean;
  Eigen::VectorXd alpha = chol.triangularView<Eigen::Lower>().solve(centered);
  const double quad = alpha.squaredNorm();
  chol.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
  const double logdet = 2.0 * chol.diagonal().array().log().sum();
  const double lml = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (gradient) {
    Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
    chol.triangularView<Eigen::Lower>().solveInPlace(kinv);
    chol.triangularView<Eigen::Lower>().transpose().solveInPlace(kinv);
    const Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;
    gradient->resize(d + 3);
    Eigen::VectorXd ls_grad;
    kernels::lengthscale_traces(scaled, h.signal_variance, w, ls_grad);
    gradient->head(d) = 0.5 * ls_grad;
    (*gradient)(d) = 0.5 * (w.array() * ks.array()).sum();
    double noise_term = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) noise_term += w(i, i) * h.noise_variance / weights(i);
    (*gradient)(d + 1) = 0.5 * noise_term;
    (*gradient)(d + 2) = alpha.sum();
  }
  return lml;
}

GPModel fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
               const GPFitConfig& config) {
  const Eigen::Index n = inputs.cols();
  const Eigen::Index d = inputs.rows();
  if (n < 2) throw SchemaError("GP fit needs at least 2 points");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(targets(i))) throw ValueError("GP targets must be finite");

  const double ybar = targets.mean();
  const double ysd = std::sqrt((targets.array() - ybar).square().mean());
  if (ysd <= 1e-12 * std::max(1.0, std::abs(ybar))) {
    // Constant data: nothing to learn beyond the level.
    GPHyperparams h;
    h.lengthscales = Eigen::VectorXd::Ones(d);
    h.signal_variance = 1e-6;
    h.noise_variance = 1e-6;
    h.constant_mean = ybar;
    GPModel gp(inputs, targets, weights, h);
    gp.diagnostics().log_marginal_likelihood = log_marginal_likelihood(inputs, targets, weights, h);
    gp.diagnostics().fit_points = static_cast<std::size_t>(n);
    return gp;
  }

  const auto subset = fit_subset(weights, config.max_fit_points);
  const auto m = static_cast<Eigen::Index>(subset.size());
  Eigen::MatrixXd fx(d, m);
  Eigen::VectorXd fy(m), fw(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    fx.col(i) = inputs.col(subset[static_cast<std::size_t>(i)]);
    fy(i) = (targets(subset[static_cast<std::size_t>(i)]) - ybar) / ysd;
    fw(i) = weights(subset[static_cast<std::size_t>(i)]);
  }

  Rng rng(splitmix64(config.seed ^ 0x6770666974ULL));
  GPDiagnostics diag;
  Eigen::VectorXd best_p;
  double best_f = -std::numeric_limits<double>::infinity();
  for (int start = 0; start <= config.restarts; ++start) {
    Eigen::VectorXd p(d + 3);
    if (start == 0) {
      p.head(d).setConstant(0.0);
      p(d) = 0.0;
      p(d + 1) = std::log(0.05);
      p(d + 2) = 0.0;
    } else {
      for (Eigen::Index i = 0; i < d; ++i) p(i) = -1.5 + 3.0 * uniform01(rng);
      p(d) = -1.0 + 2.0 * uniform01(rng);
      p(d + 1) = std::log(1e-3) + (std::log(0.3) - std::log(1e-3)) * uniform01(rng);
      p(d + 2) = -0.5 + uniform01(rng);
    }
    const double f = ascend(fx, fy, fw, p, config.max_iterations, diag.iterations);
    ++diag.starts;
    if (f > best_f) {
      best_f = f;
      best_p = p;
    }
  }
  if (!std::isfinite(best_f)) throw NumericalError("GP hyperparameter fit failed from every start");

  GPHyperparams h = unpack(best_p);
  h.signal_variance *= ysd * ysd;
  h.noise_variance *= ysd * ysd;
  h.constant_mean = ybar + ysd * h.constant_mean;
  GPModel gp(inputs, targets, weights, h);
  const double jitter = gp.diagnostics().jitter;
  gp.diagnostics() = diag;
  gp.diagnostics().jitter = jitter;
  // Reported on the original target scale over the fitting subset.
  gp.diagnostics().log_marginal_likelihood = best_f - static_cast<double>(m) * std::log(ysd);
  gp.diagnostics().fit_points = static_cast<std::size_t>(m);
  return gp;
}

}  // namespace kgbo
