#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace kgbo {

using json = nlohmann::json;

struct GPHyperparams {
  Eigen::VectorXd lengthscales;  // one per input dimension (ARD)
  double signal_variance = 1.0;
  double noise_variance = 1e-2;
  double constant_mean = 0.0;

  json to_json() const;
  static GPHyperparams from_json(const json& j);
};

struct GPFitConfig {
  int restarts = 2;  // random starts in addition to the data-scaled default start
  int max_iterations = 60;
  std::uint64_t seed = 0;
  // Hyperparameters are fitted on at most this many points (every real point
  // first, then an evenly spaced subsample of the rest); the posterior always
  // conditions on all points.
  std::size_t max_fit_points = 128;
};

struct GPDiagnostics {
  double log_marginal_likelihood = 0.0;
  int iterations = 0;
  int starts = 0;
  double jitter = 0.0;
  std::size_t fit_points = 0;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;  // latent variance plus observation noise
  double latent_variance = 0.0;
};

// Matern-5/2 ARD Gaussian process with a constant mean. Per-point weights
// w in (0, 1] inflate that point's observation noise to noise / w.
class GPModel {
 public:
  GPModel() = default;
  // Condition on data with fixed hyperparameters. `inputs` is d x n.
  GPModel(Eigen::MatrixXd inputs, Eigen::VectorXd targets, Eigen::VectorXd weights, GPHyperparams hyper);

  const GPHyperparams& hyperparams() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  std::size_t size() const { return static_cast<std::size_t>(inputs_.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs_.rows()); }
  const GPDiagnostics& diagnostics() const { return diag_; }
  GPDiagnostics& diagnostics() { return diag_; }

  Prediction predict(const Eigen::VectorXd& x) const;
  // Columns of `xs` are query points.
  void predict_latent(const Eigen::MatrixXd& xs, Eigen::VectorXd& mean, Eigen::VectorXd& variance) const;

  // Training inputs divided by the lengthscales.
  Eigen::MatrixXd scale(const Eigen::MatrixXd& xs) const;
  const Eigen::MatrixXd& cholesky() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }

 private:
  Eigen::MatrixXd inputs_;
  Eigen::MatrixXd scaled_;
  Eigen::VectorXd targets_;
  Eigen::VectorXd weights_;
  GPHyperparams hyper_;
  Eigen::MatrixXd chol_;  // lower factor of K + diag(noise / w) + jitter
  Eigen::VectorXd alpha_;
  GPDiagnostics diag_;
};

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& lengthscales,
                double signal_variance);

// Weighted log marginal likelihood. When `gradient` is given it receives the
// derivative with respect to [log l_1..log l_d, log signal_variance,
// log noise_variance, constant_mean].
double log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                               const Eigen::VectorXd& weights, const GPHyperparams& hyper,
                               Eigen::VectorXd* gradient = nullptr);

// Hyperparameters by multi-start projected gradient ascent on the log
// marginal likelihood. Needs at least 2 points.
GPModel fit_gp(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
               const GPFitConfig& config = {});

// Lower Cholesky factor with the 1e-8..1e-4 relative jitter ladder. Throws
// NumericalError once the ladder is exhausted.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& k, double* jitter_used = nullptr);

}  // namespace kgbo
