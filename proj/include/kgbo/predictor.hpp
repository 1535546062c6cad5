#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kgbo/dataset.hpp"
#include "kgbo/http_util.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

struct Labeled {
  Condition condition;
  double value = 0.0;
};

// Performance model that supplies pseudo-labels and similarity embeddings.
class PerformancePredictor {
 public:
  virtual ~PerformancePredictor() = default;
  virtual std::string kind() const = 0;
  virtual void fit(std::span<const Labeled> labeled) = 0;
  virtual std::vector<double> predict(std::span<const Condition> conditions) const = 0;
  // Unit L2-norm vectors of embedding_dim() entries each.
  virtual std::vector<std::vector<double>> embed(std::span<const Condition> conditions) const = 0;
  virtual std::size_t embedding_dim() const = 0;
  // True when the model can predict before any campaign observation.
  virtual bool has_prior() const { return false; }
  virtual json state() const { return json::object(); }
};

std::vector<double> normalized(std::vector<double> v);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct RidgeSolution {
  Eigen::VectorXd theta;
  double intercept = 0.0;
  double training_mse = 0.0;
};

// argmin sum (x.theta + b - y)^2 + lambda |theta|^2 with an unpenalized
// intercept. Rows of `features` are samples.
RidgeSolution ridge_fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double lambda);

struct RidgeConfig {
  double lambda = 1e-2;
  bool use_properties = true;  // append z-scored candidate properties to the one-hot block
};

// Linear ridge model over one-hot encodings augmented with candidate property
// features. The (normalized) feature vector doubles as the embedding.
class RidgePredictor final : public PerformancePredictor {
 public:
  RidgePredictor(SearchSpace space, RidgeConfig config = {}, std::vector<Labeled> prior = {});

  std::string kind() const override { return "ridge"; }
  void fit(std::span<const Labeled> labeled) override;
  std::vector<double> predict(std::span<const Condition> conditions) const override;
  std::vector<std::vector<double>> embed(std::span<const Condition> conditions) const override;
  std::size_t embedding_dim() const override { return feature_dim_; }
  bool has_prior() const override { return !prior_.empty(); }
  json state() const override;

  std::vector<double> features(const Condition& c) const;
  const RidgeSolution& solution() const { return solution_; }

 private:
  SearchSpace space_;
  RidgeConfig config_;
  std::vector<Labeled> prior_;
  // z-scored property vectors per categorical variable and value
  std::vector<std::vector<std::vector<double>>> props_;
  std::size_t feature_dim_ = 0;
  RidgeSolution solution_;
  bool fitted_ = false;
};

// Perfect predictor backed by the complete lookup table (upper-bound baseline).
class TableOracle final : public PerformancePredictor {
 public:
  explicit TableOracle(std::shared_ptr<const LookupDataset> dataset) : data_(std::move(dataset)) {}

  std::string kind() const override { return "table_oracle"; }
  void fit(std::span<const Labeled>) override {}
  std::vector<double> predict(std::span<const Condition> conditions) const override;
  std::vector<std::vector<double>> embed(std::span<const Condition> conditions) const override;
  std::size_t embedding_dim() const override { return data_->space.encoding_dim(); }
  bool has_prior() const override { return true; }

 private:
  std::shared_ptr<const LookupDataset> data_;
};

struct RemotePredictorConfig {
  std::string endpoint;
  std::string token;
  double timeout_seconds = 30.0;
  int max_retries = 2;
  // Recorded exchanges ({request_id, request, response}) to serve instead of
  // contacting the endpoint.
  std::vector<json> replay;
};

// JSON-over-HTTP scoring service: request {conditions, want_embeddings},
// response {values, embeddings}.
class RemotePredictor final : public PerformancePredictor {
 public:
  RemotePredictor(SearchSpace space, RemotePredictorConfig config, AuditSink audit = {});

  std::string kind() const override { return "remote"; }
  void fit(std::span<const Labeled>) override {}
  std::vector<double> predict(std::span<const Condition> conditions) const override;
  std::vector<std::vector<double>> embed(std::span<const Condition> conditions) const override;
  std::size_t embedding_dim() const override;
  bool has_prior() const override { return true; }

  std::vector<json> exchanges() const;

 private:
  json exchange(std::span<const Condition> conditions, bool want_embeddings) const;

  SearchSpace space_;
  RemotePredictorConfig config_;
  AuditSink audit_;
  mutable std::mutex mu_;
  mutable std::vector<json> log_;
  mutable std::size_t next_id_ = 0;
  mutable std::size_t dim_ = 0;
};

}  // namespace kgbo
