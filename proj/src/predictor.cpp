#include "kgbo/predictor.hpp"

#include <cmath>

#include "kgbo/error.hpp"

namespace kgbo {

std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (!(s > 0.0) || !std::isfinite(s)) throw ValueError("cannot normalize a zero or non-finite embedding");
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
  return v;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

RidgeSolution ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() < 1) throw SchemaError("ridge fit needs at least one labeled point");
  if (!(lambda > 0.0)) throw ValueError("ridge regularization must be positive");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y(i))) throw ValueError("ridge targets must be finite");
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const double ybar = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xbar;
  const Eigen::VectorXd yc = y.array() - ybar;
  Eigen::MatrixXd a = xc.transpose() * xc;
  a.diagonal().array() += lambda;
  RidgeSolution s;
  s.theta = a.ldlt().solve(xc.transpose() * yc);
  s.intercept = ybar - xbar.dot(s.theta);
  s.training_mse = ((x * s.theta).array() + s.intercept - y.array()).square().mean();
  return s;
}

RidgePredictor::RidgePredictor(SearchSpace space, RidgeConfig config, std::vector<Labeled> prior)
    : space_(std::move(space)), config_(config), prior_(std::move(prior)) {
  if (!(config_.lambda > 0.0)) throw ValueError("ridge regularization must be positive");
  feature_dim_ = space_.encoding_dim();
  props_.resize(space_.variable_count());
  if (config_.use_properties) {
    for (std::size_t i = 0; i < space_.variable_count(); ++i) {
      const auto& v = space_.variable(i);
      if (v.kind != VariableKind::categorical || v.property_keys().empty()) continue;
      std::vector<std::vector<double>> p;
      for (std::size_t k = 0; k < v.size(); ++k) p.push_back(v.property_vector(static_cast<int>(k)));
      const std::size_t d = p.front().size();
      for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0, var = 0.0;
        for (const auto& r : p) mean += r[j];
        mean /= static_cast<double>(p.size());
        for (const auto& r : p) var += (r[j] - mean) * (r[j] - mean);
        const double sd = std::sqrt(var / static_cast<double>(p.size()));
        for (auto& r : p) r[j] = sd > 0.0 ? (r[j] - mean) / sd : 0.0;
      }
      props_[i] = std::move(p);
      feature_dim_ += d;
    }
  }
  for (const auto& l : prior_)
    if (!space_.contains(l.condition)) throw SchemaError("ridge prior data contains a condition outside the space");
}

std::vector<double> RidgePredictor::features(const Condition& c) const {
  std::vector<double> f(feature_dim_, 0.0);
  space_.encode_into(c, std::span<double>(f.data(), space_.encoding_dim()));
  std::size_t off = space_.encoding_dim();
  for (std::size_t i = 0; i < props_.size(); ++i) {
    if (props_[i].empty()) continue;
    const auto& p = props_[i][static_cast<std::size_t>(c.values[i])];
    std::copy(p.begin(), p.end(), f.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  return f;
}

void RidgePredictor::fit(std::span<const Labeled> labeled) {
  const std::size_t n = prior_.size() + labeled.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(feature_dim_));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::size_t r = 0;
  auto add = [&](const Labeled& l) {
    const auto f = features(l.condition);
    x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    y(static_cast<Eigen::Index>(r)) = l.value;
    ++r;
  };
  for (const auto& l : prior_) add(l);
  for (const auto& l : labeled) add(l);
  solution_ = ridge_fit(x, y, config_.lambda);
  fitted_ = true;
}

std::vector<double> RidgePredictor::predict(std::span<const Condition> conditions) const {
  if (!fitted_) throw SchemaError("ridge predictor used before fit");
  std::vector<double> out;
  out.reserve(conditions.size());
  for (const auto& c : conditions) {
    const auto f = features(c);
    out.push_back(Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())).dot(solution_.theta) +
                  solution_.intercept);
  }
  return out;
}

std::vector<std::vector<double>> RidgePredictor::embed(std::span<const Condition> conditions) const {
  std::vector<std::vector<double>> out;
  out.reserve(conditions.size());
  for (const auto& c : conditions) out.push_back(normalized(features(c)));
  return out;
}

json RidgePredictor::state() const {
  return {{"lambda", config_.lambda},
          {"use_properties", config_.use_properties},
          {"prior_points", prior_.size()},
          {"intercept", solution_.intercept},
          {"theta", std::vector<double>(solution_.theta.data(), solution_.theta.data() + solution_.theta.size())},
          {"training_mse", solution_.training_mse}};
}

std::vector<double> TableOracle::predict(std::span<const Condition> conditions) const {
  std::vector<double> out;
  out.reserve(conditions.size());
  for (const auto& c : conditions) out.push_back(data_->value(c));
  return out;
}

std::vector<std::vector<double>> TableOracle::embed(std::span<const Condition> conditions) const {
  std::vector<std::vector<double>> out;
  for (const auto& c : conditions) out.push_back(normalized(data_->space.encode(c)));
  return out;
}

RemotePredictor::RemotePredictor(SearchSpace space, RemotePredictorConfig config, AuditSink audit)
    : space_(std::move(space)), config_(std::move(config)), audit_(std::move(audit)) {}

std::size_t RemotePredictor::embedding_dim() const {
  std::lock_guard lock(mu_);
  return dim_;
}

std::vector<json> RemotePredictor::exchanges() const {
  std::lock_guard lock(mu_);
  return log_;
}

json RemotePredictor::exchange(std::span<const Condition> conditions, bool want_embeddings) const {
  json conds = json::array();
  for (const auto& c : conditions) conds.push_back(space_.condition_to_json(c));
  const json request = {{"conditions", conds}, {"want_embeddings", want_embeddings}};

  std::lock_guard lock(mu_);
  const std::size_t id = next_id_++;
  const std::string rid = "pred-" + std::to_string(id);
  json response;
  if (!config_.replay.empty() || config_.endpoint.empty()) {
    if (id >= config_.replay.size())
      throw ProviderError("replay log exhausted at request " + rid);
    const auto& rec = config_.replay[id];
    if (rec.at("request") != request) throw ProviderError("replayed request " + rid + " does not match the recording");
    response = rec.at("response");
  } else {
    const auto ep = parse_endpoint(config_.endpoint);
    std::string last;
    bool ok = false;
    for (int attempt = 0; attempt <= config_.max_retries && !ok; ++attempt) {
      try {
        auto res = post_json(ep, request.dump(), config_.token, config_.timeout_seconds);
        if (res.status != 200) {
          last = "HTTP " + std::to_string(res.status) + ": " + res.body;
          if (res.status < 500) break;
          continue;
        }
        response = json::parse(res.body);
        ok = true;
      } catch (const ProviderError& e) {
        last = e.what();
      } catch (const json::exception& e) {
        throw ProviderError("predictor request " + rid + ": invalid JSON response: " + e.what());
      }
    }
    if (!ok) throw ProviderError("predictor request " + rid + " failed: " + last);
  }

  // Validate before recording so the log only holds usable exchanges.
  if (!response.is_object() || !response.contains("values") || !response["values"].is_array())
    throw ProviderError("predictor request " + rid + ": response lacks a 'values' array");
  if (response["values"].size() != conditions.size())
    throw ProviderError("predictor request " + rid + ": expected " + std::to_string(conditions.size()) +
                        " values, got " + std::to_string(response["values"].size()));
  for (const auto& v : response["values"])
    if (!v.is_number() || !std::isfinite(v.get<double>()))
      throw ProviderError("predictor request " + rid + ": non-finite value in response");
  if (want_embeddings) {
    if (!response.contains("embeddings") || !response["embeddings"].is_array() ||
        response["embeddings"].size() != conditions.size())
      throw ProviderError("predictor request " + rid + ": embeddings missing or of the wrong length");
    for (const auto& e : response["embeddings"]) {
      if (!e.is_array() || e.empty()) throw ProviderError("predictor request " + rid + ": empty embedding");
      if (dim_ == 0) dim_ = e.size();
      if (e.size() != dim_) throw ProviderError("predictor request " + rid + ": inconsistent embedding dimension");
      double s = 0.0;
      for (const auto& x : e) {
        if (!x.is_number()) throw ProviderError("predictor request " + rid + ": non-numeric embedding entry");
        s += x.get<double>() * x.get<double>();
      }
      if (!(s > 0.0) || !std::isfinite(s))
        throw ProviderError("predictor request " + rid + ": embedding cannot be normalized");
    }
  }
  json rec = {{"request_id", rid}, {"request", request}, {"response", response}};
  log_.push_back(rec);
  if (audit_) audit_({{"kind", "predictor"}, {"request_id", rid}, {"request", request}, {"response", response}});
  return response;
}

std::vector<double> RemotePredictor::predict(std::span<const Condition> conditions) const {
  if (conditions.empty()) return {};
  return exchange(conditions, false)["values"].get<std::vector<double>>();
}

std::vector<std::vector<double>> RemotePredictor::embed(std::span<const Condition> conditions) const {
  if (conditions.empty()) return {};
  auto res = exchange(conditions, true);
  std::vector<std::vector<double>> out;
  for (const auto& e : res["embeddings"]) out.push_back(normalized(e.get<std::vector<double>>()));
  return out;
}

}  // namespace kgbo
