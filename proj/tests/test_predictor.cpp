#include <gtest/gtest.h>

#include "kgbo/dataset.hpp"
#include "kgbo/error.hpp"
#include "kgbo/predictor.hpp"
#include "oracles.hpp"
#include "mock_server.hpp"

using namespace kgbo;

namespace {

// Augmented normal equations [X 1]^T [X 1] + diag(lambda, .., lambda, 0).
std::pair<Eigen::VectorXd, double> ridge_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd a(n, p + 1);
  a << x, Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd m = a.transpose() * a;
  for (Eigen::Index i = 0; i < p; ++i) m(i, i) += lambda;
  const Eigen::VectorXd beta = m.fullPivLu().solve(a.transpose() * y);
  return {beta.head(p), beta(p)};
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = standard_normal(rng);
  return m;
}

SearchSpace prop_space() { return build_space(oracle::grid_manifest({4, 3, 2}, {2, 1, 1})); }

SynthSpec suzuki_like() {
  SynthSpec s;
  s.name = "suzuki_like";
  s.variables = {{"ligand", 15, 3}, {"base", 12, 4}, {"solvent", 8, 2}, {"temp", 4, 2}};
  s.seed = 4;
  return s;
}

}  // namespace

TEST(Ridge, MatchesNormalEquations) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(uniform_below(rng, 20));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(uniform_below(rng, 8));
    const auto x = random_matrix(rng, n, p);
    const Eigen::VectorXd y = random_matrix(rng, n, 1).col(0) * 5.0;
    const double lambda = std::exp(-4.0 + 6.0 * uniform01(rng));
    const auto s = ridge_fit(x, y, lambda);
    const auto [theta, b] = ridge_oracle(x, y, lambda);
    for (Eigen::Index i = 0; i < p; ++i) EXPECT_NEAR(s.theta(i), theta(i), 1e-8 * std::max(1.0, std::abs(theta(i))));
    EXPECT_NEAR(s.intercept, b, 1e-8 * std::max(1.0, std::abs(b)));
  }
}

TEST(Ridge, LambdaLimits) {
  Rng rng(11);
  const auto x = random_matrix(rng, 40, 3);
  Eigen::VectorXd beta(3);
  beta << 1.0, -2.0, 0.5;
  const Eigen::VectorXd y = (x * beta).array() + 7.0;
  const auto tiny = ridge_fit(x, y, 1e-10);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(tiny.theta(i), beta(i), 1e-7);
  EXPECT_NEAR(tiny.intercept, 7.0, 1e-7);
  EXPECT_NEAR(tiny.training_mse, 0.0, 1e-12);
  const auto huge = ridge_fit(x, y, 1e12);
  EXPECT_LT(huge.theta.norm(), 1e-9);
  EXPECT_NEAR(huge.intercept, y.mean(), 1e-6);
  EXPECT_THROW(ridge_fit(x, y, 0.0), ValueError);
  EXPECT_THROW(ridge_fit(Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), 1.0), SchemaError);
}

TEST(Ridge, TrainingErrorGrowsWithLambda) {
  Rng rng(12);
  const auto x = random_matrix(rng, 30, 6);
  const Eigen::VectorXd y = random_matrix(rng, 30, 1).col(0);
  double prev = -1.0;
  for (double lambda : {1e-4, 1e-2, 1.0, 10.0, 100.0, 1e4}) {
    const double mse = ridge_fit(x, y, lambda).training_mse;
    EXPECT_GE(mse, prev - 1e-12);
    prev = mse;
  }
}

TEST(RidgePredictor, FitsAdditiveObjective) {
  const auto space = prop_space();
  RidgePredictor p(space, {1e-6, true});
  std::vector<Labeled> data;
  auto truth = [](const Condition& c) { return 10.0 * c.values[0] - 3.0 * c.values[1] + (c.values[2] ? 5.0 : 0.0); };
  for (const auto& c : space.enumerate()) data.push_back({c, truth(c)});
  p.fit(data);
  const auto all = space.enumerate();
  const auto pred = p.predict(all);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_NEAR(pred[i], truth(all[i]), 1e-3);
  EXPECT_EQ(p.embedding_dim(), space.encoding_dim() + 3);
  EXPECT_FALSE(p.has_prior());
  EXPECT_NEAR(p.state()["training_mse"].get<double>(), 0.0, 1e-6);
}

TEST(RidgePredictor, PriorDataIsUsedAndValidated) {
  const auto space = prop_space();
  std::vector<Labeled> prior{{Condition{{0, 0, 0}}, 50.0}, {Condition{{1, 1, 1}}, 60.0}};
  RidgePredictor p(space, {}, prior);
  EXPECT_TRUE(p.has_prior());
  p.fit({});
  EXPECT_GT(p.predict(std::vector<Condition>{Condition{{1, 1, 1}}})[0], 50.0);
  EXPECT_THROW(RidgePredictor(space, {}, {{Condition{{9, 0, 0}}, 1.0}}), SchemaError);
  RidgePredictor unfitted(space);
  EXPECT_THROW(unfitted.predict(std::vector<Condition>{Condition{{0, 0, 0}}}), SchemaError);
  EXPECT_THROW(RidgePredictor(space, {0.0, true}), ValueError);
}

TEST(Embeddings, UnitNormSymmetricAndSelfSimilar) {
  const auto space = prop_space();
  RidgePredictor p(space);
  const auto all = space.enumerate();
  const auto e = p.embed(all);
  for (std::size_t i = 0; i < e.size(); ++i) {
    double n2 = 0.0;
    for (double v : e[i]) n2 += v * v;
    EXPECT_NEAR(n2, 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(e[i], e[i]), 1.0, 1e-12);
    for (std::size_t j = 0; j < e.size(); j += 5) {
      EXPECT_DOUBLE_EQ(cosine_similarity(e[i], e[j]), cosine_similarity(e[j], e[i]));
      EXPECT_NEAR(cosine_similarity(e[i], e[j]), oracle::cosine(e[i], e[j]), 1e-12);
    }
  }
  EXPECT_EQ(p.embed(std::vector<Condition>{all[3]})[0], p.embed(std::vector<Condition>{all[3]})[0]);
}

TEST(Embeddings, DisjointOneHotsAreOrthogonal) {
  // categorical without properties: one-hot only
  const auto space = build_space(oracle::grid_manifest({3, 3}, {1, 1}));
  RidgePredictor p(space, {1e-2, false});
  const auto e = p.embed(std::vector<Condition>{Condition{{0, 0}}, Condition{{1, 1}}, Condition{{0, 1}}});
  EXPECT_EQ(cosine_similarity(e[0], e[1]), 0.0);
  EXPECT_NEAR(cosine_similarity(e[0], e[2]), 0.5, 1e-12);
  EXPECT_THROW(normalized(std::vector<double>(4, 0.0)), ValueError);
}

TEST(TableOracle, ReproducesTheTable) {
  const auto synth = synth_dataset(suzuki_like());
  ASSERT_EQ(synth.dataset.values.size(), 5760u);
  const auto data = std::make_shared<LookupDataset>(synth.dataset);
  TableOracle o(data);
  const auto all = data->space.enumerate();
  const auto pred = o.predict(all);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(pred[i], data->value(all[i]));
  EXPECT_TRUE(o.has_prior());
  const auto e = o.embed(std::vector<Condition>{all[0]});
  EXPECT_EQ(e[0].size(), o.embedding_dim());
}

TEST(RemotePredictor, ScoresThroughTheEndpoint) {
  const auto space = prop_space();
  MockServer srv(
      [](const httplib::Request& rq, httplib::Response& rs) {
        const auto req = json::parse(rq.body);
        json values = json::array(), emb = json::array();
        for (const auto& c : req["conditions"]) {
          values.push_back(static_cast<double>(c.size()));
          emb.push_back({3.0, 4.0});
        }
        json out = {{"values", values}};
        if (req["want_embeddings"].get<bool>()) out["embeddings"] = emb;
        rs.set_content(out.dump(), "application/json");
      },
      "/score");
  std::vector<json> audit;
  RemotePredictor p(space, {srv.url(), "tok", 5.0, 1, {}}, [&](const json& j) { audit.push_back(j); });
  const auto all = space.enumerate();
  const std::vector<Condition> two{all[0], all[5]};
  EXPECT_EQ(p.predict(two), (std::vector<double>{3.0, 3.0}));
  const auto e = p.embed(two);
  EXPECT_NEAR(e[1][0], 0.6, 1e-15);
  EXPECT_NEAR(e[1][1], 0.8, 1e-15);
  EXPECT_EQ(p.embedding_dim(), 2u);
  EXPECT_EQ(srv.last_auth, "Bearer tok");
  ASSERT_EQ(audit.size(), 2u);
  EXPECT_EQ(audit[0]["request_id"], "pred-0");

  // a replay of the recorded exchanges needs no network
  RemotePredictor r(space, {"", "", 5.0, 0, p.exchanges()});
  EXPECT_EQ(r.predict(two), p.predict(two));
  EXPECT_THROW(r.predict(two), ProviderError);  // recording exhausted
  RemotePredictor mismatch(space, {"", "", 5.0, 0, p.exchanges()});
  EXPECT_THROW(mismatch.predict(std::vector<Condition>{all[1]}), ProviderError);
}

TEST(RemotePredictor, WrongLengthResponseIsAnError) {
  const auto space = prop_space();
  MockServer srv([](const httplib::Request&, httplib::Response& rs) { rs.set_content(R"({"values": [1.0]})", "application/json"); },
                 "/score");
  RemotePredictor p(space, {srv.url(), "", 5.0, 0, {}});
  const auto all = space.enumerate();
  try {
    p.predict(std::vector<Condition>{all[0], all[1]});
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 2 values, got 1"), std::string::npos);
  }
  MockServer nan([](const httplib::Request&, httplib::Response& rs) { rs.set_content(R"({"values": ["x"]})", "application/json"); },
                 "/score");
  RemotePredictor q(space, {nan.url(), "", 5.0, 0, {}});
  EXPECT_THROW(q.predict(std::vector<Condition>{all[0]}), ProviderError);
}

TEST(RemotePredictor, RetriesServerErrorsOnly) {
  const auto space = prop_space();
  MockServer down([](const httplib::Request&, httplib::Response& rs) { rs.status = 503; }, "/score");
  RemotePredictor p(space, {down.url(), "", 5.0, 2, {}});
  EXPECT_THROW(p.predict(space.enumerate()), ProviderError);
  EXPECT_EQ(down.hits.load(), 3);
  MockServer denied([](const httplib::Request&, httplib::Response& rs) { rs.status = 403; }, "/score");
  RemotePredictor q(space, {denied.url(), "", 5.0, 2, {}});
  EXPECT_THROW(q.predict(space.enumerate()), ProviderError);
  EXPECT_EQ(denied.hits.load(), 1);
}
