#include <gtest/gtest.h>

#include "kgbo/error.hpp"
#include "kgbo/pseudo.hpp"
#include "oracles.hpp"

using namespace kgbo;

namespace {

// Prediction = sum of value indices; embedding = normalized one-hot encoding.
class SumPredictor final : public PerformancePredictor {
 public:
  explicit SumPredictor(SearchSpace s) : space_(std::move(s)) {}
  std::string kind() const override { return "sum"; }
  void fit(std::span<const Labeled>) override {}
  std::vector<double> predict(std::span<const Condition> cs) const override {
    std::vector<double> out;
    for (const auto& c : cs) out.push_back(std::accumulate(c.values.begin(), c.values.end(), 0.0));
    return out;
  }
  std::vector<std::vector<double>> embed(std::span<const Condition> cs) const override {
    std::vector<std::vector<double>> out;
    for (const auto& c : cs) out.push_back(normalized(space_.encode(c)));
    return out;
  }
  std::size_t embedding_dim() const override { return space_.encoding_dim(); }

 private:
  SearchSpace space_;
};

PseudoPoint point(std::vector<int> v, double pred, std::vector<double> emb = {1.0}) {
  return {Condition{std::move(v)}, pred, std::move(emb), true, 0};
}

std::vector<double> unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = standard_normal(rng);
  return normalized(v);
}

}  // namespace

TEST(Generate, SetDifferenceWithObservations) {
  const auto space = build_space(oracle::grid_manifest({4, 3, 2}, {1, 1, 1}));
  SumPredictor pred(space);
  const auto all = space.enumerate();
  const std::set<Condition> observed{all[0], all[5], all[11], all[23]};
  const auto pts = generate(pred, space, observed, 3);
  ASSERT_EQ(pts.size(), 20u);
  for (const auto& p : pts) {
    EXPECT_FALSE(observed.count(p.condition));
    EXPECT_TRUE(p.alive);
    EXPECT_EQ(p.created_round, 3);
    EXPECT_EQ(p.predicted, std::accumulate(p.condition.values.begin(), p.condition.values.end(), 0.0));
    EXPECT_NEAR(std::inner_product(p.embedding.begin(), p.embedding.end(), p.embedding.begin(), 0.0), 1.0, 1e-12);
  }
  const auto again = generate(pred, space, observed, 3);
  EXPECT_EQ(pseudo_to_json(space, again), pseudo_to_json(space, pts));
}

TEST(Generate, EmptyAfterExclusionsAndCap) {
  const auto space = build_space(oracle::grid_manifest({2, 2}, {1, 1}));
  SumPredictor pred(space);
  const auto all = space.enumerate();
  EXPECT_TRUE(generate(pred, space, std::set<Condition>(all.begin(), all.end()), 0).empty());
  EXPECT_THROW(generate(pred, space, {}, 0, 3), SchemaError);
}

TEST(LocalRemoval, ExactAndOrthogonal) {
  std::vector<PseudoPoint> pts{point({0}, 1.0, {1.0, 0.0}), point({1}, 2.0, {0.0, 1.0})};
  const std::vector<double> obs{1.0, 0.0};
  EXPECT_EQ(local_removal(pts, obs, 0.95), 1u);
  EXPECT_FALSE(pts[0].alive);
  EXPECT_TRUE(pts[1].alive);
  std::vector<PseudoPoint> same{point({0}, 1.0, {0.6, 0.8})};
  EXPECT_EQ(local_removal(same, std::vector<double>{0.6, 0.8}, 0.999999), 1u);
}

TEST(LocalRemoval, MatchesBruteForceFilterAndIsIdempotent) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PseudoPoint> pts;
    const auto base = unit(rng, 3);
    for (int i = 0; i < 10; ++i) {
      auto e = unit(rng, 3);
      // pull some points close to the observation
      if (i % 3 == 0)
        for (std::size_t k = 0; k < 3; ++k) e[k] = base[k] + 0.1 * e[k];
      pts.push_back(point({i}, i, normalized(e)));
      if (uniform_below(rng, 5) == 0) pts.back().alive = false;
    }
    const double tau = 0.5 + 0.49 * uniform01(rng);
    std::vector<bool> want;
    for (const auto& p : pts) want.push_back(p.alive && oracle::cosine(p.embedding, base) < tau);
    auto copy = pts;
    local_removal(copy, base, tau);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(copy[i].alive, want[i]);
    EXPECT_EQ(local_removal(copy, base, tau), 0u);
  }
}

TEST(GlobalRemoval, CountContract) {
  Rng rng(1);
  std::vector<PseudoPoint> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(point({i}, i));
  auto none = pts;
  EXPECT_EQ(global_removal(none, 0.0, rng), 0u);
  EXPECT_EQ(live_count(none), 10u);
  EXPECT_EQ(global_removal(pts, 0.2, rng), 2u);
  EXPECT_EQ(live_count(pts), 8u);
  // ceil(0.25 * 8) = 2, then ceil(0.25 * 6) = 2, ceil(0.25 * 4) = 1
  EXPECT_EQ(global_removal(pts, 0.25, rng), 2u);
  EXPECT_EQ(global_removal(pts, 0.25, rng), 2u);
  EXPECT_EQ(global_removal(pts, 0.25, rng), 1u);
  EXPECT_EQ(live_count(pts), 3u);
  EXPECT_THROW(global_removal(pts, 1.0, rng), ValueError);
}

TEST(GlobalRemoval, RankWeightsAndDeterminism) {
  std::vector<PseudoPoint> pts{point({0}, 3), point({1}, 9), point({2}, 1), point({3}, 7), point({4}, 5)};
  pts.push_back(point({5}, 100));
  pts.back().alive = false;
  EXPECT_EQ(global_removal_weights(pts), (std::vector<double>{2, 5, 1, 4, 3, 0}));
  auto a = pts, b = pts;
  Rng r1(42), r2(42);
  global_removal(a, 0.4, r1);
  global_removal(b, 0.4, r2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].alive, b[i].alive);
  EXPECT_FALSE(a[5].alive);  // never revived
}

TEST(GlobalRemoval, TopPredictedRetiredMoreOften) {
  const std::vector<PseudoPoint> pts{point({0}, 3), point({1}, 9), point({2}, 1), point({3}, 7), point({4}, 5)};
  const auto p = oracle::retirement_probabilities(global_removal_weights(pts), 2);
  std::vector<int> hits(5, 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto copy = pts;
    Rng rng = derive_rng(5, static_cast<std::uint64_t>(t), "test");
    global_removal(copy, 0.4, rng);
    for (int i = 0; i < 5; ++i) hits[static_cast<std::size_t>(i)] += !copy[static_cast<std::size_t>(i)].alive;
  }
  for (std::size_t i = 0; i < 5; ++i) {
    const double sd = std::sqrt(trials * p[i] * (1 - p[i]));
    EXPECT_LT(std::abs(hits[i] - trials * p[i]), 3 * sd) << i;
  }
  EXPECT_GT(hits[1], hits[2]);
}

TEST(ScoreTree, HandExamples) {
  const OptTree t({0}, {{0, 1}});
  std::vector<PseudoPoint> pts{point({0}, 0), point({0}, 0), point({1}, 10), point({1}, 10)};
  EXPECT_DOUBLE_EQ(score_tree(t, pts), 25.0);
  std::vector<PseudoPoint> flat{point({0}, 4), point({1}, 4), point({1}, 4)};
  EXPECT_EQ(score_tree(t, flat), 0.0);
  std::vector<PseudoPoint> one{point({0}, 4)};
  EXPECT_EQ(score_tree(t, one), 0.0);
  pts[2].alive = false;  // dead points do not count: root {0,0,10}, leaf1 {10}
  EXPECT_NEAR(score_tree(t, pts), 200.0 / 9.0, 1e-12);
}

TEST(ScoreTree, MatchesOracleAndInvariances) {
  Rng rng(19);
  const auto space = build_space(oracle::grid_manifest({4, 3, 4}, {2, 3, 2}));
  const OptTree t({1, 0, 2}, {{0, 1, 0, 1}, {0, 1, 2}, {0, 0, 1, 1}});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PseudoPoint> pts;
    for (const auto& c : space.enumerate())
      if (uniform01(rng) < 0.6) pts.push_back({c, 100 * uniform01(rng), {1.0}, uniform01(rng) < 0.9, 0});
    const double s = score_tree(t, pts);
    EXPECT_NEAR(s, oracle::tree_score(t, pts), 1e-9 * std::max(1.0, s));
    auto shuffled = pts;
    shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(score_tree(t, shuffled), s, 1e-9 * std::max(1.0, s));
    auto shifted = pts;
    for (auto& p : shifted) p.predicted += 37.0;
    EXPECT_NEAR(score_tree(t, shifted), s, 1e-8 * std::max(1.0, s));
  }
}

TEST(SelectTree, SeparatingTreeWins) {
  // predictions depend only on variable 1's subset
  const auto space = build_space(oracle::grid_manifest({4, 4}, {2, 2}));
  std::vector<PseudoPoint> pts;
  for (const auto& c : space.enumerate()) pts.push_back({c, c.values[1] % 2 ? 90.0 : 10.0, {1.0}, true, 0});
  const OptTree mixing({0}, {{0, 1, 0, 1}, {0, 1, 0, 1}});
  const OptTree separating({1}, {{0, 1, 0, 1}, {0, 1, 0, 1}});
  const auto ch = select_tree({mixing, separating}, pts);
  EXPECT_EQ(ch.index, 1u);
  EXPECT_FALSE(ch.tied);
  EXPECT_LT(ch.scores[1], ch.scores[0]);
  EXPECT_NEAR(ch.scores[0], oracle::tree_score(mixing, pts), 1e-9);
}

TEST(SelectTree, SingleAndTied) {
  const OptTree t({0}, {{0, 1}});
  std::vector<PseudoPoint> pts{point({0}, 1), point({1}, 2)};
  const auto one = select_tree({t}, pts);
  EXPECT_EQ(one.index, 0u);
  EXPECT_FALSE(one.tied);
  const auto tie = select_tree({t, t, t}, pts);
  EXPECT_EQ(tie.index, 0u);
  EXPECT_TRUE(tie.tied);
  EXPECT_THROW(select_tree({}, pts), SchemaError);
}

TEST(Pseudo, JsonRoundTripAndValidation) {
  const auto space = build_space(oracle::grid_manifest({3, 2}, {1, 1}));
  std::vector<PseudoPoint> pts{point({0, 1}, 4.5, {0.6, 0.8}), point({2, 0}, -1.0, {1.0, 0.0})};
  pts[1].alive = false;
  pts[1].created_round = 4;
  const auto j = pseudo_to_json(space, pts);
  EXPECT_EQ(pseudo_to_json(space, pseudo_from_json(space, j)), j);
  auto bad = j;
  bad[0]["condition"] = {5, 0};
  EXPECT_THROW(pseudo_from_json(space, bad), CorruptStateError);

  PseudoConfig c;
  c.scope = PseudoScope::full_space;
  c.similarity_threshold = 0.9;
  const auto back = PseudoConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(PseudoConfig::from_json(json{{"similarity_threshold", 1.0}}), SchemaError);
  EXPECT_THROW(PseudoConfig::from_json(json{{"global_discard_fraction", 1.0}}), SchemaError);
  EXPECT_THROW(PseudoConfig::from_json(json{{"scope", "tree"}}), SchemaError);
}
