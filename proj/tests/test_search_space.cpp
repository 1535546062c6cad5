#include <gtest/gtest.h>

#include <set>

#include "kgbo/error.hpp"
#include "kgbo/opt_tree.hpp"
#include "kgbo/search_space.hpp"
#include "oracles.hpp"

using namespace kgbo;

namespace {

json mixed_manifest() {
  return json::parse(R"({"variables": [
    {"name": "temperature", "rank": 2, "kind": "numeric", "levels": [80, 100, 120], "unit": "C"},
    {"name": "solvent", "rank": 1, "candidates": [
      {"id": "a", "subset": 0, "properties": {"eps": 2.0}},
      {"id": "b", "subset": 1, "properties": {"eps": 30.0}},
      {"id": "c", "subset": 1, "properties": {"eps": 35.0}}]}]})");
}

}  // namespace

TEST(SearchSpace, Table3ManifestCardinality) {
  const auto space = load_space(oracle::data_dir() + "/wetlab/manifest.json");
  ASSERT_EQ(space.variable_count(), 6u);
  EXPECT_EQ(space.cardinality(), 5u * 14 * 14 * 11 * 3 * 3);
  EXPECT_EQ(space.cardinality(), 97020u);
  EXPECT_EQ(space.variable(0).name, "catalyst");
  EXPECT_EQ(space.variable(5).name, "temperature");
}

TEST(SearchSpace, SingleCandidateSpace) {
  const auto space = build_space(oracle::grid_manifest({1}, {1}));
  EXPECT_EQ(space.cardinality(), 1u);
  EXPECT_EQ(space.enumerate().size(), 1u);
}

TEST(SearchSpace, RanksMustBePermutation) {
  auto m = oracle::grid_manifest({2, 2, 2}, {1, 1, 1});
  m["variables"][1]["rank"] = 1;
  try {
    build_space(m);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("ranks not a permutation"), std::string::npos);
  }
}

TEST(SearchSpace, ValidationNamesOffender) {
  auto dup = oracle::grid_manifest({2}, {1});
  dup["variables"][0]["candidates"][1]["id"] = "v0_0";
  EXPECT_THROW(build_space(dup), SchemaError);
  auto nosub = oracle::grid_manifest({2}, {1});
  nosub["variables"][0]["candidates"][0].erase("subset");
  try {
    build_space(nosub);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("x0"), std::string::npos);
  }
  auto gap = oracle::grid_manifest({3}, {1});
  gap["variables"][0]["candidates"][2]["subset"] = 2;
  EXPECT_THROW(build_space(gap), SchemaError);
  auto keys = oracle::grid_manifest({2}, {1});
  keys["variables"][0]["candidates"][1]["properties"] = {{"q", 1.0}};
  EXPECT_THROW(build_space(keys), SchemaError);
  auto duplevel = mixed_manifest();
  duplevel["variables"][0]["levels"] = {80, 80, 120};
  EXPECT_THROW(build_space(duplevel), SchemaError);
  EXPECT_THROW(build_space(json::object()), SchemaError);
}

TEST(SearchSpace, SortsByRank) {
  const auto space = build_space(mixed_manifest());
  EXPECT_EQ(space.variable(0).name, "solvent");
  EXPECT_EQ(space.variable(1).name, "temperature");
}

TEST(SearchSpace, EnumerationIsLexicographic) {
  const auto space = build_space(oracle::grid_manifest({2, 3}, {1, 1}));
  const auto all = space.enumerate();
  ASSERT_EQ(all.size(), 6u);
  std::vector<Condition> want;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 3; ++b) want.push_back(Condition{{a, b}});
  EXPECT_EQ(all, want);
}

TEST(SearchSpace, RestrictedEnumeration) {
  const auto space = build_space(oracle::grid_manifest({2, 3}, {1, 1}));
  const auto pinned = space.restricted(0, {1});
  EXPECT_EQ(pinned.cardinality(), 3u);
  const auto all = pinned.enumerate();
  ASSERT_EQ(all.size(), 3u);
  for (const auto& c : all) EXPECT_EQ(c.values[0], 1);
  EXPECT_TRUE(pinned.is_restricted());
  EXPECT_THROW(pinned.restricted(0, {0}), SchemaError);
  EXPECT_THROW(space.restricted(1, {}), SchemaError);
}

TEST(SearchSpace, SuzukiShapedEnumeration) {
  // 4 variables, 5760 combinations.
  const auto space = build_space(oracle::grid_manifest({15, 12, 8, 4}, {3, 4, 2, 2}));
  EXPECT_EQ(space.cardinality(), 5760u);
  const auto all = space.enumerate();
  EXPECT_EQ(all.size(), 5760u);
  EXPECT_EQ(std::set<Condition>(all.begin(), all.end()).size(), 5760u);
}

TEST(SearchSpace, EnumerationCapRefuses) {
  const auto space = build_space(oracle::grid_manifest({10, 10, 10}, {1, 1, 1}));
  EXPECT_THROW(space.enumerate(999), SchemaError);
  EXPECT_EQ(space.enumerate(1000).size(), 1000u);
}

TEST(SearchSpace, OneHotAndMinMaxEncoding) {
  const auto space = build_space(mixed_manifest());
  EXPECT_EQ(space.encoding_dim(), 4u);
  const auto x = space.encode(Condition{{1, 1}});
  EXPECT_EQ(x, (std::vector<double>{0, 1, 0, 0.5}));
  const auto y = space.encode(Condition{{2, 2}});
  EXPECT_EQ(y, (std::vector<double>{0, 0, 1, 1.0}));
  EXPECT_THROW(space.encode(Condition{{3, 0}}), SchemaError);
  EXPECT_THROW(space.encode(Condition{{0}}), SchemaError);
}

TEST(SearchSpace, EncodingStableUnderRestriction) {
  const auto space = build_space(mixed_manifest());
  const auto sub = space.restricted(1, {1, 2});
  EXPECT_EQ(sub.encode(Condition{{0, 1}}), space.encode(Condition{{0, 1}}));
}

TEST(SearchSpace, EncodeInjectiveAndRoundTrips) {
  for (const auto& m : {mixed_manifest(), oracle::grid_manifest({3, 4, 2, 5}, {1, 2, 1, 3})}) {
    const auto space = build_space(m);
    std::set<std::vector<double>> seen;
    for (const auto& c : space.enumerate()) {
      const auto x = space.encode(c);
      EXPECT_TRUE(seen.insert(x).second);
      EXPECT_EQ(space.decode(x), c);
    }
  }
}

TEST(SearchSpace, FlatIndexIsBijective) {
  const auto space = build_space(oracle::grid_manifest({3, 4, 2}, {1, 1, 1}));
  std::set<std::uint64_t> idx;
  for (const auto& c : space.enumerate()) idx.insert(space.flat_index(c));
  EXPECT_EQ(idx.size(), 24u);
  EXPECT_EQ(*idx.rbegin(), 23u);
}

TEST(SearchSpace, ConditionJsonRoundTrip) {
  const auto space = build_space(mixed_manifest());
  for (const auto& c : space.enumerate()) {
    const auto j = space.condition_to_json(c);
    EXPECT_EQ(space.condition_from_json(j), c);
  }
  EXPECT_EQ(space.condition_from_json(json{{"solvent", "b"}, {"temperature", 120}}), (Condition{{1, 2}}));
  EXPECT_THROW(space.condition_from_json(json{{"solvent", "zz"}, {"temperature", 120}}), SchemaError);
  EXPECT_THROW(space.condition_from_json(json{{"solvent", "a"}}), SchemaError);
  EXPECT_THROW(space.condition_from_json(json{{"solvent", "a"}, {"temperature", 90}}), SchemaError);
}

TEST(SearchSpace, ManifestRoundTrip) {
  const auto space = build_space(mixed_manifest());
  const auto again = build_space(space_to_manifest(space));
  EXPECT_EQ(space_to_manifest(again), space_to_manifest(space));
  EXPECT_EQ(again.cardinality(), space.cardinality());
}

TEST(SearchSpace, RestrictRootIsIdentity) {
  const auto space = build_space(oracle::grid_manifest({4, 3}, {2, 3}));
  const OptTree t({0, 1}, {{0, 1, 0, 1}, {0, 1, 2}});
  const auto root = restrict(space, t, t.root());
  EXPECT_EQ(root.enumerate(), space.enumerate());
}

TEST(SearchSpace, LeafRestrictionsPartitionTheSpace) {
  const auto space = build_space(oracle::grid_manifest({4, 3, 5}, {2, 3, 2}));
  const OptTree t({2, 0, 1}, {{0, 1, 0, 1}, {0, 1, 2}, {0, 0, 1, 1, 1}});
  std::multiset<Condition> all;
  for (auto leaf : t.leaves()) {
    const auto sub = restrict(space, t, leaf);
    for (const auto& c : sub.enumerate()) {
      all.insert(c);
      EXPECT_EQ(t.leaf_of(c), leaf);
    }
  }
  const auto full = space.enumerate();
  EXPECT_EQ(all, std::multiset<Condition>(full.begin(), full.end()));
}

TEST(SearchSpace, SubsetZeroPathCardinality) {
  const auto space = build_space(oracle::grid_manifest({4, 3, 5}, {2, 3, 2}));
  const OptTree t({0, 1, 2}, {{0, 1, 0, 1}, {0, 1, 2}, {0, 1, 0, 1, 0}});
  NodeId id = t.root();
  while (!t.node(id).is_leaf()) id = t.node(id).children.front();
  // subset 0 sizes counted by hand: 2 * 1 * 3
  EXPECT_EQ(restrict(space, t, id).cardinality(), 6u);
}

TEST(SearchSpace, RestrictionToEmptinessIsAnError) {
  const auto space = build_space(oracle::grid_manifest({4, 3}, {2, 3}));
  const OptTree t({0, 1}, {{0, 1, 0, 1}, {0, 1, 2}});
  const auto narrowed = space.restricted(0, {0, 2});  // only subset-0 values left
  const NodeId subset1 = t.node(t.root()).children[1];
  EXPECT_THROW(restrict(narrowed, t, subset1), SchemaError);
}
