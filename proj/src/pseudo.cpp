#include "kgbo/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kgbo/error.hpp"
#include "kgbo/kernels.hpp"

namespace kgbo {

json PseudoConfig::to_json() const {
  return {{"enabled", enabled},
          {"similarity_threshold", similarity_threshold},
          {"global_discard_fraction", global_discard_fraction},
          {"initial_weight", initial_weight},
          {"scope", scope == PseudoScope::leaf ? "leaf" : "full"}};
}

PseudoConfig PseudoConfig::from_json(const json& j) {
  PseudoConfig c;
  c.enabled = j.value("enabled", c.enabled);
  c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
  c.global_discard_fraction = j.value("global_discard_fraction", c.global_discard_fraction);
  c.initial_weight = j.value("initial_weight", c.initial_weight);
  const std::string scope = j.value("scope", std::string("leaf"));
  if (scope == "leaf")
    c.scope = PseudoScope::leaf;
  else if (scope == "full")
    c.scope = PseudoScope::full_space;
  else
    throw SchemaError("pseudo scope must be 'leaf' or 'full'");
  if (!(c.similarity_threshold > 0.0 && c.similarity_threshold < 1.0))
    throw SchemaError("similarity_threshold must lie in (0, 1)");
  if (!(c.global_discard_fraction >= 0.0 && c.global_discard_fraction < 1.0))
    throw SchemaError("global_discard_fraction must lie in [0, 1)");
  if (!(c.initial_weight > 0.0 && c.initial_weight <= 1.0)) throw SchemaError("initial_weight must lie in (0, 1]");
  return c;
}

std::vector<PseudoPoint> generate(const PerformancePredictor& predictor, const SearchSpace& subspace,
                                  const std::set<Condition>& observed, int round, std::uint64_t cap) {
  std::vector<Condition> conds;
  for (auto& c : subspace.enumerate(cap))
    if (!observed.count(c)) conds.push_back(std::move(c));
  const auto values = predictor.predict(conds);
  auto embeddings = predictor.embed(conds);
  std::vector<PseudoPoint> out;
  out.reserve(conds.size());
  for (std::size_t i = 0; i < conds.size(); ++i) {
    if (!std::isfinite(values[i])) throw ValueError("predictor produced a non-finite pseudo-label");
    out.push_back({std::move(conds[i]), values[i], std::move(embeddings[i]), true, round});
  }
  return out;
}

std::size_t local_removal(std::vector<PseudoPoint>& points, std::span<const double> observation_embedding,
                          double threshold) {
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i].alive) live.push_back(i);
  if (live.empty()) return 0;
  const auto dim = static_cast<Eigen::Index>(observation_embedding.size());
  Eigen::MatrixXd emb(dim, static_cast<Eigen::Index>(live.size()));
  for (std::size_t k = 0; k < live.size(); ++k) {
    const auto& e = points[live[k]].embedding;
    if (static_cast<Eigen::Index>(e.size()) != dim) throw SchemaError("pseudo-point embedding dimension mismatch");
    emb.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(e.data(), dim);
  }
  const Eigen::VectorXd query = Eigen::Map<const Eigen::VectorXd>(observation_embedding.data(), dim);
  std::vector<double> sims(live.size());
  kernels::dot_columns(emb, query, sims);
  std::size_t retired = 0;
  for (std::size_t k = 0; k < live.size(); ++k) {
    // Embeddings are unit-norm; the small slack absorbs rounding at sim = 1.
    if (sims[k] >= threshold - 1e-12) {
      points[live[k]].alive = false;
      ++retired;
    }
  }
  return retired;
}

std::vector<double> global_removal_weights(const std::vector<PseudoPoint>& points) {
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i].alive) live.push_back(i);
  // Rank 1 = highest prediction; equal predictions keep their input order.
  std::stable_sort(live.begin(), live.end(),
                   [&](std::size_t a, std::size_t b) { return points[a].predicted > points[b].predicted; });
  const double total = static_cast<double>(live.size());
  std::vector<double> w(points.size(), 0.0);
  for (std::size_t r = 0; r < live.size(); ++r) w[live[r]] = total - static_cast<double>(r);
  return w;
}

std::size_t global_removal(std::vector<PseudoPoint>& points, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ValueError("global discard fraction must lie in [0, 1)");
  const std::size_t live = live_count(points);
  const auto m = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(live) - 1e-12));
  if (m == 0) return 0;
  std::vector<double> w = global_removal_weights(points);
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double u = uniform01(rng) * total;
    std::size_t pick = 0;
    for (pick = 0; pick < w.size(); ++pick) {
      if (w[pick] <= 0.0) continue;
      if (u < w[pick]) break;
      u -= w[pick];
    }
    if (pick == w.size()) {
      // u landed on the upper edge through rounding; take the last candidate.
      for (pick = w.size(); pick-- > 0;)
        if (w[pick] > 0.0) break;
    }
    points[pick].alive = false;
    total -= w[pick];
    w[pick] = 0.0;
  }
  return m;
}

double score_tree(const OptTree& tree, const std::vector<PseudoPoint>& points) {
  std::vector<std::vector<double>> per_node(tree.node_count());
  for (const auto& p : points) {
    if (!p.alive) continue;
    for (NodeId id : tree.path_of(p.condition)) per_node[static_cast<std::size_t>(id)].push_back(p.predicted);
  }
  double score = 0.0;
  for (const auto& vals : per_node) {
    if (vals.size() < 2) continue;
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    score += ss / static_cast<double>(vals.size());
  }
  return score;
}

TreeChoice select_tree(const std::vector<OptTree>& candidates, const std::vector<PseudoPoint>& points) {
  if (candidates.empty()) throw SchemaError("select_tree needs at least one candidate tree");
  TreeChoice choice;
  for (const auto& t : candidates) choice.scores.push_back(score_tree(t, points));
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (choice.scores[i] < choice.scores[choice.index]) choice.index = i;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (i != choice.index && choice.scores[i] == choice.scores[choice.index]) choice.tied = true;
  return choice;
}

std::size_t live_count(const std::vector<PseudoPoint>& points) {
  return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.alive; }));
}

json pseudo_to_json(const SearchSpace&, const std::vector<PseudoPoint>& points) {
  json arr = json::array();
  for (const auto& p : points) {
    arr.push_back({{"condition", p.condition.values},
                   {"predicted", p.predicted},
                   {"embedding", p.embedding},
                   {"alive", p.alive},
                   {"created_round", p.created_round}});
  }
  return arr;
}

std::vector<PseudoPoint> pseudo_from_json(const SearchSpace& space, const json& j) {
  std::vector<PseudoPoint> out;
  for (const auto& e : j) {
    PseudoPoint p;
    p.condition.values = e.at("condition").get<std::vector<int>>();
    if (!space.contains(p.condition)) throw CorruptStateError("pseudo-point outside the space");
    p.predicted = e.at("predicted").get<double>();
    p.embedding = e.at("embedding").get<std::vector<double>>();
    p.alive = e.at("alive").get<bool>();
    p.created_round = e.at("created_round").get<int>();
    if (!std::isfinite(p.predicted)) throw CorruptStateError("non-finite pseudo-label");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace kgbo
