#pragma once

#include <set>
#include <vector>

#include "kgbo/opt_tree.hpp"
#include "kgbo/predictor.hpp"
#include "kgbo/rng.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

struct PseudoPoint {
  Condition condition;
  double predicted = 0.0;
  std::vector<double> embedding;
  bool alive = true;
  int created_round = 0;
};

enum class PseudoScope { leaf, full_space };

struct PseudoConfig {
  bool enabled = true;
  double similarity_threshold = 0.95;
  double global_discard_fraction = 0.2;
  double initial_weight = 0.25;
  PseudoScope scope = PseudoScope::leaf;

  json to_json() const;
  static PseudoConfig from_json(const json& j);
};

// One live point per enumerated condition of `subspace` that is not in `observed`.
std::vector<PseudoPoint> generate(const PerformancePredictor& predictor, const SearchSpace& subspace,
                                  const std::set<Condition>& observed, int round,
                                  std::uint64_t cap = SearchSpace::default_enumeration_cap);

// Retire every live point whose embedding has cosine similarity >= threshold
// with `observation_embedding`. Returns the number retired.
std::size_t local_removal(std::vector<PseudoPoint>& points, std::span<const double> observation_embedding,
                          double threshold);

// Retire exactly ceil(fraction * live) live points, sampled without
// replacement with weights (L - r + 1) for descending-prediction rank r.
std::size_t global_removal(std::vector<PseudoPoint>& points, double fraction, Rng& rng);

// Rank weights used by global_removal, in the order of `points`' live entries
// (0 for dead ones).
std::vector<double> global_removal_weights(const std::vector<PseudoPoint>& points);

// Sum over all nodes of the population variance of live predictions inside
// the node; nodes with fewer than 2 points contribute 0.
double score_tree(const OptTree& tree, const std::vector<PseudoPoint>& points);

struct TreeChoice {
  std::size_t index = 0;
  bool tied = false;
  std::vector<double> scores;
};

// argmin of score_tree; ties go to the earliest candidate.
TreeChoice select_tree(const std::vector<OptTree>& candidates, const std::vector<PseudoPoint>& points);

std::size_t live_count(const std::vector<PseudoPoint>& points);

json pseudo_to_json(const SearchSpace& space, const std::vector<PseudoPoint>& points);
std::vector<PseudoPoint> pseudo_from_json(const SearchSpace& space, const json& j);

}  // namespace kgbo
