#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "kgbo/rng.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

using NodeId = int;

struct TreeNode {
  NodeId id = 0;
  int level = 0;
  int variable = -1;  // index into the space's variables; -1 at the root
  int subset = -1;    // subset of `variable` this node selects; -1 at the root
  NodeId parent = -1;
  std::vector<NodeId> children;  // ordered by subset index
  std::int64_t n = 0;
  double q = 0.0;

  bool is_leaf() const { return children.empty(); }
  double mean() const { return n > 0 ? q / static_cast<double>(n) : 0.0; }
};

// Fixed-shape decomposition of a search space. Level l (1-based) splits on
// `level_variable(l-1)`; each node has one child per subset of that variable.
class OptTree {
 public:
  static constexpr double default_cp = 10.0;

  OptTree() = default;
  // `partition[var][value]` is the subset index of that value; `level_order`
  // lists space variable indices from the top level down.
  OptTree(std::vector<int> level_order, std::vector<std::vector<int>> partition, double c_p = default_cp);

  NodeId root() const { return 0; }
  const TreeNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  TreeNode& node(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::size_t depth() const { return level_order_.size(); }
  const std::vector<int>& level_order() const { return level_order_; }
  const std::vector<std::vector<int>>& partition() const { return partition_; }
  int subset_count(int var) const { return subset_count_.at(static_cast<std::size_t>(var)); }
  double c_p() const { return c_p_; }
  void set_c_p(double c_p);

  std::vector<NodeId> leaves() const;
  std::size_t leaf_count() const;
  std::vector<NodeId> path_to(NodeId id) const;  // root first
  NodeId leaf_of(const Condition& c) const;
  std::vector<NodeId> path_of(const Condition& c) const { return path_to(leaf_of(c)); }

  // Does node `id`'s subset of conditions contain `c`?
  bool contains(NodeId id, const Condition& c) const;

  void reset_statistics();
  // Structure only, ignoring statistics.
  bool same_structure(const OptTree& other) const;

  json to_json() const;
  static OptTree from_json(const json& j);

 private:
  std::vector<TreeNode> nodes_;
  std::vector<int> level_order_;
  std::vector<std::vector<int>> partition_;
  std::vector<int> subset_count_;
  double c_p_ = default_cp;
};

// mean + c_p * sqrt(ln(parent_visits) / n); +inf for unvisited nodes.
double ucb(const TreeNode& node, std::int64_t parent_visits, double c_p);

// Root-to-leaf path choosing the max-UCB child per level; exact ties broken
// uniformly with `rng`.
std::vector<NodeId> select_path(const OptTree& tree, Rng& rng);

// n += 1 and Q += reward on every node of a valid root-to-leaf path.
void backpropagate(OptTree& tree, const std::vector<NodeId>& path, double reward);

// q leaves from successive select_path calls separated by virtual visits
// (n + 1, Q + current leaf mean). The virtual visits are undone before return.
std::vector<NodeId> batch_select(OptTree& tree, int q, Rng& rng);

// Subspace of a node: allowed values per variable narrowed to the subsets on
// its root path.
SearchSpace restrict(const SearchSpace& space, const OptTree& tree, NodeId node);

}  // namespace kgbo
