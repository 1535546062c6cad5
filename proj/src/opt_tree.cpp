#include "kgbo/opt_tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "kgbo/error.hpp"

namespace kgbo {

OptTree::OptTree(std::vector<int> level_order, std::vector<std::vector<int>> partition, double c_p)
    : level_order_(std::move(level_order)), partition_(std::move(partition)), c_p_(c_p) {
  if (!(c_p_ >= 0.0)) throw SchemaError("exploration constant c_p must be non-negative");
  subset_count_.resize(partition_.size(), 0);
  for (std::size_t v = 0; v < partition_.size(); ++v)
    for (int s : partition_[v]) subset_count_[v] = std::max(subset_count_[v], s + 1);
  for (std::size_t v = 0; v < partition_.size(); ++v) {
    std::vector<bool> used(static_cast<std::size_t>(subset_count_[v]), false);
    for (int s : partition_[v]) {
      if (s < 0) throw SchemaError("negative subset index in tree partition");
      used[static_cast<std::size_t>(s)] = true;
    }
    if (std::find(used.begin(), used.end(), false) != used.end())
      throw SchemaError("tree partition subsets are not contiguous");
  }
  std::vector<bool> seen(partition_.size(), false);
  for (int var : level_order_) {
    if (var < 0 || static_cast<std::size_t>(var) >= partition_.size())
      throw SchemaError("tree level references an unknown variable");
    if (seen[static_cast<std::size_t>(var)]) throw SchemaError("tree level order repeats a variable");
    seen[static_cast<std::size_t>(var)] = true;
  }

  nodes_.push_back(TreeNode{});
  std::vector<NodeId> frontier{0};
  for (std::size_t level = 0; level < level_order_.size(); ++level) {
    const int var = level_order_[level];
    std::vector<NodeId> next;
    for (NodeId parent : frontier) {
      for (int s = 0; s < subset_count_[static_cast<std::size_t>(var)]; ++s) {
        TreeNode child;
        child.id = static_cast<NodeId>(nodes_.size());
        child.level = static_cast<int>(level) + 1;
        child.variable = var;
        child.subset = s;
        child.parent = parent;
        nodes_[static_cast<std::size_t>(parent)].children.push_back(child.id);
        next.push_back(child.id);
        nodes_.push_back(std::move(child));
      }
    }
    frontier = std::move(next);
  }
}

void OptTree::set_c_p(double c_p) {
  if (!(c_p >= 0.0)) throw SchemaError("exploration constant c_p must be non-negative");
  c_p_ = c_p;
}

std::vector<NodeId> OptTree::leaves() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_)
    if (n.is_leaf()) out.push_back(n.id);
  return out;
}

std::size_t OptTree::leaf_count() const {
  std::size_t k = 0;
  for (const auto& n : nodes_) k += n.is_leaf() ? 1 : 0;
  return k;
}

std::vector<NodeId> OptTree::path_to(NodeId id) const {
  std::vector<NodeId> path;
  for (NodeId cur = id; cur >= 0; cur = node(cur).parent) path.push_back(cur);
  std::reverse(path.begin(), path.end());
  return path;
}

NodeId OptTree::leaf_of(const Condition& c) const {
  if (c.values.size() != partition_.size()) throw SchemaError("condition does not match the tree's space");
  NodeId cur = root();
  for (int var : level_order_) {
    const int value = c.values[static_cast<std::size_t>(var)];
    const auto& part = partition_[static_cast<std::size_t>(var)];
    if (value < 0 || static_cast<std::size_t>(value) >= part.size())
      throw SchemaError("condition value outside the tree's partition");
    cur = node(cur).children.at(static_cast<std::size_t>(part[static_cast<std::size_t>(value)]));
  }
  return cur;
}

bool OptTree::contains(NodeId id, const Condition& c) const {
  for (NodeId cur = id; cur > 0; cur = node(cur).parent) {
    const auto& n = node(cur);
    const auto var = static_cast<std::size_t>(n.variable);
    if (partition_[var].at(static_cast<std::size_t>(c.values.at(var))) != n.subset) return false;
  }
  return true;
}

void OptTree::reset_statistics() {
  for (auto& n : nodes_) {
    n.n = 0;
    n.q = 0.0;
  }
}

bool OptTree::same_structure(const OptTree& other) const {
  return level_order_ == other.level_order_ && partition_ == other.partition_;
}

json OptTree::to_json() const {
  json nodes = json::array();
  for (const auto& n : nodes_) {
    nodes.push_back({{"id", n.id},
                     {"level", n.level},
                     {"variable", n.variable},
                     {"subset", n.subset},
                     {"parent", n.parent},
                     {"children", n.children},
                     {"n", n.n},
                     {"Q", n.q}});
  }
  return {{"c_p", c_p_}, {"level_order", level_order_}, {"partition", partition_}, {"nodes", std::move(nodes)}};
}

OptTree OptTree::from_json(const json& j) {
  OptTree t(j.at("level_order").get<std::vector<int>>(), j.at("partition").get<std::vector<std::vector<int>>>(),
            j.at("c_p").get<double>());
  const auto& nodes = j.at("nodes");
  if (nodes.size() != t.nodes_.size()) throw CorruptStateError("tree node count does not match its structure");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& n = t.nodes_[i];
    if (nodes[i].at("id").get<int>() != n.id || nodes[i].at("children").get<std::vector<int>>() != n.children)
      throw CorruptStateError("tree node layout does not match its structure");
    n.n = nodes[i].at("n").get<std::int64_t>();
    n.q = nodes[i].at("Q").get<double>();
    if (n.n < 0) throw CorruptStateError("negative visit count in tree");
  }
  return t;
}

double ucb(const TreeNode& node, std::int64_t parent_visits, double c_p) {
  if (node.n == 0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(node.n);
  const double lnp = parent_visits > 0 ? std::log(static_cast<double>(parent_visits)) : 0.0;
  return node.q / n + c_p * std::sqrt(lnp / n);
}

std::vector<NodeId> select_path(const OptTree& tree, Rng& rng) {
  std::vector<NodeId> path{tree.root()};
  std::vector<NodeId> best;
  while (!tree.node(path.back()).is_leaf()) {
    const auto& parent = tree.node(path.back());
    double best_score = -std::numeric_limits<double>::infinity();
    best.clear();
    for (NodeId c : parent.children) {
      const double s = ucb(tree.node(c), parent.n, tree.c_p());
      if (s > best_score) {
        best_score = s;
        best.assign(1, c);
      } else if (s == best_score) {
        best.push_back(c);
      }
    }
    path.push_back(best.size() == 1 ? best.front() : best[uniform_below(rng, best.size())]);
  }
  return path;
}

namespace {

void check_path(const OptTree& tree, const std::vector<NodeId>& path) {
  if (path.empty() || path.front() != tree.root()) throw SchemaError("path must start at the root");
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (path[i] < 0 || static_cast<std::size_t>(path[i]) >= tree.node_count() || tree.node(path[i]).parent != path[i - 1])
      throw SchemaError("path is not a chain of parent/child nodes");
  }
  if (!tree.node(path.back()).is_leaf()) throw SchemaError("path must end at a leaf");
}

}  // namespace

void backpropagate(OptTree& tree, const std::vector<NodeId>& path, double reward) {
  check_path(tree, path);
  for (NodeId id : path) {
    auto& n = tree.node(id);
    n.n += 1;
    n.q += reward;
  }
}

std::vector<NodeId> batch_select(OptTree& tree, int q, Rng& rng) {
  if (q < 1) throw SchemaError("batch size must be at least 1");
  std::vector<std::pair<std::int64_t, double>> saved;
  saved.reserve(tree.node_count());
  for (const auto& n : tree.nodes()) saved.emplace_back(n.n, n.q);

  std::vector<NodeId> out;
  out.reserve(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) {
    const auto path = select_path(tree, rng);
    const double virtual_reward = tree.node(path.back()).mean();
    for (NodeId id : path) {
      auto& n = tree.node(id);
      n.n += 1;
      n.q += virtual_reward;
    }
    out.push_back(path.back());
  }
  for (std::size_t i = 0; i < saved.size(); ++i) {
    auto& n = tree.node(static_cast<NodeId>(i));
    n.n = saved[i].first;
    n.q = saved[i].second;
  }
  return out;
}

SearchSpace restrict(const SearchSpace& space, const OptTree& tree, NodeId id) {
  if (tree.partition().size() != space.variable_count())
    throw SchemaError("tree was not built over this space");
  if (id < 0 || static_cast<std::size_t>(id) >= tree.node_count()) throw SchemaError("unknown tree node");
  SearchSpace out = space;
  for (NodeId cur = id; cur > 0; cur = tree.node(cur).parent) {
    const auto& n = tree.node(cur);
    const auto var = static_cast<std::size_t>(n.variable);
    std::vector<int> keep;
    for (int v : out.allowed(var))
      if (tree.partition()[var].at(static_cast<std::size_t>(v)) == n.subset) keep.push_back(v);
    if (keep.empty())
      throw SchemaError("subset " + std::to_string(n.subset) + " of '" + space.variable(var).name +
                        "' has no allowed values in this space");
    out = out.restricted(var, std::move(keep));
  }
  return out;
}

}  // namespace kgbo
