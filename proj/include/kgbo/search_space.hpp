#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace kgbo {

using json = nlohmann::json;

enum class VariableKind { categorical, numeric };

struct CandidateSpec {
  std::string id;
  std::string label;  // human-readable name; defaults to id
  std::map<std::string, double> properties;
  int subset = 0;
};

// One reaction variable. Categorical variables carry candidates; numeric ones
// carry ordered discrete levels with a parallel subset assignment.
struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::categorical;
  int importance_rank = 1;
  std::vector<CandidateSpec> candidates;
  std::vector<double> levels;
  std::vector<int> level_subsets;
  std::string unit;

  std::size_t size() const;
  int subset_of(int value) const;
  int subset_count() const;
  // Stable text identity of a value: candidate id, or the level printed with %g.
  std::string value_id(int value) const;
  std::optional<int> find_value(const std::string& id) const;
  // Properties used for clustering and ridge features. Numeric levels expose
  // their value as a one-dimensional property.
  std::vector<double> property_vector(int value) const;
  std::vector<std::string> property_keys() const;
};

// One value per variable, stored as indices into each variable's full value
// list (space variable order). Restricted spaces share the parent's indexing.
struct Condition {
  std::vector<int> values;
  auto operator<=>(const Condition&) const = default;
};

struct Observation {
  Condition condition;
  double value = 0.0;
  int round = 0;
};

// Product space over the variables (sorted by importance rank). A restricted
// space keeps the full variable definitions and narrows the allowed values.
class SearchSpace {
 public:
  static constexpr std::uint64_t default_enumeration_cap = 10'000'000;

  SearchSpace() = default;
  explicit SearchSpace(std::vector<VariableSpec> variables);

  const std::vector<VariableSpec>& variables() const { return variables_; }
  std::size_t variable_count() const { return variables_.size(); }
  const VariableSpec& variable(std::size_t i) const { return variables_.at(i); }
  std::optional<std::size_t> variable_index(const std::string& name) const;

  const std::vector<int>& allowed(std::size_t var) const { return allowed_.at(var); }
  bool is_restricted() const;
  std::uint64_t cardinality() const;
  bool contains(const Condition& c) const;

  // Narrow one variable to `values` (must be a subset of its current allowed set).
  SearchSpace restricted(std::size_t var, std::vector<int> values) const;

  // Every allowed condition in lexicographic (variable, value) order.
  std::vector<Condition> enumerate(std::uint64_t cap = default_enumeration_cap) const;

  std::size_t encoding_dim() const;
  std::vector<double> encode(const Condition& c) const;
  void encode_into(const Condition& c, std::span<double> out) const;
  Condition decode(std::span<const double> x) const;

  // Mixed-radix index over full (unrestricted) value lists; unique per condition.
  std::uint64_t flat_index(const Condition& c) const;
  std::uint64_t full_cardinality() const;

  json condition_to_json(const Condition& c) const;
  Condition condition_from_json(const json& j) const;
  std::string describe(const Condition& c) const;

 private:
  std::vector<VariableSpec> variables_;
  std::vector<std::vector<int>> allowed_;
};

// Parse and validate a manifest document. Variables come back sorted by rank.
SearchSpace build_space(const json& manifest);
SearchSpace load_space(const std::string& manifest_path);
json space_to_manifest(const SearchSpace& space);

}  // namespace kgbo
