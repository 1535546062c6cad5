#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgbo/csv.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

// Complete lookup-table objective: one value for every condition of the space.
struct LookupDataset {
  std::string name;
  std::string objective = "yield";
  SearchSpace space;
  std::vector<double> values;  // indexed by SearchSpace::flat_index

  double value(const Condition& c) const;
  double max() const;
  Condition argmax() const;  // first maximizer in enumeration order
  // Value at the given upper quantile, e.g. 0.9 for the top-decile threshold.
  double quantile(double q) const;
};

// CSV columns: one per variable (by name, any order) plus `objective`.
LookupDataset load_dataset(const std::string& csv_path, const std::string& manifest_path);
LookupDataset dataset_from_csv(const CsvTable& table, const SearchSpace& space, std::string name);
CsvTable dataset_to_csv(const LookupDataset& dataset);

struct SynthVariable {
  std::string name;
  int candidates = 2;
  int subsets = 1;
};

// Bonus applied to every condition whose subsets match all listed entries.
struct BlockEffect {
  std::map<std::string, int> subsets;
  double effect = 0.0;
};

// Objective = base + block effects + per-subset effects + per-value effects
// + pairwise value interactions + Gaussian noise, clipped to [0, 100].
// `seed` draws the subset-level structure (and candidate properties);
// `detail_seed` draws per-value effects, interactions and noise, so two specs
// differing only in detail_seed describe related tasks over one structure.
struct SynthSpec {
  std::string name = "synthetic";
  std::vector<SynthVariable> variables;
  double base = 20.0;
  std::vector<BlockEffect> blocks;
  double subset_effect_sd = 4.0;
  double value_effect_sd = 3.0;
  double interaction_sd = 2.0;
  double noise_sd = 3.0;
  int property_dim = 2;
  std::uint64_t seed = 0;
  std::uint64_t detail_seed = 1;

  json to_json() const;
  static SynthSpec from_json(const json& j);
};

struct SynthDataset {
  LookupDataset dataset;
  json manifest;
  json truth;  // subset effects, blocks, argmax and max
};

SynthDataset synth_dataset(const SynthSpec& spec);

// 6x6x4x4 space (576 conditions, subsets 3/3/2/2) with one high-yield block,
// noise sd 3. The acceptance gates and the CLI's default synthetic run use it.
SynthSpec reference_synth_spec(std::uint64_t detail_seed = 1);

}  // namespace kgbo
