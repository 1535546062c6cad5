#include "kgbo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "kgbo/error.hpp"
#include "kgbo/rng.hpp"

namespace kgbo {

double LookupDataset::value(const Condition& c) const {
  if (!space.contains(c)) throw SchemaError("condition missing from lookup table: " + space.describe(c));
  return values.at(space.flat_index(c));
}

double LookupDataset::max() const { return *std::max_element(values.begin(), values.end()); }

Condition LookupDataset::argmax() const {
  const auto all = space.enumerate();
  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i)
    if (value(all[i]) > value(all[best])) best = i;
  return all[best];
}

double LookupDataset::quantile(double q) const {
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
  return v[idx];
}

LookupDataset dataset_from_csv(const CsvTable& table, const SearchSpace& space, std::string name) {
  std::vector<std::size_t> col_of_var(space.variable_count());
  for (std::size_t i = 0; i < space.variable_count(); ++i) {
    auto it = std::find(table.header.begin(), table.header.end(), space.variable(i).name);
    if (it == table.header.end()) throw SchemaError("dataset CSV lacks a column for '" + space.variable(i).name + "'");
    col_of_var[i] = static_cast<std::size_t>(it - table.header.begin());
  }
  auto obj = std::find(table.header.begin(), table.header.end(), "objective");
  if (obj == table.header.end()) throw SchemaError("dataset CSV lacks an 'objective' column");
  const auto obj_col = static_cast<std::size_t>(obj - table.header.begin());
  if (table.header.size() != space.variable_count() + 1)
    throw SchemaError("dataset CSV must have exactly the variable columns plus 'objective'");

  LookupDataset ds;
  ds.name = std::move(name);
  ds.space = space;
  ds.values.assign(space.full_cardinality(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> seen(ds.values.size(), 0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    Condition c;
    for (std::size_t i = 0; i < space.variable_count(); ++i) {
      auto idx = space.variable(i).find_value(row[col_of_var[i]]);
      if (!idx)
        throw SchemaError("dataset row " + std::to_string(r + 2) + ": unknown candidate '" + row[col_of_var[i]] +
                          "' for '" + space.variable(i).name + "'");
      c.values.push_back(*idx);
    }
    if (!space.contains(c)) throw SchemaError("dataset row " + std::to_string(r + 2) + " lies outside the space");
    const auto flat = space.flat_index(c);
    if (seen[flat]) throw SchemaError("duplicate dataset row for " + space.describe(c));
    seen[flat] = 1;
    char* end = nullptr;
    const double v = std::strtod(row[obj_col].c_str(), &end);
    if (end == row[obj_col].c_str() || *end != '\0' || !std::isfinite(v))
      throw ValueError("dataset row " + std::to_string(r + 2) + ": objective '" + row[obj_col] + "' is not finite");
    ds.values[flat] = v;
  }
  for (const auto& c : space.enumerate()) {
    if (!seen[space.flat_index(c)]) throw SchemaError("dataset is incomplete: missing combination " + space.describe(c));
  }
  if (table.rows.size() != space.cardinality())
    throw SchemaError("dataset row count does not equal the space cardinality");
  return ds;
}

LookupDataset load_dataset(const std::string& csv_path, const std::string& manifest_path) {
  return dataset_from_csv(read_csv(csv_path), load_space(manifest_path),
                          std::filesystem::path(csv_path).stem().string());
}

CsvTable dataset_to_csv(const LookupDataset& ds) {
  CsvTable t;
  for (const auto& v : ds.space.variables()) t.header.push_back(v.name);
  t.header.push_back("objective");
  char buf[64];
  for (const auto& c : ds.space.enumerate()) {
    std::vector<std::string> row;
    for (std::size_t i = 0; i < c.values.size(); ++i) row.push_back(ds.space.variable(i).value_id(c.values[i]));
    std::snprintf(buf, sizeof(buf), "%.17g", ds.value(c));
    row.emplace_back(buf);
    t.rows.push_back(std::move(row));
  }
  return t;
}

json SynthSpec::to_json() const {
  json vars = json::array();
  for (const auto& v : variables) vars.push_back({{"name", v.name}, {"candidates", v.candidates}, {"subsets", v.subsets}});
  json bl = json::array();
  for (const auto& b : blocks) bl.push_back({{"subsets", b.subsets}, {"effect", b.effect}});
  return {{"name", name},
          {"variables", vars},
          {"base", base},
          {"blocks", bl},
          {"subset_effect_sd", subset_effect_sd},
          {"value_effect_sd", value_effect_sd},
          {"interaction_sd", interaction_sd},
          {"noise_sd", noise_sd},
          {"property_dim", property_dim},
          {"seed", seed},
          {"detail_seed", detail_seed}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  s.name = j.value("name", s.name);
  for (const auto& v : j.at("variables"))
    s.variables.push_back({v.at("name").get<std::string>(), v.at("candidates").get<int>(), v.value("subsets", 1)});
  if (j.contains("blocks"))
    for (const auto& b : j["blocks"])
      s.blocks.push_back({b.at("subsets").get<std::map<std::string, int>>(), b.at("effect").get<double>()});
  s.base = j.value("base", s.base);
  s.subset_effect_sd = j.value("subset_effect_sd", s.subset_effect_sd);
  s.value_effect_sd = j.value("value_effect_sd", s.value_effect_sd);
  s.interaction_sd = j.value("interaction_sd", s.interaction_sd);
  s.noise_sd = j.value("noise_sd", s.noise_sd);
  s.property_dim = j.value("property_dim", s.property_dim);
  s.seed = j.value("seed", s.seed);
  s.detail_seed = j.value("detail_seed", s.detail_seed);
  return s;
}

SynthDataset synth_dataset(const SynthSpec& spec) {
  if (spec.variables.empty()) throw SchemaError("synthetic spec declares no variables");
  const std::size_t nv = spec.variables.size();
  Rng structure(splitmix64(spec.seed ^ 0x737472756374ULL));
  Rng detail(splitmix64(spec.detail_seed ^ 0x64657461696cULL));

  json vars = json::array();
  std::vector<std::vector<int>> subset_of(nv);
  std::vector<std::vector<double>> subset_effect(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto& sv = spec.variables[i];
    if (sv.candidates < 1 || sv.subsets < 1 || sv.subsets > sv.candidates)
      throw SchemaError("synthetic variable '" + sv.name + "' needs 1 <= subsets <= candidates");
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(sv.subsets));
    for (auto& c : centers)
      for (int k = 0; k < spec.property_dim; ++k) c.push_back(-3.0 + 6.0 * uniform01(structure));
    for (int s = 0; s < sv.subsets; ++s) subset_effect[i].push_back(spec.subset_effect_sd * standard_normal(structure));
    json cands = json::array();
    for (int c = 0; c < sv.candidates; ++c) {
      const int s = c * sv.subsets / sv.candidates;
      subset_of[i].push_back(s);
      json props = json::object();
      for (int k = 0; k < spec.property_dim; ++k)
        props["p" + std::to_string(k)] = centers[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)] +
                                         0.3 * standard_normal(structure);
      cands.push_back({{"id", sv.name + "_" + std::to_string(c)}, {"subset", s}, {"properties", props}});
    }
    vars.push_back({{"name", sv.name}, {"rank", static_cast<int>(i) + 1}, {"kind", "categorical"}, {"candidates", cands}});
  }
  json manifest = {{"variables", vars}};
  SearchSpace space = build_space(manifest);

  std::vector<std::vector<double>> value_effect(nv);
  for (std::size_t i = 0; i < nv; ++i)
    for (int c = 0; c < spec.variables[i].candidates; ++c) value_effect[i].push_back(spec.value_effect_sd * standard_normal(detail));
  // interaction[i][j][a * |j| + b]
  std::vector<std::vector<std::vector<double>>> interaction(nv, std::vector<std::vector<double>>(nv));
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = i + 1; j < nv; ++j) {
      auto& t = interaction[i][j];
      t.resize(static_cast<std::size_t>(spec.variables[i].candidates * spec.variables[j].candidates));
      for (auto& x : t) x = spec.interaction_sd * standard_normal(detail);
    }

  std::vector<std::vector<std::pair<std::size_t, int>>> blocks;
  for (const auto& b : spec.blocks) {
    std::vector<std::pair<std::size_t, int>> req;
    for (const auto& [name, s] : b.subsets) {
      auto vi = space.variable_index(name);
      if (!vi) throw SchemaError("block effect names unknown variable '" + name + "'");
      req.emplace_back(*vi, s);
    }
    blocks.push_back(std::move(req));
  }

  LookupDataset ds;
  ds.name = spec.name;
  ds.space = space;
  ds.values.resize(space.full_cardinality());
  for (const auto& c : space.enumerate()) {
    double y = spec.base;
    for (std::size_t i = 0; i < nv; ++i) {
      const auto v = static_cast<std::size_t>(c.values[i]);
      y += subset_effect[i][static_cast<std::size_t>(subset_of[i][v])] + value_effect[i][v];
      for (std::size_t j = i + 1; j < nv; ++j)
        y += interaction[i][j][v * static_cast<std::size_t>(spec.variables[j].candidates) +
                               static_cast<std::size_t>(c.values[j])];
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      bool match = true;
      for (const auto& [vi, s] : blocks[b]) match = match && subset_of[vi][static_cast<std::size_t>(c.values[vi])] == s;
      if (match) y += spec.blocks[b].effect;
    }
    y += spec.noise_sd * standard_normal(detail);
    ds.values[space.flat_index(c)] = std::clamp(y, 0.0, 100.0);
  }

  json truth;
  truth["subset_effects"] = json::object();
  for (std::size_t i = 0; i < nv; ++i) truth["subset_effects"][spec.variables[i].name] = subset_effect[i];
  truth["blocks"] = spec.to_json()["blocks"];
  truth["argmax"] = space.condition_to_json(ds.argmax());
  truth["max"] = ds.max();
  return {std::move(ds), std::move(manifest), std::move(truth)};
}

SynthSpec reference_synth_spec(std::uint64_t detail_seed) {
  SynthSpec s;
  s.name = "synthetic-576";
  s.variables = {{"catalyst", 6, 3}, {"ligand", 6, 3}, {"base", 4, 2}, {"solvent", 4, 2}};
  s.base = 25.0;
  s.blocks = {{{{"catalyst", 2}, {"ligand", 1}}, 40.0}};
  s.subset_effect_sd = 5.0;
  s.value_effect_sd = 3.0;
  s.interaction_sd = 2.0;
  s.noise_sd = 3.0;
  s.seed = 7;
  s.detail_seed = detail_seed;
  return s;
}

}  // namespace kgbo
