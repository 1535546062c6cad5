#include "kgbo/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kgbo/error.hpp"

namespace kgbo {

namespace {

std::string format_level(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void check_contiguous(const std::vector<int>& subsets, const std::string& var) {
  if (subsets.empty()) return;
  std::set<int> seen(subsets.begin(), subsets.end());
  if (*seen.begin() != 0 || *seen.rbegin() != static_cast<int>(seen.size()) - 1) {
    throw SchemaError("variable '" + var + "': subset indices must form a contiguous range 0..k-1");
  }
}

}  // namespace

std::size_t VariableSpec::size() const {
  return kind == VariableKind::categorical ? candidates.size() : levels.size();
}

int VariableSpec::subset_of(int value) const {
  return kind == VariableKind::categorical ? candidates.at(value).subset : level_subsets.at(value);
}

int VariableSpec::subset_count() const {
  int k = 0;
  for (std::size_t v = 0; v < size(); ++v) k = std::max(k, subset_of(static_cast<int>(v)) + 1);
  return k;
}

std::string VariableSpec::value_id(int value) const {
  return kind == VariableKind::categorical ? candidates.at(value).id : format_level(levels.at(value));
}

std::optional<int> VariableSpec::find_value(const std::string& id) const {
  if (kind == VariableKind::categorical) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].id == id) return static_cast<int>(i);
    return std::nullopt;
  }
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (format_level(levels[i]) == id) return static_cast<int>(i);
  char* end = nullptr;
  const double v = std::strtod(id.c_str(), &end);
  if (end == id.c_str() || *end != '\0') return std::nullopt;
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (std::abs(levels[i] - v) <= 1e-9 * std::max(1.0, std::abs(v))) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<std::string> VariableSpec::property_keys() const {
  std::vector<std::string> keys;
  if (kind == VariableKind::numeric) return {"value"};
  if (!candidates.empty())
    for (const auto& [k, _] : candidates.front().properties) keys.push_back(k);
  return keys;
}

std::vector<double> VariableSpec::property_vector(int value) const {
  if (kind == VariableKind::numeric) return {levels.at(value)};
  std::vector<double> out;
  for (const auto& [_, v] : candidates.at(value).properties) out.push_back(v);
  return out;
}

SearchSpace::SearchSpace(std::vector<VariableSpec> variables) : variables_(std::move(variables)) {
  allowed_.resize(variables_.size());
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    allowed_[i].resize(variables_[i].size());
    for (std::size_t v = 0; v < variables_[i].size(); ++v) allowed_[i][v] = static_cast<int>(v);
  }
}

std::optional<std::size_t> SearchSpace::variable_index(const std::string& name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i].name == name) return i;
  return std::nullopt;
}

bool SearchSpace::is_restricted() const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (allowed_[i].size() != variables_[i].size()) return true;
  return false;
}

std::uint64_t SearchSpace::cardinality() const {
  std::uint64_t n = 1;
  for (const auto& a : allowed_) n *= a.size();
  return n;
}

std::uint64_t SearchSpace::full_cardinality() const {
  std::uint64_t n = 1;
  for (const auto& v : variables_) n *= v.size();
  return n;
}

bool SearchSpace::contains(const Condition& c) const {
  if (c.values.size() != variables_.size()) return false;
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (!std::binary_search(allowed_[i].begin(), allowed_[i].end(), c.values[i])) return false;
  return true;
}

SearchSpace SearchSpace::restricted(std::size_t var, std::vector<int> values) const {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  for (int v : values) {
    if (!std::binary_search(allowed_.at(var).begin(), allowed_.at(var).end(), v))
      throw SchemaError("restriction of '" + variables_[var].name + "' is not a subset of the parent space");
  }
  if (values.empty())
    throw SchemaError("restriction of '" + variables_[var].name + "' leaves no allowed values");
  SearchSpace out = *this;
  out.allowed_[var] = std::move(values);
  return out;
}

std::vector<Condition> SearchSpace::enumerate(std::uint64_t cap) const {
  const std::uint64_t n = cardinality();
  if (n > cap) {
    throw SchemaError("space cardinality " + std::to_string(n) + " exceeds the enumeration cap " +
                      std::to_string(cap));
  }
  std::vector<Condition> out;
  out.reserve(n);
  const std::size_t d = variables_.size();
  std::vector<std::size_t> pos(d, 0);
  for (std::uint64_t k = 0; k < n; ++k) {
    Condition c;
    c.values.resize(d);
    for (std::size_t i = 0; i < d; ++i) c.values[i] = allowed_[i][pos[i]];
    out.push_back(std::move(c));
    for (std::size_t i = d; i-- > 0;) {
      if (++pos[i] < allowed_[i].size()) break;
      pos[i] = 0;
    }
  }
  return out;
}

std::size_t SearchSpace::encoding_dim() const {
  std::size_t d = 0;
  for (const auto& v : variables_) d += v.kind == VariableKind::categorical ? v.candidates.size() : 1;
  return d;
}

void SearchSpace::encode_into(const Condition& c, std::span<double> out) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    const auto& v = variables_[i];
    if (v.kind == VariableKind::categorical) {
      for (std::size_t k = 0; k < v.candidates.size(); ++k) out[off + k] = 0.0;
      out[off + c.values[i]] = 1.0;
      off += v.candidates.size();
    } else {
      const auto [lo, hi] = std::minmax_element(v.levels.begin(), v.levels.end());
      const double span = *hi - *lo;
      out[off] = span > 0.0 ? (v.levels[c.values[i]] - *lo) / span : 0.0;
      off += 1;
    }
  }
}

std::vector<double> SearchSpace::encode(const Condition& c) const {
  if (!contains(c)) throw SchemaError("condition is not in the space: " + describe(c));
  std::vector<double> out(encoding_dim());
  encode_into(c, out);
  return out;
}

Condition SearchSpace::decode(std::span<const double> x) const {
  if (x.size() != encoding_dim()) throw SchemaError("encoded vector has the wrong dimension");
  Condition c;
  std::size_t off = 0;
  for (const auto& v : variables_) {
    if (v.kind == VariableKind::categorical) {
      const auto first = x.begin() + static_cast<std::ptrdiff_t>(off);
      const auto last = first + static_cast<std::ptrdiff_t>(v.candidates.size());
      c.values.push_back(static_cast<int>(std::max_element(first, last) - first));
      off += v.candidates.size();
    } else {
      const auto [lo, hi] = std::minmax_element(v.levels.begin(), v.levels.end());
      const double span = *hi - *lo;
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.levels.size(); ++k) {
        const double e = span > 0.0 ? (v.levels[k] - *lo) / span : 0.0;
        if (std::abs(e - x[off]) < best_d) {
          best_d = std::abs(e - x[off]);
          best = static_cast<int>(k);
        }
      }
      c.values.push_back(best);
      off += 1;
    }
  }
  return c;
}

std::uint64_t SearchSpace::flat_index(const Condition& c) const {
  std::uint64_t idx = 0;
  for (std::size_t i = 0; i < variables_.size(); ++i) idx = idx * variables_[i].size() + c.values.at(i);
  return idx;
}

json SearchSpace::condition_to_json(const Condition& c) const {
  json j = json::object();
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    const auto& v = variables_[i];
    if (v.kind == VariableKind::categorical)
      j[v.name] = v.candidates.at(c.values.at(i)).id;
    else
      j[v.name] = v.levels.at(c.values.at(i));
  }
  return j;
}

Condition SearchSpace::condition_from_json(const json& j) const {
  if (!j.is_object()) throw SchemaError("condition must be an object of variable -> value");
  if (j.size() != variables_.size())
    throw SchemaError("condition must assign exactly one value per variable");
  Condition c;
  for (const auto& v : variables_) {
    auto it = j.find(v.name);
    if (it == j.end()) throw SchemaError("condition missing variable '" + v.name + "'");
    std::string id;
    if (it->is_string())
      id = it->get<std::string>();
    else if (it->is_number())
      id = format_level(it->get<double>());
    else
      throw SchemaError("condition value for '" + v.name + "' must be a string or number");
    auto idx = v.find_value(id);
    if (!idx) throw SchemaError("unknown value '" + id + "' for variable '" + v.name + "'");
    c.values.push_back(*idx);
  }
  if (!contains(c)) throw SchemaError("condition not allowed by the space: " + describe(c));
  return c;
}

std::string SearchSpace::describe(const Condition& c) const {
  std::ostringstream os;
  for (std::size_t i = 0; i < variables_.size() && i < c.values.size(); ++i) {
    if (i) os << ", ";
    os << variables_[i].name << '=';
    if (c.values[i] >= 0 && static_cast<std::size_t>(c.values[i]) < variables_[i].size())
      os << variables_[i].value_id(c.values[i]);
    else
      os << '#' << c.values[i];
  }
  return os.str();
}

SearchSpace build_space(const json& manifest) {
  if (!manifest.is_object() || !manifest.contains("variables") || !manifest["variables"].is_array())
    throw SchemaError("manifest must be an object with a 'variables' array");
  std::vector<VariableSpec> vars;
  std::set<std::string> names;
  for (const auto& jv : manifest["variables"]) {
    VariableSpec v;
    v.name = jv.value("name", "");
    if (v.name.empty()) throw SchemaError("variable without a name");
    if (!names.insert(v.name).second) throw SchemaError("duplicate variable name '" + v.name + "'");
    if (!jv.contains("rank") || !jv["rank"].is_number_integer())
      throw SchemaError("variable '" + v.name + "': missing integer 'rank'");
    v.importance_rank = jv["rank"].get<int>();
    const std::string kind = jv.value("kind", "categorical");
    if (kind == "categorical") {
      v.kind = VariableKind::categorical;
      if (!jv.contains("candidates") || !jv["candidates"].is_array() || jv["candidates"].empty())
        throw SchemaError("variable '" + v.name + "': candidates must be a non-empty array");
      std::set<std::string> ids;
      for (const auto& jc : jv["candidates"]) {
        CandidateSpec c;
        c.id = jc.value("id", "");
        if (c.id.empty()) throw SchemaError("variable '" + v.name + "': candidate without an id");
        if (!ids.insert(c.id).second)
          throw SchemaError("variable '" + v.name + "': duplicate candidate id '" + c.id + "'");
        c.label = jc.value("label", jc.value("iupac", c.id));
        if (!jc.contains("subset") || !jc["subset"].is_number_integer())
          throw SchemaError("variable '" + v.name + "': candidate '" + c.id + "' has no subset index");
        c.subset = jc["subset"].get<int>();
        if (jc.contains("properties")) {
          for (const auto& [k, val] : jc["properties"].items()) {
            if (!val.is_number())
              throw SchemaError("variable '" + v.name + "': property '" + k + "' of '" + c.id +
                                "' is not numeric");
            c.properties[k] = val.get<double>();
          }
        }
        v.candidates.push_back(std::move(c));
      }
      const auto& keys0 = v.candidates.front().properties;
      for (const auto& c : v.candidates) {
        bool same = c.properties.size() == keys0.size();
        for (auto a = c.properties.begin(), b = keys0.begin(); same && a != c.properties.end(); ++a, ++b)
          same = a->first == b->first;
        if (!same)
          throw SchemaError("variable '" + v.name + "': candidate '" + c.id +
                            "' has a different property key set");
      }
      std::vector<int> subs;
      for (const auto& c : v.candidates) subs.push_back(c.subset);
      check_contiguous(subs, v.name);
    } else if (kind == "numeric") {
      v.kind = VariableKind::numeric;
      if (!jv.contains("levels") || !jv["levels"].is_array() || jv["levels"].empty())
        throw SchemaError("variable '" + v.name + "': levels must be a non-empty array");
      for (const auto& l : jv["levels"]) {
        if (!l.is_number()) throw SchemaError("variable '" + v.name + "': non-numeric level");
        v.levels.push_back(l.get<double>());
      }
      std::set<double> uniq(v.levels.begin(), v.levels.end());
      if (uniq.size() != v.levels.size())
        throw SchemaError("variable '" + v.name + "': duplicate levels");
      v.unit = jv.value("unit", "");
      if (jv.contains("subsets")) {
        v.level_subsets = jv["subsets"].get<std::vector<int>>();
        if (v.level_subsets.size() != v.levels.size())
          throw SchemaError("variable '" + v.name + "': subsets must parallel levels");
      } else {
        for (std::size_t i = 0; i < v.levels.size(); ++i) v.level_subsets.push_back(static_cast<int>(i));
      }
      check_contiguous(v.level_subsets, v.name);
    } else {
      throw SchemaError("variable '" + v.name + "': unknown kind '" + kind + "'");
    }
    vars.push_back(std::move(v));
  }
  if (vars.empty()) throw SchemaError("manifest declares no variables");
  std::vector<int> ranks;
  for (const auto& v : vars) ranks.push_back(v.importance_rank);
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] != static_cast<int>(i) + 1) {
      std::string offender;
      for (const auto& v : vars)
        if (std::count(ranks.begin(), ranks.end(), v.importance_rank) != 1 || v.importance_rank < 1 ||
            v.importance_rank > static_cast<int>(vars.size()))
          offender = v.name;
      throw SchemaError("ranks not a permutation of 1..n (offending variable '" + offender + "')");
    }
  }
  std::stable_sort(vars.begin(), vars.end(),
                   [](const VariableSpec& a, const VariableSpec& b) { return a.importance_rank < b.importance_rank; });
  return SearchSpace(std::move(vars));
}

SearchSpace load_space(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw SchemaError("cannot open manifest '" + manifest_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("manifest '" + manifest_path + "' does not parse: " + e.what());
  }
  return build_space(j);
}

json space_to_manifest(const SearchSpace& space) {
  json vars = json::array();
  for (const auto& v : space.variables()) {
    json jv;
    jv["name"] = v.name;
    jv["rank"] = v.importance_rank;
    if (v.kind == VariableKind::categorical) {
      jv["kind"] = "categorical";
      json cands = json::array();
      for (const auto& c : v.candidates) {
        json jc;
        jc["id"] = c.id;
        if (c.label != c.id) jc["label"] = c.label;
        jc["subset"] = c.subset;
        jc["properties"] = c.properties;
        cands.push_back(std::move(jc));
      }
      jv["candidates"] = std::move(cands);
    } else {
      jv["kind"] = "numeric";
      jv["levels"] = v.levels;
      jv["subsets"] = v.level_subsets;
      jv["unit"] = v.unit;
    }
    vars.push_back(std::move(jv));
  }
  return json{{"variables", std::move(vars)}};
}

}  // namespace kgbo
