#include "kgbo/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "kgbo/error.hpp"
#include "kgbo/rng.hpp"

namespace kgbo {

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

json KnowledgeReport::to_json() const {
  return {{"ranking", ranking}, {"clusterings", clusterings}, {"rationale", rationale}};
}

KnowledgeReport KnowledgeReport::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("knowledge report must be a JSON object");
  KnowledgeReport r;
  try {
    r.ranking = j.at("ranking").get<std::vector<std::string>>();
    if (j.contains("clusterings")) {
      for (const auto& [var, members] : j.at("clusterings").items()) {
        auto& dst = r.clusterings[var];
        for (const auto& [id, subset] : members.items()) {
          if (!subset.is_number_integer())
            throw SchemaError("report: subset of candidate '" + id + "' in '" + var + "' is not an integer");
          dst[id] = subset.get<int>();
        }
      }
    }
    r.rationale = j.value("rationale", "");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("knowledge report schema violation: ") + e.what());
  }
  return r;
}

void validate_report(const KnowledgeReport& report, const SearchSpace& space) {
  std::set<std::string> names;
  for (const auto& v : space.variables()) names.insert(v.name);
  std::set<std::string> ranked(report.ranking.begin(), report.ranking.end());
  if (ranked.size() != report.ranking.size() || ranked != names)
    throw SchemaError("report ranking is not a permutation of the space's variables");
  for (const auto& [var, _] : report.clusterings)
    if (!names.count(var)) throw SchemaError("report clusters unknown variable '" + var + "'");
  for (const auto& v : space.variables()) {
    auto it = report.clusterings.find(v.name);
    if (it == report.clusterings.end()) {
      if (v.kind == VariableKind::categorical)
        throw SchemaError("report has no clustering for categorical variable '" + v.name + "'");
      continue;
    }
    std::vector<int> subsets;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string id = v.value_id(static_cast<int>(i));
      auto m = it->second.find(id);
      if (m == it->second.end())
        throw SchemaError("report: candidate '" + id + "' of '" + v.name + "' has no subset");
      if (m->second < 0) throw SchemaError("report: negative subset for '" + id + "' of '" + v.name + "'");
      subsets.push_back(m->second);
    }
    if (it->second.size() != v.size())
      throw SchemaError("report: clustering of '" + v.name + "' names candidates outside the space");
    std::set<int> uniq(subsets.begin(), subsets.end());
    if (*uniq.rbegin() != static_cast<int>(uniq.size()) - 1)
      throw SchemaError("report: subsets of '" + v.name + "' are not contiguous from 0");
  }
}

std::unique_ptr<StaticProvider> StaticProvider::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open knowledge report '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("knowledge report '" + path + "' does not parse: " + e.what());
  }
  return std::make_unique<StaticProvider>(KnowledgeReport::from_json(j));
}

KnowledgeReport ManifestProvider::report(const json& manifest, const std::string&) {
  const SearchSpace space = build_space(manifest);
  KnowledgeReport r;
  for (const auto& v : space.variables()) {
    r.ranking.push_back(v.name);
    auto& dst = r.clusterings[v.name];
    for (std::size_t i = 0; i < v.size(); ++i) dst[v.value_id(static_cast<int>(i))] = v.subset_of(static_cast<int>(i));
  }
  r.rationale = "manifest-declared ranks and subsets";
  return r;
}

KnowledgeReport FlatProvider::report(const json& manifest, const std::string&) {
  const SearchSpace space = build_space(manifest);
  KnowledgeReport r;
  for (const auto& v : space.variables()) {
    r.ranking.push_back(v.name);
    auto& dst = r.clusterings[v.name];
    for (std::size_t i = 0; i < v.size(); ++i) dst[v.value_id(static_cast<int>(i))] = 0;
  }
  r.rationale = "no decomposition";
  return r;
}

std::vector<int> kmeans_cluster(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                                int max_iterations) {
  const std::size_t n = points.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) throw SchemaError("k-means: k must lie in 1..point count");
  const std::size_t d = points.front().size();
  auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
  };

  Rng rng(splitmix64(seed));
  std::vector<std::vector<double>> centers;
  centers.push_back(points[uniform_below(rng, n)]);
  std::vector<double> nearest(n);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, dist2(points[i], c));
      nearest[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      // Fewer distinct points than k: seed with any point not yet a center.
      pick = uniform_below(rng, n);
    } else {
      double u = uniform01(rng) * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        if (u < nearest[pick]) break;
        u -= nearest[pick];
      }
      while (nearest[pick] <= 0.0 && pick + 1 < n) ++pick;
    }
    centers.push_back(points[pick]);
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = dist2(points[i], centers[static_cast<std::size_t>(c)]);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(d, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[static_cast<std::size_t>(assign[i])] += 1;
      for (std::size_t j = 0; j < d; ++j) sums[static_cast<std::size_t>(assign[i])][j] += points[i][j];
    }
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (counts[cu] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) centers[cu][j] = sums[cu][j] / counts[cu];
    }
    // An empty cluster takes over the point farthest from its own center.
    // With fewer distinct points than k some clusters stay empty.
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (counts[cu] != 0) continue;
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<std::size_t>(assign[i]);
        const double dd = dist2(points[i], centers[a]);
        if (counts[a] > 1 && dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      if (far == n) continue;
      --counts[static_cast<std::size_t>(assign[far])];
      centers[cu] = points[far];
      counts[cu] = 1;
      changed = true;
    }
  }

  // Relabel in order of first appearance so subsets are contiguous and stable.
  std::vector<int> relabel(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (auto& a : assign) {
    auto& r = relabel[static_cast<std::size_t>(a)];
    if (r < 0) r = next++;
    a = r;
  }
  return assign;
}

KnowledgeReport PropertyClusterProvider::report(const json& manifest, const std::string&) {
  const SearchSpace space = build_space(manifest);
  KnowledgeReport r;
  for (const auto& v : space.variables()) {
    r.ranking.push_back(v.name);
    auto& dst = r.clusterings[v.name];
    auto kit = k_.find(v.name);
    if (kit == k_.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) dst[v.value_id(static_cast<int>(i))] = v.subset_of(static_cast<int>(i));
      continue;
    }
    const int k = kit->second;
    if (k < 1 || static_cast<std::size_t>(k) > v.size())
      throw SchemaError("k for '" + v.name + "' exceeds its candidate count");
    if (v.property_keys().empty())
      throw SchemaError("variable '" + v.name + "' has no property vectors to cluster on");
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < v.size(); ++i) pts.push_back(v.property_vector(static_cast<int>(i)));
    const std::size_t d = pts.front().size();
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0, var = 0.0;
      for (const auto& p : pts) mean += p[j];
      mean /= static_cast<double>(pts.size());
      for (const auto& p : pts) var += (p[j] - mean) * (p[j] - mean);
      const double sd = std::sqrt(var / static_cast<double>(pts.size()));
      for (auto& p : pts) p[j] = sd > 0.0 ? (p[j] - mean) / sd : 0.0;
    }
    const auto labels = kmeans_cluster(pts, k, seed_ ^ name_hash(v.name));
    for (std::size_t i = 0; i < v.size(); ++i) dst[v.value_id(static_cast<int>(i))] = labels[i];
  }
  r.rationale = "k-means over z-scored candidate properties";
  return r;
}

KnowledgeReport RemoteProvider::report(const json& manifest, const std::string& task) {
  const json request = {
      {"space_manifest", manifest}, {"task_description", task}, {"prompt_template", config_.prompt_template}};
  const std::string body = request.dump();
  const std::string key = sha256_hex(config_.endpoint + "\n" + body);
  const SearchSpace space = build_space(manifest);

  std::filesystem::path cache_file;
  if (!config_.cache_dir.empty()) {
    cache_file = std::filesystem::path(config_.cache_dir) / ("knowledge-" + key + ".json");
    std::ifstream in(cache_file);
    if (in) {
      json cached;
      in >> cached;
      auto rep = KnowledgeReport::from_json(cached);
      validate_report(rep, space);
      if (audit_) audit_({{"kind", "knowledge"}, {"request_hash", key}, {"cached", true}, {"response", cached}});
      return rep;
    }
  }

  const auto ep = parse_endpoint(config_.endpoint);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    HttpResult res;
    try {
      res = post_json(ep, body, config_.token, config_.timeout_seconds);
    } catch (const ProviderError& e) {
      last_error = e.what();
      if (audit_) audit_({{"kind", "knowledge"}, {"request_hash", key}, {"attempt", attempt}, {"error", last_error}});
      continue;
    }
    if (res.status >= 500) {
      last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
      if (audit_) audit_({{"kind", "knowledge"}, {"request_hash", key}, {"attempt", attempt}, {"error", last_error}});
      continue;
    }
    if (res.status != 200)
      throw ProviderError("knowledge service rejected the request (HTTP " + std::to_string(res.status) + "): " + res.body);
    json response;
    try {
      response = json::parse(res.body);
    } catch (const json::exception& e) {
      throw ProviderError(std::string("knowledge service returned invalid JSON: ") + e.what());
    }
    if (audit_)
      audit_({{"kind", "knowledge"}, {"request_hash", key}, {"attempt", attempt}, {"request", request}, {"response", response}});
    KnowledgeReport rep;
    try {
      rep = KnowledgeReport::from_json(response);
      validate_report(rep, space);
    } catch (const SchemaError& e) {
      throw ProviderError(std::string("knowledge service response failed validation: ") + e.what());
    }
    if (!cache_file.empty()) {
      std::filesystem::create_directories(cache_file.parent_path());
      std::ofstream(cache_file) << response.dump();
    }
    return rep;
  }
  throw ProviderError("knowledge service unavailable after " + std::to_string(config_.max_retries + 1) +
                      " attempts; last failure: " + last_error);
}

OptTree build_tree(const SearchSpace& space, const KnowledgeReport& report, double c_p) {
  validate_report(report, space);
  std::vector<int> order;
  for (const auto& name : report.ranking) order.push_back(static_cast<int>(*space.variable_index(name)));
  std::vector<std::vector<int>> partition(space.variable_count());
  for (std::size_t i = 0; i < space.variable_count(); ++i) {
    const auto& v = space.variable(i);
    auto it = report.clusterings.find(v.name);
    for (std::size_t k = 0; k < v.size(); ++k) {
      partition[i].push_back(it == report.clusterings.end() ? v.subset_of(static_cast<int>(k))
                                                            : it->second.at(v.value_id(static_cast<int>(k))));
    }
  }
  return OptTree(std::move(order), std::move(partition), c_p);
}

}  // namespace kgbo
