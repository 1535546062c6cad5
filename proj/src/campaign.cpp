#include "kgbo/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "kgbo/batch.hpp"
#include "kgbo/csv.hpp"
#include "kgbo/error.hpp"

namespace kgbo {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

std::vector<Labeled> labeled_from_json(const json& j, const SearchSpace& space) {
  std::vector<Labeled> out;
  if (!j.is_array()) throw SchemaError("prior data must be an array of {condition, value}");
  for (const auto& e : j) {
    Labeled l{space.condition_from_json(e.at("condition")), e.at("value").get<double>()};
    if (!std::isfinite(l.value)) throw ValueError("prior data contains a non-finite value");
    out.push_back(std::move(l));
  }
  return out;
}

// Results-style CSV where the value column may be called `value` or `objective`.
std::vector<Labeled> read_labeled_csv(const SearchSpace& space, const std::string& path) {
  auto table = read_csv(path);
  for (auto& h : table.header)
    if (h == "objective") h = "value";
  return parse_results_csv(space, table);
}

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw ValueError(std::string(what) + " must be finite");
  return v;
}

AuditSink audit_into(std::vector<json>& log) {
  return [&log](const json& e) { log.push_back(e); };
}

std::vector<Labeled> real_labeled(const CampaignState& s) {
  std::vector<Labeled> out;
  out.reserve(s.observations.size());
  for (const auto& o : s.observations) out.push_back({o.condition, o.value});
  return out;
}

// Refit on every real observation. A predictor with neither prior data nor
// observations has nothing to say and is treated as absent.
PerformancePredictor* refit(PerformancePredictor* pred, CampaignState& s) {
  if (!pred || (!pred->has_prior() && s.observations.empty())) return nullptr;
  pred->fit(real_labeled(s));
  s.predictor_state = pred->state();
  return pred;
}

}  // namespace

// ---- config ---------------------------------------------------------------

json KnowledgeSpec::to_json() const {
  json j = {{"kind", kind}, {"seed", seed}};
  if (!report_file.empty()) j["report_file"] = report_file;
  if (!candidate_report_files.empty()) j["candidate_reports"] = candidate_report_files;
  if (!k_per_variable.empty()) j["k"] = k_per_variable;
  if (kind == "remote") {
    j["endpoint"] = remote.endpoint;
    j["prompt_template"] = remote.prompt_template;
    j["max_retries"] = remote.max_retries;
    j["timeout_seconds"] = remote.timeout_seconds;
    j["cache_dir"] = remote.cache_dir;
  }
  return j;
}

KnowledgeSpec KnowledgeSpec::from_json(const json& j) {
  KnowledgeSpec s;
  if (!j.is_object()) throw SchemaError("knowledge spec must be an object");
  s.kind = j.value("kind", s.kind);
  static const std::set<std::string> kinds{"manifest", "static", "cluster", "remote", "flat"};
  if (!kinds.count(s.kind)) throw SchemaError("unknown knowledge provider kind '" + s.kind + "'");
  s.report_file = j.value("report_file", std::string());
  if (j.contains("candidate_reports")) s.candidate_report_files = j.at("candidate_reports").get<std::vector<std::string>>();
  if (j.contains("k")) s.k_per_variable = j.at("k").get<std::map<std::string, int>>();
  s.seed = j.value("seed", std::uint64_t{0});
  s.remote.endpoint = j.value("endpoint", std::string());
  s.remote.token = j.value("token", std::string());
  s.remote.prompt_template = j.value("prompt_template", std::string());
  s.remote.max_retries = j.value("max_retries", s.remote.max_retries);
  s.remote.timeout_seconds = j.value("timeout_seconds", s.remote.timeout_seconds);
  s.remote.cache_dir = j.value("cache_dir", std::string());
  if (s.kind == "static" && s.report_file.empty()) throw SchemaError("static knowledge provider needs report_file");
  if (s.kind == "remote" && s.remote.endpoint.empty()) throw SchemaError("remote knowledge provider needs endpoint");
  return s;
}

json PredictorSpec::to_json(const SearchSpace& space) const {
  json j = {{"kind", kind}};
  if (kind == "ridge") {
    j["lambda"] = ridge.lambda;
    j["use_properties"] = ridge.use_properties;
    json prior_j = json::array();
    for (const auto& l : prior) prior_j.push_back({{"condition", space.condition_to_json(l.condition)}, {"value", l.value}});
    j["prior"] = prior_j;
  } else if (kind == "table") {
    j["table_csv"] = table_csv;
  } else if (kind == "remote") {
    j["endpoint"] = remote.endpoint;
    j["timeout_seconds"] = remote.timeout_seconds;
    j["max_retries"] = remote.max_retries;
  }
  return j;
}

PredictorSpec PredictorSpec::from_json(const json& j, const SearchSpace& space) {
  PredictorSpec s;
  if (!j.is_object()) throw SchemaError("predictor spec must be an object");
  s.kind = j.value("kind", s.kind);
  static const std::set<std::string> kinds{"none", "ridge", "table", "remote"};
  if (!kinds.count(s.kind)) throw SchemaError("unknown predictor kind '" + s.kind + "'");
  s.ridge.lambda = j.value("lambda", s.ridge.lambda);
  s.ridge.use_properties = j.value("use_properties", s.ridge.use_properties);
  if (!(s.ridge.lambda > 0.0)) throw SchemaError("ridge lambda must be positive");
  if (j.contains("prior")) s.prior = labeled_from_json(j.at("prior"), space);
  s.table_csv = j.value("table_csv", std::string());
  s.remote.endpoint = j.value("endpoint", std::string());
  s.remote.token = j.value("token", std::string());
  s.remote.timeout_seconds = j.value("timeout_seconds", s.remote.timeout_seconds);
  s.remote.max_retries = j.value("max_retries", s.remote.max_retries);
  if (s.kind == "table" && s.table_csv.empty()) throw SchemaError("table predictor needs table_csv");
  if (s.kind == "remote" && s.remote.endpoint.empty()) throw SchemaError("remote predictor needs endpoint");
  return s;
}

json CampaignConfig::to_json() const {
  const auto space = build_space(manifest);
  json acq = json::array();
  for (const auto& a : acquisitions) acq.push_back(a.to_json());
  json j = {{"manifest", manifest},
            {"task_description", task_description},
            {"knowledge", knowledge.to_json()},
            {"predictor", predictor.to_json(space)},
            {"batch_size", batch_size},
            {"acquisitions", acq},
            {"c_p", c_p},
            {"pseudo", pseudo.to_json()},
            {"max_rounds", max_rounds},
            {"patience", patience},
            {"seed", seed},
            {"objective", objective},
            {"percent_objective", percent_objective},
            {"gp", {{"restarts", gp.restarts}, {"max_iterations", gp.max_iterations}, {"max_fit_points", gp.max_fit_points}}},
            {"enumeration_cap", enumeration_cap}};
  j["target"] = target ? json(*target) : json(nullptr);
  return j;
}

namespace {

CampaignConfig parse_config(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw SchemaError("campaign config must be a JSON object");
  CampaignConfig c;
  if (j.contains("manifest") && j["manifest"].is_object())
    c.manifest = j["manifest"];
  else if (j.contains("manifest_path"))
    c.manifest = read_json_file(resolve(base_dir, j.at("manifest_path").get<std::string>()));
  else
    throw SchemaError("campaign config needs 'manifest' or 'manifest_path'");
  const auto space = build_space(c.manifest);

  c.task_description = j.value("task_description", std::string());
  if (j.contains("knowledge")) {
    c.knowledge = KnowledgeSpec::from_json(j["knowledge"]);
    c.knowledge.report_file = resolve(base_dir, c.knowledge.report_file);
    for (auto& f : c.knowledge.candidate_report_files) f = resolve(base_dir, f);
    if (!c.knowledge.remote.cache_dir.empty()) c.knowledge.remote.cache_dir = resolve(base_dir, c.knowledge.remote.cache_dir);
  }
  if (j.contains("predictor")) {
    const auto& pj = j["predictor"];
    c.predictor = PredictorSpec::from_json(pj, space);
    if (pj.contains("prior_csv")) {
      auto extra = read_labeled_csv(space, resolve(base_dir, pj.at("prior_csv").get<std::string>()));
      c.predictor.prior.insert(c.predictor.prior.end(), extra.begin(), extra.end());
    }
    c.predictor.table_csv = resolve(base_dir, c.predictor.table_csv);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  if (c.batch_size < 1) throw SchemaError("batch_size must be at least 1");
  if (j.contains("acquisitions")) {
    c.acquisitions.clear();
    for (const auto& a : j.at("acquisitions")) c.acquisitions.push_back(AcquisitionKind::from_json(a));
    if (c.acquisitions.empty()) throw SchemaError("acquisitions must not be empty");
  }
  c.c_p = j.value("c_p", c.c_p);
  if (!(c.c_p >= 0.0) || !std::isfinite(c.c_p)) throw SchemaError("c_p must be a finite non-negative number");
  if (j.contains("pseudo")) c.pseudo = PseudoConfig::from_json(j.at("pseudo"));
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  if (c.max_rounds < 1) throw SchemaError("max_rounds must be at least 1");
  if (j.contains("target") && !j["target"].is_null()) c.target = finite_or_throw(j["target"].get<double>(), "target");
  c.patience = j.value("patience", c.patience);
  if (c.patience < 0) throw SchemaError("patience must be non-negative");
  c.seed = j.value("seed", c.seed);
  c.objective = j.value("objective", c.objective);
  c.percent_objective = j.value("percent_objective", c.percent_objective);
  if (j.contains("direction") && j["direction"] != "maximize") throw SchemaError("only the maximize direction is supported");
  if (j.contains("gp")) {
    const auto& g = j["gp"];
    c.gp.restarts = g.value("restarts", c.gp.restarts);
    c.gp.max_iterations = g.value("max_iterations", c.gp.max_iterations);
    c.gp.max_fit_points = g.value("max_fit_points", c.gp.max_fit_points);
    if (c.gp.restarts < 0 || c.gp.max_iterations < 1 || c.gp.max_fit_points < 2)
      throw SchemaError("invalid gp fit settings");
  }
  c.enumeration_cap = j.value("enumeration_cap", c.enumeration_cap);
  return c;
}

}  // namespace

CampaignConfig CampaignConfig::from_json(const json& j, const std::string& base_dir) {
  try {
    return parse_config(j, base_dir);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("campaign config: ") + e.what());
  }
}

CampaignConfig load_config(const std::string& path) {
  return CampaignConfig::from_json(read_json_file(path), fs::path(path).parent_path().string());
}

std::string to_string(CampaignStatus s) {
  switch (s) {
    case CampaignStatus::awaiting_observations: return "awaiting_observations";
    case CampaignStatus::ready: return "ready";
    case CampaignStatus::converged: return "converged";
    case CampaignStatus::exhausted: return "exhausted";
  }
  return "ready";
}

CampaignStatus status_from_string(const std::string& s) {
  if (s == "awaiting_observations") return CampaignStatus::awaiting_observations;
  if (s == "ready") return CampaignStatus::ready;
  if (s == "converged") return CampaignStatus::converged;
  if (s == "exhausted") return CampaignStatus::exhausted;
  throw CorruptStateError("unknown campaign status '" + s + "'");
}

// ---- state helpers ----------------------------------------------------------

std::optional<double> CampaignState::best() const {
  if (observations.empty()) return std::nullopt;
  double b = -std::numeric_limits<double>::infinity();
  for (const auto& o : observations) b = std::max(b, o.value);
  return b;
}

std::set<Condition> CampaignState::observed_set() const {
  std::set<Condition> s;
  for (const auto& o : observations) s.insert(o.condition);
  return s;
}

std::set<Condition> CampaignState::recommended_set() const {
  std::set<Condition> s;
  for (const auto& [r, c] : recommended) s.insert(c);
  return s;
}

std::unique_ptr<KnowledgeProvider> make_knowledge_provider(const KnowledgeSpec& spec, AuditSink audit) {
  if (spec.kind == "manifest") return std::make_unique<ManifestProvider>();
  if (spec.kind == "flat") return std::make_unique<FlatProvider>();
  if (spec.kind == "static") return StaticProvider::from_file(spec.report_file);
  if (spec.kind == "cluster") return std::make_unique<PropertyClusterProvider>(spec.k_per_variable, spec.seed);
  return std::make_unique<RemoteProvider>(spec.remote, std::move(audit));
}

std::unique_ptr<PerformancePredictor> make_predictor(const CampaignConfig& config, const SearchSpace& space,
                                                     AuditSink audit) {
  const auto& p = config.predictor;
  if (p.kind == "none") return nullptr;
  if (p.kind == "ridge") return std::make_unique<RidgePredictor>(space, p.ridge, p.prior);
  if (p.kind == "table") {
    auto ds = std::make_shared<LookupDataset>(dataset_from_csv(read_csv(p.table_csv), space, p.table_csv));
    return std::make_unique<TableOracle>(std::move(ds));
  }
  return std::make_unique<RemotePredictor>(space, p.remote, std::move(audit));
}

// ---- init -----------------------------------------------------------------

CampaignState init_campaign(const CampaignConfig& config) {
  Runtime rt;
  std::vector<json> log;
  rt.knowledge = make_knowledge_provider(config.knowledge, audit_into(log));
  SearchSpace space = build_space(config.manifest);
  rt.predictor = make_predictor(config, space, audit_into(log));
  auto state = init_campaign(config, rt);
  state.audit.insert(state.audit.begin(), log.begin(), log.end());
  return state;
}

CampaignState init_campaign(const CampaignConfig& config, Runtime& rt) {
  if (config.batch_size < 1) throw SchemaError("batch_size must be at least 1");
  if (config.max_rounds < 1) throw SchemaError("max_rounds must be at least 1");
  CampaignState s;
  s.config = config;
  s.space = build_space(config.manifest);
  if (!rt.knowledge) throw SchemaError("no knowledge provider");

  auto primary = rt.knowledge->report(config.manifest, config.task_description);
  validate_report(primary, s.space);
  s.reports.push_back(primary);
  for (const auto& f : config.knowledge.candidate_report_files) {
    auto r = StaticProvider::from_file(f)->report(config.manifest, config.task_description);
    validate_report(r, s.space);
    s.reports.push_back(std::move(r));
  }
  for (const auto& r : s.reports) s.trees.push_back(build_tree(s.space, r, config.c_p));

  PerformancePredictor* pred = refit(rt.predictor.get(), s);
  if (pred && config.pseudo.enabled) {
    std::vector<PseudoPoint> scratch;
    if (config.pseudo.scope == PseudoScope::full_space) {
      s.pseudo = generate(*pred, s.space, {}, 0, config.enumeration_cap);
    } else if (s.trees.size() > 1) {
      scratch = generate(*pred, s.space, {}, 0, config.enumeration_cap);
    }
    if (s.trees.size() > 1) {
      const auto choice = select_tree(s.trees, s.pseudo.empty() ? scratch : s.pseudo);
      s.active_tree = choice.index;
      s.audit.push_back({{"kind", "tree_selection"}, {"round", 0}, {"scores", choice.scores},
                         {"chosen", choice.index}, {"tied", choice.tied}});
    }
  }
  s.status = CampaignStatus::ready;
  return s;
}

// ---- initial batch ----------------------------------------------------------

std::vector<Condition> initial_batch(CampaignState& s) {
  if (!s.outstanding.empty()) return s.outstanding;
  if (s.round != 0 || !s.observations.empty()) throw ConflictError("initial batch is only available at round 0");
  const int q = s.config.batch_size;
  if (static_cast<std::uint64_t>(q) > s.space.cardinality())
    throw SchemaError("batch size exceeds the space cardinality");

  const auto& tree = s.tree();
  const auto& part = tree.partition();
  const std::size_t nv = s.space.variable_count();
  Rng rng = derive_rng(s.config.seed, 0, "initial");

  // allowed values per (variable, subset)
  std::vector<std::vector<std::vector<int>>> members(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    members[v].resize(static_cast<std::size_t>(tree.subset_count(static_cast<int>(v))));
    for (int val : s.space.allowed(v)) members[v][static_cast<std::size_t>(part[v][static_cast<std::size_t>(val)])].push_back(val);
  }
  std::vector<std::vector<int>> usage(nv);
  for (std::size_t v = 0; v < nv; ++v) usage[v].assign(members[v].size(), 0);

  std::set<Condition> used = s.observed_set();
  std::vector<Condition> out;

  auto pattern_size = [&](const std::vector<int>& pat) {
    double n = 1.0;
    for (std::size_t v = 0; v < nv; ++v) n *= static_cast<double>(members[v][static_cast<std::size_t>(pat[v])].size());
    return n;
  };
  auto used_in_pattern = [&](const std::vector<int>& pat) {
    std::size_t k = 0;
    for (const auto& c : used) {
      bool in = true;
      for (std::size_t v = 0; v < nv && in; ++v) in = part[v][static_cast<std::size_t>(c.values[v])] == pat[v];
      k += in;
    }
    return k;
  };
  auto draw_in_pattern = [&](const std::vector<int>& pat) -> std::optional<Condition> {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Condition c;
      for (std::size_t v = 0; v < nv; ++v) {
        const auto& m = members[v][static_cast<std::size_t>(pat[v])];
        c.values.push_back(m[uniform_below(rng, m.size())]);
      }
      if (!used.count(c)) return c;
    }
    std::vector<Condition> free;
    SearchSpace sub = s.space;
    for (std::size_t v = 0; v < nv; ++v) sub = sub.restricted(v, members[v][static_cast<std::size_t>(pat[v])]);
    for (auto& c : sub.enumerate(s.config.enumeration_cap))
      if (!used.count(c)) free.push_back(std::move(c));
    if (free.empty()) return std::nullopt;
    return free[uniform_below(rng, free.size())];
  };

  for (int slot = 0; slot < q; ++slot) {
    // Least-used subsets per variable; the pattern is drawn from their product.
    std::vector<std::vector<int>> options(nv);
    for (std::size_t v = 0; v < nv; ++v) {
      int lo = std::numeric_limits<int>::max();
      for (std::size_t k = 0; k < usage[v].size(); ++k)
        if (!members[v][k].empty()) lo = std::min(lo, usage[v][k]);
      for (std::size_t k = 0; k < usage[v].size(); ++k)
        if (!members[v][k].empty() && usage[v][k] == lo) options[v].push_back(static_cast<int>(k));
    }
    // Among feasible patterns in the option product, prefer the least-used
    // tree prefixes level by level (catalyst x ligand pairs before deeper
    // ones); exact ties go to a random key.
    const auto& order = tree.level_order();
    auto prefix_usage = [&](const std::vector<int>& pat) {
      std::vector<std::size_t> u(order.size() > 1 ? order.size() - 1 : 0, 0);
      for (const auto& c : out) {
        for (std::size_t l = 0; l < order.size(); ++l) {
          const auto v = static_cast<std::size_t>(order[l]);
          if (part[v][static_cast<std::size_t>(c.values[v])] != pat[v]) break;
          if (l >= 1) ++u[l - 1];
        }
      }
      return u;
    };
    std::optional<std::vector<int>> best_pat;
    std::vector<std::size_t> best_score;
    double best_key = 2.0;
    std::vector<std::size_t> odo(nv, 0);
    for (std::size_t tried = 0; tried < 4096 && nv > 0; ++tried) {
      std::vector<int> pat(nv);
      for (std::size_t v = 0; v < nv; ++v) pat[v] = options[v][odo[v]];
      if (pattern_size(pat) > static_cast<double>(used_in_pattern(pat))) {
        auto score = prefix_usage(pat);
        const double key = uniform01(rng);
        if (!best_pat || score < best_score || (score == best_score && key < best_key)) {
          best_pat = pat;
          best_score = std::move(score);
          best_key = key;
        }
      }
      std::size_t v = nv;
      bool wrapped = true;
      while (v > 0) {
        --v;
        if (++odo[v] < options[v].size()) {
          wrapped = false;
          break;
        }
        odo[v] = 0;
      }
      if (wrapped) break;
    }
    std::optional<Condition> pick;
    if (best_pat) pick = draw_in_pattern(*best_pat);
    if (!pick) {
      std::vector<Condition> free;
      for (auto& c : s.space.enumerate(s.config.enumeration_cap))
        if (!used.count(c)) free.push_back(std::move(c));
      if (free.empty()) break;
      pick = free[uniform_below(rng, free.size())];
    }
    for (std::size_t v = 0; v < nv; ++v) ++usage[v][static_cast<std::size_t>(part[v][static_cast<std::size_t>(pick->values[v])])];
    used.insert(*pick);
    out.push_back(*pick);
  }

  s.outstanding = out;
  for (const auto& c : out) s.recommended.emplace_back(s.round, c);
  s.status = CampaignStatus::awaiting_observations;
  s.last_recommendation = {{"round", s.round}, {"kind", "initial"}};
  return out;
}

// ---- recommend --------------------------------------------------------------

namespace {

GPModel fit_surrogate(CampaignState& s, const std::vector<Condition>& conds, const std::vector<double>& y,
                      const std::vector<double>& w, json& diag) {
  const auto d = static_cast<Eigen::Index>(s.space.encoding_dim());
  Eigen::MatrixXd x = encode_all(s.space, conds);
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  if (conds.size() >= 2) {
    GPFitConfig fc = s.config.gp;
    Rng r = derive_rng(s.config.seed, static_cast<std::uint64_t>(s.round), "gp");
    fc.seed = r();
    auto gp = fit_gp(x, yv, wv, fc);
    const auto& g = gp.diagnostics();
    diag = {{"lml", g.log_marginal_likelihood}, {"iterations", g.iterations}, {"starts", g.starts},
            {"jitter", g.jitter}, {"fit_points", g.fit_points}, {"hyperparams", gp.hyperparams().to_json()}};
    return gp;
  }
  GPHyperparams h;
  h.lengthscales = Eigen::VectorXd::Ones(d);
  h.signal_variance = 1.0;
  h.noise_variance = 1e-2;
  h.constant_mean = y.empty() ? 0.0 : y.front();
  diag = {{"hyperparams", h.to_json()}, {"fit_points", conds.size()}, {"default", true}};
  return GPModel(x, yv, wv, h);
}

}  // namespace

std::vector<Condition> recommend(CampaignState& s, PerformancePredictor* pred) {
  if (!s.outstanding.empty()) return s.outstanding;
  if (s.status == CampaignStatus::exhausted) throw ExhaustedError("campaign is exhausted");
  if (s.round < 1) throw ConflictError("recommend needs at least one ingested round; use the initial batch");
  if (s.round >= s.config.max_rounds) {
    s.status = CampaignStatus::exhausted;
    throw ExhaustedError("round budget spent");
  }

  const auto observed = s.observed_set();
  std::set<Condition> used = observed;
  for (const auto& [r, c] : s.recommended) used.insert(c);
  if (used.size() >= s.space.cardinality()) {
    s.status = CampaignStatus::exhausted;
    throw ExhaustedError("every condition of the space has been observed or recommended");
  }

  const int q = s.config.batch_size;
  Rng rng = derive_rng(s.config.seed, static_cast<std::uint64_t>(s.round), "recommend");
  const auto leaves = batch_select(s.tree(), q, rng);

  std::vector<NodeId> distinct;
  for (auto l : leaves)
    if (std::find(distinct.begin(), distinct.end(), l) == distinct.end()) distinct.push_back(l);

  pred = refit(pred, s);
  const bool use_pseudo = pred && s.config.pseudo.enabled;
  if (use_pseudo && s.config.pseudo.scope == PseudoScope::leaf) {
    std::set<Condition> have = observed;
    for (const auto& p : s.pseudo) have.insert(p.condition);
    for (auto leaf : distinct) {
      auto fresh = generate(*pred, restrict(s.space, s.tree(), leaf), have, s.round, s.config.enumeration_cap);
      for (auto& p : fresh) {
        have.insert(p.condition);
        s.pseudo.push_back(std::move(p));
      }
    }
  }

  std::vector<Condition> train;
  std::vector<double> y, w;
  for (const auto& o : s.observations) {
    train.push_back(o.condition);
    y.push_back(o.value);
    w.push_back(1.0);
  }
  std::size_t pseudo_used = 0;
  if (use_pseudo) {
    for (const auto& p : s.pseudo) {
      if (!p.alive || observed.count(p.condition)) continue;
      train.push_back(p.condition);
      y.push_back(p.predicted);
      w.push_back(s.config.pseudo.initial_weight);
      ++pseudo_used;
    }
  }

  std::vector<Condition> picks;
  json diag = json::object();
  std::vector<std::string> kinds_used;

  // Pool: each selected leaf's unused conditions; the rest of the space only
  // when the leaves cannot fill the batch.
  std::vector<Condition> pool;
  std::vector<NodeId> pool_leaf;
  for (auto leaf : distinct)
    for (auto& c : restrict(s.space, s.tree(), leaf).enumerate(s.config.enumeration_cap))
      if (!used.count(c)) {
        pool.push_back(std::move(c));
        pool_leaf.push_back(leaf);
      }
  bool overflow = false;
  if (pool.size() < static_cast<std::size_t>(q)) {
    std::set<Condition> in_pool(pool.begin(), pool.end());
    for (auto& c : s.space.enumerate(s.config.enumeration_cap))
      if (!used.count(c) && !in_pool.count(c)) {
        pool.push_back(std::move(c));
        pool_leaf.push_back(-1);
        overflow = true;
      }
  }

  std::vector<std::uint8_t> eligible(pool.size(), 1);
  auto pick_masked = [&](NodeId leaf, const std::vector<double>* scores) -> std::ptrdiff_t {
    std::vector<std::uint8_t> mask(pool.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (eligible[i] && pool_leaf[i] == leaf) {
        mask[i] = 1;
        any = true;
      }
    if (!any) mask = eligible;
    if (scores) return argmax_eligible(*scores, mask, rng);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) idx.push_back(i);
    if (idx.empty()) return -1;
    return static_cast<std::ptrdiff_t>(idx[uniform_below(rng, idx.size())]);
  };

  if (train.empty()) {
    // Every earlier result was abandoned: fall back to uniform picks per leaf.
    for (int i = 0; i < q; ++i) {
      auto k = pick_masked(leaves[static_cast<std::size_t>(i)], nullptr);
      if (k < 0) break;
      eligible[static_cast<std::size_t>(k)] = 0;
      picks.push_back(pool[static_cast<std::size_t>(k)]);
    }
  } else {
    const GPModel gp = fit_surrogate(s, train, y, w, diag);
    const double incumbent = s.best() ? *s.best() : *std::max_element(y.begin(), y.end());
    PoolPosterior post(gp, encode_all(s.space, pool));
    const auto& kinds = s.config.acquisitions;
    for (int i = 0; i < q; ++i) {
      const auto& kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
      const auto scores = post.scores(kind, incumbent);
      auto k = pick_masked(leaves[static_cast<std::size_t>(i)], &scores);
      if (k < 0) break;
      eligible[static_cast<std::size_t>(k)] = 0;
      picks.push_back(pool[static_cast<std::size_t>(k)]);
      kinds_used.push_back(kind.name());
      post.add_fantasy(static_cast<std::size_t>(k));
    }
  }

  s.outstanding = picks;
  for (const auto& c : picks) s.recommended.emplace_back(s.round, c);
  s.status = CampaignStatus::awaiting_observations;
  s.last_recommendation = {{"round", s.round},
                           {"kind", "bo"},
                           {"leaves", leaves},
                           {"acquisitions", kinds_used},
                           {"pool_size", pool.size()},
                           {"overflow", overflow},
                           {"pseudo_in_fit", pseudo_used},
                           {"gp", diag}};
  return picks;
}

std::vector<Condition> suggest(CampaignState& s, PerformancePredictor* pred) {
  if (!s.outstanding.empty()) return s.outstanding;
  if (s.status == CampaignStatus::exhausted) throw ExhaustedError("campaign is exhausted");
  if (s.round == 0 && s.observations.empty()) return initial_batch(s);
  return recommend(s, pred);
}

// ---- ingest -----------------------------------------------------------------

IngestReport ingest(CampaignState& s, const std::vector<Labeled>& results, PerformancePredictor* pred,
                    IngestOptions options) {
  if (s.status == CampaignStatus::exhausted) throw ExhaustedError("campaign is exhausted");
  if (s.outstanding.empty() && !options.allow_external)
    throw ConflictError("no outstanding recommendations; external data needs the external flag");
  if (results.empty() && s.outstanding.empty()) throw SchemaError("no results supplied");

  // Validate everything before mutating anything.
  const auto observed = s.observed_set();
  const std::set<Condition> outstanding(s.outstanding.begin(), s.outstanding.end());
  std::set<Condition> seen;
  for (const auto& r : results) {
    if (!s.space.contains(r.condition)) throw SchemaError("condition outside the search space");
    if (!outstanding.count(r.condition) && !options.allow_external)
      throw SchemaError("condition was never recommended: " + s.space.describe(r.condition));
    if (observed.count(r.condition))
      throw ConflictError("condition already observed: " + s.space.describe(r.condition));
    if (!seen.insert(r.condition).second)
      throw ConflictError("duplicate condition in results: " + s.space.describe(r.condition));
    if (!std::isfinite(r.value)) throw ValueError("non-finite value for " + s.space.describe(r.condition));
    if (s.config.percent_objective && (r.value < 0.0 || r.value > 100.0))
      throw ValueError("value out of [0, 100] for " + s.space.describe(r.condition));
  }

  IngestReport rep;
  const auto prev_best = s.best();
  std::vector<Condition> abandoned;
  for (const auto& c : s.outstanding)
    if (!seen.count(c)) abandoned.push_back(c);
  s.abandoned.insert(s.abandoned.end(), abandoned.begin(), abandoned.end());
  for (const auto& r : results) s.observations.push_back({r.condition, r.value, s.round});
  rep.ingested = results.size();
  rep.abandoned = abandoned.size();

  // (1) predictor refit; pseudo labels and embeddings refreshed in place.
  pred = refit(pred, s);
  const bool use_pseudo = pred && s.config.pseudo.enabled;
  if (use_pseudo && !s.pseudo.empty()) {
    std::vector<Condition> conds;
    for (const auto& p : s.pseudo) conds.push_back(p.condition);
    const auto values = pred->predict(conds);
    auto emb = pred->embed(conds);
    for (std::size_t i = 0; i < s.pseudo.size(); ++i) {
      if (!std::isfinite(values[i])) throw ValueError("predictor produced a non-finite pseudo-label");
      s.pseudo[i].predicted = values[i];
      s.pseudo[i].embedding = std::move(emb[i]);
    }
  }
  // (2) backpropagation, then candidate-tree rescoring.
  for (const auto& r : results) backpropagate(s.tree(), s.tree().path_of(r.condition), r.value);
  if (s.trees.size() > 1 && live_count(s.pseudo) > 0) {
    const auto choice = select_tree(s.trees, s.pseudo);
    s.audit.push_back({{"kind", "tree_selection"}, {"round", s.round}, {"scores", choice.scores},
                       {"chosen", choice.index}, {"tied", choice.tied}});
    if (choice.index != s.active_tree) {
      s.active_tree = choice.index;
      auto& t = s.tree();
      t.reset_statistics();
      for (const auto& o : s.observations) backpropagate(t, t.path_of(o.condition), o.value);
      rep.tree_swapped = true;
    }
  }

  // (3) local removal per new observation, then one global pass.
  if (use_pseudo && live_count(s.pseudo) > 0) {
    std::vector<Condition> conds;
    for (const auto& r : results) conds.push_back(r.condition);
    const auto emb = pred->embed(conds);
    for (const auto& e : emb) rep.local_retired += local_removal(s.pseudo, e, s.config.pseudo.similarity_threshold);
    Rng g = derive_rng(s.config.seed, static_cast<std::uint64_t>(s.round), "global");
    rep.global_retired = global_removal(s.pseudo, s.config.pseudo.global_discard_fraction, g);
  }

  s.outstanding.clear();
  s.round += 1;
  const auto best = s.best();
  rep.best = best;
  if (best && prev_best && !(*best > *prev_best))
    ++s.rounds_without_improvement;
  else
    s.rounds_without_improvement = 0;

  RoundRecord rec;
  rec.round = s.round;
  for (const auto& r : results) rec.values.push_back(r.value);
  rec.best = best ? *best : std::numeric_limits<double>::quiet_NaN();
  rec.abandoned = abandoned.size();
  rec.local_retired = rep.local_retired;
  rec.global_retired = rep.global_retired;
  rec.live_pseudo = live_count(s.pseudo);
  rec.active_tree = s.active_tree;
  s.trajectory.push_back(rec);

  bool converged = false;
  if (s.config.target && best && *best >= *s.config.target) converged = true;
  if (s.config.patience > 0 && s.rounds_without_improvement >= s.config.patience) converged = true;
  if (s.round >= s.config.max_rounds || s.observations.size() >= s.space.cardinality())
    s.status = CampaignStatus::exhausted;
  else
    s.status = converged ? CampaignStatus::converged : CampaignStatus::ready;
  return rep;
}

// ---- views ------------------------------------------------------------------

std::vector<Labeled> parse_results_csv(const SearchSpace& space, const CsvTable& table) {
  std::vector<std::ptrdiff_t> col(space.variable_count(), -1);
  std::ptrdiff_t vcol = -1;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == "value") vcol = static_cast<std::ptrdiff_t>(i);
    if (auto v = space.variable_index(table.header[i])) col[*v] = static_cast<std::ptrdiff_t>(i);
  }
  if (vcol < 0) throw SchemaError("results CSV lacks a 'value' column");
  for (std::size_t v = 0; v < col.size(); ++v)
    if (col[v] < 0) throw SchemaError("results CSV lacks a column for variable '" + space.variable(v).name + "'");
  std::vector<Labeled> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string& cell = row[static_cast<std::size_t>(vcol)];
    if (cell.empty()) continue;  // left blank: abandoned
    Labeled l;
    for (std::size_t v = 0; v < col.size(); ++v) {
      const auto& id = row[static_cast<std::size_t>(col[v])];
      auto idx = space.variable(v).find_value(id);
      if (!idx)
        throw SchemaError("row " + std::to_string(r + 2) + ": unknown value '" + id + "' for variable '" +
                          space.variable(v).name + "'");
      l.condition.values.push_back(*idx);
    }
    std::size_t used = 0;
    try {
      l.value = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size()) throw ValueError("row " + std::to_string(r + 2) + ": value '" + cell + "' is not a number");
    out.push_back(std::move(l));
  }
  return out;
}

CsvTable conditions_to_csv(const SearchSpace& space, const std::vector<Condition>& conditions) {
  CsvTable t;
  for (const auto& v : space.variables()) t.header.push_back(v.name);
  t.header.push_back("value");
  for (const auto& c : conditions) {
    std::vector<std::string> row;
    for (std::size_t v = 0; v < space.variable_count(); ++v) row.push_back(space.variable(v).value_id(c.values[v]));
    row.emplace_back();
    t.rows.push_back(std::move(row));
  }
  return t;
}

json status_json(const CampaignState& s) {
  json outstanding = json::array();
  for (const auto& c : s.outstanding) outstanding.push_back(s.space.condition_to_json(c));
  const auto best = s.best();
  return {{"status", to_string(s.status)},
          {"round", s.round},
          {"best_so_far", best ? json(*best) : json(nullptr)},
          {"target", s.config.target ? json(*s.config.target) : json(nullptr)},
          {"observations", s.observations.size()},
          {"abandoned", s.abandoned.size()},
          {"outstanding", outstanding},
          {"live_pseudo", live_count(s.pseudo)},
          {"pseudo_total", s.pseudo.size()},
          {"tree", {{"nodes", s.tree().node_count()}, {"leaves", s.tree().leaf_count()}, {"depth", s.tree().depth()},
                    {"active", s.active_tree}, {"candidates", s.trees.size()}}},
          {"cardinality", s.space.cardinality()},
          {"rounds_without_improvement", s.rounds_without_improvement},
          {"max_rounds", s.config.max_rounds},
          {"batch_size", s.config.batch_size}};
}

json tree_json(const CampaignState& s) {
  const auto& t = s.tree();
  json nodes = json::array();
  for (const auto& n : t.nodes()) {
    json members = json::array();
    std::string var;
    if (n.variable >= 0) {
      const auto& v = s.space.variable(static_cast<std::size_t>(n.variable));
      var = v.name;
      for (std::size_t k = 0; k < v.size(); ++k)
        if (t.partition()[static_cast<std::size_t>(n.variable)][k] == n.subset) members.push_back(v.value_id(static_cast<int>(k)));
    }
    nodes.push_back({{"id", n.id}, {"level", n.level}, {"variable", var}, {"subset", n.subset}, {"members", members},
                     {"parent", n.parent}, {"children", n.children}, {"n", n.n}, {"Q", n.q}, {"mean", n.mean()}});
  }
  json order = json::array();
  for (int v : t.level_order()) order.push_back(s.space.variable(static_cast<std::size_t>(v)).name);
  return {{"c_p", t.c_p()}, {"level_order", order}, {"leaves", t.leaf_count()}, {"nodes", nodes}};
}

json trajectory_json(const CampaignState& s) {
  json rounds = json::array();
  for (const auto& r : s.trajectory)
    rounds.push_back({{"round", r.round}, {"best_so_far", r.best}, {"values", r.values}, {"abandoned", r.abandoned},
                      {"local_retired", r.local_retired}, {"global_retired", r.global_retired},
                      {"live_pseudo", r.live_pseudo}, {"active_tree", r.active_tree}});
  return {{"objective", s.config.objective},
          {"target", s.config.target ? json(*s.config.target) : json(nullptr)},
          {"rounds", rounds}};
}

CsvTable metrics_csv(const CampaignState& s) {
  CsvTable t;
  t.header = {"round", "best_so_far", "batch_max", "batch_mean", "n_values", "abandoned",
              "local_retired", "global_retired", "live_pseudo"};
  auto num = [](double x) {
    if (!std::isfinite(x)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  for (const auto& r : s.trajectory) {
    double mx = std::numeric_limits<double>::quiet_NaN(), mean = mx;
    if (!r.values.empty()) {
      mx = *std::max_element(r.values.begin(), r.values.end());
      mean = 0.0;
      for (double v : r.values) mean += v;
      mean /= static_cast<double>(r.values.size());
    }
    t.rows.push_back({std::to_string(r.round), num(r.best), num(mx), num(mean), std::to_string(r.values.size()),
                      std::to_string(r.abandoned), std::to_string(r.local_retired), std::to_string(r.global_retired),
                      std::to_string(r.live_pseudo)});
  }
  return t;
}

}  // namespace kgbo
