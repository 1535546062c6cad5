#include "kgbo/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <sstream>

#ifdef KGBO_HAVE_OPENMP
#include <omp.h>
#endif

#include "kgbo/error.hpp"

namespace kgbo {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_knowledge: return "no_knowledge";
    case Variant::no_data: return "no_data";
    case Variant::no_both: return "no_both";
    case Variant::random: return "random";
    case Variant::oracle: return "table_oracle";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_knowledge") return Variant::no_knowledge;
  if (s == "no_data") return Variant::no_data;
  if (s == "no_both" || s == "vanilla") return Variant::no_both;
  if (s == "random") return Variant::random;
  if (s == "table_oracle" || s == "oracle") return Variant::oracle;
  throw SchemaError("unknown variant '" + s + "'");
}

std::vector<Variant> parse_variants(const std::string& list) {
  std::vector<Variant> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(variant_from_string(item));
  if (out.empty()) throw SchemaError("no variants given");
  return out;
}

json RunTrajectory::to_json() const {
  return {{"variant", variant}, {"dataset", dataset}, {"seed", seed}, {"best", best}, {"values", values},
          {"lookups", lookups}, {"pseudo_generated", pseudo_generated}, {"wall_seconds", wall_seconds}};
}

CampaignConfig variant_config(Variant v, const LookupDataset& data, const BenchOptions& o, std::uint64_t seed) {
  CampaignConfig c;
  c.manifest = space_to_manifest(data.space);
  c.task_description = data.name;
  c.batch_size = o.batch;
  c.max_rounds = o.rounds;
  c.acquisitions = o.acquisitions;
  c.c_p = o.c_p;
  c.pseudo = o.pseudo;
  c.patience = 0;
  c.seed = seed;
  c.objective = data.objective;
  c.gp = o.gp;
  c.knowledge = o.knowledge;
  c.predictor.kind = "ridge";
  c.predictor.ridge = o.ridge;
  c.predictor.prior = o.prior;
  switch (v) {
    case Variant::full:
      break;
    case Variant::no_knowledge:
      c.knowledge = KnowledgeSpec{};
      c.knowledge.kind = "flat";
      break;
    case Variant::no_data:
      c.predictor = PredictorSpec{};
      c.predictor.kind = "none";
      c.pseudo.enabled = false;
      break;
    case Variant::no_both:
    case Variant::random:
      c.knowledge = KnowledgeSpec{};
      c.knowledge.kind = "flat";
      c.predictor = PredictorSpec{};
      c.predictor.kind = "none";
      c.pseudo.enabled = false;
      break;
    case Variant::oracle:
      // Upper-bound baseline: the predictor reads the table itself.
      c.knowledge = KnowledgeSpec{};
      c.knowledge.kind = "flat";
      c.predictor = PredictorSpec{};
      c.predictor.kind = "table";
      c.predictor.table_csv = "<in-memory:" + data.name + ">";
      c.pseudo.enabled = true;
      c.pseudo.scope = PseudoScope::full_space;
      break;
  }
  return c;
}

namespace {

RunTrajectory run_random(const std::shared_ptr<const LookupDataset>& data, const BenchOptions& o, std::uint64_t seed) {
  RunTrajectory t;
  MeteredObjective f(data);
  auto all = data->space.enumerate();
  Rng rng = derive_rng(seed, 0, "random");
  shuffle(all.begin(), all.end(), rng);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  for (int r = 0; r < o.rounds; ++r) {
    std::vector<double> vals;
    for (int i = 0; i < o.batch; ++i) {
      const double y = f(all[k++]);
      vals.push_back(y);
      best = std::max(best, y);
    }
    t.values.push_back(vals);
    t.best.push_back(best);
  }
  t.lookups = f.lookups();
  return t;
}

}  // namespace

RunTrajectory run_one(Variant v, std::shared_ptr<const LookupDataset> data, const BenchOptions& o,
                      std::uint64_t seed) {
  if (o.rounds < 1 || o.batch < 1) throw SchemaError("rounds and batch must be at least 1");
  if (static_cast<std::uint64_t>(o.rounds) * static_cast<std::uint64_t>(o.batch) > data->space.cardinality())
    throw SchemaError("budget rounds x batch exceeds the table size");
  const auto t0 = std::chrono::steady_clock::now();
  RunTrajectory t;
  if (v == Variant::random) {
    t = run_random(data, o, seed);
  } else {
    const auto config = variant_config(v, *data, o, seed);
    Runtime rt;
    rt.knowledge = make_knowledge_provider(config.knowledge, {});
    if (v == Variant::oracle)
      rt.predictor = std::make_unique<TableOracle>(data);
    else
      rt.predictor = make_predictor(config, data->space, {});
    auto state = init_campaign(config, rt);
    MeteredObjective f(data);
    for (int r = 0; r < o.rounds; ++r) {
      const auto batch = suggest(state, rt.predictor.get());
      std::vector<Labeled> results;
      std::vector<double> vals;
      for (const auto& c : batch) {
        const double y = f(c);
        results.push_back({c, y});
        vals.push_back(y);
      }
      ingest(state, results, rt.predictor.get());
      t.values.push_back(vals);
      t.best.push_back(*state.best());
    }
    t.lookups = f.lookups();
    t.pseudo_generated = state.pseudo.size();
  }
  t.variant = to_string(v);
  t.dataset = data->name;
  t.seed = seed;
  t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

std::vector<RunTrajectory> run_bench(const std::vector<Variant>& variants, std::shared_ptr<const LookupDataset> data,
                                     const BenchOptions& o) {
  struct Job {
    Variant v;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto v : variants)
    for (auto s : o.seeds) jobs.push_back({v, s});
  std::vector<RunTrajectory> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#ifdef KGBO_HAVE_OPENMP
  const int threads = o.threads > 0 ? o.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_one(jobs[static_cast<std::size_t>(i)].v, data, o, jobs[static_cast<std::size_t>(i)].seed);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

const RoundStats& BenchSummary::at(const std::string& variant, int round) const {
  for (const auto& r : rounds)
    if (r.variant == variant && r.round == round) return r;
  throw SchemaError("no summary for " + variant + " round " + std::to_string(round));
}

BenchSummary summarize(const std::vector<RunTrajectory>& runs, std::optional<double> target) {
  if (runs.empty()) throw SchemaError("summarize needs at least one trajectory");
  BenchSummary s;
  s.target = target;
  std::map<std::string, std::vector<const RunTrajectory*>> by;
  for (const auto& r : runs) by[r.variant].push_back(&r);
  for (const auto& [name, rs] : by) {
    std::size_t rounds = 0;
    for (auto* r : rs) rounds = std::max(rounds, r->best.size());
    for (std::size_t k = 0; k < rounds; ++k) {
      std::vector<double> xs;
      for (auto* r : rs)
        if (k < r->best.size()) xs.push_back(r->best[k]);
      // Sort first so the floating-point sums do not depend on run order.
      std::sort(xs.begin(), xs.end());
      RoundStats st;
      st.variant = name;
      st.round = static_cast<int>(k) + 1;
      st.n = xs.size();
      double sum = 0.0;
      for (double x : xs) sum += x;
      st.mean = sum / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - st.mean) * (x - st.mean);
      st.sd = std::sqrt(ss / static_cast<double>(xs.size()));
      st.se = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size())) : 0.0;
      st.min = xs.front();
      st.max = xs.back();
      s.rounds.push_back(st);
    }
    if (target) {
      TargetStats ts;
      ts.variant = name;
      ts.runs = rs.size();
      std::vector<int> hits;
      for (auto* r : rs)
        for (std::size_t k = 0; k < r->best.size(); ++k)
          if (r->best[k] >= *target) {
            hits.push_back(static_cast<int>(k) + 1);
            break;
          }
      ts.reached = hits.size();
      if (!hits.empty()) {
        double m = 0.0;
        for (int h : hits) m += h;
        ts.mean_round = m / static_cast<double>(hits.size());
      }
      s.targets.push_back(ts);
    }
  }
  return s;
}

CsvTable summary_csv(const BenchSummary& s) {
  CsvTable t;
  t.header = {"variant", "round", "n", "mean", "sd", "se", "min", "max"};
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::string(buf);
  };
  for (const auto& r : s.rounds)
    t.rows.push_back({r.variant, std::to_string(r.round), std::to_string(r.n), num(r.mean), num(r.sd), num(r.se),
                      num(r.min), num(r.max)});
  return t;
}

json plot_data(const BenchSummary& s, const std::string& dataset) {
  std::map<std::string, json> series;
  for (const auto& r : s.rounds) {
    auto& j = series[r.variant];
    if (j.is_null()) j = {{"variant", r.variant}, {"round", json::array()}, {"mean", json::array()},
                          {"sd", json::array()}, {"min", json::array()}, {"max", json::array()}};
    j["round"].push_back(r.round);
    j["mean"].push_back(r.mean);
    j["sd"].push_back(r.sd);
    j["min"].push_back(r.min);
    j["max"].push_back(r.max);
  }
  json arr = json::array();
  for (auto& [k, v] : series) arr.push_back(v);
  json targets = json::array();
  for (const auto& t : s.targets)
    targets.push_back({{"variant", t.variant}, {"runs", t.runs}, {"reached", t.reached}, {"mean_round", t.mean_round}});
  return {{"dataset", dataset},
          {"x_label", "Iteration Round"},
          {"y_label", "Best Value Found (%)"},
          {"target", s.target ? json(*s.target) : json(nullptr)},
          {"series", arr},
          {"round_to_target", targets}};
}

std::vector<Labeled> sample_prior(const LookupDataset& data, std::size_t count, std::uint64_t seed) {
  auto all = data.space.enumerate();
  Rng rng = derive_rng(seed, 0, "prior");
  shuffle(all.begin(), all.end(), rng);
  count = std::min(count, all.size());
  std::vector<Labeled> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({all[i], data.value(all[i])});
  return out;
}

}  // namespace kgbo
