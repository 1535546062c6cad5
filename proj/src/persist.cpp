#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "kgbo/campaign.hpp"
#include "kgbo/error.hpp"
#include "kgbo/http_util.hpp"

namespace kgbo {

namespace {

constexpr const char* kFormat = "kgbo-campaign";

json conds_to_json(const std::vector<Condition>& cs) {
  json a = json::array();
  for (const auto& c : cs) a.push_back(c.values);
  return a;
}

std::vector<Condition> conds_from_json(const json& a) {
  std::vector<Condition> out;
  for (const auto& e : a) out.push_back(Condition{e.get<std::vector<int>>()});
  return out;
}

// NaN is not representable in JSON; an empty best (no observation yet) is null.
json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double num_from(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

}  // namespace

json state_to_json(const CampaignState& s) {
  json obs = json::array();
  for (const auto& o : s.observations) obs.push_back({{"condition", o.condition.values}, {"value", o.value}, {"round", o.round}});
  json rec = json::array();
  for (const auto& [r, c] : s.recommended) rec.push_back({{"round", r}, {"condition", c.values}});
  json reports = json::array();
  for (const auto& r : s.reports) reports.push_back(r.to_json());
  json trees = json::array();
  for (const auto& t : s.trees) trees.push_back(t.to_json());
  json traj = json::array();
  for (const auto& r : s.trajectory)
    traj.push_back({{"round", r.round}, {"values", r.values}, {"best", num_or_null(r.best)}, {"abandoned", r.abandoned},
                    {"local_retired", r.local_retired}, {"global_retired", r.global_retired},
                    {"live_pseudo", r.live_pseudo}, {"active_tree", r.active_tree}});
  return {{"config", s.config.to_json()},
          {"reports", reports},
          {"trees", trees},
          {"active_tree", s.active_tree},
          {"observations", obs},
          {"pseudo", pseudo_to_json(s.space, s.pseudo)},
          {"round", s.round},
          {"outstanding", conds_to_json(s.outstanding)},
          {"recommended", rec},
          {"abandoned", conds_to_json(s.abandoned)},
          {"trajectory", traj},
          {"rounds_without_improvement", s.rounds_without_improvement},
          {"status", to_string(s.status)},
          {"last_recommendation", s.last_recommendation},
          {"predictor_state", s.predictor_state},
          {"audit", s.audit}};
}

CampaignState state_from_json(const json& j) {
  CampaignState s;
  try {
    s.config = CampaignConfig::from_json(j.at("config"));
    s.space = build_space(s.config.manifest);
    for (const auto& r : j.at("reports")) s.reports.push_back(KnowledgeReport::from_json(r));
    for (const auto& t : j.at("trees")) s.trees.push_back(OptTree::from_json(t));
    s.active_tree = j.at("active_tree").get<std::size_t>();
    for (const auto& o : j.at("observations"))
      s.observations.push_back({Condition{o.at("condition").get<std::vector<int>>()}, o.at("value").get<double>(),
                                o.at("round").get<int>()});
    s.pseudo = pseudo_from_json(s.space, j.at("pseudo"));
    s.round = j.at("round").get<int>();
    s.outstanding = conds_from_json(j.at("outstanding"));
    for (const auto& r : j.at("recommended"))
      s.recommended.emplace_back(r.at("round").get<int>(), Condition{r.at("condition").get<std::vector<int>>()});
    s.abandoned = conds_from_json(j.at("abandoned"));
    for (const auto& r : j.at("trajectory")) {
      RoundRecord rr;
      rr.round = r.at("round").get<int>();
      rr.values = r.at("values").get<std::vector<double>>();
      rr.best = num_from(r.at("best"));
      rr.abandoned = r.at("abandoned").get<std::size_t>();
      rr.local_retired = r.at("local_retired").get<std::size_t>();
      rr.global_retired = r.at("global_retired").get<std::size_t>();
      rr.live_pseudo = r.at("live_pseudo").get<std::size_t>();
      rr.active_tree = r.at("active_tree").get<std::size_t>();
      s.trajectory.push_back(std::move(rr));
    }
    s.rounds_without_improvement = j.at("rounds_without_improvement").get<int>();
    s.status = status_from_string(j.at("status").get<std::string>());
    s.last_recommendation = j.at("last_recommendation");
    s.predictor_state = j.at("predictor_state");
    for (const auto& a : j.at("audit")) s.audit.push_back(a);
  } catch (const json::exception& e) {
    throw CorruptStateError(std::string("campaign state: ") + e.what());
  } catch (const SchemaError& e) {
    throw CorruptStateError(std::string("campaign state: ") + e.what());
  }
  validate_state(s);
  return s;
}

void validate_state(const CampaignState& s) {
  auto fail = [](const std::string& m) { throw CorruptStateError("invalid campaign state: " + m); };
  if (s.trees.empty() || s.trees.size() != s.reports.size()) fail("tree/report count mismatch");
  if (s.active_tree >= s.trees.size()) fail("active tree index out of range");
  for (const auto& t : s.trees) {
    if (t.partition().size() != s.space.variable_count()) fail("tree partition does not match the space");
    for (std::size_t v = 0; v < t.partition().size(); ++v)
      if (t.partition()[v].size() != s.space.variable(v).size()) fail("tree partition does not match the space");
  }
  if (s.round < 0) fail("negative round");
  std::set<Condition> seen;
  for (const auto& o : s.observations) {
    if (!s.space.contains(o.condition)) fail("observation outside the space");
    if (!std::isfinite(o.value)) fail("non-finite observation");
    if (!seen.insert(o.condition).second) fail("repeated observation " + s.space.describe(o.condition));
  }
  // Tree statistics must equal a replay of the observations.
  const auto& t = s.tree();
  std::int64_t leaf_n = 0;
  for (auto l : t.leaves()) leaf_n += t.node(l).n;
  if (leaf_n != static_cast<std::int64_t>(s.observations.size())) fail("leaf visit counts do not sum to the observations");
  if (t.node(t.root()).n != static_cast<std::int64_t>(s.observations.size())) fail("root visit count mismatch");
  std::set<Condition> rec;
  for (const auto& [r, c] : s.recommended) {
    if (!s.space.contains(c)) fail("recommendation outside the space");
    if (!rec.insert(c).second) fail("condition recommended twice");
  }
  for (const auto& c : s.outstanding)
    if (!rec.count(c)) fail("outstanding condition was never recommended");
  if (!s.outstanding.empty() && s.status != CampaignStatus::awaiting_observations)
    fail("outstanding batch with status " + to_string(s.status));
  if (s.trajectory.size() != static_cast<std::size_t>(s.round)) fail("trajectory length differs from the round");
  for (const auto& p : s.pseudo)
    if (p.alive && seen.count(p.condition)) fail("live pseudo-point at an observed condition");
}

std::string serialize_state(const CampaignState& s) {
  const std::string body = state_to_json(s).dump();
  json env = {{"format", kFormat}, {"version", kStateVersion}, {"sha256", sha256_hex(body)}};
  // The state body is spliced in verbatim so the checksum covers exactly its bytes.
  std::string head = env.dump();
  head.pop_back();
  return head + ",\"state\":" + body + "}\n";
}

CampaignState deserialize_state(const std::string& text) {
  const std::string marker = ",\"state\":";
  const auto pos = text.find(marker);
  if (pos == std::string::npos) throw CorruptStateError("campaign state file is truncated or malformed");
  json head;
  try {
    head = json::parse(text.substr(0, pos) + "}");
  } catch (const json::exception& e) {
    throw CorruptStateError(std::string("campaign state header: ") + e.what());
  }
  if (head.value("format", std::string()) != kFormat) throw CorruptStateError("not a campaign state file");
  const int version = head.value("version", -1);
  if (version != kStateVersion)
    throw CorruptStateError("unsupported campaign state version " + std::to_string(version) + " (this build reads " +
                            std::to_string(kStateVersion) + ")");
  std::string body = text.substr(pos + marker.size());
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r' || body.back() == ' ')) body.pop_back();
  if (body.empty() || body.back() != '}') throw CorruptStateError("campaign state file is truncated");
  body.pop_back();
  if (sha256_hex(body) != head.value("sha256", std::string()))
    throw CorruptStateError("campaign state checksum mismatch (file corrupted or truncated)");
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw CorruptStateError(std::string("campaign state body: ") + e.what());
  }
  return state_from_json(j);
}

void save_state(const CampaignState& s, const std::string& path) {
  const std::string text = serialize_state(s);
  const std::string tmp = path + ".tmp";
  {
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw Error("cannot write " + tmp);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() && std::fflush(f) == 0 &&
                    ::fsync(fileno(f)) == 0;
    std::fclose(f);
    if (!ok) {
      std::remove(tmp.c_str());
      throw Error("failed writing " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot replace " + path + ": " + ec.message());
}

CampaignState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptStateError("cannot open campaign state " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_state(ss.str());
}

}  // namespace kgbo
