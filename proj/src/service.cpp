#include "kgbo/service.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

// Eigen (via campaign.hpp) must precede httplib: <resolv.h> defines a `_res` macro.
#include "kgbo/campaign.hpp"
#include "kgbo/error.hpp"
#include "kgbo/http_util.hpp"

#include "httplib.h"

namespace kgbo {

namespace fs = std::filesystem;

namespace {

struct Handle {
  std::string id;
  std::mutex write;  // one mutation in flight
  mutable std::mutex snap_mu;
  std::shared_ptr<const CampaignState> snapshot;

  std::shared_ptr<const CampaignState> get() const {
    std::lock_guard lock(snap_mu);
    return snapshot;
  }
  void publish(std::shared_ptr<const CampaignState> s) {
    std::lock_guard lock(snap_mu);
    snapshot = std::move(s);
  }
};

struct HttpStatusError : Error {
  int status;
  HttpStatusError(int s, const std::string& m) : Error(m), status(s) {}
};

int status_for(const std::exception& e) {
  if (auto* h = dynamic_cast<const HttpStatusError*>(&e)) return h->status;
  if (dynamic_cast<const SchemaError*>(&e)) return 400;
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const ValueError*>(&e)) return 422;
  if (dynamic_cast<const ProviderError*>(&e)) return 502;
  if (dynamic_cast<const ExhaustedError*>(&e)) return 410;
  return 500;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double value_from_json(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    try {
      std::size_t used = 0;
      const double x = std::stod(s, &used);
      if (used == s.size()) return x;
    } catch (const std::exception&) {
    }
    throw ValueError("value '" + s + "' is not a number");
  }
  if (v.is_null()) throw ValueError("value is missing or non-finite");
  throw ValueError("value must be a number");
}

json conditions_json(const CampaignState& s, const std::vector<Condition>& cs) {
  json a = json::array();
  for (const auto& c : cs) a.push_back(s.space.condition_to_json(c));
  return a;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opt;
  std::mutex registry_mu;
  std::unordered_map<std::string, std::shared_ptr<Handle>> campaigns;
  std::map<std::string, std::string> idempotency;  // key -> campaign id
  std::uint64_t sequence = 0;
  std::mutex audit_mu;
  std::mutex create_mu;
  httplib::Server server;

  explicit Impl(ServiceOptions o) : opt(std::move(o)) {
    fs::create_directories(opt.data_dir);
    for (const auto& e : fs::directory_iterator(opt.data_dir)) {
      const auto name = e.path().filename().string();
      const std::string suffix = ".state.json";
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
      auto h = std::make_shared<Handle>();
      h->id = name.substr(0, name.size() - suffix.size());
      h->snapshot = std::make_shared<const CampaignState>(load_state(e.path().string()));
      campaigns[h->id] = h;
    }
    const auto idem = fs::path(opt.data_dir) / "idempotency.json";
    if (fs::exists(idem)) {
      std::ifstream in(idem);
      json j = json::parse(in);
      idempotency = j.at("keys").get<std::map<std::string, std::string>>();
      sequence = j.at("sequence").get<std::uint64_t>();
    }
  }

  std::string state_path(const std::string& id) const { return (fs::path(opt.data_dir) / (id + ".state.json")).string(); }

  void persist_registry() {
    json j = {{"keys", idempotency}, {"sequence", sequence}};
    const auto path = (fs::path(opt.data_dir) / "idempotency.json").string();
    std::ofstream(path + ".tmp") << j.dump();
    fs::rename(path + ".tmp", path);
  }

  void audit(const std::string& id, const HttpRequest& req, const HttpReply& rep) {
    if (id.empty()) return;
    json body_in = nullptr;
    if (!req.body.empty()) {
      try {
        body_in = json::parse(req.body);
      } catch (const json::exception&) {
        body_in = req.body;
      }
    }
    json rec = {{"method", req.method}, {"path", req.path}, {"request", body_in}, {"status", rep.status},
                {"response", rep.body}};
    auto it = req.headers.find("idempotency-key");
    if (it != req.headers.end()) rec["idempotency_key"] = it->second;
    std::lock_guard lock(audit_mu);
    std::ofstream(fs::path(opt.data_dir) / (id + ".audit.jsonl"), std::ios::app) << rec.dump() << '\n';
  }

  std::shared_ptr<Handle> find(const std::string& id) {
    std::lock_guard lock(registry_mu);
    auto it = campaigns.find(id);
    if (it == campaigns.end()) throw HttpStatusError(404, "no campaign '" + id + "'");
    return it->second;
  }

  // Copy, mutate, persist, publish. Readers never observe the copy early.
  template <typename F>
  json mutate(Handle& h, F&& f) {
    std::lock_guard lock(h.write);
    auto next = std::make_shared<CampaignState>(*h.get());
    auto pred = make_predictor(next->config, next->space,
                               [st = next.get()](const json& e) { st->audit.push_back(e); });
    json out;
    try {
      out = f(*next, pred.get());
    } catch (const ExhaustedError&) {
      // The exhausted status itself is worth keeping.
      if (next->status == CampaignStatus::exhausted) {
        save_state(*next, state_path(h.id));
        h.publish(std::move(next));
      }
      throw;
    }
    save_state(*next, state_path(h.id));
    h.publish(std::move(next));
    return out;
  }

  json parse_body(const HttpRequest& req, bool required) {
    if (req.body.empty()) {
      if (required) throw SchemaError("request body required");
      return json::object();
    }
    auto ct = req.headers.find("content-type");
    if (ct == req.headers.end() || ct->second.find("application/json") == std::string::npos)
      throw HttpStatusError(415, "content-type must be application/json");
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw SchemaError(std::string("invalid JSON body: ") + e.what());
    }
  }

  HttpReply create(const HttpRequest& req, std::string& id_out) {
    const json body = parse_body(req, true);
    std::string key;
    if (auto it = req.headers.find("idempotency-key"); it != req.headers.end()) key = it->second;
    auto config = CampaignConfig::from_json(body.contains("config") ? body["config"] : body);

    // Creation is serialized so idempotency keys and ids stay consistent.
    std::lock_guard create_lock(create_mu);
    {
      std::lock_guard lock(registry_mu);
      if (!key.empty()) {
        auto it = idempotency.find(key);
        if (it != idempotency.end()) {
          id_out = it->second;
          auto h = campaigns.at(it->second);
          return {200, summary(*h->get(), h->id)};
        }
      }
    }
    auto state = init_campaign(config);
    std::string id;
    {
      std::lock_guard lock(registry_mu);
      do {
        id = "c" + sha256_hex(body.dump() + "#" + std::to_string(sequence++) + "#" + key).substr(0, 15);
      } while (campaigns.count(id));
    }
    save_state(state, state_path(id));
    auto h = std::make_shared<Handle>();
    h->id = id;
    h->snapshot = std::make_shared<const CampaignState>(std::move(state));
    {
      std::lock_guard lock(registry_mu);
      campaigns[id] = h;
      if (!key.empty()) idempotency[key] = id;
      persist_registry();
    }
    id_out = id;
    return {201, summary(*h->get(), id)};
  }

  static json summary(const CampaignState& s, const std::string& id) {
    json j = status_json(s);
    j["id"] = id;
    return j;
  }

  HttpReply route(const HttpRequest& req, std::string& id) {
    const auto parts = split_path(req.path);
    if (parts.empty() || parts[0] != "campaigns") throw HttpStatusError(404, "no such endpoint " + req.path);
    if (parts.size() == 1) {
      if (req.method == "POST") return create(req, id);
      if (req.method == "GET") {
        json ids = json::array();
        std::lock_guard lock(registry_mu);
        std::vector<std::string> keys;
        for (const auto& [k, v] : campaigns) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (auto& k : keys) ids.push_back(k);
        return {200, {{"campaigns", ids}}};
      }
      throw HttpStatusError(405, "method not allowed");
    }
    id = parts[1];
    auto h = find(id);
    if (parts.size() == 2) {
      if (req.method != "GET") throw HttpStatusError(405, "method not allowed");
      auto s = h->get();
      json j = summary(*s, id);
      j["config"] = s->config.to_json();
      j["trajectory"] = trajectory_json(*s);
      return {200, j};
    }
    if (parts.size() != 3) throw HttpStatusError(404, "no such endpoint " + req.path);
    const auto& what = parts[2];
    if (req.method == "GET") {
      auto s = h->get();
      if (what == "tree") return {200, tree_json(*s)};
      if (what == "trajectory") return {200, trajectory_json(*s)};
      throw HttpStatusError(404, "no such endpoint " + req.path);
    }
    if (req.method != "POST") throw HttpStatusError(405, "method not allowed");
    if (what == "suggest") {
      const json body = parse_body(req, false);
      const bool force_new = body.value("force_new", false);
      json out = mutate(*h, [&](CampaignState& s, PerformancePredictor* pred) {
        if (force_new && !s.outstanding.empty())
          throw ConflictError("a batch is outstanding (awaiting_observations); submit observations first");
        const auto batch = suggest(s, pred);
        return json{{"round", s.round}, {"conditions", conditions_json(s, batch)}, {"status", to_string(s.status)}};
      });
      return {200, out};
    }
    if (what == "observations") {
      const json body = parse_body(req, true);
      if (!body.contains("results") || !body["results"].is_array()) throw SchemaError("body needs a 'results' array");
      const bool external = body.value("external", false);
      json out = mutate(*h, [&](CampaignState& s, PerformancePredictor* pred) {
        std::vector<Labeled> results;
        for (const auto& r : body["results"]) {
          if (!r.is_object() || !r.contains("condition")) throw SchemaError("each result needs a condition");
          Labeled l;
          l.condition = s.space.condition_from_json(r["condition"]);
          l.value = value_from_json(r.contains("value") ? r["value"] : json(nullptr));
          results.push_back(std::move(l));
        }
        IngestOptions io;
        io.allow_external = external;
        const auto rep = ingest(s, results, pred, io);
        if (opt.ingest_delay.count() > 0) std::this_thread::sleep_for(opt.ingest_delay);
        return json{{"round", s.round},
                    {"best_so_far", rep.best ? json(*rep.best) : json(nullptr)},
                    {"status", to_string(s.status)},
                    {"ingested", rep.ingested},
                    {"abandoned", rep.abandoned},
                    {"local_retired", rep.local_retired},
                    {"global_retired", rep.global_retired},
                    {"tree_swapped", rep.tree_swapped}};
      });
      return {200, out};
    }
    throw HttpStatusError(404, "no such endpoint " + req.path);
  }

  HttpReply handle(const HttpRequest& req) {
    std::string id;
    HttpReply rep;
    if (!opt.token.empty()) {
      auto it = req.headers.find("authorization");
      if (it == req.headers.end() || it->second != "Bearer " + opt.token) return {401, {{"error", "unauthorized"}}};
    }
    try {
      rep = route(req, id);
    } catch (const std::exception& e) {
      rep.status = status_for(e);
      rep.body = {{"error", e.what()}, {"status", rep.status}};
    }
    audit(id, req, rep);
    return rep;
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  auto& srv = impl_->server;
  auto bridge = [this](const httplib::Request& r, httplib::Response& res) {
    HttpRequest req;
    req.method = r.method;
    req.path = r.path;
    req.body = r.body;
    for (const auto& [k, v] : r.headers) {
      std::string lk = k;
      for (auto& c : lk) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      req.headers[lk] = v;
    }
    const auto rep = handle(req);
    res.status = rep.status;
    res.set_content(rep.body.dump(), "application/json");
  };
  srv.set_default_headers({{"X-API-Version", kApiVersion},
                           {"Access-Control-Allow-Origin", impl_->opt.cors_origin},
                           {"Access-Control-Allow-Headers", "Content-Type, Authorization, Idempotency-Key"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Get(R"(/.*)", bridge);
  srv.Post(R"(/.*)", bridge);
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

Service::~Service() { stop(); }

HttpReply Service::handle(const HttpRequest& request) { return impl_->handle(request); }

int Service::bind(const std::string& host, int port) {
  int p = port;
  if (port == 0)
    p = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port))
    p = -1;
  if (p < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return p;
}

void Service::serve() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace kgbo
