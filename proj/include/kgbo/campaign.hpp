#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgbo/acquisition.hpp"
#include "kgbo/csv.hpp"
#include "kgbo/gp.hpp"
#include "kgbo/knowledge.hpp"
#include "kgbo/opt_tree.hpp"
#include "kgbo/predictor.hpp"
#include "kgbo/pseudo.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

struct KnowledgeSpec {
  std::string kind = "manifest";  // manifest | static | cluster | remote | flat
  std::string report_file;
  std::vector<std::string> candidate_report_files;
  std::map<std::string, int> k_per_variable;
  std::uint64_t seed = 0;
  RemoteProviderConfig remote;

  json to_json() const;
  static KnowledgeSpec from_json(const json& j);
};

struct PredictorSpec {
  std::string kind = "ridge";  // none | ridge | table | remote
  RidgeConfig ridge;
  std::vector<Labeled> prior;  // ridge prior data, inlined at config load
  std::string table_csv;
  RemotePredictorConfig remote;

  json to_json(const SearchSpace& space) const;
  static PredictorSpec from_json(const json& j, const SearchSpace& space);
};

struct CampaignConfig {
  json manifest;
  std::string task_description;
  KnowledgeSpec knowledge;
  PredictorSpec predictor;
  int batch_size = 5;
  std::vector<AcquisitionKind> acquisitions{AcquisitionKind::log_ei(0.001)};
  double c_p = OptTree::default_cp;
  PseudoConfig pseudo;
  int max_rounds = 10;
  std::optional<double> target;
  int patience = 3;  // rounds without improvement before converged; 0 disables
  std::uint64_t seed = 0;
  std::string objective = "yield";
  bool percent_objective = true;
  GPFitConfig gp;
  std::uint64_t enumeration_cap = SearchSpace::default_enumeration_cap;

  json to_json() const;
  // Relative paths inside `j` resolve against `base_dir`; manifest_path and
  // prior_csv are read and inlined.
  static CampaignConfig from_json(const json& j, const std::string& base_dir = ".");
};

CampaignConfig load_config(const std::string& path);

enum class CampaignStatus { awaiting_observations, ready, converged, exhausted };
std::string to_string(CampaignStatus s);
CampaignStatus status_from_string(const std::string& s);

struct RoundRecord {
  int round = 0;  // round index after the ingest
  std::vector<double> values;
  double best = 0.0;
  std::size_t abandoned = 0;
  std::size_t local_retired = 0;
  std::size_t global_retired = 0;
  std::size_t live_pseudo = 0;
  std::size_t active_tree = 0;
};

struct CampaignState {
  CampaignConfig config;
  SearchSpace space;
  std::vector<KnowledgeReport> reports;  // active candidate first at init
  std::vector<OptTree> trees;
  std::size_t active_tree = 0;
  std::vector<Observation> observations;
  std::vector<PseudoPoint> pseudo;
  int round = 0;
  std::vector<Condition> outstanding;
  std::vector<std::pair<int, Condition>> recommended;  // (round, condition), lifetime
  std::vector<Condition> abandoned;
  std::vector<RoundRecord> trajectory;
  int rounds_without_improvement = 0;
  CampaignStatus status = CampaignStatus::ready;
  json last_recommendation = json::object();  // leaves, acquisition kinds, GP diagnostics
  json predictor_state = json::object();
  std::vector<json> audit;

  const OptTree& tree() const { return trees.at(active_tree); }
  OptTree& tree() { return trees.at(active_tree); }
  std::optional<double> best() const;
  std::set<Condition> observed_set() const;
  std::set<Condition> recommended_set() const;
};

struct Runtime {
  std::unique_ptr<KnowledgeProvider> knowledge;
  std::unique_ptr<PerformancePredictor> predictor;  // null when the data module is off
};

// Providers and predictor described by the config. Remote calls append to `audit`.
std::unique_ptr<KnowledgeProvider> make_knowledge_provider(const KnowledgeSpec& spec, AuditSink audit);
std::unique_ptr<PerformancePredictor> make_predictor(const CampaignConfig& config, const SearchSpace& space,
                                                     AuditSink audit = {});

CampaignState init_campaign(const CampaignConfig& config);
CampaignState init_campaign(const CampaignConfig& config, Runtime& runtime);

// Round 0 design: per variable, subset usage across the batch differs by at
// most one.
std::vector<Condition> initial_batch(CampaignState& state);

// Tree leaves via batch_select, then fantasized GP batches inside each leaf.
std::vector<Condition> recommend(CampaignState& state, PerformancePredictor* predictor);

// The outstanding batch when one exists, else initial_batch or recommend.
std::vector<Condition> suggest(CampaignState& state, PerformancePredictor* predictor);

struct IngestOptions {
  bool allow_external = false;
};

struct IngestReport {
  std::size_t ingested = 0;
  std::size_t abandoned = 0;
  std::size_t local_retired = 0;
  std::size_t global_retired = 0;
  bool tree_swapped = false;
  std::optional<double> best;
};

IngestReport ingest(CampaignState& state, const std::vector<Labeled>& results, PerformancePredictor* predictor,
                    IngestOptions options = {});

// Persistence: versioned JSON envelope with a SHA-256 checksum of the state.
inline constexpr int kStateVersion = 1;
json state_to_json(const CampaignState& state);
CampaignState state_from_json(const json& j);
std::string serialize_state(const CampaignState& state);
CampaignState deserialize_state(const std::string& text);
void save_state(const CampaignState& state, const std::string& path);
CampaignState load_state(const std::string& path);
// Throws CorruptStateError when a module invariant does not hold.
void validate_state(const CampaignState& state);

// Results CSV: one column per variable plus `value`.
std::vector<Labeled> parse_results_csv(const SearchSpace& space, const CsvTable& table);
CsvTable conditions_to_csv(const SearchSpace& space, const std::vector<Condition>& conditions);
json status_json(const CampaignState& state);
json tree_json(const CampaignState& state);
json trajectory_json(const CampaignState& state);
CsvTable metrics_csv(const CampaignState& state);

}  // namespace kgbo
