#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgbo/campaign.hpp"
#include "kgbo/csv.hpp"
#include "kgbo/dataset.hpp"

namespace kgbo {

enum class Variant { full, no_knowledge, no_data, no_both, random, oracle };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::vector<Variant> parse_variants(const std::string& comma_list);

// Table lookups counted at the objective boundary.
class MeteredObjective {
 public:
  explicit MeteredObjective(std::shared_ptr<const LookupDataset> data) : data_(std::move(data)) {}
  double operator()(const Condition& c) {
    ++lookups_;
    return data_->value(c);
  }
  std::size_t lookups() const { return lookups_; }

 private:
  std::shared_ptr<const LookupDataset> data_;
  std::size_t lookups_ = 0;
};

struct BenchOptions {
  int rounds = 5;  // including the initial round
  int batch = 5;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  KnowledgeSpec knowledge;       // used by tree-based variants
  std::vector<Labeled> prior;    // related-task data for the ridge predictor
  RidgeConfig ridge;
  PseudoConfig pseudo;
  std::vector<AcquisitionKind> acquisitions{AcquisitionKind::log_ei(0.001)};
  double c_p = OptTree::default_cp;
  GPFitConfig gp;
  std::optional<double> target;
  int threads = 0;  // 0: OpenMP default
};

struct RunTrajectory {
  std::string variant;
  std::string dataset;
  std::uint64_t seed = 0;
  std::vector<double> best;                 // best-so-far after each round
  std::vector<std::vector<double>> values;  // batch values per round
  std::size_t lookups = 0;
  std::size_t pseudo_generated = 0;
  double wall_seconds = 0.0;

  json to_json() const;
};

// Campaign configuration the harness uses for a variant.
CampaignConfig variant_config(Variant v, const LookupDataset& data, const BenchOptions& options, std::uint64_t seed);

RunTrajectory run_one(Variant v, std::shared_ptr<const LookupDataset> data, const BenchOptions& options,
                      std::uint64_t seed);

// Every (variant, seed) pair; independent runs execute in parallel. Output is
// ordered by variant then seed regardless of scheduling.
std::vector<RunTrajectory> run_bench(const std::vector<Variant>& variants, std::shared_ptr<const LookupDataset> data,
                                     const BenchOptions& options);

struct RoundStats {
  std::string variant;
  int round = 0;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // population
  double se = 0.0;  // sample sd / sqrt(n)
  double min = 0.0;
  double max = 0.0;
};

struct TargetStats {
  std::string variant;
  std::size_t runs = 0;
  std::size_t reached = 0;
  double mean_round = 0.0;  // over runs that reached the target
};

struct BenchSummary {
  std::vector<RoundStats> rounds;  // ordered by variant name then round
  std::vector<TargetStats> targets;
  std::optional<double> target;

  const RoundStats& at(const std::string& variant, int round) const;
};

BenchSummary summarize(const std::vector<RunTrajectory>& runs, std::optional<double> target = std::nullopt);
CsvTable summary_csv(const BenchSummary& s);
json plot_data(const BenchSummary& s, const std::string& dataset);

// Related-task prior: `count` distinct random rows of `data`.
std::vector<Labeled> sample_prior(const LookupDataset& data, std::size_t count, std::uint64_t seed);

}  // namespace kgbo
