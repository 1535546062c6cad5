#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kgbo/http_util.hpp"
#include "kgbo/opt_tree.hpp"
#include "kgbo/search_space.hpp"

namespace kgbo {

// Importance ranking plus per-variable candidate clustering. Numeric
// variables may be omitted from `clusterings`; they then keep the manifest's
// level subsets.
struct KnowledgeReport {
  std::vector<std::string> ranking;
  std::map<std::string, std::map<std::string, int>> clusterings;
  std::string rationale;

  json to_json() const;
  static KnowledgeReport from_json(const json& j);
  bool operator==(const KnowledgeReport&) const = default;
};

// Throws SchemaError naming the offending variable or candidate.
void validate_report(const KnowledgeReport& report, const SearchSpace& space);

class KnowledgeProvider {
 public:
  virtual ~KnowledgeProvider() = default;
  virtual KnowledgeReport report(const json& space_manifest, const std::string& task_description) = 0;
};

// Replays a curated report file.
class StaticProvider final : public KnowledgeProvider {
 public:
  explicit StaticProvider(KnowledgeReport report) : report_(std::move(report)) {}
  static std::unique_ptr<StaticProvider> from_file(const std::string& path);
  KnowledgeReport report(const json&, const std::string&) override { return report_; }

 private:
  KnowledgeReport report_;
};

// Ranking and subsets exactly as the manifest declares them.
class ManifestProvider final : public KnowledgeProvider {
 public:
  KnowledgeReport report(const json& space_manifest, const std::string& task_description) override;
};

// Every variable collapsed to one subset: a single-leaf tree.
class FlatProvider final : public KnowledgeProvider {
 public:
  KnowledgeReport report(const json& space_manifest, const std::string& task_description) override;
};

// Ranking from the manifest; subsets from seeded k-means (k-means++ init,
// at most 100 Lloyd iterations, L2 on z-scored properties).
class PropertyClusterProvider final : public KnowledgeProvider {
 public:
  PropertyClusterProvider(std::map<std::string, int> k_per_variable, std::uint64_t seed)
      : k_(std::move(k_per_variable)), seed_(seed) {}
  KnowledgeReport report(const json& space_manifest, const std::string& task_description) override;

 private:
  std::map<std::string, int> k_;
  std::uint64_t seed_;
};

struct RemoteProviderConfig {
  std::string endpoint;
  std::string token;
  std::string prompt_template;
  int max_retries = 3;
  double timeout_seconds = 30.0;
  std::string cache_dir;  // empty disables the on-disk response cache
};

// JSON-over-HTTP client: request {space_manifest, task_description,
// prompt_template}, response is a KnowledgeReport.
class RemoteProvider final : public KnowledgeProvider {
 public:
  RemoteProvider(RemoteProviderConfig config, AuditSink audit = {})
      : config_(std::move(config)), audit_(std::move(audit)) {}
  KnowledgeReport report(const json& space_manifest, const std::string& task_description) override;

 private:
  RemoteProviderConfig config_;
  AuditSink audit_;
};

// Result of k-means; exposed for testing.
std::vector<int> kmeans_cluster(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                                int max_iterations = 100);

OptTree build_tree(const SearchSpace& space, const KnowledgeReport& report, double c_p = OptTree::default_cp);

}  // namespace kgbo
