#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kapr/kg_store.hpp"
#include "kapr/meta_path.hpp"
#include "kapr/reason.hpp"

namespace kapr {

/// Products sharing an also_viewed or also_bought edge.
class RelatedIndex {
 public:
  RelatedIndex() = default;
  /// Collects the product-product edges of every graph given.
  explicit RelatedIndex(std::span<const KnowledgeGraph* const> graphs);

  void add(std::uint32_t a, std::uint32_t b);
  bool related(std::uint32_t a, std::uint32_t b) const;

 private:
  std::unordered_set<std::uint64_t> pairs_;
};

/// Score of candidate c for query product a; higher ranks first.
using CandidateScorer = std::function<double(std::uint32_t a, std::uint32_t c)>;

struct HitsConfig {
  std::size_t negatives = 500;             // n
  std::vector<std::size_t> ks{10, 30, 50};
  std::uint64_t seed = 1;
};

/// For every test pair (A, B): draw n products unrelated to A (and not A)
/// without replacement, let m be how many of them score strictly above B,
/// and count a hit at k when m < k. Returns the hit fraction per k, in the
/// order of cfg.ks. Pair i draws from stream derive_seed(seed, i). Throws
/// InsufficientPopulation when fewer than n unrelated products exist.
std::vector<double> hits_at_k(const CandidateScorer& scorer,
                              std::span<const std::pair<std::uint32_t, std::uint32_t>> test_pairs,
                              const RelatedIndex& related, std::uint32_t products, const HitsConfig& cfg);

struct TopKMetrics {
  double ndcg = 0.0;
  double recall = 0.0;
  double hr = 0.0;
  double precision = 0.0;
  std::size_t queries = 0;  // queries with a nonempty truth set
};

/// Binary-relevance NDCG, recall, hit ratio and precision at k, averaged
/// over the queries whose truth set is nonempty.
TopKMetrics topk_metrics(std::span<const std::vector<std::uint32_t>> recommendations,
                         std::span<const std::set<std::uint32_t>> truths, std::size_t k);

struct PathStats {
  double paths_per_product = 0.0;    // valid paths per source product
  double products_per_product = 0.0; // distinct end products per source
  double paths_per_pair = 0.0;       // valid paths per (source, end) pair
};

/// Counts each source product once even if it has a record per relation.
PathStats path_stats(std::span<const InferenceRecord> records);

/// Replaces `fraction` of each listed relation's edges with an edge from the
/// same head to a uniformly drawn entity of the tail's kind. Replacements
/// never recreate an edge of g, so exactly that fraction changes whenever a
/// free tail exists; relation counts are preserved.
KnowledgeGraph degrade_graph(const KnowledgeGraph& g, double fraction, std::uint64_t seed,
                             std::span<const Relation> relations = kGraphRelations);

/// Copy of g without any edge of relation r.
KnowledgeGraph remove_relation(const KnowledgeGraph& g, Relation r);

struct RelationMetrics {
  std::vector<std::pair<std::size_t, double>> hits;  // (k, Hits@k)
  TopKMetrics topk;
  std::size_t test_pairs = 0;
};

struct MetricReport {
  std::string variant;
  std::map<TargetRelation, RelationMetrics> relations;
  PathStats paths;
  nlohmann::json metadata;  // seed, config hash, counters

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

/// Table with one row per (variant, relation) and a path-statistics block.
std::string render_table(std::span<const MetricReport> reports, std::size_t top_k = 10);

}  // namespace kapr
