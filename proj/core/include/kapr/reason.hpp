#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "kapr/env.hpp"
#include "kapr/kg_store.hpp"
#include "kapr/meta_path.hpp"
#include "kapr/mfi.hpp"
#include "kapr/policy.hpp"

namespace kapr {

struct BeamConfig {
  std::vector<std::size_t> sizes{25, 5, 1};  // one width per step
  bool stochastic = false;  // sample each expansion without replacement instead of taking the top K
  std::uint64_t seed = 1;
};

/// Expands every frontier path by its K_t most probable actions (ties keep
/// action order) for each of the T steps, then keeps the paths that follow a
/// meta-path pattern and end at a product other than v0. Throws ConfigError
/// when sizes.size() != T or some K_t is 0.
std::vector<ReasoningPath> beam_search(EntityRef v0, const PolicyNetwork& policy, const Environment& env,
                                       const BeamConfig& cfg);

/// Relationship score of an ordered product pair.
using PairScorer = std::function<double(TargetRelation, std::uint32_t, std::uint32_t)>;

/// Symmetric MFI score of the requested head.
PairScorer mfi_scorer(const MfiBundle& bundle);

struct Candidate {
  double score = 0.0;
  ReasoningPath path;  // highest log-probability path reaching the product
};

/// Scores every product reached by `paths` for the given relation and
/// fills each path's terminal scores for both relations.
std::map<std::uint32_t, Candidate> collect_candidates(std::span<const ReasoningPath> paths, TargetRelation relation,
                                                      const PairScorer& scorer);

struct RankedItem {
  std::uint32_t product = 0;
  double score = 0.0;
  ReasoningPath path;
};

struct RankedRecommendation {
  EntityRef source;
  TargetRelation relation = TargetRelation::Substitute;
  std::size_t requested = 10;
  std::vector<RankedItem> items;
};

/// Drops v0 and its neighbors under the relation's graph edge in `train`,
/// sorts by descending score (ties by product id) and keeps the first n.
RankedRecommendation rank(const std::map<std::uint32_t, Candidate>& candidates, EntityRef v0,
                          TargetRelation relation, const KnowledgeGraph& train, std::size_t n = 10);

/// Everything inference produces for one (source, relation) query.
struct InferenceRecord {
  RankedRecommendation recommendation;
  std::vector<ReasoningPath> paths;  // every valid path found by the beam
};

/// ["product:A", "described_by", "word:x", ...]
nlohmann::json render_path(const ReasoningPath& path, const NameTable& names);

nlohmann::json to_json(const InferenceRecord& record, const NameTable& names);

/// Inverse of to_json; entity names are resolved through `names`.
InferenceRecord inference_from_json(const nlohmann::json& j, const NameTable& names);

}  // namespace kapr
