#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kapr/kg_store.hpp"

namespace kapr {

/// The two product relationships being inferred.
enum class TargetRelation : std::uint8_t { Substitute, Complement };

inline constexpr std::array<TargetRelation, 2> kTargets = {TargetRelation::Substitute,
                                                           TargetRelation::Complement};

/// Substitutes are proxied by also_viewed, complements by also_bought.
constexpr Relation graph_relation(TargetRelation t) {
  return t == TargetRelation::Substitute ? Relation::AlsoViewed : Relation::AlsoBought;
}

std::string_view to_string(TargetRelation t);
std::optional<TargetRelation> parse_target(std::string_view s);

/// An entity/relation alternating walk starting at a product.
/// entities.size() == relations.size() + 1.
struct ReasoningPath {
  std::vector<EntityRef> entities;
  std::vector<Relation> relations;
  double log_prob = 0.0;
  double mfi_substitute = 0.0;
  double mfi_complement = 0.0;

  EntityRef source() const { return entities.front(); }
  EntityRef end() const { return entities.back(); }
  /// Copy with trailing SelfLoop hops removed.
  ReasoningPath stripped() const;
  /// Number of hops after stripping trailing SelfLoops.
  std::size_t stripped_length() const;
};

struct MetaPathPattern {
  std::vector<Relation> steps;
  TargetRelation target = TargetRelation::Substitute;

  friend bool operator==(const MetaPathPattern&, const MetaPathPattern&) = default;
};

/// Entity kinds visited when walking `steps` from a product. Returns nullopt
/// if some step cannot be taken from the kind reached so far.
std::optional<std::vector<EntityKind>> kinds_along(std::span<const Relation> steps);

/// A validated collection of meta-path patterns for both target relations.
class PatternSet {
 public:
  PatternSet() = default;
  /// Throws ConfigError for patterns that are not 2 or 3 graph-relation steps
  /// leading from a product back to a product.
  explicit PatternSet(std::vector<MetaPathPattern> patterns);

  /// Word/brand/category/user bridges P-r-X-r-P, the four two-hop
  /// also_viewed/also_bought chains, and each bridge extended by one
  /// also_viewed/also_bought hop before or after it. Identical for both
  /// targets.
  static PatternSet defaults();

  /// {"substitute": [["described_by","described_by"], ...], "complement": [...]}
  static PatternSet from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  const std::vector<MetaPathPattern>& patterns() const noexcept { return patterns_; }

  /// True iff `seq` equals some pattern (of the given target, if any).
  bool matches(std::span<const Relation> seq,
               std::optional<TargetRelation> target = std::nullopt) const;

  /// True iff `prefix` followed by `next` is a prefix of some pattern no
  /// longer than max_length.
  bool can_extend(std::span<const Relation> prefix, Relation next,
                  std::size_t max_length = static_cast<std::size_t>(-1)) const;

  /// True iff some pattern is strictly longer than `prefix` and starts with it.
  bool extendable(std::span<const Relation> prefix) const;

 private:
  std::vector<MetaPathPattern> patterns_;
};

/// True iff the path, with trailing SelfLoops stripped, follows one of the
/// patterns and ends at a product.
bool match_meta_path(const ReasoningPath& p, const PatternSet& patterns,
                     std::optional<TargetRelation> target = std::nullopt);

}  // namespace kapr
