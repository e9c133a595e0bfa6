#include "kapr/meta_path.hpp"

#include <algorithm>

#include "kapr/error.hpp"

namespace kapr {

std::string_view to_string(TargetRelation t) {
  return t == TargetRelation::Substitute ? "substitute" : "complement";
}

std::optional<TargetRelation> parse_target(std::string_view s) {
  if (s == "substitute") return TargetRelation::Substitute;
  if (s == "complement") return TargetRelation::Complement;
  return std::nullopt;
}

ReasoningPath ReasoningPath::stripped() const {
  ReasoningPath out = *this;
  while (!out.relations.empty() && out.relations.back() == Relation::SelfLoop) {
    out.relations.pop_back();
    out.entities.pop_back();
  }
  return out;
}

std::size_t ReasoningPath::stripped_length() const {
  std::size_t n = relations.size();
  while (n > 0 && relations[n - 1] == Relation::SelfLoop) --n;
  return n;
}

std::optional<std::vector<EntityKind>> kinds_along(std::span<const Relation> steps) {
  std::vector<EntityKind> kinds{EntityKind::Product};
  for (Relation r : steps) {
    if (!is_graph_relation(r)) return std::nullopt;
    const auto s = schema_of(r);
    const EntityKind at = kinds.back();
    if (at == s.head) {
      kinds.push_back(s.tail);
    } else if (at == s.tail) {
      kinds.push_back(s.head);
    } else {
      return std::nullopt;
    }
  }
  return kinds;
}

PatternSet::PatternSet(std::vector<MetaPathPattern> patterns) : patterns_(std::move(patterns)) {
  for (const auto& p : patterns_) {
    if (p.steps.size() < 2 || p.steps.size() > 3) {
      throw ConfigError("meta-path patterns must have 2 or 3 steps");
    }
    const auto kinds = kinds_along(p.steps);
    if (!kinds || kinds->back() != EntityKind::Product) {
      throw ConfigError("meta-path pattern does not lead from a product to a product");
    }
  }
}

PatternSet PatternSet::defaults() {
  constexpr std::array<Relation, 4> bridges = {Relation::DescribedBy, Relation::ProducedBy,
                                               Relation::BelongTo, Relation::Purchase};
  constexpr std::array<Relation, 2> hops = {Relation::AlsoViewed, Relation::AlsoBought};
  std::vector<MetaPathPattern> out;
  for (TargetRelation target : kTargets) {
    for (Relation r : bridges) out.push_back({{r, r}, target});
    for (Relation a : hops) {
      for (Relation b : hops) out.push_back({{a, b}, target});
    }
    for (Relation r : bridges) {
      for (Relation h : hops) {
        out.push_back({{r, r, h}, target});
        out.push_back({{h, r, r}, target});
      }
    }
  }
  return PatternSet(std::move(out));
}

PatternSet PatternSet::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("pattern set must be an object keyed by target");
  for (const auto& [key, list] : j.items()) {
    if (!parse_target(key)) throw ConfigError("unknown pattern target '" + key + "'");
    if (!list.is_array()) throw ConfigError("patterns for '" + key + "' must be an array");
  }
  // Targets in canonical order so that to_json/from_json round-trips.
  std::vector<MetaPathPattern> out;
  for (TargetRelation target : kTargets) {
    const auto it = j.find(std::string(to_string(target)));
    if (it == j.end()) continue;
    for (const auto& steps : *it) {
      MetaPathPattern p{{}, target};
      if (!steps.is_array()) throw ConfigError("pattern must be an array of relation names");
      for (const auto& s : steps) {
        const auto rel = s.is_string() ? parse_relation(s.get<std::string>()) : std::nullopt;
        if (!rel || !is_graph_relation(*rel)) throw ConfigError("unknown relation " + s.dump());
        p.steps.push_back(*rel);
      }
      out.push_back(std::move(p));
    }
  }
  return PatternSet(std::move(out));
}

nlohmann::json PatternSet::to_json() const {
  nlohmann::json j = {{"substitute", nlohmann::json::array()},
                      {"complement", nlohmann::json::array()}};
  for (const auto& p : patterns_) {
    auto steps = nlohmann::json::array();
    for (Relation r : p.steps) steps.push_back(to_string(r));
    j[std::string(to_string(p.target))].push_back(std::move(steps));
  }
  return j;
}

bool PatternSet::matches(std::span<const Relation> seq, std::optional<TargetRelation> target) const {
  return std::any_of(patterns_.begin(), patterns_.end(), [&](const MetaPathPattern& p) {
    return (!target || p.target == *target) && std::ranges::equal(p.steps, seq);
  });
}

bool PatternSet::can_extend(std::span<const Relation> prefix, Relation next,
                            std::size_t max_length) const {
  return std::any_of(patterns_.begin(), patterns_.end(), [&](const MetaPathPattern& p) {
    if (p.steps.size() < prefix.size() + 1 || p.steps.size() > max_length) return false;
    return std::equal(prefix.begin(), prefix.end(), p.steps.begin()) &&
           p.steps[prefix.size()] == next;
  });
}

bool PatternSet::extendable(std::span<const Relation> prefix) const {
  return std::any_of(patterns_.begin(), patterns_.end(), [&](const MetaPathPattern& p) {
    return p.steps.size() > prefix.size() &&
           std::equal(prefix.begin(), prefix.end(), p.steps.begin());
  });
}

bool match_meta_path(const ReasoningPath& p, const PatternSet& patterns,
                     std::optional<TargetRelation> target) {
  const std::size_t n = p.stripped_length();
  if (p.entities.size() != p.relations.size() + 1) return false;
  if (p.entities[n].kind != EntityKind::Product) return false;
  return patterns.matches(std::span(p.relations).first(n), target);
}

}  // namespace kapr
