#include "kapr/env.hpp"

#include <algorithm>
#include <limits>

#include "kapr/error.hpp"

namespace kapr {

std::optional<std::size_t> PrunedActionSpace::find(const Action& a) const {
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i].action == a) return i;
  }
  return std::nullopt;
}

PrunedActionSpace prune_actions(const State& s, const KnowledgeGraph& g, const EmbeddingTable& tab,
                                const PatternSet& patterns, std::size_t n, std::size_t horizon) {
  if (n == 0) throw ConfigError("action space size must be at least 1");
  PrunedActionSpace out;
  const auto& rels = s.path.relations;
  const bool looped = !rels.empty() && rels.back() == Relation::SelfLoop;
  if (!looped && s.step() < horizon) {
    const EntityRef v0 = s.source();
    const EntityRef here = s.current();
    const auto& visited = s.path.entities;
    for (Relation r : kGraphRelations) {
      if (!patterns.can_extend(rels, r, horizon)) continue;
      const auto sch = schema_of(r);
      const EntityKind other = here.kind == sch.head ? sch.tail : sch.head;
      for (std::uint32_t id : g.adjacent(here, r)) {
        const EntityRef e{other, id};
        if (std::find(visited.begin(), visited.end(), e) != visited.end()) continue;
        out.actions.push_back({{r, e}, action_score(tab, v0, r, e)});
      }
    }
    auto better = [](const ScoredAction& a, const ScoredAction& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.action.relation != b.action.relation) return a.action.relation < b.action.relation;
      return a.action.target.id < b.action.target.id;
    };
    if (out.actions.size() > n) {
      std::partial_sort(out.actions.begin(), out.actions.begin() + static_cast<std::ptrdiff_t>(n),
                        out.actions.end(), better);
      out.actions.resize(n);
    } else {
      std::sort(out.actions.begin(), out.actions.end(), better);
    }
  }
  out.actions.push_back({{Relation::SelfLoop, s.current()}, -std::numeric_limits<double>::infinity()});
  return out;
}

bool is_rewardable(const ReasoningPath& path, const PatternSet& patterns) {
  if (!match_meta_path(path, patterns)) return false;
  return path.entities[path.stripped_length()] != path.source();
}

double terminal_reward(const ReasoningPath& path, const PatternSet& patterns, const Rewarder& rewarder) {
  if (!is_rewardable(path, patterns)) return 0.0;
  return rewarder(path.source(), path.entities[path.stripped_length()]);
}

Environment::Environment(const KnowledgeGraph& g, const EmbeddingTable& tab, const PatternSet& patterns,
                         EnvConfig cfg)
    : graph_(&g), tab_(&tab), patterns_(&patterns), cfg_(cfg) {
  if (cfg_.horizon == 0) throw ConfigError("horizon must be positive");
}

State Environment::reset(EntityRef v0) const {
  if (v0.kind != EntityKind::Product) throw NotAProduct(std::string(to_string(v0.kind)) + " " + std::to_string(v0.id));
  if (!graph_->contains(v0)) throw UnknownEntity("product " + std::to_string(v0.id));
  State s;
  s.path.entities.push_back(v0);
  return s;
}

PrunedActionSpace Environment::actions(const State& s) const {
  return prune_actions(s, *graph_, *tab_, *patterns_, cfg_.action_limit, cfg_.horizon);
}

std::pair<State, bool> Environment::step(const State& s, const Action& a) const {
  if (done(s)) throw IllegalAction("episode already finished");
  const auto space = actions(s);
  const auto idx = space.find(a);
  if (!idx) {
    throw IllegalAction(std::string(to_string(a.relation)) + " to " +
                        std::string(to_string(a.target.kind)) + " " + std::to_string(a.target.id));
  }
  return step(s, space, *idx);
}

std::pair<State, bool> Environment::step(const State& s, const PrunedActionSpace& space,
                                         std::size_t index) const {
  State next = s;
  const auto& a = space[index];
  next.path.relations.push_back(a.relation);
  next.path.entities.push_back(a.target);
  const bool finished = done(next);
  return {std::move(next), finished};
}

}  // namespace kapr
