#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "kapr/embed.hpp"
#include "kapr/kg_store.hpp"
#include "kapr/meta_path.hpp"

namespace kapr {

struct EnvConfig {
  std::size_t history = 1;         // k
  std::size_t horizon = 3;         // T
  std::size_t action_limit = 250;  // D
};

struct Action {
  Relation relation = Relation::SelfLoop;
  EntityRef target;

  friend bool operator==(const Action&, const Action&) = default;
};

struct ScoredAction {
  Action action;
  double score = 0.0;
};

/// Pattern-feasible actions ranked by pruning score, followed by SelfLoop.
struct PrunedActionSpace {
  std::vector<ScoredAction> actions;

  std::size_t size() const noexcept { return actions.size(); }
  const Action& operator[](std::size_t i) const { return actions[i].action; }
  std::optional<std::size_t> find(const Action& a) const;
};

/// Position of the walker: the path walked so far from the start product.
struct State {
  ReasoningPath path;

  EntityRef source() const { return path.entities.front(); }
  EntityRef current() const { return path.entities.back(); }
  std::size_t step() const noexcept { return path.relations.size(); }
};

/// Top-n pattern-feasible actions of s by action_score(v0, ., .), ties broken
/// by (relation ordinal, entity id), excluding entities already on the path.
/// SelfLoop is always appended last with score -inf and is the only action
/// once the walker has self-looped or the horizon is reached.
PrunedActionSpace prune_actions(const State& s, const KnowledgeGraph& g, const EmbeddingTable& tab,
                                const PatternSet& patterns, std::size_t n,
                                std::size_t horizon = 3);

/// Terminal reward source, e.g. the MFI head maximum or a TransE score.
class Rewarder {
 public:
  virtual ~Rewarder() = default;
  virtual double operator()(EntityRef v0, EntityRef e) const = 0;
};

/// A finished path earns a reward only if, with trailing SelfLoops removed,
/// it follows a meta-path pattern and ends at a product other than v0.
bool is_rewardable(const ReasoningPath& path, const PatternSet& patterns);

double terminal_reward(const ReasoningPath& path, const PatternSet& patterns, const Rewarder& rewarder);

/// Deterministic walk environment over a read-only graph. Cheap to copy.
class Environment {
 public:
  Environment(const KnowledgeGraph& g, const EmbeddingTable& tab, const PatternSet& patterns,
              EnvConfig cfg = {});

  /// Throws NotAProduct unless v0 is a product.
  State reset(EntityRef v0) const;

  PrunedActionSpace actions(const State& s) const;

  /// Applies the action; throws IllegalAction if it is not in actions(s).
  /// Returns the next state and whether the horizon has been reached.
  std::pair<State, bool> step(const State& s, const Action& a) const;

  /// Unchecked transition for an action taken from `space`.
  std::pair<State, bool> step(const State& s, const PrunedActionSpace& space, std::size_t index) const;

  bool done(const State& s) const noexcept { return s.step() >= cfg_.horizon; }

  const EnvConfig& config() const noexcept { return cfg_; }
  const KnowledgeGraph& graph() const noexcept { return *graph_; }
  const EmbeddingTable& embeddings() const noexcept { return *tab_; }
  const PatternSet& patterns() const noexcept { return *patterns_; }

 private:
  const KnowledgeGraph* graph_;
  const EmbeddingTable* tab_;
  const PatternSet* patterns_;
  EnvConfig cfg_;
};

}  // namespace kapr
