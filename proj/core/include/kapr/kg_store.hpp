#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kapr {

enum class EntityKind : std::uint8_t { Product, User, Word, Brand, Category };
inline constexpr std::size_t kEntityKindCount = 5;

/// The six graph relations, plus the SelfLoop pseudo-relation the agent uses
/// to stay in place. SelfLoop is never stored in a KnowledgeGraph.
enum class Relation : std::uint8_t {
  AlsoViewed,
  AlsoBought,
  DescribedBy,
  ProducedBy,
  BelongTo,
  Purchase,
  SelfLoop,
};
inline constexpr std::size_t kRelationCount = 6;

inline constexpr std::array<Relation, kRelationCount> kGraphRelations = {
    Relation::AlsoViewed, Relation::AlsoBought, Relation::DescribedBy,
    Relation::ProducedBy, Relation::BelongTo,   Relation::Purchase,
};
inline constexpr std::array<EntityKind, kEntityKindCount> kEntityKinds = {
    EntityKind::Product, EntityKind::User, EntityKind::Word, EntityKind::Brand,
    EntityKind::Category,
};

struct RelationSchema {
  EntityKind head;
  EntityKind tail;
};

/// Head/tail kinds of a graph relation. Purchase is stored user -> product.
constexpr RelationSchema schema_of(Relation r) {
  switch (r) {
    case Relation::AlsoViewed:
    case Relation::AlsoBought: return {EntityKind::Product, EntityKind::Product};
    case Relation::DescribedBy: return {EntityKind::Product, EntityKind::Word};
    case Relation::ProducedBy: return {EntityKind::Product, EntityKind::Brand};
    case Relation::BelongTo: return {EntityKind::Product, EntityKind::Category};
    case Relation::Purchase: return {EntityKind::User, EntityKind::Product};
    case Relation::SelfLoop: break;
  }
  return {EntityKind::Product, EntityKind::Product};
}

constexpr bool is_graph_relation(Relation r) { return r != Relation::SelfLoop; }
constexpr bool is_product_relation(Relation r) {
  return r == Relation::AlsoViewed || r == Relation::AlsoBought;
}
constexpr std::size_t index_of(Relation r) { return static_cast<std::size_t>(r); }
constexpr std::size_t index_of(EntityKind k) { return static_cast<std::size_t>(k); }

/// The non-product relation that links products with entities of `kind`.
/// Only defined for kind != Product.
Relation relation_linking(EntityKind kind);

std::string_view to_string(EntityKind kind);
std::string_view to_string(Relation r);
std::optional<EntityKind> parse_entity_kind(std::string_view s);
std::optional<Relation> parse_relation(std::string_view s);

struct EntityRef {
  EntityKind kind = EntityKind::Product;
  std::uint32_t id = 0;

  friend auto operator<=>(const EntityRef&, const EntityRef&) = default;
};

inline EntityRef product(std::uint32_t id) { return {EntityKind::Product, id}; }

struct EntityRefHash {
  std::size_t operator()(const EntityRef& e) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(e.kind) << 32) | e.id);
  }
};

struct Neighbor {
  Relation relation;
  EntityRef entity;

  friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
};

using Populations = std::array<std::uint32_t, kEntityKindCount>;

/// Human-readable names per kind, indexed by dense id.
struct NameTable {
  std::array<std::vector<std::string>, kEntityKindCount> names;

  const std::vector<std::string>& of(EntityKind k) const { return names[index_of(k)]; }
  std::vector<std::string>& of(EntityKind k) { return names[index_of(k)]; }
  /// "kind:name", or "kind:#id" when no name is recorded.
  std::string render(EntityRef e) const;
};

/// Heterogeneous graph over five entity kinds and six relations.
///
/// Every edge is navigable from both endpoints. Product-product relations are
/// undirected: (a, r, b) and (b, r, a) are the same edge. Adjacency lists are
/// kept sorted so neighbor enumeration is deterministic.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(const Populations& populations);

  const Populations& populations() const noexcept { return populations_; }
  std::uint32_t population(EntityKind k) const noexcept { return populations_[index_of(k)]; }
  bool contains(EntityRef e) const noexcept { return e.id < population(e.kind); }

  /// Inserts (h, r, t). Returns false if the edge was already present.
  /// Throws SchemaViolation when kinds do not fit r (or r is SelfLoop, or a
  /// product relation links a product to itself) and UnknownEntity when an
  /// id is out of range.
  bool add_triple(EntityRef h, Relation r, EntityRef t);

  /// Removes the edge if present; either orientation is accepted.
  bool remove_triple(EntityRef h, Relation r, EntityRef t);

  /// Drops every edge of relation r.
  void clear_relation(Relation r);

  bool has_edge(EntityRef a, Relation r, EntityRef b) const;

  /// All (relation, entity) pairs adjacent to e, optionally restricted to one
  /// relation. Sorted by relation ordinal, then entity id.
  std::vector<Neighbor> neighbors(EntityRef e, std::optional<Relation> r = std::nullopt) const;

  /// Ids of entities adjacent to e through r; empty when e's kind is not an
  /// endpoint of r.
  std::span<const std::uint32_t> adjacent(EntityRef e, Relation r) const;

  std::size_t degree(EntityRef e) const;

  std::size_t edge_count(Relation r) const { return relations_[index_of(r)].count; }
  std::size_t edge_count() const;

  /// Canonical (head id, tail id) pairs sorted ascending. Product-product
  /// relations report each undirected edge once with head < tail.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges(Relation r) const;

  friend bool operator==(const KnowledgeGraph&, const KnowledgeGraph&) = default;

 private:
  struct RelationStore {
    std::vector<std::vector<std::uint32_t>> from_head;
    std::vector<std::vector<std::uint32_t>> from_tail;
    std::size_t count = 0;
    friend bool operator==(const RelationStore&, const RelationStore&) = default;
  };

  void check_triple(EntityRef h, Relation r, EntityRef t) const;

  Populations populations_{};
  std::array<RelationStore, kRelationCount> relations_;
};

struct GraphStats {
  std::array<std::size_t, kRelationCount> edges{};
  /// Edge count divided by the population of the relation's head kind.
  std::array<double, kRelationCount> per_head{};
};

GraphStats graph_stats(const KnowledgeGraph& g);

/// Writes the graph as a one-line JSON header followed by per-relation edge
/// lists of little-endian u32 (head, tail) pairs. `names` is embedded in the
/// header when provided; `extra` is merged into the header.
void save_graph(const std::filesystem::path& path, const KnowledgeGraph& g,
                const NameTable* names = nullptr, const nlohmann::json& extra = {});

struct LoadedGraph {
  KnowledgeGraph graph;
  NameTable names;
  nlohmann::json manifest;
};

LoadedGraph load_graph(const std::filesystem::path& path);

}  // namespace kapr
