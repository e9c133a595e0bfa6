#include "kapr/kg_store.hpp"

#include <algorithm>

#include "kapr/artifact.hpp"
#include "kapr/error.hpp"

namespace kapr {

namespace {

constexpr std::array<std::string_view, kEntityKindCount> kKindNames = {
    "product", "user", "word", "brand", "category"};
constexpr std::array<std::string_view, kRelationCount + 1> kRelationNames = {
    "also_viewed", "also_bought", "described_by", "produced_by",
    "belong_to",   "purchase",    "self_loop"};

constexpr std::string_view kGraphFormat = "kapr.graph";

bool sorted_insert(std::vector<std::uint32_t>& v, std::uint32_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it != v.end() && *it == x) return false;
  v.insert(it, x);
  return true;
}

bool sorted_erase(std::vector<std::uint32_t>& v, std::uint32_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) return false;
  v.erase(it);
  return true;
}

bool sorted_contains(const std::vector<std::uint32_t>& v, std::uint32_t x) {
  return std::binary_search(v.begin(), v.end(), x);
}

std::string describe(EntityRef e) {
  return std::string(to_string(e.kind)) + " " + std::to_string(e.id);
}

}  // namespace

Relation relation_linking(EntityKind kind) {
  switch (kind) {
    case EntityKind::Word: return Relation::DescribedBy;
    case EntityKind::Brand: return Relation::ProducedBy;
    case EntityKind::Category: return Relation::BelongTo;
    case EntityKind::User: return Relation::Purchase;
    case EntityKind::Product: break;
  }
  throw SchemaViolation("no single relation links product to product");
}

std::string_view to_string(EntityKind kind) { return kKindNames[index_of(kind)]; }
std::string_view to_string(Relation r) { return kRelationNames[index_of(r)]; }

std::optional<EntityKind> parse_entity_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) return static_cast<EntityKind>(i);
  }
  return std::nullopt;
}

std::optional<Relation> parse_relation(std::string_view s) {
  for (std::size_t i = 0; i < kRelationNames.size(); ++i) {
    if (kRelationNames[i] == s) return static_cast<Relation>(i);
  }
  return std::nullopt;
}

std::string NameTable::render(EntityRef e) const {
  const auto& list = of(e.kind);
  std::string out(to_string(e.kind));
  out += ':';
  if (e.id < list.size()) {
    out += list[e.id];
  } else {
    out += '#';
    out += std::to_string(e.id);
  }
  return out;
}

KnowledgeGraph::KnowledgeGraph(const Populations& populations) : populations_(populations) {
  for (Relation r : kGraphRelations) {
    const auto s = schema_of(r);
    auto& store = relations_[index_of(r)];
    store.from_head.resize(population(s.head));
    if (s.head != s.tail) store.from_tail.resize(population(s.tail));
  }
}

void KnowledgeGraph::check_triple(EntityRef h, Relation r, EntityRef t) const {
  if (!is_graph_relation(r)) throw SchemaViolation("self_loop is not a graph relation");
  const auto s = schema_of(r);
  if (h.kind != s.head || t.kind != s.tail) {
    throw SchemaViolation(std::string(to_string(r)) + " cannot link " + describe(h) + " to " +
                          describe(t));
  }
  if (!contains(h)) throw UnknownEntity(describe(h));
  if (!contains(t)) throw UnknownEntity(describe(t));
  if (s.head == s.tail && h.id == t.id) {
    throw SchemaViolation(std::string(to_string(r)) + " self-edge on " + describe(h));
  }
}

bool KnowledgeGraph::add_triple(EntityRef h, Relation r, EntityRef t) {
  // Product relations may arrive in either orientation.
  if (r == Relation::Purchase && h.kind == EntityKind::Product && t.kind == EntityKind::User) {
    std::swap(h, t);
  }
  check_triple(h, r, t);
  auto& store = relations_[index_of(r)];
  bool inserted = false;
  if (is_product_relation(r)) {
    inserted = sorted_insert(store.from_head[h.id], t.id);
    if (inserted) sorted_insert(store.from_head[t.id], h.id);
  } else {
    inserted = sorted_insert(store.from_head[h.id], t.id);
    if (inserted) sorted_insert(store.from_tail[t.id], h.id);
  }
  if (inserted) ++store.count;
  return inserted;
}

bool KnowledgeGraph::remove_triple(EntityRef h, Relation r, EntityRef t) {
  if (!is_graph_relation(r)) return false;
  const auto s = schema_of(r);
  if (h.kind == s.tail && t.kind == s.head && s.head != s.tail) std::swap(h, t);
  if (h.kind != s.head || t.kind != s.tail || !contains(h) || !contains(t)) return false;
  auto& store = relations_[index_of(r)];
  bool erased = false;
  if (is_product_relation(r)) {
    erased = sorted_erase(store.from_head[h.id], t.id);
    if (erased) sorted_erase(store.from_head[t.id], h.id);
  } else {
    erased = sorted_erase(store.from_head[h.id], t.id);
    if (erased) sorted_erase(store.from_tail[t.id], h.id);
  }
  if (erased) --store.count;
  return erased;
}

void KnowledgeGraph::clear_relation(Relation r) {
  if (!is_graph_relation(r)) return;
  auto& store = relations_[index_of(r)];
  for (auto& l : store.from_head) l.clear();
  for (auto& l : store.from_tail) l.clear();
  store.count = 0;
}

bool KnowledgeGraph::has_edge(EntityRef a, Relation r, EntityRef b) const {
  if (!is_graph_relation(r) || !contains(a) || !contains(b)) return false;
  const auto s = schema_of(r);
  if (a.kind == s.tail && b.kind == s.head && s.head != s.tail) std::swap(a, b);
  if (a.kind != s.head || b.kind != s.tail) return false;
  return sorted_contains(relations_[index_of(r)].from_head[a.id], b.id);
}

std::span<const std::uint32_t> KnowledgeGraph::adjacent(EntityRef e, Relation r) const {
  if (!is_graph_relation(r) || !contains(e)) return {};
  const auto s = schema_of(r);
  const auto& store = relations_[index_of(r)];
  if (e.kind == s.head) return store.from_head[e.id];
  if (e.kind == s.tail) return store.from_tail[e.id];
  return {};
}

std::vector<Neighbor> KnowledgeGraph::neighbors(EntityRef e, std::optional<Relation> r) const {
  if (!contains(e)) throw UnknownEntity(describe(e));
  std::vector<Neighbor> out;
  for (Relation rel : kGraphRelations) {
    if (r && *r != rel) continue;
    const auto s = schema_of(rel);
    const EntityKind other = e.kind == s.head ? s.tail : s.head;
    for (std::uint32_t id : adjacent(e, rel)) out.push_back({rel, {other, id}});
  }
  return out;
}

std::size_t KnowledgeGraph::degree(EntityRef e) const {
  std::size_t d = 0;
  for (Relation rel : kGraphRelations) d += adjacent(e, rel).size();
  return d;
}

std::size_t KnowledgeGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& s : relations_) n += s.count;
  return n;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> KnowledgeGraph::edges(Relation r) const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  if (!is_graph_relation(r)) return out;
  const auto& store = relations_[index_of(r)];
  out.reserve(store.count);
  for (std::uint32_t h = 0; h < store.from_head.size(); ++h) {
    for (std::uint32_t t : store.from_head[h]) {
      if (is_product_relation(r) && t < h) continue;
      out.emplace_back(h, t);
    }
  }
  return out;
}

GraphStats graph_stats(const KnowledgeGraph& g) {
  GraphStats st;
  for (Relation r : kGraphRelations) {
    const auto i = index_of(r);
    st.edges[i] = g.edge_count(r);
    const auto heads = g.population(schema_of(r).head);
    st.per_head[i] = heads == 0 ? 0.0 : static_cast<double>(st.edges[i]) / heads;
  }
  return st;
}

void save_graph(const std::filesystem::path& path, const KnowledgeGraph& g, const NameTable* names,
                const nlohmann::json& extra) {
  nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
  manifest["format"] = kGraphFormat;
  manifest["version"] = artifact::kFormatVersion;
  for (EntityKind k : kEntityKinds) {
    manifest["populations"][std::string(to_string(k))] = g.population(k);
  }
  auto order = nlohmann::json::array();
  artifact::ByteWriter w;
  for (Relation r : kGraphRelations) {
    order.push_back(to_string(r));
    manifest["relations"][std::string(to_string(r))] = g.edge_count(r);
    for (auto [h, t] : g.edges(r)) {
      w.put_u32(h);
      w.put_u32(t);
    }
  }
  manifest["relation_order"] = std::move(order);
  if (names != nullptr) {
    for (EntityKind k : kEntityKinds) manifest["names"][std::string(to_string(k))] = names->of(k);
  }
  artifact::write(path, std::move(manifest), w.bytes());
}

LoadedGraph load_graph(const std::filesystem::path& path) {
  auto file = artifact::read(path, kGraphFormat);
  LoadedGraph out;
  try {
    Populations pops{};
    for (EntityKind k : kEntityKinds) {
      pops[index_of(k)] = file.manifest.at("populations").at(std::string(to_string(k))).get<std::uint32_t>();
    }
    out.graph = KnowledgeGraph(pops);
    artifact::ByteReader reader(file.payload);
    for (const auto& rel_name : file.manifest.at("relation_order")) {
      const auto rel = parse_relation(rel_name.get<std::string>());
      if (!rel || !is_graph_relation(*rel)) throw FormatError("unknown relation " + rel_name.dump());
      const auto s = schema_of(*rel);
      const auto count = file.manifest.at("relations").at(rel_name.get<std::string>()).get<std::size_t>();
      for (std::size_t i = 0; i < count; ++i) {
        const auto h = reader.get_u32();
        const auto t = reader.get_u32();
        out.graph.add_triple({s.head, h}, *rel, {s.tail, t});
      }
    }
    if (!reader.exhausted()) throw FormatError("trailing bytes in graph payload");
    if (file.manifest.contains("names")) {
      for (EntityKind k : kEntityKinds) {
        const auto key = std::string(to_string(k));
        if (file.manifest["names"].contains(key)) {
          out.names.of(k) = file.manifest["names"][key].get<std::vector<std::string>>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  out.manifest = std::move(file.manifest);
  return out;
}

}  // namespace kapr
