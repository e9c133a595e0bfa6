#include <doctest.h>

#include <fstream>
#include <regex>

#include "kapr/error.hpp"
#include "kapr/kg_store.hpp"
#include "kapr/meta_path.hpp"
#include "support/fixtures.hpp"

using namespace kapr;
using kapr::testing::populations;

namespace {

const EntityRef kWord3{EntityKind::Word, 3};

std::string relation_letters(std::span<const Relation> rels) {
  std::string s;
  for (Relation r : rels) s += static_cast<char>('a' + index_of(r));
  return s;
}

}  // namespace

TEST_SUITE("kg_store") {

TEST_CASE("neighbors are symmetric") {
  KnowledgeGraph g(populations(3, 2, 5, 1, 1));
  g.add_triple(product(0), Relation::DescribedBy, kWord3);
  const auto back = g.neighbors(kWord3, Relation::DescribedBy);
  REQUIRE(back.size() == 1);
  CHECK(back[0].entity == product(0));
  CHECK(g.has_edge(kWord3, Relation::DescribedBy, product(0)));
}

TEST_CASE("duplicate triples are stored once") {
  KnowledgeGraph g(populations(3, 2, 1, 1, 1));
  const EntityRef u1{EntityKind::User, 1};
  CHECK(g.add_triple(u1, Relation::Purchase, product(2)));
  CHECK_FALSE(g.add_triple(u1, Relation::Purchase, product(2)));
  CHECK(g.edge_count(Relation::Purchase) == 1);
}

TEST_CASE("product relations are undirected") {
  KnowledgeGraph g(populations(3, 0, 0, 0, 0));
  g.add_triple(product(0), Relation::AlsoBought, product(1));
  CHECK_FALSE(g.add_triple(product(1), Relation::AlsoBought, product(0)));
  CHECK(g.edge_count(Relation::AlsoBought) == 1);
  CHECK(g.edges(Relation::AlsoBought) == (std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}}));
}

TEST_CASE("schema violations and unknown entities") {
  KnowledgeGraph g(populations(3, 2, 2, 1, 1));
  CHECK_THROWS_AS(g.add_triple(product(0), Relation::Purchase, EntityRef{EntityKind::Word, 1}), SchemaViolation);
  CHECK_THROWS_AS(g.add_triple(product(0), Relation::SelfLoop, product(0)), SchemaViolation);
  CHECK_THROWS_AS(g.add_triple(product(0), Relation::AlsoViewed, product(0)), SchemaViolation);
  CHECK_THROWS_AS(g.add_triple(product(7), Relation::DescribedBy, EntityRef{EntityKind::Word, 0}), UnknownEntity);
  CHECK_THROWS_AS(g.neighbors(EntityRef{EntityKind::Brand, 4}), UnknownEntity);
}

TEST_CASE("neighbors of an isolated entity are empty") {
  KnowledgeGraph g(populations(2, 1, 1, 1, 1));
  CHECK(g.neighbors(product(1)).empty());
}

TEST_CASE("star graph lists words in id order") {
  KnowledgeGraph g(populations(1, 0, 6, 0, 0));
  for (std::uint32_t w : {5u, 2u, 4u, 1u, 3u}) g.add_triple(product(0), Relation::DescribedBy, {EntityKind::Word, w});
  const auto n = g.neighbors(product(0));
  REQUIRE(n.size() == 5);
  for (std::uint32_t i = 0; i < 5; ++i) CHECK(n[i].entity.id == i + 1);
}

TEST_CASE("neighbors equal an enumeration of the stored triples") {
  const auto pop = populations(6, 4, 8, 2, 2);
  const auto g = kapr::testing::random_graph(pop, 60, 11);
  for (EntityKind k : kEntityKinds) {
    for (std::uint32_t id = 0; id < pop[index_of(k)]; ++id) {
      const EntityRef e{k, id};
      std::vector<Neighbor> expected;
      for (Relation r : kGraphRelations) {
        const auto sch = schema_of(r);
        for (auto [h, t] : g.edges(r)) {
          if (EntityRef{sch.head, h} == e) expected.push_back({r, {sch.tail, t}});
          if (EntityRef{sch.tail, t} == e) expected.push_back({r, {sch.head, h}});
        }
      }
      std::sort(expected.begin(), expected.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.relation != b.relation ? a.relation < b.relation : a.entity.id < b.entity.id;
      });
      CHECK(g.neighbors(e) == expected);
      CHECK(g.degree(e) == expected.size());
    }
  }
}

TEST_CASE("graph_stats divides by the head population") {
  KnowledgeGraph g(populations(10, 0, 0, 0, 0));
  for (std::uint32_t i = 0; i < 10; ++i) {
    g.add_triple(product(i), Relation::AlsoBought, product((i + 1) % 10));
    g.add_triple(product(i), Relation::AlsoBought, product((i + 3) % 10));
  }
  const auto st = graph_stats(g);
  CHECK(st.edges[index_of(Relation::AlsoBought)] == 20);
  CHECK(st.per_head[index_of(Relation::AlsoBought)] == doctest::Approx(2.0));
}

TEST_CASE("graph_stats matches a hand count on a random fixture") {
  const auto pop = populations(5, 4, 6, 2, 3);
  const auto g = kapr::testing::random_graph(pop, 40, 3);
  const auto st = graph_stats(g);
  for (Relation r : kGraphRelations) {
    std::size_t count = 0;
    const auto sch = schema_of(r);
    for (std::uint32_t h = 0; h < pop[index_of(sch.head)]; ++h) {
      for (std::uint32_t t = 0; t < pop[index_of(sch.tail)]; ++t) {
        const EntityRef a{sch.head, h}, b{sch.tail, t};
        if (a == b) continue;
        if (is_product_relation(r) && h > t) continue;
        count += g.has_edge(a, r, b) ? 1 : 0;
      }
    }
    CHECK(st.edges[index_of(r)] == count);
    CHECK(st.per_head[index_of(r)] == doctest::Approx(static_cast<double>(count) / pop[index_of(sch.head)]));
  }
}

TEST_CASE("serialization round trip") {
  kapr::testing::TempDir dir("graph");
  const auto pop = populations(8, 5, 9, 3, 2);
  const auto g = kapr::testing::random_graph(pop, 80, 5);
  NameTable names;
  for (std::uint32_t i = 0; i < 8; ++i) names.of(EntityKind::Product).push_back("P" + std::to_string(i));
  save_graph(dir / "g.graph", g, &names, {{"note", "x"}});
  const auto loaded = load_graph(dir / "g.graph");
  CHECK(loaded.graph == g);
  CHECK(loaded.names.of(EntityKind::Product) == names.of(EntityKind::Product));
  CHECK(graph_stats(loaded.graph).per_head == graph_stats(g).per_head);
  CHECK(loaded.names.render(product(3)) == "product:P3");
  CHECK(loaded.names.render(EntityRef{EntityKind::User, 2}) == "user:#2");
}

TEST_CASE("loading rejects a wrong format version") {
  kapr::testing::TempDir dir("graph-version");
  KnowledgeGraph g(populations(2, 0, 0, 0, 0));
  save_graph(dir / "g.graph", g);
  std::ifstream in(dir / "g.graph", std::ios::binary);
  std::string header, rest;
  std::getline(in, header);
  rest.assign(std::istreambuf_iterator<char>(in), {});
  auto j = nlohmann::json::parse(header);
  j["version"] = 99;
  std::ofstream(dir / "bad.graph", std::ios::binary) << j.dump() << "\n" << rest;
  CHECK_THROWS_AS(load_graph(dir / "bad.graph"), FormatError);
}

}  // TEST_SUITE

TEST_SUITE("meta_path") {

ReasoningPath make_path(std::vector<EntityRef> e, std::vector<Relation> r) {
  ReasoningPath p;
  p.entities = std::move(e);
  p.relations = std::move(r);
  return p;
}

TEST_CASE("word bridge matches the default patterns") {
  const auto patterns = PatternSet::defaults();
  const auto p = make_path({product(0), kWord3, product(1)}, {Relation::DescribedBy, Relation::DescribedBy});
  CHECK(match_meta_path(p, patterns, TargetRelation::Substitute));
  CHECK(match_meta_path(p, patterns, TargetRelation::Complement));
}

TEST_CASE("a path ending at a word does not match") {
  const auto p = make_path({product(0), kWord3}, {Relation::DescribedBy});
  CHECK_FALSE(match_meta_path(p, PatternSet::defaults()));
}

TEST_CASE("trailing self loops are stripped") {
  const auto p = make_path({product(0), kWord3, product(1), product(1)},
                           {Relation::DescribedBy, Relation::DescribedBy, Relation::SelfLoop});
  CHECK(p.stripped_length() == 2);
  CHECK(match_meta_path(p, PatternSet::defaults()));
}

TEST_CASE("default patterns all have length two or three") {
  const auto patterns = PatternSet::defaults();
  CHECK(patterns.patterns().size() == 2 * (4 + 4 + 16));
  for (const auto& p : patterns.patterns()) {
    CHECK((p.steps.size() == 2 || p.steps.size() == 3));
    const auto kinds = kinds_along(p.steps);
    REQUIRE(kinds.has_value());
    CHECK(kinds->back() == EntityKind::Product);
  }
}

TEST_CASE("invalid patterns are rejected") {
  CHECK_THROWS_AS(PatternSet({{{Relation::DescribedBy}, TargetRelation::Substitute}}), ConfigError);
  CHECK_THROWS_AS(PatternSet({{{Relation::DescribedBy, Relation::ProducedBy}, TargetRelation::Substitute}}),
                  ConfigError);
  CHECK_THROWS_AS(PatternSet::from_json({{"substitute", {{"described_by", "nope"}}}}), ConfigError);
}

TEST_CASE("json round trip") {
  const auto patterns = PatternSet::defaults();
  CHECK(PatternSet::from_json(patterns.to_json()).patterns() == patterns.patterns());
}

TEST_CASE("random walks agree with a regex over relation letters") {
  // Independent matcher: each default pattern becomes a string of letters,
  // matched with an alternation regex.
  const auto patterns = PatternSet::defaults();
  std::string alternation;
  for (const auto& p : patterns.patterns()) {
    alternation += (alternation.empty() ? "" : "|") + relation_letters(p.steps);
  }
  const std::regex re("^(" + alternation + ")$");

  const auto pop = populations(8, 6, 10, 3, 3);
  const auto g = kapr::testing::random_graph(pop, 120, 17);
  Rng rng(99);
  std::size_t checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    ReasoningPath p;
    p.entities = {product(static_cast<std::uint32_t>(rng.below(8)))};
    for (int step = 0; step < 3; ++step) {
      const auto n = g.neighbors(p.entities.back());
      if (n.empty()) break;
      const auto& pick = n[rng.below(n.size())];
      p.relations.push_back(pick.relation);
      p.entities.push_back(pick.entity);
    }
    const bool expected = p.entities.back().kind == EntityKind::Product &&
                          std::regex_match(relation_letters(p.relations), re);
    CHECK(match_meta_path(p, patterns) == expected);
    if (match_meta_path(p, patterns)) CHECK((p.stripped_length() == 2 || p.stripped_length() == 3));
    ++checked;
  }
  CHECK(checked == 500);
}

}  // TEST_SUITE
