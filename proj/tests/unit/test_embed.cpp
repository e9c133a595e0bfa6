#include <doctest.h>

#include "kapr/embed.hpp"
#include "kapr/error.hpp"
#include "support/fixtures.hpp"

using namespace kapr;
using kapr::testing::populations;

namespace {

const EntityRef kWord0{EntityKind::Word, 0};

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("action_score on a two-dimensional hand example") {
  EmbeddingTable tab(populations(2, 0, 1, 0, 0), 2);
  tab.entity(product(0)) << 1.0, 0.0;
  tab.relation(Relation::DescribedBy) << 0.5, 0.5;
  tab.entity(kWord0) << 1.0, 2.0;
  // (1 + 0.5) * 1 + (0 + 0.5) * 2 = 2.5, for any action relation.
  CHECK(action_score(tab, product(0), Relation::DescribedBy, kWord0) == doctest::Approx(2.5));
  CHECK(action_score(tab, product(0), Relation::SelfLoop, kWord0) == doctest::Approx(2.5));
  tab.bias(kWord0) = 0.75;
  CHECK(action_score(tab, product(0), Relation::DescribedBy, kWord0) == doctest::Approx(3.25));
}

TEST_CASE("zero embeddings score zero") {
  const EmbeddingTable tab(populations(2, 1, 1, 1, 1), 4);
  CHECK(action_score(tab, product(0), Relation::AlsoBought, product(1)) == 0.0);
  CHECK(action_score(tab, product(0), Relation::Purchase, EntityRef{EntityKind::User, 0}) == 0.0);
  CHECK(tab.relation(Relation::SelfLoop).isZero());
}

TEST_CASE("product targets take the larger of the two product relations") {
  EmbeddingTable tab(populations(2, 0, 0, 0, 0), 1);
  tab.entity(product(0))(0) = 1.0;
  tab.entity(product(1))(0) = 2.0;
  tab.relation(Relation::AlsoViewed)(0) = -3.0;
  tab.relation(Relation::AlsoBought)(0) = 1.0;
  CHECK(action_score(tab, product(0), Relation::AlsoViewed, product(1)) == doctest::Approx(4.0));
  tab.relation(Relation::AlsoViewed)(0) = 5.0;
  CHECK(action_score(tab, product(0), Relation::AlsoViewed, product(1)) == doctest::Approx(12.0));
}

TEST_CASE("action_score agrees with an independent dot product on random tables") {
  const auto pop = populations(6, 4, 5, 2, 3);
  const auto tab = kapr::testing::random_table(pop, 7, 21);
  for (EntityKind k : kEntityKinds) {
    for (std::uint32_t i = 0; i < pop[index_of(k)]; ++i) {
      const EntityRef e{k, i};
      CHECK(action_score(tab, product(2), Relation::SelfLoop, e) ==
            doctest::Approx(kapr::testing::oracle_score(tab, product(2), e)));
    }
  }
}

TEST_CASE("missing rows raise UnknownEntity") {
  const EmbeddingTable tab(populations(2, 0, 1, 0, 0), 3);
  CHECK_THROWS_AS(action_score(tab, product(5), Relation::DescribedBy, kWord0), UnknownEntity);
  CHECK_THROWS_AS(action_score(tab, product(0), Relation::DescribedBy, EntityRef{EntityKind::Word, 9}), UnknownEntity);
}

TEST_CASE("transe_rewards rescale to the unit interval") {
  const auto pop = populations(8, 0, 0, 0, 0);
  const auto tab = kapr::testing::random_table(pop, 5, 4);
  std::vector<std::pair<EntityRef, EntityRef>> pairs;
  for (std::uint32_t i = 0; i < 8; ++i) pairs.emplace_back(product(0), product(i));
  const auto r = transe_rewards(tab, pairs);
  REQUIRE(r.size() == 8);
  CHECK(r[0] == 0.0);
  const auto [lo, hi] = std::minmax_element(r.begin() + 1, r.end());
  CHECK(*lo == doctest::Approx(0.0));
  CHECK(*hi == doctest::Approx(1.0));
  // Order follows the raw scores.
  for (std::size_t a = 1; a < 8; ++a) {
    for (std::size_t b = 1; b < 8; ++b) {
      const double sa = action_score(tab, product(0), Relation::AlsoBought, pairs[a].second);
      const double sb = action_score(tab, product(0), Relation::AlsoBought, pairs[b].second);
      if (sa < sb) CHECK(r[a] <= r[b]);
    }
  }
  const std::vector<std::pair<EntityRef, EntityRef>> same{{product(0), product(1)}, {product(0), product(1)}};
  CHECK(transe_rewards(tab, same) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("training is deterministic and separates true triples") {
  const auto pop = populations(30, 10, 20, 4, 4);
  const auto g = kapr::testing::random_graph(pop, 250, 8);
  TransEConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 60;
  cfg.seed = 5;
  const auto a = train_transe(g, cfg);
  const auto b = train_transe(g, cfg);
  CHECK(a.table == b.table);
  CHECK(a.table.all_finite());
  REQUIRE(a.loss_history.size() == cfg.epochs);
  CHECK(a.loss_history.back() < a.loss_history.front());

  // AUC of true triples against tail corruptions of the same kind.
  Rng rng(77);
  std::size_t wins = 0, total = 0;
  for (Relation r : kGraphRelations) {
    const auto sch = schema_of(r);
    for (auto [h, t] : g.edges(r)) {
      const EntityRef head{sch.head, h};
      const EntityRef tail{sch.tail, t};
      const EntityRef neg{sch.tail, static_cast<std::uint32_t>(rng.below(pop[index_of(sch.tail)]))};
      if (g.has_edge(head, r, neg) || neg == head) continue;
      wins += triple_score(a.table, head, r, tail) > triple_score(a.table, head, r, neg) ? 1 : 0;
      ++total;
    }
  }
  REQUIRE(total > 100);
  CHECK(static_cast<double>(wins) / static_cast<double>(total) > 0.8);
}

TEST_CASE("checkpoints round trip at float precision") {
  kapr::testing::TempDir dir("embed");
  auto tab = kapr::testing::random_table(populations(4, 3, 2, 1, 1), 6, 2);
  save_embeddings(dir / "e.bin", tab);
  const auto loaded = load_embeddings(dir / "e.bin");
  tab.round_to_float();
  CHECK(loaded == tab);
}

}  // TEST_SUITE
