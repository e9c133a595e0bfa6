#include <doctest.h>

#include <cmath>

#include "kapr/error.hpp"
#include "kapr/eval.hpp"
#include "support/fixtures.hpp"

using namespace kapr;

namespace {

using Pairs = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

InferenceRecord record_with_ends(std::uint32_t source, TargetRelation t, const std::vector<std::uint32_t>& ends) {
  InferenceRecord r;
  r.recommendation.source = product(source);
  r.recommendation.relation = t;
  for (std::uint32_t e : ends) {
    ReasoningPath p;
    p.entities = {product(source), EntityRef{EntityKind::Word, 0}, product(e), product(e)};
    p.relations = {Relation::DescribedBy, Relation::DescribedBy, Relation::SelfLoop};
    r.paths.push_back(p);
  }
  return r;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("hits agree with a brute-force count when every negative is drawn") {
  // Population: A, B and exactly n unrelated products, so the negative set
  // is forced and the rank of B can be counted directly.
  constexpr std::uint32_t n = 20;
  constexpr std::uint32_t products = n + 2;
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> score(products);
    for (auto& s : score) s = std::floor(rng.uniform() * 8.0);  // ties on purpose
    RelatedIndex related;
    related.add(0, 1);
    const Pairs pairs{{0, 1}};
    const CandidateScorer scorer = [&](std::uint32_t, std::uint32_t c) { return score[c]; };
    const auto hits = hits_at_k(scorer, pairs, related, products, {n, {1, 5, 10, 20}, 3});
    std::size_t above = 0;
    for (std::uint32_t c = 2; c < products; ++c) above += score[c] > score[1] ? 1 : 0;
    const std::size_t ks[] = {1, 5, 10, 20};
    for (std::size_t i = 0; i < 4; ++i) CHECK(hits[i] == (above < ks[i] ? 1.0 : 0.0));
  }
}

TEST_CASE("perfect and adversarial scorers") {
  const std::uint32_t products = 100;
  const KnowledgeGraph g(kapr::testing::populations(products, 0, 0, 0, 0));
  const KnowledgeGraph* graphs[] = {&g};
  const RelatedIndex related(graphs);
  Pairs pairs;
  for (std::uint32_t a = 0; a < 20; ++a) pairs.emplace_back(a, a + 50);
  const CandidateScorer perfect = [](std::uint32_t a, std::uint32_t c) { return c == a + 50 ? 1.0 : 0.0; };
  const CandidateScorer worst = [](std::uint32_t a, std::uint32_t c) { return c == a + 50 ? -1.0 : 0.0; };
  CHECK(hits_at_k(perfect, pairs, related, products, {50, {10}, 1}) == std::vector<double>{1.0});
  CHECK(hits_at_k(worst, pairs, related, products, {50, {10}, 1}) == std::vector<double>{0.0});
  CHECK_THROWS_AS(hits_at_k(perfect, pairs, related, products, {99, {10}, 1}), InsufficientPopulation);
}

TEST_CASE("hits never decrease in k") {
  Rng rng(2);
  const std::uint32_t products = 60;
  RelatedIndex related;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> score(products);
    for (auto& s : score) s = rng.uniform();
    const Pairs pairs{{static_cast<std::uint32_t>(rng.below(30)), static_cast<std::uint32_t>(30 + rng.below(30))}};
    const CandidateScorer scorer = [&](std::uint32_t, std::uint32_t c) { return score[c]; };
    const auto h = hits_at_k(scorer, pairs, related, products, {40, {1, 3, 10, 30}, static_cast<std::uint64_t>(trial)});
    CHECK(std::is_sorted(h.begin(), h.end()));
  }
}

TEST_CASE("related products are never drawn as negatives") {
  // A is related to everything except B and five others; those five must be
  // the whole negative set, so a scorer that ranks them above B always misses at k <= 5.
  const std::uint32_t products = 30;
  RelatedIndex related;
  for (std::uint32_t c = 7; c < products; ++c) related.add(0, c);
  const Pairs pairs{{0, 1}};
  const CandidateScorer scorer = [](std::uint32_t, std::uint32_t c) { return c == 1 ? 0.5 : (c < 7 ? 1.0 : 0.0); };
  CHECK(hits_at_k(scorer, pairs, related, products, {5, {5, 6}, 9}) == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(hits_at_k(scorer, pairs, related, products, {6, {5}, 9}), InsufficientPopulation);
}

TEST_CASE("top-k metrics on hand fixtures") {
  const std::vector<std::vector<std::uint32_t>> recs{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
  const std::vector<std::set<std::uint32_t>> truths{{2, 5}, {4, 5, 6}, {}};
  const auto m = topk_metrics(recs, truths, 3);
  CHECK(m.queries == 2);
  const double q1_ndcg = (1.0 / std::log2(3.0)) / (1.0 + 1.0 / std::log2(3.0));
  CHECK(m.ndcg == doctest::Approx((q1_ndcg + 1.0) / 2.0));
  CHECK(m.recall == doctest::Approx((0.5 + 1.0) / 2.0));
  CHECK(m.hr == doctest::Approx(1.0));
  CHECK(m.precision == doctest::Approx((1.0 / 3.0 + 1.0) / 2.0));

  const auto k1 = topk_metrics(recs, truths, 1);
  CHECK(k1.ndcg == doctest::Approx(0.5));
  CHECK(k1.hr == doctest::Approx(0.5));
  CHECK(k1.precision == doctest::Approx(0.5));
  CHECK(k1.recall == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("path statistics count each source once") {
  const std::vector<InferenceRecord> records{record_with_ends(0, TargetRelation::Substitute, {1, 1, 2, 2}),
                                             record_with_ends(0, TargetRelation::Complement, {1, 1, 2, 2}),
                                             record_with_ends(3, TargetRelation::Substitute, {4, 5, 5, 5})};
  const auto s = path_stats(records);
  CHECK(s.paths_per_product == doctest::Approx(4.0));
  CHECK(s.products_per_product == doctest::Approx(2.0));
  CHECK(s.paths_per_pair == doctest::Approx(2.0));
  CHECK(path_stats({}).paths_per_product == 0.0);
}

TEST_CASE("degrading half the edges keeps counts and replaces half") {
  const auto pop = kapr::testing::populations(200, 100, 300, 20, 20);
  const auto g = kapr::testing::random_graph(pop, 6000, 3);
  const auto d = degrade_graph(g, 0.5, 4);
  for (Relation r : kGraphRelations) {
    const auto sch = schema_of(r);
    CHECK(d.edge_count(r) == g.edge_count(r));
    std::size_t kept = 0;
    for (auto [h, t] : g.edges(r)) kept += d.has_edge({sch.head, h}, r, {sch.tail, t}) ? 1 : 0;
    const double frac = static_cast<double>(kept) / static_cast<double>(g.edge_count(r));
    CHECK(std::abs(frac - 0.5) < 0.02);
  }
  CHECK(degrade_graph(g, 0.0, 4) == g);
  CHECK_THROWS_AS(degrade_graph(g, 1.5, 4), InvalidFraction);
}

TEST_CASE("remove_relation drops exactly one relation") {
  const auto pop = kapr::testing::populations(20, 10, 20, 3, 3);
  const auto g = kapr::testing::random_graph(pop, 200, 5);
  const auto h = remove_relation(g, Relation::ProducedBy);
  for (Relation r : kGraphRelations) {
    CHECK(h.edge_count(r) == (r == Relation::ProducedBy ? 0 : g.edge_count(r)));
  }
}

TEST_CASE("reports round trip and render") {
  MetricReport rep;
  rep.variant = "kapr";
  rep.relations[TargetRelation::Substitute] = {{{10, 0.5}, {30, 0.75}}, {0.25, 0.5, 0.75, 0.125, 4}, 12};
  rep.relations[TargetRelation::Complement] = {{{10, 0.25}, {30, 0.5}}, {0.125, 0.25, 0.5, 0.0625, 3}, 9};
  rep.paths = {4.0, 2.0, 2.0};
  rep.metadata = {{"seed", 1}};
  const auto back = MetricReport::from_json(rep.to_json());
  CHECK(back.to_json() == rep.to_json());
  const MetricReport reports[] = {rep};
  const auto table = render_table(reports);
  CHECK(table.find("kapr") != std::string::npos);
  CHECK(table.find("0.5000") != std::string::npos);
}

}  // TEST_SUITE
