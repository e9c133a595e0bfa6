#include <doctest.h>

#include "kapr/env.hpp"
#include "kapr/error.hpp"
#include "kapr/policy.hpp"
#include "support/fixtures.hpp"

using namespace kapr;
using kapr::testing::populations;

namespace {

struct ConstantRewarder : Rewarder {
  double value;
  explicit ConstantRewarder(double v) : value(v) {}
  double operator()(EntityRef, EntityRef) const override { return value; }
};

bool same_actions(const PrunedActionSpace& got, const std::vector<ScoredAction>& want) {
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (!(got[i] == want[i].action)) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("reset requires a product") {
  const auto g = kapr::testing::six_node_graph();
  const EmbeddingTable tab(g.populations(), 4);
  const auto patterns = PatternSet::defaults();
  const Environment env(g, tab, patterns);
  const auto s = env.reset(product(1));
  CHECK(s.step() == 0);
  CHECK(s.source() == product(1));
  CHECK_THROWS_AS(env.reset(EntityRef{EntityKind::Word, 0}), NotAProduct);
}

TEST_CASE("state encoding has the documented width") {
  const auto g = kapr::testing::six_node_graph();
  const auto tab = kapr::testing::random_table(g.populations(), 100, 1);
  const auto patterns = PatternSet::defaults();
  const Environment env(g, tab, patterns, {1, 3, 250});
  auto s = env.reset(product(0));
  CHECK(encode_state(s, tab, 1).size() == 500);
  s = env.step(s, env.actions(s), 0).first;
  CHECK(encode_state(s, tab, 1).size() == 500);
  CHECK(encode_state(s, tab, 2).size() == 700);
  const auto space = env.actions(s);
  const auto acts = encode_actions(space, tab);
  CHECK(acts.rows() == static_cast<Eigen::Index>(space.size()));
  CHECK(acts.cols() == 200);
}

TEST_CASE("pruning agrees with the brute-force oracle") {
  const auto pop = populations(20, 10, 25, 4, 5);
  const auto g = kapr::testing::random_graph(pop, 480, 31);
  REQUIRE(g.edge_count() <= 500);
  const auto tab = kapr::testing::random_table(pop, 8, 32);
  const auto patterns = PatternSet::defaults();
  Rng rng(33);
  std::size_t checked = 0;
  for (std::size_t n : {3u, 10u, 250u}) {
    const Environment env(g, tab, patterns, {1, 3, n});
    for (int i = 0; i < 70; ++i) {
      const auto v0 = product(static_cast<std::uint32_t>(rng.below(20)));
      const auto s = kapr::testing::random_state(env, v0, rng.below(4), rng);
      const auto want = kapr::testing::oracle_prune(s, g, tab, patterns, n, 3);
      const auto got = prune_actions(s, g, tab, patterns, n, 3);
      CHECK(same_actions(got, want));
      CHECK(got.size() <= n + 1);
      ++checked;
    }
  }
  CHECK(checked == 210);
}

TEST_CASE("step validates the action and tracks the horizon") {
  const auto g = kapr::testing::six_node_graph();
  const auto tab = kapr::testing::random_table(g.populations(), 4, 3);
  const auto patterns = PatternSet::defaults();
  const Environment env(g, tab, patterns, {1, 3, 250});
  auto s = env.reset(product(0));
  CHECK_THROWS_AS(env.step(s, Action{Relation::AlsoViewed, product(2)}), IllegalAction);
  auto [s1, done1] = env.step(s, Action{Relation::DescribedBy, EntityRef{EntityKind::Word, 0}});
  CHECK_FALSE(done1);
  CHECK(s1.current() == EntityRef{EntityKind::Word, 0});
  auto [s2, done2] = env.step(s1, Action{Relation::DescribedBy, product(1)});
  CHECK_FALSE(done2);
  // Going back to p0 is excluded because it is already on the path.
  CHECK_FALSE(env.actions(s1).find(Action{Relation::DescribedBy, product(0)}).has_value());
  auto [s3, done3] = env.step(s2, Action{Relation::SelfLoop, product(1)});
  CHECK(done3);
  CHECK(s3.path.stripped_length() == 2);
  const auto last = env.actions(s3);
  REQUIRE(last.size() == 1);
  CHECK(last[0].relation == Relation::SelfLoop);
}

TEST_CASE("only self loop follows a self loop") {
  const auto g = kapr::testing::six_node_graph();
  const auto tab = kapr::testing::random_table(g.populations(), 4, 3);
  const auto patterns = PatternSet::defaults();
  const Environment env(g, tab, patterns, {1, 3, 250});
  const auto [s1, d1] = env.step(env.reset(product(0)), Action{Relation::SelfLoop, product(0)});
  const auto space = env.actions(s1);
  REQUIRE(space.size() == 1);
  CHECK(space[0] == Action{Relation::SelfLoop, product(0)});
}

TEST_CASE("terminal rewards require a matching path to another product") {
  const auto patterns = PatternSet::defaults();
  const ConstantRewarder r(0.7);
  ReasoningPath good;
  good.entities = {product(0), EntityRef{EntityKind::Word, 0}, product(1), product(1)};
  good.relations = {Relation::DescribedBy, Relation::DescribedBy, Relation::SelfLoop};
  CHECK(is_rewardable(good, patterns));
  CHECK(terminal_reward(good, patterns, r) == 0.7);

  ReasoningPath back_home;
  back_home.entities = {product(0), EntityRef{EntityKind::Word, 0}, product(0)};
  back_home.relations = {Relation::DescribedBy, Relation::DescribedBy};
  CHECK_FALSE(is_rewardable(back_home, patterns));
  CHECK(terminal_reward(back_home, patterns, r) == 0.0);

  ReasoningPath at_word;
  at_word.entities = {product(0), EntityRef{EntityKind::Word, 0}};
  at_word.relations = {Relation::DescribedBy};
  CHECK(terminal_reward(at_word, patterns, r) == 0.0);
}

}  // TEST_SUITE
