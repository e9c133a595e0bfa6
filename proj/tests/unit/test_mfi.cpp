#include <doctest.h>

#include <set>

#include "kapr/error.hpp"
#include "kapr/mfi.hpp"
#include "support/fixtures.hpp"

using namespace kapr;
using kapr::testing::random_matrix;
using kapr::testing::random_vector;

namespace {

MfiConfig small_config(std::uint64_t seed = 1) {
  MfiConfig c;
  c.product_dim = 6;
  c.category_dim = 4;
  c.hidden = 8;
  c.seed = seed;
  return c;
}

MfiFeatures random_features(std::size_t n, const MfiConfig& c, Rng& rng) {
  MfiFeatures f;
  f.product = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c.product_dim), rng);
  f.category = random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c.category_dim), rng);
  return f;
}

double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(pos.size() * neg.size());
}

ProductRecord titled(std::string id, std::string title, std::vector<std::string> categories) {
  ProductRecord p;
  p.external_id = std::move(id);
  p.title = std::move(title);
  p.categories = std::move(categories);
  return p;
}

}  // namespace

TEST_SUITE("mfi") {

TEST_CASE("mask attention with zero weights halves the input") {
  MfiModel m(small_config(), TargetRelation::Substitute);
  m.parameters()[m.attn_w()].setZero();
  m.parameters()[m.attn_b()].setZero();
  Rng rng(1);
  const auto v = random_vector(6, rng);
  const auto out = m.mask_attention(v);
  for (Eigen::Index i = 0; i < v.size(); ++i) CHECK(out(i) == doctest::Approx(0.5 * v(i)).epsilon(1e-15));
}

TEST_CASE("an all-zero model predicts one half") {
  MfiModel m(small_config(), TargetRelation::Complement);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) m.parameters()[i].setZero();
  Rng rng(2);
  const auto f = random_features(3, m.config(), rng);
  CHECK(predict(m, f, 0, 1) == doctest::Approx(0.5));
  const LabeledPair pairs[] = {{0, 1, 1.0}, {1, 2, 0.0}, {2, 0, 1.0}};
  CHECK(std::abs(bce_loss(m, f, pairs) - 3.0 * std::log(2.0)) < 1e-10);
  CHECK_THROWS_AS(predict(m, f, 0, 5), MissingFeature);
}

TEST_CASE("bce on three pairs matches the closed form") {
  MfiModel m(small_config(3), TargetRelation::Substitute);
  Rng rng(3);
  kapr::testing::randomize(m.parameters(), rng, 0.4);
  const auto f = random_features(4, m.config(), rng);
  const LabeledPair pairs[] = {{0, 1, 1.0}, {2, 3, 0.0}, {3, 1, 1.0}};
  double want = 0.0;
  for (const auto& p : pairs) {
    const double prob = m.probability(f.product.row(p.i).transpose(), f.product.row(p.j).transpose(),
                                      f.category.row(p.i).transpose(), f.category.row(p.j).transpose());
    const double z = m.logit(f.product.row(p.i).transpose(), f.product.row(p.j).transpose(),
                             f.category.row(p.i).transpose(), f.category.row(p.j).transpose());
    CHECK(prob == doctest::Approx(1.0 / (1.0 + std::exp(-z))));
    want -= p.label * std::log(prob) + (1.0 - p.label) * std::log(1.0 - prob);
  }
  CHECK(std::abs(bce_loss(m, f, pairs) - want) < 1e-10);
}

TEST_CASE("reward is the larger head in either order") {
  MfiModel s(small_config(4), TargetRelation::Substitute), c(small_config(5), TargetRelation::Complement);
  Rng rng(4);
  kapr::testing::randomize(s.parameters(), rng, 0.5);
  kapr::testing::randomize(c.parameters(), rng, 0.5);
  const auto f = random_features(10, s.config(), rng);
  auto prob = [&](const MfiModel& m, std::uint32_t i, std::uint32_t j) {
    return m.probability(f.product.row(i).transpose(), f.product.row(j).transpose(), f.category.row(i).transpose(),
                         f.category.row(j).transpose());
  };
  MfiBundle bundle{s, c, f};
  const MfiScorer scorer(bundle);
  for (int k = 0; k < 20; ++k) {
    const auto i = static_cast<std::uint32_t>(rng.below(10));
    const auto j = static_cast<std::uint32_t>(rng.below(10));
    const double want = std::max({prob(s, i, j), prob(s, j, i), prob(c, i, j), prob(c, j, i)});
    CHECK(reward(s, c, f, product(i), product(j)) == doctest::Approx(want).epsilon(1e-12));
    CHECK(scorer.reward(i, j) == doctest::Approx(want).epsilon(1e-10));
    CHECK(scorer.probability(TargetRelation::Substitute, i, j) == doctest::Approx(prob(s, i, j)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(reward(s, c, f, product(0), EntityRef{EntityKind::Word, 0}), NotAProduct);
}

TEST_CASE("memoized rewarder returns the scorer value") {
  MfiModel s(small_config(4), TargetRelation::Substitute), c(small_config(5), TargetRelation::Complement);
  Rng rng(5);
  const MfiBundle bundle{s, c, random_features(5, s.config(), rng)};
  const MfiScorer scorer(bundle);
  const MfiRewarder r(scorer);
  CHECK(r(product(1), product(3)) == scorer.reward(1, 3));
  CHECK(r(product(1), product(3)) == scorer.reward(1, 3));
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  Rng rng(6);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    MfiModel m(small_config(static_cast<std::uint64_t>(draw) + 1),
               draw % 2 == 0 ? TargetRelation::Substitute : TargetRelation::Complement);
    kapr::testing::randomize(m.parameters(), rng, 0.5);
    for (std::size_t k = 0; k < m.statistics().size(); ++k) {
      auto& st = m.statistics()[k];
      st = k % 2 == 0 ? random_matrix(st.rows(), 1, rng, 0.3) : Eigen::MatrixXd::Constant(st.rows(), 1, 0.5 + rng.uniform());
    }
    // Redraw inputs that sit on a ReLU kink, where central differences are undefined.
    Eigen::VectorXd vi, vj, ci, cj;
    do {
      vi = random_vector(6, rng), vj = random_vector(6, rng);
      ci = random_vector(4, rng), cj = random_vector(4, rng);
    } while (kapr::testing::mfi_kink_distance(m, vi, vj, ci, cj) < 1e-3);
    const double label = draw % 3 == 0 ? 0.0 : 1.0;
    const double weight = 0.5 + rng.uniform();
    auto grads = m.parameters().zeros_like();
    const double ce = m.accumulate_gradient(vi, vj, ci, cj, label, weight, grads);
    const auto f = [&] {
      const double p = m.probability(vi, vj, ci, cj);
      return -weight * (label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
    };
    CHECK(weight * ce == doctest::Approx(f()));
    const auto res = kapr::testing::check_gradient(m.parameters(), grads, f);
    INFO("draw " << draw << " worst " << res.worst);
    CHECK(res.max_relative_error < 1e-4);
    worst = std::max(worst, res.max_relative_error);
  }
  MESSAGE("max relative error " << worst);
}

TEST_CASE("bce_gradient sums the per-pair gradients") {
  MfiModel m(small_config(7), TargetRelation::Substitute);
  Rng rng(7);
  const auto f = random_features(5, m.config(), rng);
  const LabeledPair pairs[] = {{0, 1, 1.0}, {2, 3, 0.0}, {4, 1, 1.0}};
  const auto g = bce_gradient(m, f, pairs);
  const auto res = kapr::testing::check_gradient(m.parameters(), g, [&] { return bce_loss(m, f, pairs); });
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("calibration sets population statistics") {
  MfiModel m(small_config(8), TargetRelation::Substitute);
  Rng rng(8);
  const auto inputs = random_matrix(50, 6, rng);
  m.calibrate(inputs);
  // First layer: pre-activations of the masked inputs.
  Eigen::MatrixXd pre(50, 6);
  for (Eigen::Index r = 0; r < 50; ++r) {
    pre.row(r) = (m.parameters()[m.layer_w(0)] * m.mask_attention(inputs.row(r).transpose()) +
                  m.parameters()[m.layer_b(0)].col(0))
                     .transpose();
  }
  const Eigen::VectorXd mean = pre.colwise().mean().transpose();
  const Eigen::VectorXd var = (pre.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  CHECK(m.statistics()[0].col(0).isApprox(mean, 1e-10));
  CHECK(m.statistics()[1].col(0).isApprox(var, 1e-10));
}

TEST_CASE("training separates a toy relation and is deterministic") {
  // Products in two groups; positives link members of the same group.
  const auto cfg = small_config(9);
  Rng rng(9);
  MfiFeatures f;
  f.product = Eigen::MatrixXd(24, 6);
  f.category = Eigen::MatrixXd(24, 4);
  for (Eigen::Index i = 0; i < 24; ++i) {
    const double sign = i < 12 ? 1.0 : -1.0;
    f.product.row(i) = random_vector(6, rng, 0.3).transpose();
    f.product(i, 0) += 2.0 * sign;
    f.category.row(i) = random_vector(4, rng, 0.3).transpose();
    f.category(i, 0) += sign;
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> positives;
  for (std::uint32_t a = 0; a < 24; ++a) {
    for (std::uint32_t b = a + 1; b < 24; ++b) {
      if ((a < 12) == (b < 12) && (a + b) % 3 == 0) positives.emplace_back(a, b);
    }
  }
  MfiTrainingConfig tc;
  tc.epochs = 40;
  tc.lr = 0.01;
  MfiModel a(cfg, TargetRelation::Substitute), b(cfg, TargetRelation::Substitute);
  const auto ra = train_mfi(a, f, positives, tc);
  train_mfi(b, f, positives, tc);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.statistics() == b.statistics());
  CHECK(ra.loss_history.back() < ra.loss_history.front());

  std::vector<double> same, cross;
  for (std::uint32_t i = 0; i < 24; ++i) {
    for (std::uint32_t j = 0; j < 24; ++j) {
      if (i == j) continue;
      ((i < 12) == (j < 12) ? same : cross).push_back(predict(a, f, i, j));
    }
  }
  CHECK(auc(same, cross) > 0.9);
}

TEST_CASE("category features rank title words by smoothed tf-idf") {
  const std::vector<ProductRecord> products{titled("a", "red kettle", {"Kitchen"}),
                                            titled("b", "red kettle steel", {"Kitchen"}),
                                            titled("c", "blue shirt", {"Clothing"})};
  const auto docs = category_documents(products);
  REQUIRE(docs.size() == 2);
  CHECK(docs.at("Kitchen").size() == 5);
  const WordVectors words(3, 1);
  const auto feat = category_feature("Kitchen", docs, words, 2);
  REQUIRE(feat.words.size() == 2);
  CHECK(std::set<std::string>(feat.words.begin(), feat.words.end()) == std::set<std::string>{"kettle", "red"});
  CHECK(feat.pooled.isApprox(0.5 * (words.lookup("kettle") + words.lookup("red"))));
  CHECK(category_feature("Kitchen", docs, words, 3).words.back() == "steel");
  CHECK_THROWS_AS(category_feature("Garden", docs, words, 2), EmptyCategory);
}

TEST_CASE("product text falls back to the title") {
  auto p = titled("a", "red kettle", {});
  CHECK(product_tokens(p) == std::vector<std::string>{"red", "kettle"});
  p.description = "steel body";
  CHECK(product_tokens(p) == std::vector<std::string>{"steel", "body"});
  CHECK_THROWS_AS(product_tokens(titled("b", "a b", {})), EmptyText);
}

TEST_CASE("hashed word vectors are deterministic per token") {
  const WordVectors a(5, 3), b(5, 3), c(5, 4);
  CHECK(a.lookup("kettle") == b.lookup("kettle"));
  CHECK_FALSE(a.lookup("kettle") == c.lookup("kettle"));
  CHECK_FALSE(a.lookup("kettle") == a.lookup("shirt"));
}

TEST_CASE("precomputed embedder rejects unknown ids") {
  const PrecomputedEmbedder e({{"a", Eigen::VectorXd::Ones(3)}});
  CHECK(e.dim() == 3);
  CHECK(e.embed("a", {}) == Eigen::VectorXd::Ones(3));
  CHECK_THROWS_AS(e.embed("b", {}), MissingFeature);
}

TEST_CASE("bundles round trip") {
  kapr::testing::TempDir dir("mfi");
  Rng rng(10);
  MfiModel s(small_config(1), TargetRelation::Substitute), c(small_config(2), TargetRelation::Complement);
  s.calibrate(random_matrix(10, 6, rng));
  const MfiBundle bundle{s, c, random_features(4, s.config(), rng)};
  save_mfi(dir / "m.bin", bundle);
  const auto loaded = load_mfi(dir / "m.bin");
  CHECK(loaded.substitute.parameters() == s.parameters());
  CHECK(loaded.substitute.statistics() == s.statistics());
  CHECK(loaded.complement.parameters() == c.parameters());
  CHECK(loaded.features.product == bundle.features.product);
  CHECK(loaded.score(TargetRelation::Complement, 0, 3) == bundle.score(TargetRelation::Complement, 0, 3));
}

}  // TEST_SUITE
