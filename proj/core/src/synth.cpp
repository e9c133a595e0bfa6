#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "kapr/error.hpp"
#include "kapr/ingest.hpp"
#include "kapr/rng.hpp"

namespace kapr {

namespace {

std::string numbered(const char* prefix, std::uint32_t i, int width = 5) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*u", prefix, width, i);
  return buf;
}

struct Vocabulary {
  std::uint32_t generic = 0;
  std::uint32_t topic = 0;  // per cluster
};

Vocabulary vocabulary_layout(const SynthConfig& cfg) {
  Vocabulary v;
  v.generic = std::max<std::uint32_t>(1, cfg.vocabulary / 5);
  v.topic = std::max<std::uint32_t>(1, (cfg.vocabulary - std::min(cfg.vocabulary, v.generic)) / cfg.clusters);
  return v;
}

std::uint32_t partner_cluster(std::uint32_t c, std::uint32_t clusters) {
  return clusters == 1 ? c : (c + clusters / 2) % clusters;
}

void validate(const SynthConfig& cfg) {
  if (cfg.products < 2) throw ConfigError("synth.products must be at least 2");
  if (cfg.clusters < 1 || cfg.clusters > cfg.products) {
    throw ConfigError("synth.clusters must lie in [1, products]");
  }
  if (cfg.users < 1 || cfg.brands < 1) throw ConfigError("synth.users and synth.brands must be positive");
  if (cfg.vocabulary < 2) throw ConfigError("synth.vocabulary must be at least 2");
  if (cfg.words_per_review < 1) throw ConfigError("synth.words_per_review must be positive");
  if (cfg.noise < 0.0 || cfg.noise > 1.0 || cfg.shared_brand < 0.0 || cfg.shared_brand > 1.0) {
    throw ConfigError("synth probabilities must lie in [0, 1]");
  }
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const auto vocab = vocabulary_layout(cfg);
  const std::uint32_t n = cfg.products;
  const std::uint32_t clusters = cfg.clusters;

  SynthDataset out;
  out.cluster_of.resize(n);
  std::vector<std::vector<std::uint32_t>> members(clusters);
  for (std::uint32_t p = 0; p < n; ++p) {
    out.cluster_of[p] = p % clusters;
    members[p % clusters].push_back(p);
  }
  std::vector<std::vector<std::uint32_t>> home_users(clusters);
  for (std::uint32_t u = 0; u < cfg.users; ++u) home_users[u % clusters].push_back(u);

  auto generic_word = [&] { return numbered("w", static_cast<std::uint32_t>(rng.below(vocab.generic)), 4); };
  auto topic_word = [&](std::uint32_t c) {
    return numbered("w", vocab.generic + c * vocab.topic + static_cast<std::uint32_t>(rng.below(vocab.topic)), 4);
  };
  auto draw_word = [&](std::uint32_t c) { return rng.bernoulli(cfg.noise) ? generic_word() : topic_word(c); };
  auto draw_user = [&](std::uint32_t c) {
    const auto& pool = home_users[c];
    if (pool.empty() || rng.bernoulli(cfg.noise)) return static_cast<std::uint32_t>(rng.below(cfg.users));
    return pool[rng.below(pool.size())];
  };
  auto review_text = [&](std::uint32_t c, const std::string* extra) {
    std::set<std::string> words;
    std::size_t guard = 0;
    while (words.size() < cfg.words_per_review && guard++ < 64 * cfg.words_per_review) {
      words.insert(draw_word(c));
    }
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    if (extra != nullptr) text += " " + *extra;
    return text;
  };

  std::vector<std::uint32_t> brand(n);
  for (std::uint32_t p = 0; p < n; ++p) {
    const std::uint32_t primary = out.cluster_of[p] % cfg.brands;
    brand[p] = rng.bernoulli(0.7) ? primary : static_cast<std::uint32_t>(rng.below(cfg.brands));
  }

  // Planted pairs.
  std::set<std::pair<std::uint32_t, std::uint32_t>> taken;
  auto try_add = [&](std::uint32_t a, std::uint32_t b, EdgeList& list) {
    if (a == b) return false;
    auto key = std::minmax(a, b);
    if (!taken.insert({key.first, key.second}).second) return false;
    list.emplace_back(key.first, key.second);
    return true;
  };
  for (std::uint32_t made = 0, tries = 0; made < cfg.substitute_pairs && tries < 100 * cfg.substitute_pairs + 100; ++tries) {
    const auto a = static_cast<std::uint32_t>(rng.below(n));
    const auto& pool = members[out.cluster_of[a]];
    const auto b = pool[rng.below(pool.size())];
    if (try_add(a, b, out.substitutes)) ++made;
  }
  for (std::uint32_t made = 0, tries = 0; made < cfg.complement_pairs && tries < 100 * cfg.complement_pairs + 100; ++tries) {
    const auto a = static_cast<std::uint32_t>(rng.below(n));
    const auto& pool = members[partner_cluster(out.cluster_of[a], clusters)];
    const auto b = pool[rng.below(pool.size())];
    if (try_add(a, b, out.complements)) ++made;
  }
  for (auto [a, b] : out.substitutes) {
    if (rng.bernoulli(cfg.shared_brand)) brand[b] = brand[a];
  }

  out.products.resize(n);
  for (std::uint32_t p = 0; p < n; ++p) {
    auto& rec = out.products[p];
    const auto c = out.cluster_of[p];
    rec.external_id = numbered("S", p);
    rec.title = topic_word(c) + " " + topic_word(c) + " " + generic_word();
    std::string desc;
    for (int i = 0; i < 12; ++i) desc += (desc.empty() ? "" : " ") + draw_word(c);
    rec.description = std::move(desc);
    rec.brand = numbered("Brand", brand[p], 3);
    rec.categories = {numbered("Category", c, 3)};
  }
  for (auto [a, b] : out.substitutes) {
    out.products[a].also_viewed.push_back(out.products[b].external_id);
    out.products[b].also_viewed.push_back(out.products[a].external_id);
  }
  for (auto [a, b] : out.complements) {
    out.products[a].also_bought.push_back(out.products[b].external_id);
    out.products[b].also_bought.push_back(out.products[a].external_id);
  }

  auto add_review = [&](std::uint32_t user, std::uint32_t p, const std::string* extra) {
    out.reviews.push_back({numbered("U", user), out.products[p].external_id,
                           review_text(out.cluster_of[p], extra)});
  };
  for (std::uint32_t p = 0; p < n; ++p) {
    for (std::uint32_t r = 0; r < cfg.reviews_per_product; ++r) add_review(draw_user(out.cluster_of[p]), p, nullptr);
  }
  std::uint32_t pair_index = 0;
  for (auto [a, b] : out.substitutes) {
    const auto word = numbered("link", pair_index++);
    add_review(draw_user(out.cluster_of[a]), a, &word);
    add_review(draw_user(out.cluster_of[b]), b, &word);
  }
  for (auto [a, b] : out.complements) {
    const auto word = numbered("link", pair_index++);
    const auto user = draw_user(out.cluster_of[a]);
    add_review(user, a, &word);
    add_review(user, b, &word);
  }
  return out;
}

GraphStats synth_expected_stats(const SynthConfig& cfg) {
  validate(cfg);
  const auto vocab = vocabulary_layout(cfg);
  const double n = cfg.products;
  const double users = cfg.users;
  const double home = users / cfg.clusters;
  const double pair_reviews = 2.0 * (cfg.substitute_pairs + cfg.complement_pairs) / n;
  const double draws = cfg.reviews_per_product + pair_reviews;

  // Distinct purchasers per product under independent reviewer draws.
  const double p_home = (1.0 - cfg.noise) / home + cfg.noise / users;
  const double p_other = cfg.noise / users;
  double purchasers = home * (1.0 - std::pow(1.0 - p_home, draws)) +
                      (users - home) * (1.0 - std::pow(1.0 - p_other, draws));
  // Complement reviewers are shared, which only matters for products on both
  // sides; ignore that second-order effect.

  // Distinct described_by words per product.
  const double word_draws = draws * cfg.words_per_review;
  const double q_topic = (1.0 - cfg.noise) / vocab.topic;
  const double q_generic = cfg.noise / vocab.generic;
  const double words = vocab.topic * (1.0 - std::pow(1.0 - q_topic, word_draws)) +
                       vocab.generic * (1.0 - std::pow(1.0 - q_generic, word_draws)) +
                       pair_reviews;  // one unique link word per planted pair

  GraphStats st;
  auto set = [&](Relation r, double per_head, double heads) {
    st.per_head[index_of(r)] = per_head;
    st.edges[index_of(r)] = static_cast<std::size_t>(std::llround(per_head * heads));
  };
  set(Relation::AlsoViewed, cfg.substitute_pairs / n, n);
  set(Relation::AlsoBought, cfg.complement_pairs / n, n);
  set(Relation::DescribedBy, words, n);
  set(Relation::ProducedBy, 1.0, n);
  set(Relation::BelongTo, 1.0, n);
  set(Relation::Purchase, purchasers * n / users, users);
  return st;
}

nlohmann::json to_json(const SynthConfig& cfg) {
  return {{"products", cfg.products},
          {"clusters", cfg.clusters},
          {"substitute_pairs", cfg.substitute_pairs},
          {"complement_pairs", cfg.complement_pairs},
          {"vocabulary", cfg.vocabulary},
          {"users", cfg.users},
          {"brands", cfg.brands},
          {"reviews_per_product", cfg.reviews_per_product},
          {"words_per_review", cfg.words_per_review},
          {"noise", cfg.noise},
          {"shared_brand", cfg.shared_brand},
          {"seed", cfg.seed}};
}

}  // namespace kapr
