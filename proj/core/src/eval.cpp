#include "kapr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kapr/error.hpp"
#include "kapr/rng.hpp"

namespace kapr {

namespace {

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}

}  // namespace

RelatedIndex::RelatedIndex(std::span<const KnowledgeGraph* const> graphs) {
  for (const auto* g : graphs) {
    for (Relation r : {Relation::AlsoViewed, Relation::AlsoBought}) {
      for (const auto& [a, b] : g->edges(r)) add(a, b);
    }
  }
}

void RelatedIndex::add(std::uint32_t a, std::uint32_t b) { pairs_.insert(pair_key(a, b)); }

bool RelatedIndex::related(std::uint32_t a, std::uint32_t b) const { return pairs_.contains(pair_key(a, b)); }

std::vector<double> hits_at_k(const CandidateScorer& scorer,
                              std::span<const std::pair<std::uint32_t, std::uint32_t>> test_pairs,
                              const RelatedIndex& related, std::uint32_t products, const HitsConfig& cfg) {
  std::vector<double> hits(cfg.ks.size(), 0.0);
  if (test_pairs.empty()) return hits;
  std::vector<std::uint32_t> pool;
  for (std::size_t q = 0; q < test_pairs.size(); ++q) {
    const auto [a, b] = test_pairs[q];
    pool.clear();
    for (std::uint32_t c = 0; c < products; ++c) {
      if (c != a && c != b && !related.related(a, c)) pool.push_back(c);
    }
    if (pool.size() < cfg.negatives) {
      throw InsufficientPopulation(std::to_string(pool.size()) + " unrelated products for query " +
                                   std::to_string(a) + ", need " + std::to_string(cfg.negatives));
    }
    Rng rng(derive_seed(cfg.seed, q));
    for (std::size_t i = 0; i < cfg.negatives; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    const double target = scorer(a, b);
    std::size_t m = 0;
    for (std::size_t i = 0; i < cfg.negatives; ++i) {
      if (scorer(a, pool[i]) > target) ++m;
    }
    for (std::size_t k = 0; k < cfg.ks.size(); ++k) {
      if (m < cfg.ks[k]) hits[k] += 1.0;
    }
  }
  for (auto& h : hits) h /= static_cast<double>(test_pairs.size());
  return hits;
}

TopKMetrics topk_metrics(std::span<const std::vector<std::uint32_t>> recommendations,
                         std::span<const std::set<std::uint32_t>> truths, std::size_t k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (recommendations.size() != truths.size()) throw ConfigError("one truth set per recommendation list");
  TopKMetrics out;
  for (std::size_t q = 0; q < truths.size(); ++q) {
    const auto& truth = truths[q];
    if (truth.empty()) continue;
    const auto& rec = recommendations[q];
    double dcg = 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < rec.size() && i < k; ++i) {
      if (truth.contains(rec[i])) {
        dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        ++hit;
      }
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, truth.size()); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    out.ndcg += dcg / idcg;
    out.recall += static_cast<double>(hit) / static_cast<double>(truth.size());
    out.hr += hit > 0 ? 1.0 : 0.0;
    out.precision += static_cast<double>(hit) / static_cast<double>(k);
    ++out.queries;
  }
  if (out.queries > 0) {
    const double n = static_cast<double>(out.queries);
    out.ndcg /= n;
    out.recall /= n;
    out.hr /= n;
    out.precision /= n;
  }
  return out;
}

PathStats path_stats(std::span<const InferenceRecord> records) {
  std::map<EntityRef, const InferenceRecord*> by_source;
  for (const auto& r : records) by_source.emplace(r.recommendation.source, &r);
  PathStats out;
  if (by_source.empty()) return out;
  std::size_t paths = 0;
  std::size_t pairs = 0;
  for (const auto& [src, rec] : by_source) {
    std::set<EntityRef> ends;
    for (const auto& p : rec->paths) ends.insert(p.entities[p.stripped_length()]);
    paths += rec->paths.size();
    pairs += ends.size();
  }
  const double sources = static_cast<double>(by_source.size());
  out.paths_per_product = static_cast<double>(paths) / sources;
  out.products_per_product = static_cast<double>(pairs) / sources;
  out.paths_per_pair = pairs > 0 ? static_cast<double>(paths) / static_cast<double>(pairs) : 0.0;
  return out;
}

KnowledgeGraph degrade_graph(const KnowledgeGraph& g, double fraction, std::uint64_t seed,
                             std::span<const Relation> relations) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidFraction(std::to_string(fraction));
  KnowledgeGraph out = g;
  for (Relation r : relations) {
    const auto sch = schema_of(r);
    const std::uint32_t tails = g.population(sch.tail);
    if (tails == 0) continue;
    auto edges = g.edges(r);
    Rng rng(derive_seed(seed, index_of(r)));
    rng.shuffle(std::span(edges));
    const auto replace = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(edges.size())));
    for (std::size_t i = 0; i < replace; ++i) {
      const EntityRef h{sch.head, edges[i].first};
      const EntityRef t{sch.tail, edges[i].second};
      out.remove_triple(h, r, t);
      bool placed = false;
      for (int tries = 0; tries < 64 && !placed; ++tries) {
        const EntityRef nt{sch.tail, static_cast<std::uint32_t>(rng.below(tails))};
        if (g.has_edge(h, r, nt) || (sch.head == sch.tail && nt == h)) continue;
        placed = out.add_triple(h, r, nt);
      }
      if (!placed) out.add_triple(h, r, t);
    }
  }
  return out;
}

KnowledgeGraph remove_relation(const KnowledgeGraph& g, Relation r) {
  KnowledgeGraph out = g;
  out.clear_relation(r);
  return out;
}

namespace {

nlohmann::json topk_json(const TopKMetrics& m) {
  return {{"ndcg", m.ndcg}, {"recall", m.recall}, {"hr", m.hr}, {"precision", m.precision}, {"queries", m.queries}};
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json rel = nlohmann::json::object();
  for (const auto& [t, m] : relations) {
    nlohmann::json hits = nlohmann::json::object();
    for (const auto& [k, v] : m.hits) hits[std::to_string(k)] = v;
    rel[std::string(kapr::to_string(t))] = {{"hits", hits}, {"topk", topk_json(m.topk)}, {"test_pairs", m.test_pairs}};
  }
  return {{"variant", variant},
          {"relations", rel},
          {"paths",
           {{"paths_per_product", paths.paths_per_product},
            {"products_per_product", paths.products_per_product},
            {"paths_per_pair", paths.paths_per_pair}}},
          {"metadata", metadata}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport out;
  out.variant = j.at("variant").get<std::string>();
  for (const auto& [name, m] : j.at("relations").items()) {
    const auto t = parse_target(name);
    if (!t) throw FormatError("unknown relation '" + name + "' in report");
    RelationMetrics rm;
    for (const auto& [k, v] : m.at("hits").items()) rm.hits.emplace_back(std::stoul(k), v.get<double>());
    std::sort(rm.hits.begin(), rm.hits.end());
    const auto& tk = m.at("topk");
    rm.topk = {tk.at("ndcg").get<double>(), tk.at("recall").get<double>(), tk.at("hr").get<double>(),
               tk.at("precision").get<double>(), tk.at("queries").get<std::size_t>()};
    rm.test_pairs = m.at("test_pairs").get<std::size_t>();
    out.relations.emplace(*t, std::move(rm));
  }
  const auto& p = j.at("paths");
  out.paths = {p.at("paths_per_product").get<double>(), p.at("products_per_product").get<double>(),
               p.at("paths_per_pair").get<double>()};
  out.metadata = j.value("metadata", nlohmann::json::object());
  return out;
}

std::string render_table(std::span<const MetricReport> reports, std::size_t top_k) {
  std::set<std::size_t> ks;
  for (const auto& r : reports) {
    for (const auto& [t, m] : r.relations) {
      for (const auto& [k, v] : m.hits) ks.insert(k);
    }
  }
  std::ostringstream out;
  char buf[64];
  auto cell = [&](const std::string& s, int width) {
    std::snprintf(buf, sizeof buf, "%-*s", width, s.c_str());
    out << buf;
  };
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%10.4f", v);
    out << buf;
  };
  cell("variant", 16);
  cell("relation", 12);
  for (auto k : ks) {
    std::snprintf(buf, sizeof buf, "%10s", ("Hits@" + std::to_string(k)).c_str());
    out << buf;
  }
  for (const char* m : {"NDCG", "Recall", "HR", "Prec"}) {
    std::snprintf(buf, sizeof buf, "%10s", (std::string(m) + "@" + std::to_string(top_k)).c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& r : reports) {
    for (const auto& [t, m] : r.relations) {
      cell(r.variant, 16);
      cell(std::string(to_string(t)), 12);
      for (auto k : ks) {
        const auto it = std::find_if(m.hits.begin(), m.hits.end(), [&](const auto& h) { return h.first == k; });
        if (it == m.hits.end()) {
          std::snprintf(buf, sizeof buf, "%10s", "-");
          out << buf;
        } else {
          num(it->second);
        }
      }
      num(m.topk.ndcg);
      num(m.topk.recall);
      num(m.topk.hr);
      num(m.topk.precision);
      out << '\n';
    }
  }
  out << '\n';
  cell("variant", 16);
  std::snprintf(buf, sizeof buf, "%14s%14s%14s\n", "Path/Product", "Products", "Path/Pair");
  out << buf;
  for (const auto& r : reports) {
    cell(r.variant, 16);
    std::snprintf(buf, sizeof buf, "%14.2f%14.2f%14.2f\n", r.paths.paths_per_product, r.paths.products_per_product,
                  r.paths.paths_per_pair);
    out << buf;
  }
  return out.str();
}

}  // namespace kapr
