#include "kapr/reason.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "kapr/error.hpp"
#include "kapr/rng.hpp"

namespace kapr {

namespace {

struct Beam {
  State state;
  double log_prob = 0.0;
};

// Indices of the k most probable actions, most probable first.
std::vector<std::size_t> top_k(const Eigen::VectorXd& p, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(p.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double pa = p(static_cast<Eigen::Index>(a));
                      const double pb = p(static_cast<Eigen::Index>(b));
                      return pa != pb ? pa > pb : a < b;
                    });
  idx.resize(k);
  return idx;
}

// k draws without replacement, each proportional to the remaining mass.
std::vector<std::size_t> sample_k(const Eigen::VectorXd& p, std::size_t k, Rng& rng) {
  std::vector<double> w(p.data(), p.data() + p.size());
  std::vector<std::size_t> out;
  k = std::min(k, w.size());
  while (out.size() < k) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::size_t pick = w.size();
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        pick = i;
        if (u < w[i]) break;
        u -= w[i];
      }
    } else {
      // remaining mass underflowed: fall back to the first unused slot
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (std::find(out.begin(), out.end(), i) == out.end()) {
          pick = i;
          break;
        }
      }
    }
    out.push_back(pick);
    w[pick] = 0.0;
  }
  return out;
}

}  // namespace

std::vector<ReasoningPath> beam_search(EntityRef v0, const PolicyNetwork& policy, const Environment& env,
                                       const BeamConfig& cfg) {
  if (cfg.sizes.size() != env.config().horizon) throw ConfigError("beam needs one width per step");
  if (std::find(cfg.sizes.begin(), cfg.sizes.end(), std::size_t{0}) != cfg.sizes.end()) {
    throw ConfigError("beam widths must be positive");
  }
  Rng rng(derive_seed(cfg.seed, (std::uint64_t{static_cast<std::uint8_t>(v0.kind)} << 32) | v0.id));
  std::vector<Beam> frontier{{env.reset(v0), 0.0}};
  for (std::size_t t = 0; t < cfg.sizes.size(); ++t) {
    std::vector<Beam> next;
    for (const auto& b : frontier) {
      const auto space = env.actions(b.state);
      const Eigen::VectorXd p = action_probabilities(policy, env, b.state, space);
      const auto picks = cfg.stochastic ? sample_k(p, cfg.sizes[t], rng) : top_k(p, cfg.sizes[t]);
      for (std::size_t i : picks) {
        auto [s, finished] = env.step(b.state, space, i);
        (void)finished;
        next.push_back({std::move(s), b.log_prob + std::log(p(static_cast<Eigen::Index>(i)))});
      }
    }
    frontier = std::move(next);
  }
  std::vector<ReasoningPath> out;
  for (auto& b : frontier) {
    b.state.path.log_prob = b.log_prob;
    if (is_rewardable(b.state.path, env.patterns())) out.push_back(std::move(b.state.path));
  }
  return out;
}

PairScorer mfi_scorer(const MfiBundle& bundle) {
  return [&bundle](TargetRelation t, std::uint32_t i, std::uint32_t j) { return bundle.score(t, i, j); };
}

std::map<std::uint32_t, Candidate> collect_candidates(std::span<const ReasoningPath> paths, TargetRelation relation,
                                                      const PairScorer& scorer) {
  std::map<std::uint32_t, Candidate> out;
  for (const auto& raw : paths) {
    ReasoningPath p = raw;
    const EntityRef end = p.entities[p.stripped_length()];
    if (end.kind != EntityKind::Product) continue;
    p.mfi_substitute = scorer(TargetRelation::Substitute, p.source().id, end.id);
    p.mfi_complement = scorer(TargetRelation::Complement, p.source().id, end.id);
    const double score = relation == TargetRelation::Substitute ? p.mfi_substitute : p.mfi_complement;
    auto it = out.find(end.id);
    if (it == out.end()) {
      out.emplace(end.id, Candidate{score, std::move(p)});
    } else if (p.log_prob > it->second.path.log_prob) {
      it->second.path = std::move(p);
    }
  }
  return out;
}

RankedRecommendation rank(const std::map<std::uint32_t, Candidate>& candidates, EntityRef v0,
                          TargetRelation relation, const KnowledgeGraph& train, std::size_t n) {
  if (n == 0) throw ConfigError("top-N must be at least 1");
  RankedRecommendation out{v0, relation, n, {}};
  const Relation r = graph_relation(relation);
  for (const auto& [id, c] : candidates) {
    const EntityRef e = product(id);
    if (e == v0 || (train.contains(v0) && train.contains(e) && train.has_edge(v0, r, e))) continue;
    out.items.push_back({id, c.score, c.path});
  }
  std::stable_sort(out.items.begin(), out.items.end(),
                   [](const RankedItem& a, const RankedItem& b) { return a.score > b.score; });
  if (out.items.size() > n) out.items.resize(n);
  return out;
}

nlohmann::json render_path(const ReasoningPath& path, const NameTable& names) {
  auto out = nlohmann::json::array();
  for (std::size_t i = 0; i < path.entities.size(); ++i) {
    if (i > 0) out.push_back(to_string(path.relations[i - 1]));
    out.push_back(names.render(path.entities[i]));
  }
  return out;
}

nlohmann::json to_json(const InferenceRecord& record, const NameTable& names) {
  const auto& rec = record.recommendation;
  auto candidates = nlohmann::json::array();
  for (const auto& item : rec.items) {
    candidates.push_back({{"product", names.render(product(item.product))},
                          {"score", item.score},
                          {"log_prob", item.path.log_prob},
                          {"path", render_path(item.path, names)}});
  }
  auto paths = nlohmann::json::array();
  for (const auto& p : record.paths) paths.push_back({{"log_prob", p.log_prob}, {"path", render_path(p, names)}});
  return {{"source", names.render(rec.source)},
          {"relation", to_string(rec.relation)},
          {"top_n", rec.requested},
          {"candidates", std::move(candidates)},
          {"valid_paths", record.paths.size()},
          {"paths", std::move(paths)}};
}

namespace {

class EntityResolver {
 public:
  explicit EntityResolver(const NameTable& names) {
    for (EntityKind k : kEntityKinds) {
      const auto& list = names.of(k);
      for (std::size_t i = 0; i < list.size(); ++i) index_[index_of(k)].emplace(list[i], static_cast<std::uint32_t>(i));
    }
  }

  EntityRef operator()(const std::string& text) const {
    const auto colon = text.find(':');
    const auto kind = colon == std::string::npos ? std::nullopt : parse_entity_kind(text.substr(0, colon));
    if (!kind) throw FormatError("bad entity '" + text + "'");
    const std::string name = text.substr(colon + 1);
    const auto& idx = index_[index_of(*kind)];
    if (auto it = idx.find(name); it != idx.end()) return {*kind, it->second};
    if (!name.empty() && name[0] == '#') return {*kind, static_cast<std::uint32_t>(std::stoul(name.substr(1)))};
    throw UnknownEntity(text);
  }

 private:
  std::array<std::unordered_map<std::string, std::uint32_t>, kEntityKindCount> index_;
};

ReasoningPath parse_path(const nlohmann::json& j, const EntityResolver& resolve) {
  ReasoningPath p;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto s = j[i].get<std::string>();
    if (i % 2 == 0) {
      p.entities.push_back(resolve(s));
    } else {
      const auto r = parse_relation(s);
      if (!r) throw FormatError("bad relation '" + s + "'");
      p.relations.push_back(*r);
    }
  }
  if (p.entities.size() != p.relations.size() + 1) throw FormatError("path must end with an entity");
  return p;
}

}  // namespace

InferenceRecord inference_from_json(const nlohmann::json& j, const NameTable& names) {
  const EntityResolver resolve(names);
  InferenceRecord out;
  auto& rec = out.recommendation;
  rec.source = resolve(j.at("source").get<std::string>());
  const auto rel = parse_target(j.at("relation").get<std::string>());
  if (!rel) throw FormatError("bad relation in inference record");
  rec.relation = *rel;
  rec.requested = j.at("top_n").get<std::size_t>();
  for (const auto& c : j.at("candidates")) {
    RankedItem item;
    item.product = resolve(c.at("product").get<std::string>()).id;
    item.score = c.at("score").get<double>();
    item.path = parse_path(c.at("path"), resolve);
    item.path.log_prob = c.at("log_prob").get<double>();
    rec.items.push_back(std::move(item));
  }
  for (const auto& p : j.at("paths")) {
    auto path = parse_path(p.at("path"), resolve);
    path.log_prob = p.at("log_prob").get<double>();
    out.paths.push_back(std::move(path));
  }
  return out;
}

}  // namespace kapr
