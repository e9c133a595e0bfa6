#pragma once

// Test fixtures and brute-force oracles shared by the unit tests and the
// acceptance runner. Oracles here are written against the documented
// contracts, not against the library's internals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Core>

#include "kapr/embed.hpp"
#include "kapr/env.hpp"
#include "kapr/kg_store.hpp"
#include "kapr/meta_path.hpp"
#include "kapr/mfi.hpp"
#include "kapr/nn.hpp"
#include "kapr/policy.hpp"
#include "kapr/rng.hpp"

namespace kapr::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("kapr-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random graph with every relation represented. Edges are drawn until
/// `edges` distinct triples exist or attempts run out.
inline KnowledgeGraph random_graph(const Populations& pop, std::size_t edges, std::uint64_t seed) {
  KnowledgeGraph g(pop);
  Rng rng(seed);
  for (std::size_t tries = 0; g.edge_count() < edges && tries < 50 * edges; ++tries) {
    const Relation r = kGraphRelations[rng.below(kRelationCount)];
    const auto sch = schema_of(r);
    const auto hn = pop[index_of(sch.head)];
    const auto tn = pop[index_of(sch.tail)];
    if (hn == 0 || tn == 0) continue;
    const EntityRef h{sch.head, static_cast<std::uint32_t>(rng.below(hn))};
    const EntityRef t{sch.tail, static_cast<std::uint32_t>(rng.below(tn))};
    if (h == t) continue;
    g.add_triple(h, r, t);
  }
  return g;
}

/// Embedding table with N(0, scale^2) entries and biases.
inline EmbeddingTable random_table(const Populations& pop, std::size_t dim, std::uint64_t seed,
                                   double scale = 1.0) {
  EmbeddingTable tab(pop, dim);
  Rng rng(seed);
  for (EntityKind k : kEntityKinds) {
    for (std::uint32_t i = 0; i < pop[index_of(k)]; ++i) {
      const EntityRef e{k, i};
      for (std::size_t d = 0; d < dim; ++d) tab.entity(e)(static_cast<Eigen::Index>(d)) = scale * rng.normal();
      tab.bias(e) = scale * rng.normal();
    }
  }
  for (Relation r : kGraphRelations) {
    for (std::size_t d = 0; d < dim; ++d) tab.relation(r)(static_cast<Eigen::Index>(d)) = scale * rng.normal();
  }
  return tab;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline void randomize(nn::ParameterList& params, Rng& rng, double scale) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = params[i];
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
      for (Eigen::Index b = 0; b < m.cols(); ++b) m(a, b) = scale * rng.normal();
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // parameter name and index of the worst entry
};

/// Relative error |a - n| / max(floor, |a|, |n|).
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({floor, std::abs(analytic), std::abs(numeric)});
}

/// Compares `analytic` against central differences of f over every scalar
/// of `params`, perturbing in place and restoring afterwards.
inline GradientCheck check_gradient(nn::ParameterList& params, const nn::ParameterList& analytic,
                                    const std::function<double()>& f, double eps = 1e-4) {
  GradientCheck out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = params[p];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + eps;
      const double up = f();
      m.data()[i] = saved - eps;
      const double down = f();
      m.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[p].data()[i], numeric);
      if (err > out.max_relative_error) {
        out.max_relative_error = err;
        out.worst = params.name(p) + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

/// Smallest |pre-activation| over every ReLU the MFI model evaluates for one
/// pair, recomputed from the public parameters. Central differences are only
/// meaningful when this exceeds the step.
inline double mfi_kink_distance(const MfiModel& m, const Eigen::VectorXd& vi, const Eigen::VectorXd& vj,
                                const Eigen::VectorXd& ci, const Eigen::VectorXd& cj) {
  const auto& p = m.parameters();
  const auto& st = m.statistics();
  const double eps = m.config().norm_eps;
  double closest = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd* v : {&vi, &vj}) {
    Eigen::VectorXd x = m.mask_attention(*v);
    for (std::size_t k = 0; k < m.config().layers; ++k) {
      const Eigen::VectorXd pre = p[m.layer_w(k)] * x + p[m.layer_b(k)].col(0);
      const Eigen::VectorXd z =
          p[m.layer_gamma(k)].col(0).cwiseProduct((pre - st[2 * k].col(0)).cwiseQuotient(
              (st[2 * k + 1].col(0).array() + eps).sqrt().matrix())) +
          p[m.layer_beta(k)].col(0);
      if (k + 1 < m.config().layers) closest = std::min(closest, z.cwiseAbs().minCoeff());
      x = z.cwiseMax(0.0);
    }
  }
  const Eigen::VectorXd in = m.classifier_input(vi, vj, ci, cj);
  const Eigen::VectorXd h1 = p[m.classifier(0)] * in + p[m.classifier(1)].col(0);
  const Eigen::VectorXd h2 = p[m.classifier(2)] * h1.cwiseMax(0.0) + p[m.classifier(3)].col(0);
  return std::min({closest, h1.cwiseAbs().minCoeff(), h2.cwiseAbs().minCoeff()});
}

// ---------------------------------------------------------------------------
// Pruning oracle: enumerate stored triples, filter, score, sort, truncate.

inline double oracle_score(const EmbeddingTable& tab, EntityRef v0, EntityRef e) {
  auto dot = [&](Relation r) {
    double s = tab.bias(e);
    for (std::size_t d = 0; d < tab.dim(); ++d) {
      const auto i = static_cast<Eigen::Index>(d);
      s += (tab.entity(v0)(i) + tab.relation(r)(i)) * tab.entity(e)(i);
    }
    return s;
  };
  switch (e.kind) {
    case EntityKind::Product: return std::max(dot(Relation::AlsoViewed), dot(Relation::AlsoBought));
    case EntityKind::User: return dot(Relation::Purchase);
    case EntityKind::Word: return dot(Relation::DescribedBy);
    case EntityKind::Brand: return dot(Relation::ProducedBy);
    case EntityKind::Category: return dot(Relation::BelongTo);
  }
  return 0.0;
}

/// True iff prefix + next is a prefix of a pattern of length <= horizon.
inline bool oracle_feasible(const PatternSet& patterns, const std::vector<Relation>& prefix, Relation next,
                            std::size_t horizon) {
  std::vector<Relation> seq = prefix;
  seq.push_back(next);
  for (const auto& p : patterns.patterns()) {
    if (p.steps.size() < seq.size() || p.steps.size() > horizon) continue;
    if (std::equal(seq.begin(), seq.end(), p.steps.begin())) return true;
  }
  return false;
}

inline std::vector<ScoredAction> oracle_prune(const State& s, const KnowledgeGraph& g, const EmbeddingTable& tab,
                                              const PatternSet& patterns, std::size_t n, std::size_t horizon) {
  std::vector<ScoredAction> all;
  const auto& rels = s.path.relations;
  const bool looped = !rels.empty() && rels.back() == Relation::SelfLoop;
  if (!looped && rels.size() < horizon) {
    const EntityRef here = s.current();
    for (Relation r : kGraphRelations) {
      const auto sch = schema_of(r);
      for (auto [h, t] : g.edges(r)) {
        const EntityRef head{sch.head, h};
        const EntityRef tail{sch.tail, t};
        std::vector<EntityRef> ends;
        if (head == here) ends.push_back(tail);
        if (tail == here) ends.push_back(head);
        for (EntityRef e : ends) {
          if (std::find(s.path.entities.begin(), s.path.entities.end(), e) != s.path.entities.end()) continue;
          if (!oracle_feasible(patterns, rels, r, horizon)) continue;
          all.push_back({{r, e}, oracle_score(tab, s.source(), e)});
        }
      }
    }
    std::sort(all.begin(), all.end(), [](const ScoredAction& a, const ScoredAction& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.action.relation != b.action.relation) return a.action.relation < b.action.relation;
      return a.action.target.id < b.action.target.id;
    });
    if (all.size() > n) all.resize(n);
  }
  all.push_back({{Relation::SelfLoop, s.current()}, -std::numeric_limits<double>::infinity()});
  return all;
}

/// Random walk state of `steps` hops taken uniformly from the environment's
/// action spaces. The walk may stop early when only SelfLoop remains.
inline State random_state(const Environment& env, EntityRef v0, std::size_t steps, Rng& rng) {
  State s = env.reset(v0);
  for (std::size_t t = 0; t < steps && !env.done(s); ++t) {
    const auto space = env.actions(s);
    s = env.step(s, space, rng.below(space.size())).first;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Beam oracle: expand the full tree level by level with an explicit sort.

struct OraclePath {
  std::vector<EntityRef> entities;
  std::vector<Relation> relations;
  double log_prob = 0.0;
};

inline std::vector<OraclePath> oracle_beam(EntityRef v0, const PolicyNetwork& policy, const Environment& env,
                                           const std::vector<std::size_t>& sizes) {
  struct Node {
    State state;
    double log_prob;
  };
  std::vector<Node> frontier{{env.reset(v0), 0.0}};
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    std::vector<Node> next;
    for (const auto& node : frontier) {
      const auto space = env.actions(node.state);
      const Eigen::VectorXd p = policy.forward(encode_state(node.state, env.embeddings(), env.config().history),
                                               encode_actions(space, env.embeddings()));
      std::vector<std::size_t> order(space.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto pa = p(static_cast<Eigen::Index>(a));
        const auto pb = p(static_cast<Eigen::Index>(b));
        return pa != pb ? pa > pb : a < b;
      });
      for (std::size_t j = 0; j < std::min(sizes[t], order.size()); ++j) {
        const auto i = order[j];
        next.push_back({env.step(node.state, space, i).first,
                        node.log_prob + std::log(p(static_cast<Eigen::Index>(i)))});
      }
    }
    frontier = std::move(next);
  }
  std::vector<OraclePath> out;
  for (const auto& node : frontier) {
    if (!is_rewardable(node.state.path, env.patterns())) continue;
    out.push_back({node.state.path.entities, node.state.path.relations, node.log_prob});
  }
  return out;
}

// ---------------------------------------------------------------------------
// The six-node beam fixture: products 0..2, words 0..1, brand 0.
//   p0 -described_by- w0 -described_by- p1
//   p0 -described_by- w1 -described_by- p2
//   p0 -produced_by-  b0 -produced_by-  p2
//   p1 -also_viewed-  p2

inline KnowledgeGraph six_node_graph() {
  Populations pop{};
  pop[index_of(EntityKind::Product)] = 3;
  pop[index_of(EntityKind::Word)] = 2;
  pop[index_of(EntityKind::Brand)] = 1;
  KnowledgeGraph g(pop);
  const EntityRef w0{EntityKind::Word, 0}, w1{EntityKind::Word, 1}, b0{EntityKind::Brand, 0};
  g.add_triple(product(0), Relation::DescribedBy, w0);
  g.add_triple(product(1), Relation::DescribedBy, w0);
  g.add_triple(product(0), Relation::DescribedBy, w1);
  g.add_triple(product(2), Relation::DescribedBy, w1);
  g.add_triple(product(0), Relation::ProducedBy, b0);
  g.add_triple(product(2), Relation::ProducedBy, b0);
  g.add_triple(product(1), Relation::AlsoViewed, product(2));
  return g;
}

inline Populations populations(std::uint32_t products, std::uint32_t users, std::uint32_t words,
                               std::uint32_t brands, std::uint32_t categories) {
  Populations pop{};
  pop[index_of(EntityKind::Product)] = products;
  pop[index_of(EntityKind::User)] = users;
  pop[index_of(EntityKind::Word)] = words;
  pop[index_of(EntityKind::Brand)] = brands;
  pop[index_of(EntityKind::Category)] = categories;
  return pop;
}

}  // namespace kapr::testing
