#include "kapr/embed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kapr/artifact.hpp"
#include "kapr/error.hpp"
#include "kapr/rng.hpp"

namespace kapr {

namespace {

constexpr std::string_view kFormat = "kapr.embedding";

struct Triple {
  EntityRef head;
  Relation relation;
  EntityRef tail;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class Row>
void normalize(Row&& v) {
  const double n = v.norm();
  if (n > 0.0) v /= n;
}

}  // namespace

EmbeddingTable::EmbeddingTable(const Populations& populations, std::size_t dim) : dim_(dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  for (EntityKind k : kEntityKinds) {
    entities_[index_of(k)] = RowMatrix::Zero(populations[index_of(k)], d);
    biases_[index_of(k)] = Eigen::VectorXd::Zero(populations[index_of(k)]);
  }
  relations_ = RowMatrix::Zero(static_cast<Eigen::Index>(kRelationCount + 1), d);
}

Populations EmbeddingTable::populations() const {
  Populations p{};
  for (EntityKind k : kEntityKinds) p[index_of(k)] = static_cast<std::uint32_t>(entities_[index_of(k)].rows());
  return p;
}

bool EmbeddingTable::all_finite() const {
  for (const auto& m : entities_) {
    if (!m.allFinite()) return false;
  }
  for (const auto& b : biases_) {
    if (!b.allFinite()) return false;
  }
  return relations_.allFinite();
}

void EmbeddingTable::round_to_float() {
  auto round = [](double x) { return static_cast<double>(static_cast<float>(x)); };
  for (auto& m : entities_) m = m.unaryExpr(round);
  for (auto& b : biases_) b = b.unaryExpr(round);
  relations_ = relations_.unaryExpr(round);
}

bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
  if (a.dim_ != b.dim_ || a.relations_ != b.relations_) return false;
  for (std::size_t k = 0; k < kEntityKindCount; ++k) {
    if (a.entities_[k].rows() != b.entities_[k].rows() || a.entities_[k] != b.entities_[k]) return false;
    if (a.biases_[k] != b.biases_[k]) return false;
  }
  return true;
}

TransEResult train_transe(const KnowledgeGraph& g, const TransEConfig& cfg) {
  if (g.edge_count() == 0) throw ConfigError("cannot train embeddings on an empty graph");
  if (cfg.dim == 0) throw ConfigError("embedding dimension must be positive");
  Rng rng(cfg.seed);
  TransEResult out{EmbeddingTable(g.populations(), cfg.dim), {}};
  auto& tab = out.table;

  const double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
  auto init_row = [&](auto row) {
    for (Eigen::Index i = 0; i < row.size(); ++i) row(i) = rng.uniform(-bound, bound);
    normalize(row);
  };
  for (EntityKind k : kEntityKinds) {
    for (std::uint32_t id = 0; id < g.population(k); ++id) init_row(tab.entity({k, id}));
  }
  for (Relation r : kGraphRelations) init_row(tab.relation(r));

  std::vector<Triple> positives;
  for (Relation r : kGraphRelations) {
    const auto s = schema_of(r);
    for (auto [h, t] : g.edges(r)) {
      positives.push_back({{s.head, h}, r, {s.tail, t}});
      if (is_product_relation(r)) positives.push_back({{s.tail, t}, r, {s.head, h}});
    }
  }

  const auto d = static_cast<Eigen::Index>(cfg.dim);
  Eigen::VectorXd pos(d), neg(d), grad_pos(d), grad_neg(d);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span(positives));
    double total = 0.0;
    std::size_t terms = 0;
    for (const auto& tr : positives) {
      for (std::size_t k = 0; k < cfg.negatives; ++k) {
        const auto pop = g.population(tr.tail.kind);
        if (pop < 2) continue;
        EntityRef corrupt = tr.tail;
        for (int attempt = 0; attempt < 10; ++attempt) {
          corrupt.id = static_cast<std::uint32_t>(rng.below(pop));
          if (corrupt != tr.tail && corrupt != tr.head && !g.has_edge(tr.head, tr.relation, corrupt)) break;
        }
        if (corrupt == tr.tail) continue;

        // Margin ranking on translation distances.
        pos = tab.entity(tr.head) + tab.relation(tr.relation) - tab.entity(tr.tail);
        neg = tab.entity(tr.head) + tab.relation(tr.relation) - tab.entity(corrupt);
        const double dp = pos.norm();
        const double dn = neg.norm();
        const double margin_loss = std::max(0.0, cfg.margin + dp - dn);
        if (margin_loss > 0.0) {
          grad_pos = dp > 0.0 ? Eigen::VectorXd(pos / dp) : Eigen::VectorXd::Zero(d);
          grad_neg = dn > 0.0 ? Eigen::VectorXd(neg / dn) : Eigen::VectorXd::Zero(d);
          tab.entity(tr.head) -= cfg.lr * (grad_pos - grad_neg).transpose();
          tab.relation(tr.relation) -= cfg.lr * (grad_pos - grad_neg).transpose();
          tab.entity(tr.tail) += cfg.lr * grad_pos.transpose();
          tab.entity(corrupt) -= cfg.lr * grad_neg.transpose();
          normalize(tab.entity(tr.head));
          normalize(tab.entity(tr.tail));
          normalize(tab.entity(corrupt));
        }

        // Bias calibration of the dot-product score, anchored at the product
        // endpoint as in pruning.
        double bias_loss = 0.0;
        auto fit_bias = [&](EntityRef anchor, EntityRef other, double label) {
          const double s = (tab.entity(anchor) + tab.relation(tr.relation)).dot(tab.entity(other)) + tab.bias(other);
          const double p = sigmoid(s);
          bias_loss -= label > 0.5 ? std::log(std::max(p, 1e-300)) : std::log(std::max(1.0 - p, 1e-300));
          tab.bias(other) -= cfg.bias_lr * (p - label);
        };
        if (tr.head.kind == EntityKind::Product) {
          fit_bias(tr.head, tr.tail, 1.0);
          fit_bias(tr.head, corrupt, 0.0);
        } else {
          // user -> product purchases: score the user from the product side
          fit_bias(tr.tail, tr.head, 1.0);
        }
        total += margin_loss + bias_loss;
        ++terms;
      }
    }
    out.loss_history.push_back(terms == 0 ? 0.0 : total / static_cast<double>(terms));
  }
  tab.round_to_float();
  return out;
}

double triple_score(const EmbeddingTable& tab, EntityRef h, Relation r, EntityRef t) {
  if (!tab.contains(h) || !tab.contains(t)) throw UnknownEntity("entity without embedding row");
  return -(tab.entity(h) + tab.relation(r) - tab.entity(t)).norm();
}

double action_score(const EmbeddingTable& tab, EntityRef v0, Relation /*r*/, EntityRef e) {
  if (!tab.contains(v0) || !tab.contains(e)) throw UnknownEntity("entity without embedding row");
  const auto src = tab.entity(v0);
  const auto dst = tab.entity(e);
  const double b = tab.bias(e);
  if (e.kind != EntityKind::Product) {
    return (src + tab.relation(relation_linking(e.kind))).dot(dst) + b;
  }
  const double viewed = (src + tab.relation(Relation::AlsoViewed)).dot(dst) + b;
  const double bought = (src + tab.relation(Relation::AlsoBought)).dot(dst) + b;
  return std::max(viewed, bought);
}

std::vector<double> transe_rewards(const EmbeddingTable& tab,
                                   std::span<const std::pair<EntityRef, EntityRef>> pairs) {
  std::vector<double> raw(pairs.size(), 0.0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [v0, e] = pairs[i];
    if (e.kind != EntityKind::Product) throw NotAProduct("reward target must be a product");
    if (e == v0) continue;
    raw[i] = action_score(tab, v0, Relation::AlsoViewed, e);
    lo = std::min(lo, raw[i]);
    hi = std::max(hi, raw[i]);
  }
  std::vector<double> out(pairs.size(), 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first == pairs[i].second) continue;
    out[i] = hi > lo ? (raw[i] - lo) / (hi - lo) : 1.0;
  }
  return out;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& tab,
                     const nlohmann::json& extra) {
  nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
  manifest["format"] = kFormat;
  manifest["dim"] = tab.dim();
  std::vector<artifact::NamedMatrix> arrays;
  for (EntityKind k : kEntityKinds) {
    manifest["counts"][std::string(to_string(k))] = tab.entities(k).rows();
    arrays.push_back({"entity." + std::string(to_string(k)), tab.entities(k)});
    arrays.push_back({"bias." + std::string(to_string(k)), tab.biases(k)});
  }
  Eigen::MatrixXd rel(static_cast<Eigen::Index>(kRelationCount), static_cast<Eigen::Index>(tab.dim()));
  for (Relation r : kGraphRelations) rel.row(static_cast<Eigen::Index>(index_of(r))) = tab.relation(r);
  arrays.push_back({"relation", rel});
  artifact::write_tensors(path, std::move(manifest), arrays, artifact::Dtype::F32);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  const auto file = artifact::read_tensors(path, kFormat);
  const auto dim = file.manifest.at("dim").get<std::size_t>();
  Populations pops{};
  for (EntityKind k : kEntityKinds) {
    pops[index_of(k)] = static_cast<std::uint32_t>(file.at("entity." + std::string(to_string(k))).rows());
  }
  EmbeddingTable tab(pops, dim);
  for (EntityKind k : kEntityKinds) {
    const auto& m = file.at("entity." + std::string(to_string(k)));
    const auto& b = file.at("bias." + std::string(to_string(k)));
    if (m.cols() != static_cast<Eigen::Index>(dim) || b.rows() != m.rows()) {
      throw FormatError(path.string() + ": inconsistent embedding shapes");
    }
    for (std::uint32_t id = 0; id < pops[index_of(k)]; ++id) {
      tab.entity({k, id}) = m.row(id);
      tab.bias({k, id}) = b(id, 0);
    }
  }
  const auto& rel = file.at("relation");
  for (Relation r : kGraphRelations) tab.relation(r) = rel.row(static_cast<Eigen::Index>(index_of(r)));
  return tab;
}

}  // namespace kapr
