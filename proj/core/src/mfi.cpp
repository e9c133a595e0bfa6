#include "kapr/mfi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "kapr/artifact.hpp"
#include "kapr/error.hpp"
#include "kapr/rng.hpp"
#include "kapr/text.hpp"

namespace kapr {

namespace {

constexpr const char* kFormat = "kapr.mfi";

double smoothed_idf(std::size_t documents, std::size_t df) {
  return std::log((1.0 + static_cast<double>(documents)) / (1.0 + static_cast<double>(df))) + 1.0;
}

std::unordered_map<std::string, Eigen::VectorXd> read_vector_file(const std::filesystem::path& path,
                                                                  std::size_t& dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::unordered_map<std::string, Eigen::VectorXd> out;
  std::string line;
  std::size_t lineno = 0;
  dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    double x = 0.0;
    while (ss >> x) values.push_back(x);
    if (!ss.eof()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-numeric value");
    if (dim == 0) dim = values.size();
    if (values.empty() || values.size() != dim) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                        " values");
    }
    out[token] = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(dim));
  }
  return out;
}

Eigen::VectorXd relu(const Eigen::VectorXd& x) { return x.cwiseMax(0.0); }

Eigen::VectorXd relu_mask(const Eigen::VectorXd& x) { return (x.array() > 0.0).cast<double>().matrix(); }

}  // namespace

// ---- word vectors ----

WordVectors::WordVectors(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("word vector dimension must be positive");
}

WordVectors WordVectors::load(const std::filesystem::path& path, std::uint64_t seed) {
  std::size_t dim = 0;
  auto table = read_vector_file(path, dim);
  if (dim == 0) throw FormatError(path.string() + ": no vectors");
  WordVectors out(dim, seed);
  out.table_ = std::move(table);
  return out;
}

bool WordVectors::contains(std::string_view token) const { return table_.contains(std::string(token)); }

Eigen::VectorXd WordVectors::lookup(std::string_view token) const {
  if (auto it = table_.find(std::string(token)); it != table_.end()) return it->second;
  const auto h = std::stoull(artifact::fnv1a64_hex(token), nullptr, 16);
  Rng rng(derive_seed(seed_, h));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal() * scale;
  return v;
}

// ---- category features ----

std::map<std::string, std::vector<std::string>> category_documents(std::span<const ProductRecord> products) {
  std::map<std::string, std::vector<std::string>> docs;
  for (const auto& p : products) {
    const auto tokens = tokenize(p.title);
    for (const auto& c : p.categories) {
      auto& doc = docs[c];
      doc.insert(doc.end(), tokens.begin(), tokens.end());
    }
  }
  return docs;
}

CategoryFeature category_feature(std::string_view category,
                                 const std::map<std::string, std::vector<std::string>>& documents,
                                 const WordVectors& words, std::size_t f) {
  const auto it = documents.find(std::string(category));
  if (it == documents.end()) throw EmptyCategory(std::string(category));
  std::map<std::string, std::size_t> df;
  for (const auto& [name, doc] : documents) {
    for (const auto& t : std::set<std::string>(doc.begin(), doc.end())) ++df[t];
  }
  std::map<std::string, std::size_t> tf;
  for (const auto& t : it->second) ++tf[t];
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [t, n] : tf) scored.emplace_back(t, static_cast<double>(n) * smoothed_idf(documents.size(), df[t]));
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  CategoryFeature out;
  out.name = it->first;
  out.pooled = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(words.dim()));
  for (std::size_t i = 0; i < scored.size() && i < f; ++i) {
    out.words.push_back(scored[i].first);
    out.pooled += words.lookup(scored[i].first);
  }
  if (!out.words.empty()) out.pooled /= static_cast<double>(out.words.size());
  return out;
}

// ---- product features ----

TfidfEmbedder::TfidfEmbedder(const std::vector<std::vector<std::string>>& corpus, const WordVectors& words,
                             std::size_t dim, std::uint64_t seed)
    : words_(&words), documents_(corpus.size()) {
  for (const auto& doc : corpus) {
    for (const auto& t : std::set<std::string>(doc.begin(), doc.end())) ++df_[t];
  }
  Rng rng(seed);
  projection_.resize(static_cast<Eigen::Index>(words.dim()), static_cast<Eigen::Index>(dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(words.dim()));
  for (Eigen::Index j = 0; j < projection_.cols(); ++j) {
    for (Eigen::Index i = 0; i < projection_.rows(); ++i) projection_(i, j) = rng.normal() * scale;
  }
}

double TfidfEmbedder::idf(const std::string& term) const {
  const auto it = df_.find(term);
  return smoothed_idf(documents_, it == df_.end() ? 0 : it->second);
}

Eigen::VectorXd TfidfEmbedder::embed(std::string_view, const std::vector<std::string>& tokens) const {
  std::map<std::string, std::size_t> tf;
  for (const auto& t : tokens) ++tf[t];
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(projection_.rows());
  double total = 0.0;
  for (const auto& [t, n] : tf) {
    const double w = static_cast<double>(n) * idf(t);
    acc += w * words_->lookup(t);
    total += w;
  }
  if (total > 0.0) acc /= total;
  return projection_.transpose() * acc;
}

PrecomputedEmbedder::PrecomputedEmbedder(std::unordered_map<std::string, Eigen::VectorXd> vectors)
    : vectors_(std::move(vectors)) {
  for (const auto& [id, v] : vectors_) {
    if (dim_ == 0) dim_ = static_cast<std::size_t>(v.size());
    if (static_cast<std::size_t>(v.size()) != dim_) throw FormatError("precomputed vectors differ in size");
  }
}

PrecomputedEmbedder PrecomputedEmbedder::load(const std::filesystem::path& path) {
  std::size_t dim = 0;
  return PrecomputedEmbedder(read_vector_file(path, dim));
}

Eigen::VectorXd PrecomputedEmbedder::embed(std::string_view product_id, const std::vector<std::string>&) const {
  const auto it = vectors_.find(std::string(product_id));
  if (it == vectors_.end()) throw MissingFeature("no precomputed vector for " + std::string(product_id));
  return it->second;
}

std::vector<std::string> product_tokens(const ProductRecord& product) {
  auto tokens = tokenize(product.description);
  if (tokens.empty()) tokens = tokenize(product.title);
  if (tokens.empty()) throw EmptyText(product.external_id);
  return tokens;
}

Eigen::VectorXd product_feature(const ProductRecord& product, const DocumentEmbedder& embedder) {
  return embedder.embed(product.external_id, product_tokens(product));
}

MfiFeatures build_features(std::span<const ProductRecord> products, const DocumentEmbedder& embedder,
                           const WordVectors& words, std::size_t f) {
  const auto n = static_cast<Eigen::Index>(products.size());
  MfiFeatures out;
  out.product.resize(n, static_cast<Eigen::Index>(embedder.dim()));
  out.category = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(words.dim()));
  const auto docs = category_documents(products);
  std::map<std::string, std::size_t> index;
  for (const auto& [name, doc] : docs) {
    index[name] = out.categories.size();
    out.categories.push_back(category_feature(name, docs, words, f));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = products[static_cast<std::size_t>(i)];
    out.product.row(i) = product_feature(p, embedder).transpose();
    const std::set<std::string> cats(p.categories.begin(), p.categories.end());
    for (const auto& c : cats) out.category.row(i) += out.categories[index.at(c)].pooled.transpose();
    if (!cats.empty()) out.category.row(i) /= static_cast<double>(cats.size());
  }
  return out;
}

// ---- model ----

MfiModel::MfiModel(const MfiConfig& cfg, TargetRelation relation) : cfg_(cfg), relation_(relation) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(relation)));
  const auto dp = static_cast<Eigen::Index>(cfg.product_dim);
  const auto dc = static_cast<Eigen::Index>(cfg.category_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  params_.add("attn.W", nn::fan_in_uniform(dp, dp, rng));
  params_.add("attn.b", Eigen::MatrixXd::Zero(dp, 1));
  for (std::size_t k = 0; k < cfg.layers; ++k) {
    const auto tag = "layer" + std::to_string(k) + ".";
    params_.add(tag + "W", nn::fan_in_uniform(dp, dp, rng));
    params_.add(tag + "b", Eigen::MatrixXd::Zero(dp, 1));
    params_.add(tag + "gamma", Eigen::MatrixXd::Ones(dp, 1));
    params_.add(tag + "beta", Eigen::MatrixXd::Zero(dp, 1));
    stats_.add(tag + "mean", Eigen::MatrixXd::Zero(dp, 1));
    stats_.add(tag + "var", Eigen::MatrixXd::Ones(dp, 1));
  }
  const Eigen::Index in = 2 * dp + 2 * dc;
  params_.add("cls.W1", nn::fan_in_uniform(in, h, rng).transpose());
  params_.add("cls.b1", Eigen::MatrixXd::Zero(h, 1));
  params_.add("cls.W2", nn::fan_in_uniform(h, h, rng).transpose());
  params_.add("cls.b2", Eigen::MatrixXd::Zero(h, 1));
  params_.add("cls.w3", nn::fan_in_uniform(h, 1, rng));
  params_.add("cls.b3", Eigen::MatrixXd::Zero(1, 1));
}

Eigen::VectorXd MfiModel::mask_attention(const Eigen::VectorXd& v) const {
  const Eigen::VectorXd pre = params_[attn_w()] * v + params_[attn_b()].col(0);
  return pre.unaryExpr([](double x) { return nn::sigmoid(x); }).cwiseProduct(v);
}

namespace {

struct EvidenceTrace {
  Eigen::VectorXd attn;                   // sigmoid output
  std::vector<Eigen::VectorXd> inputs;    // y^(k-1) per layer
  std::vector<Eigen::VectorXd> centered;  // (z - mean) / sqrt(var + eps)
  std::vector<Eigen::VectorXd> normed;    // gamma * centered + beta
  Eigen::VectorXd out;
};

}  // namespace

static EvidenceTrace trace_evidence(const MfiModel& m, const Eigen::VectorXd& v) {
  const auto& p = m.parameters();
  const auto& s = m.statistics();
  EvidenceTrace t;
  t.attn = (p[m.attn_w()] * v + p[m.attn_b()].col(0)).unaryExpr([](double x) { return nn::sigmoid(x); });
  Eigen::VectorXd y = t.attn.cwiseProduct(v);
  const std::size_t layers = m.config().layers;
  for (std::size_t k = 0; k < layers; ++k) {
    t.inputs.push_back(y);
    const Eigen::VectorXd z = p[m.layer_w(k)] * y + p[m.layer_b(k)].col(0);
    const Eigen::VectorXd inv = (s[2 * k + 1].col(0).array() + m.config().norm_eps).rsqrt().matrix();
    Eigen::VectorXd c = (z - s[2 * k].col(0)).cwiseProduct(inv);
    Eigen::VectorXd n = p[m.layer_gamma(k)].col(0).cwiseProduct(c) + p[m.layer_beta(k)].col(0);
    y = k + 1 < layers ? relu(n) : n;
    t.centered.push_back(std::move(c));
    t.normed.push_back(std::move(n));
  }
  t.out = std::move(y);
  return t;
}

// Adds the parameter gradient of <g_out, evidence(v)> to grads.
static void backprop_evidence(const MfiModel& m, const Eigen::VectorXd& v, const EvidenceTrace& t,
                              Eigen::VectorXd g, nn::ParameterList& grads) {
  const auto& p = m.parameters();
  const auto& s = m.statistics();
  const std::size_t layers = m.config().layers;
  for (std::size_t k = layers; k-- > 0;) {
    if (k + 1 < layers) g = g.cwiseProduct(relu_mask(t.normed[k]));
    grads[m.layer_gamma(k)].col(0) += g.cwiseProduct(t.centered[k]);
    grads[m.layer_beta(k)].col(0) += g;
    const Eigen::VectorXd inv = (s[2 * k + 1].col(0).array() + m.config().norm_eps).rsqrt().matrix();
    const Eigen::VectorXd gz = g.cwiseProduct(p[m.layer_gamma(k)].col(0)).cwiseProduct(inv);
    grads[m.layer_w(k)] += gz * t.inputs[k].transpose();
    grads[m.layer_b(k)].col(0) += gz;
    g = p[m.layer_w(k)].transpose() * gz;
  }
  const Eigen::VectorXd gpre =
      g.cwiseProduct(v).cwiseProduct(t.attn.cwiseProduct((1.0 - t.attn.array()).matrix()));
  grads[m.attn_w()] += gpre * v.transpose();
  grads[m.attn_b()].col(0) += gpre;
}

Eigen::VectorXd MfiModel::evidence(const Eigen::VectorXd& v) const {
  if (v.size() != static_cast<Eigen::Index>(cfg_.product_dim)) throw ConfigError("product feature size mismatch");
  return trace_evidence(*this, v).out;
}

Eigen::VectorXd MfiModel::classifier_input(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj,
                                           const Eigen::VectorXd& ci, const Eigen::VectorXd& cj) const {
  if (ci.size() != static_cast<Eigen::Index>(cfg_.category_dim) || cj.size() != ci.size()) {
    throw ConfigError("category feature size mismatch");
  }
  const auto dp = static_cast<Eigen::Index>(cfg_.product_dim);
  const auto dc = static_cast<Eigen::Index>(cfg_.category_dim);
  Eigen::VectorXd x(2 * dp + 2 * dc);
  x << evidence(vi), evidence(vj), ci, cj;
  return x;
}

double MfiModel::logit(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj, const Eigen::VectorXd& ci,
                       const Eigen::VectorXd& cj) const {
  const Eigen::VectorXd x = classifier_input(vi, vj, ci, cj);
  const Eigen::VectorXd h1 = relu(params_[classifier(0)] * x + params_[classifier(1)].col(0));
  const Eigen::VectorXd h2 = relu(params_[classifier(2)] * h1 + params_[classifier(3)].col(0));
  return params_[classifier(4)].col(0).dot(h2) + params_[classifier(5)](0, 0);
}

double MfiModel::probability(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj, const Eigen::VectorXd& ci,
                             const Eigen::VectorXd& cj) const {
  return nn::sigmoid(logit(vi, vj, ci, cj));
}

double MfiModel::accumulate_gradient(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj,
                                     const Eigen::VectorXd& ci, const Eigen::VectorXd& cj, double label,
                                     double weight, nn::ParameterList& grads) const {
  const auto dp = static_cast<Eigen::Index>(cfg_.product_dim);
  const auto dc = static_cast<Eigen::Index>(cfg_.category_dim);
  const auto ti = trace_evidence(*this, vi);
  const auto tj = trace_evidence(*this, vj);
  Eigen::VectorXd x(2 * dp + 2 * dc);
  x << ti.out, tj.out, ci, cj;
  const Eigen::VectorXd pre1 = params_[classifier(0)] * x + params_[classifier(1)].col(0);
  const Eigen::VectorXd h1 = relu(pre1);
  const Eigen::VectorXd pre2 = params_[classifier(2)] * h1 + params_[classifier(3)].col(0);
  const Eigen::VectorXd h2 = relu(pre2);
  const double z = params_[classifier(4)].col(0).dot(h2) + params_[classifier(5)](0, 0);
  const double loss = nn::softplus(z) - label * z;

  const double gz = weight * (nn::sigmoid(z) - label);
  grads[classifier(4)].col(0) += gz * h2;
  grads[classifier(5)](0, 0) += gz;
  const Eigen::VectorXd g2 = (gz * params_[classifier(4)].col(0)).cwiseProduct(relu_mask(pre2));
  grads[classifier(2)] += g2 * h1.transpose();
  grads[classifier(3)].col(0) += g2;
  const Eigen::VectorXd g1 = (params_[classifier(2)].transpose() * g2).cwiseProduct(relu_mask(pre1));
  grads[classifier(0)] += g1 * x.transpose();
  grads[classifier(1)].col(0) += g1;
  const Eigen::VectorXd gx = params_[classifier(0)].transpose() * g1;
  backprop_evidence(*this, vi, ti, gx.segment(0, dp), grads);
  backprop_evidence(*this, vj, tj, gx.segment(dp, dp), grads);
  return loss;
}

void MfiModel::calibrate(const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) return;
  Eigen::MatrixXd y(inputs.rows(), inputs.cols());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) y.row(r) = mask_attention(inputs.row(r).transpose()).transpose();
  for (std::size_t k = 0; k < cfg_.layers; ++k) {
    const Eigen::MatrixXd z = (y * params_[layer_w(k)].transpose()).rowwise() + params_[layer_b(k)].col(0).transpose();
    const Eigen::RowVectorXd mean = z.colwise().mean();
    const Eigen::RowVectorXd var = (z.rowwise() - mean).array().square().colwise().mean();
    stats_[2 * k].col(0) = mean.transpose();
    stats_[2 * k + 1].col(0) = var.transpose();
    const Eigen::VectorXd inv = (var.transpose().array() + cfg_.norm_eps).rsqrt().matrix();
    Eigen::MatrixXd n = ((z.rowwise() - mean).array().rowwise() * inv.transpose().array()).matrix();
    n = (n.array().rowwise() * params_[layer_gamma(k)].col(0).transpose().array()).matrix();
    n.rowwise() += params_[layer_beta(k)].col(0).transpose();
    y = k + 1 < cfg_.layers ? Eigen::MatrixXd(n.cwiseMax(0.0)) : n;
  }
}

// ---- scoring and training ----

namespace {

void check_feature(const MfiFeatures& f, std::uint32_t i) {
  if (i >= f.size()) throw MissingFeature("product " + std::to_string(i));
}

}  // namespace

double predict(const MfiModel& model, const MfiFeatures& features, std::uint32_t i, std::uint32_t j) {
  check_feature(features, i);
  check_feature(features, j);
  return model.probability(features.product.row(i).transpose(), features.product.row(j).transpose(),
                           features.category.row(i).transpose(), features.category.row(j).transpose());
}

double symmetric_score(const MfiModel& model, const MfiFeatures& features, std::uint32_t i, std::uint32_t j) {
  return std::max(predict(model, features, i, j), predict(model, features, j, i));
}

double bce_loss(const MfiModel& model, const MfiFeatures& features, std::span<const LabeledPair> pairs) {
  double loss = 0.0;
  for (const auto& p : pairs) {
    check_feature(features, p.i);
    check_feature(features, p.j);
    const double z = model.logit(features.product.row(p.i).transpose(), features.product.row(p.j).transpose(),
                                 features.category.row(p.i).transpose(), features.category.row(p.j).transpose());
    loss += nn::softplus(z) - p.label * z;
  }
  return loss;
}

nn::ParameterList bce_gradient(const MfiModel& model, const MfiFeatures& features,
                               std::span<const LabeledPair> pairs) {
  auto grads = model.parameters().zeros_like();
  for (const auto& p : pairs) {
    check_feature(features, p.i);
    check_feature(features, p.j);
    model.accumulate_gradient(features.product.row(p.i).transpose(), features.product.row(p.j).transpose(),
                              features.category.row(p.i).transpose(), features.category.row(p.j).transpose(),
                              p.label, 1.0, grads);
  }
  return grads;
}

MfiTrainingResult train_mfi(MfiModel& model, const MfiFeatures& features,
                            std::span<const std::pair<std::uint32_t, std::uint32_t>> positives,
                            const MfiTrainingConfig& cfg) {
  if (positives.empty()) throw ConfigError("MFI training needs at least one positive pair");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  const auto n = static_cast<std::uint32_t>(features.size());
  std::unordered_set<std::uint64_t> linked;
  std::vector<std::uint32_t> involved;
  auto key = [](std::uint32_t a, std::uint32_t b) { return (std::uint64_t{a} << 32) | b; };
  for (const auto& [i, j] : positives) {
    check_feature(features, i);
    check_feature(features, j);
    linked.insert(key(i, j));
    linked.insert(key(j, i));
    involved.push_back(i);
    involved.push_back(j);
  }
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());
  Eigen::MatrixXd calib(static_cast<Eigen::Index>(involved.size()), features.product.cols());
  for (std::size_t r = 0; r < involved.size(); ++r) calib.row(static_cast<Eigen::Index>(r)) = features.product.row(involved[r]);

  nn::Adam adam(model.parameters(), cfg.lr);
  MfiTrainingResult res;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.calibrate(calib);
    Rng rng(derive_seed(cfg.seed, epoch));
    std::vector<LabeledPair> examples;
    for (const auto& [a, b] : positives) {
      for (const auto& [i, j] : {std::pair{a, b}, std::pair{b, a}}) {
        examples.push_back({i, j, 1.0});
        for (std::size_t k = 0; k < cfg.negatives; ++k) {
          std::uint32_t neg = i;
          for (int tries = 0; tries < 100 && (neg == i || linked.contains(key(i, neg))); ++tries) {
            neg = static_cast<std::uint32_t>(rng.below(n));
          }
          if (neg != i && !linked.contains(key(i, neg))) examples.push_back({i, neg, 0.0});
        }
      }
    }
    rng.shuffle(std::span(examples));
    double total = 0.0;
    for (std::size_t b = 0; b < examples.size(); b += cfg.batch_size) {
      const auto batch = std::span(examples).subspan(b, std::min(cfg.batch_size, examples.size() - b));
      auto grads = model.parameters().zeros_like();
      const double w = 1.0 / static_cast<double>(batch.size());
      for (const auto& p : batch) {
        total += model.accumulate_gradient(features.product.row(p.i).transpose(), features.product.row(p.j).transpose(),
                                           features.category.row(p.i).transpose(),
                                           features.category.row(p.j).transpose(), p.label, w, grads);
      }
      adam.step(model.parameters(), grads);
    }
    res.loss_history.push_back(total / static_cast<double>(examples.size()));
  }
  model.calibrate(calib);
  return res;
}

double reward(const MfiModel& substitute, const MfiModel& complement, const MfiFeatures& features,
              EntityRef v0, EntityRef e) {
  if (v0.kind != EntityKind::Product || e.kind != EntityKind::Product) throw NotAProduct("reward needs two products");
  return std::max(symmetric_score(substitute, features, v0.id, e.id),
                  symmetric_score(complement, features, v0.id, e.id));
}

MfiScorer::Head MfiScorer::prepare(const MfiModel& m, const MfiFeatures& f) {
  const auto& p = m.parameters();
  const auto dp = static_cast<Eigen::Index>(m.config().product_dim);
  const auto dc = static_cast<Eigen::Index>(m.config().category_dim);
  const auto n = static_cast<Eigen::Index>(f.size());
  Eigen::MatrixXd ev(dp, n);
  for (Eigen::Index i = 0; i < n; ++i) ev.col(i) = m.evidence(f.product.row(i).transpose());
  const auto& w1 = p[m.classifier(0)];
  Head h;
  h.left = w1.middleCols(0, dp) * ev + w1.middleCols(2 * dp, dc) * f.category.transpose();
  h.left.colwise() += p[m.classifier(1)].col(0);
  h.right = w1.middleCols(dp, dp) * ev + w1.middleCols(2 * dp + dc, dc) * f.category.transpose();
  h.w2 = p[m.classifier(2)];
  h.b2 = p[m.classifier(3)].col(0);
  h.w3 = p[m.classifier(4)].col(0);
  h.b3 = p[m.classifier(5)](0, 0);
  return h;
}

MfiScorer::MfiScorer(const MfiBundle& bundle)
    : products_(bundle.features.size()),
      heads_{prepare(bundle.substitute, bundle.features), prepare(bundle.complement, bundle.features)} {}

double MfiScorer::probability(TargetRelation t, std::uint32_t i, std::uint32_t j) const {
  if (i >= products_ || j >= products_) throw MissingFeature("product " + std::to_string(std::max(i, j)));
  const Head& h = heads_[t == TargetRelation::Substitute ? 0 : 1];
  const Eigen::VectorXd h1 = (h.left.col(i) + h.right.col(j)).cwiseMax(0.0);
  const Eigen::VectorXd h2 = (h.w2 * h1 + h.b2).cwiseMax(0.0);
  return nn::sigmoid(h.w3.dot(h2) + h.b3);
}

double MfiScorer::score(TargetRelation t, std::uint32_t i, std::uint32_t j) const {
  return std::max(probability(t, i, j), probability(t, j, i));
}

double MfiScorer::reward(std::uint32_t i, std::uint32_t j) const {
  return std::max(score(TargetRelation::Substitute, i, j), score(TargetRelation::Complement, i, j));
}

double MfiRewarder::operator()(EntityRef v0, EntityRef e) const {
  calls_.fetch_add(1);
  if (v0.kind != EntityKind::Product || e.kind != EntityKind::Product) throw NotAProduct("reward needs two products");
  const std::uint64_t k = (std::uint64_t{v0.id} << 32) | e.id;
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(k); it != memo_.end()) return it->second;
  }
  const double r = scorer_->reward(v0.id, e.id);
  std::lock_guard lock(mutex_);
  memo_.emplace(k, r);
  return r;
}

// ---- checkpoints ----

namespace {

nlohmann::json config_json(const MfiConfig& c) {
  return {{"product_dim", c.product_dim}, {"category_dim", c.category_dim}, {"layers", c.layers},
          {"hidden", c.hidden},           {"norm_eps", c.norm_eps},         {"seed", c.seed}};
}

MfiConfig config_from(const nlohmann::json& j) {
  MfiConfig c;
  c.product_dim = j.at("product_dim").get<std::size_t>();
  c.category_dim = j.at("category_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.norm_eps = j.at("norm_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_mfi(const std::filesystem::path& path, const MfiBundle& bundle, const nlohmann::json& extra) {
  nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
  manifest["format"] = kFormat;
  manifest["config"] = config_json(bundle.substitute.config());
  auto cats = nlohmann::json::array();
  for (const auto& c : bundle.features.categories) cats.push_back({{"name", c.name}, {"words", c.words}});
  manifest["categories"] = std::move(cats);
  std::vector<artifact::NamedMatrix> arrays;
  for (const MfiModel* m : {&bundle.substitute, &bundle.complement}) {
    const std::string tag(to_string(m->relation()));
    for (auto& t : m->parameters().to_named(tag + ".")) arrays.push_back(std::move(t));
    for (auto& t : m->statistics().to_named(tag + ".")) arrays.push_back(std::move(t));
  }
  arrays.push_back({"features.product", bundle.features.product});
  arrays.push_back({"features.category", bundle.features.category});
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(bundle.features.categories.size()), bundle.features.category.cols());
  for (std::size_t i = 0; i < bundle.features.categories.size(); ++i) {
    pooled.row(static_cast<Eigen::Index>(i)) = bundle.features.categories[i].pooled.transpose();
  }
  arrays.push_back({"features.category_pooled", pooled});
  artifact::write_tensors(path, std::move(manifest), arrays, artifact::Dtype::F64);
}

MfiBundle load_mfi(const std::filesystem::path& path) {
  const auto file = artifact::read_tensors(path, kFormat);
  const auto cfg = config_from(file.manifest.at("config"));
  MfiBundle out{MfiModel(cfg, TargetRelation::Substitute), MfiModel(cfg, TargetRelation::Complement), {}};
  for (MfiModel* m : {&out.substitute, &out.complement}) {
    const std::string tag(to_string(m->relation()));
    m->parameters().load_from(file, tag + ".");
    m->statistics().load_from(file, tag + ".");
  }
  out.features.product = file.at("features.product");
  out.features.category = file.at("features.category");
  const auto& pooled = file.at("features.category_pooled");
  const auto& cats = file.manifest.at("categories");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    out.features.categories.push_back({cats[i].at("name").get<std::string>(),
                                       cats[i].at("words").get<std::vector<std::string>>(),
                                       pooled.row(static_cast<Eigen::Index>(i)).transpose()});
  }
  return out;
}

}  // namespace kapr
