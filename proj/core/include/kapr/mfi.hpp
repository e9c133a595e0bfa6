#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "kapr/env.hpp"
#include "kapr/ingest.hpp"
#include "kapr/meta_path.hpp"
#include "kapr/nn.hpp"
#include "kapr/policy.hpp"

namespace kapr {

/// Token vectors read from "token f1 ... fd" lines. Tokens missing from the
/// file (or every token, when no file is given) get a deterministic random
/// vector derived from a hash of the token and the seed.
class WordVectors {
 public:
  WordVectors(std::size_t dim, std::uint64_t seed);
  static WordVectors load(const std::filesystem::path& path, std::uint64_t seed);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return table_.size(); }
  bool contains(std::string_view token) const;
  Eigen::VectorXd lookup(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::unordered_map<std::string, Eigen::VectorXd> table_;
};

struct CategoryFeature {
  std::string name;
  std::vector<std::string> words;  // top-F by TF-IDF, best first
  Eigen::VectorXd pooled;          // mean word vector; zero if no words
};

/// Title document of every category: the concatenated title tokens of all
/// products listing it.
std::map<std::string, std::vector<std::string>> category_documents(std::span<const ProductRecord> products);

/// Top-F words of one category document against the corpus of all category
/// documents, scored by count * (ln((1+N)/(1+df)) + 1). Throws EmptyCategory
/// when no product lists the category.
CategoryFeature category_feature(std::string_view category,
                                 const std::map<std::string, std::vector<std::string>>& documents,
                                 const WordVectors& words, std::size_t f);

/// Maps the tokens of a product's text to a fixed-size vector.
class DocumentEmbedder {
 public:
  virtual ~DocumentEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Eigen::VectorXd embed(std::string_view product_id, const std::vector<std::string>& tokens) const = 0;
};

/// TF-IDF-weighted mean of word vectors, multiplied by a fixed Gaussian
/// projection to `dim` outputs. Weights use count * (ln((1+N)/(1+df)) + 1)
/// with document frequencies taken from `corpus`.
class TfidfEmbedder final : public DocumentEmbedder {
 public:
  TfidfEmbedder(const std::vector<std::vector<std::string>>& corpus, const WordVectors& words,
                std::size_t dim, std::uint64_t seed);

  std::size_t dim() const override { return static_cast<std::size_t>(projection_.cols()); }
  Eigen::VectorXd embed(std::string_view product_id, const std::vector<std::string>& tokens) const override;
  const Eigen::MatrixXd& projection() const noexcept { return projection_; }
  double idf(const std::string& term) const;

 private:
  const WordVectors* words_;
  std::size_t documents_;
  std::map<std::string, std::size_t, std::less<>> df_;
  Eigen::MatrixXd projection_;  // words.dim() x dim
};

/// Externally computed vectors keyed by product id, e.g. from doc2vec.
/// Reads the same "id f1 ... fd" text format as WordVectors.
class PrecomputedEmbedder final : public DocumentEmbedder {
 public:
  explicit PrecomputedEmbedder(std::unordered_map<std::string, Eigen::VectorXd> vectors);
  static PrecomputedEmbedder load(const std::filesystem::path& path);

  std::size_t dim() const override { return dim_; }
  /// Throws MissingFeature for unknown ids.
  Eigen::VectorXd embed(std::string_view product_id, const std::vector<std::string>& tokens) const override;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
};

/// Tokens of the product's description, or of its title when the
/// description has none. Throws EmptyText when neither has any.
std::vector<std::string> product_tokens(const ProductRecord& product);

Eigen::VectorXd product_feature(const ProductRecord& product, const DocumentEmbedder& embedder);

/// Per-product inputs of the classifier, indexed by product id.
struct MfiFeatures {
  Eigen::MatrixXd product;   // products x d_p
  Eigen::MatrixXd category;  // products x d_c, mean pooled vector over the product's categories
  std::vector<CategoryFeature> categories;

  std::size_t size() const noexcept { return static_cast<std::size_t>(product.rows()); }
};

MfiFeatures build_features(std::span<const ProductRecord> products, const DocumentEmbedder& embedder,
                           const WordVectors& words, std::size_t f);

struct MfiConfig {
  std::size_t product_dim = 300;
  std::size_t category_dim = 100;
  std::size_t layers = 2;    // linear layers after the mask attention
  std::size_t hidden = 256;  // classifier width
  double norm_eps = 1e-5;
  std::uint64_t seed = 1;
};

/// One relationship classifier. Evidence: mask attention followed by
/// `layers` linear layers, each normalized with fixed per-feature statistics
/// and followed by ReLU except the last. Classifier: two ReLU layers and a
/// sigmoid over [ev_i; ev_j; cat_i; cat_j].
class MfiModel {
 public:
  MfiModel(const MfiConfig& cfg, TargetRelation relation);

  TargetRelation relation() const noexcept { return relation_; }
  const MfiConfig& config() const noexcept { return cfg_; }

  nn::ParameterList& parameters() { return params_; }
  const nn::ParameterList& parameters() const { return params_; }
  /// Normalization mean and variance of every linear layer; not trained by
  /// gradient, refreshed by calibrate().
  nn::ParameterList& statistics() { return stats_; }
  const nn::ParameterList& statistics() const { return stats_; }

  std::size_t attn_w() const noexcept { return 0; }
  std::size_t attn_b() const noexcept { return 1; }
  std::size_t layer_w(std::size_t k) const noexcept { return 2 + 4 * k; }
  std::size_t layer_b(std::size_t k) const noexcept { return 3 + 4 * k; }
  std::size_t layer_gamma(std::size_t k) const noexcept { return 4 + 4 * k; }
  std::size_t layer_beta(std::size_t k) const noexcept { return 5 + 4 * k; }
  std::size_t classifier(std::size_t i) const noexcept { return 2 + 4 * cfg_.layers + i; }  // W1 b1 W2 b2 w3 b3

  /// a = sigmoid(W v + b), v' = a * v.
  Eigen::VectorXd mask_attention(const Eigen::VectorXd& v) const;
  Eigen::VectorXd evidence(const Eigen::VectorXd& v) const;
  Eigen::VectorXd classifier_input(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj,
                                   const Eigen::VectorXd& ci, const Eigen::VectorXd& cj) const;
  double logit(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj, const Eigen::VectorXd& ci,
               const Eigen::VectorXd& cj) const;
  double probability(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj, const Eigen::VectorXd& ci,
                     const Eigen::VectorXd& cj) const;

  /// Adds weight * d/dtheta of the cross-entropy of one labeled pair to
  /// `grads` and returns that cross-entropy.
  double accumulate_gradient(const Eigen::VectorXd& vi, const Eigen::VectorXd& vj, const Eigen::VectorXd& ci,
                             const Eigen::VectorXd& cj, double label, double weight,
                             nn::ParameterList& grads) const;

  /// Sets each layer's normalization statistics to the population mean and
  /// variance of its pre-activations over `inputs` (rows), layer by layer.
  void calibrate(const Eigen::MatrixXd& inputs);

 private:
  MfiConfig cfg_;
  TargetRelation relation_;
  nn::ParameterList params_;
  nn::ParameterList stats_;
};

/// MFI probability for the ordered pair (i, j). Throws MissingFeature when
/// either product has no feature row.
double predict(const MfiModel& model, const MfiFeatures& features, std::uint32_t i, std::uint32_t j);

/// max(predict(i, j), predict(j, i)).
double symmetric_score(const MfiModel& model, const MfiFeatures& features, std::uint32_t i, std::uint32_t j);

struct LabeledPair {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double label = 0.0;
};

/// Summed binary cross-entropy -sum [y log p + (1-y) log(1-p)].
double bce_loss(const MfiModel& model, const MfiFeatures& features, std::span<const LabeledPair> pairs);

/// Gradient of bce_loss.
nn::ParameterList bce_gradient(const MfiModel& model, const MfiFeatures& features,
                               std::span<const LabeledPair> pairs);

struct MfiTrainingConfig {
  std::size_t epochs = 30;
  std::size_t negatives = 1;  // per positive and direction
  std::size_t batch_size = 32;
  double lr = 0.001;
  std::uint64_t seed = 1;
};

struct MfiTrainingResult {
  std::vector<double> loss_history;  // mean cross-entropy per example, per epoch
};

/// Fits the model with Adam on the positives in both orders, each joined by
/// `negatives` pairs (i, k) with k drawn uniformly among products not linked
/// to i. Negatives are redrawn every epoch.
MfiTrainingResult train_mfi(MfiModel& model, const MfiFeatures& features,
                            std::span<const std::pair<std::uint32_t, std::uint32_t>> positives,
                            const MfiTrainingConfig& cfg);

/// Training reward: max(MFI_s(v0, e), MFI_c(v0, e)).
double reward(const MfiModel& substitute, const MfiModel& complement, const MfiFeatures& features,
              EntityRef v0, EntityRef e);

/// Both heads plus the features they read.
struct MfiBundle {
  MfiModel substitute;
  MfiModel complement;
  MfiFeatures features;

  const MfiModel& head(TargetRelation t) const { return t == TargetRelation::Substitute ? substitute : complement; }
  double score(TargetRelation t, std::uint32_t i, std::uint32_t j) const {
    return symmetric_score(head(t), features, i, j);
  }
};

void save_mfi(const std::filesystem::path& path, const MfiBundle& bundle, const nlohmann::json& extra = {});
MfiBundle load_mfi(const std::filesystem::path& path);

/// Pair scores with every product's evidence and first classifier layer
/// precomputed, so each query costs one hidden layer. Matches predict() up
/// to floating-point reassociation.
class MfiScorer {
 public:
  explicit MfiScorer(const MfiBundle& bundle);

  double probability(TargetRelation t, std::uint32_t i, std::uint32_t j) const;
  /// max(probability(t, i, j), probability(t, j, i)).
  double score(TargetRelation t, std::uint32_t i, std::uint32_t j) const;
  /// max over both relations of score().
  double reward(std::uint32_t i, std::uint32_t j) const;
  std::size_t products() const noexcept { return products_; }

 private:
  struct Head {
    Eigen::MatrixXd left;   // hidden x products: W1 [ev_i; cat_i] parts + b1
    Eigen::MatrixXd right;  // hidden x products: W1 [ev_j; cat_j] parts
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
    Eigen::VectorXd w3;
    double b3 = 0.0;
  };
  static Head prepare(const MfiModel& m, const MfiFeatures& f);

  std::size_t products_;
  Head heads_[2];
};

/// Memoized MFI reward for agent training; safe to call from several threads.
class MfiRewarder : public TrainingRewarder {
 public:
  explicit MfiRewarder(const MfiScorer& scorer) : scorer_(&scorer) {}
  double operator()(EntityRef v0, EntityRef e) const override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  const MfiScorer* scorer_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, double> memo_;
  mutable std::atomic<std::size_t> calls_{0};
};

}  // namespace kapr
