#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "kapr/kg_store.hpp"

namespace kapr {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Entity and relation vectors plus a scalar bias per entity. The SelfLoop
/// relation is represented by the zero vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(const Populations& populations, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  Populations populations() const;

  auto entity(EntityRef e) const { return entities_[index_of(e.kind)].row(e.id); }
  auto entity(EntityRef e) { return entities_[index_of(e.kind)].row(e.id); }
  auto relation(Relation r) const { return relations_.row(static_cast<Eigen::Index>(index_of(r))); }
  auto relation(Relation r) { return relations_.row(static_cast<Eigen::Index>(index_of(r))); }
  double bias(EntityRef e) const { return biases_[index_of(e.kind)](e.id); }
  double& bias(EntityRef e) { return biases_[index_of(e.kind)](e.id); }

  bool contains(EntityRef e) const {
    return e.id < static_cast<std::uint32_t>(entities_[index_of(e.kind)].rows());
  }
  bool all_finite() const;
  /// Rounds every value to the nearest float so f32 checkpoints round-trip.
  void round_to_float();

  const RowMatrix& entities(EntityKind k) const { return entities_[index_of(k)]; }
  const Eigen::VectorXd& biases(EntityKind k) const { return biases_[index_of(k)]; }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b);

 private:
  std::size_t dim_ = 0;
  std::array<RowMatrix, kEntityKindCount> entities_;
  std::array<Eigen::VectorXd, kEntityKindCount> biases_;
  RowMatrix relations_;  // kRelationCount + 1 rows, last is SelfLoop (zero)
};

struct TransEConfig {
  std::size_t dim = 100;
  std::size_t epochs = 50;
  std::size_t negatives = 1;
  double lr = 0.01;
  double margin = 1.0;
  double bias_lr = 0.05;
  std::uint64_t seed = 1;
};

struct TransEResult {
  EmbeddingTable table;
  std::vector<double> loss_history;  // mean loss per positive, per epoch
};

/// Margin-ranking TransE with one corrupted tail per positive and SGD; entity
/// vectors are L2-normalized after each update. Biases are fitted alongside
/// with a logistic loss on the product-anchored dot-product score.
TransEResult train_transe(const KnowledgeGraph& g, const TransEConfig& cfg);

/// -||h + r - t||.
double triple_score(const EmbeddingTable& tab, EntityRef h, Relation r, EntityRef t);

/// Pruning score of reaching e from a walk that started at product v0.
/// For non-products: <v0 + r_d, e> + b_e with r_d the relation linking
/// products to e's kind. For products: the max of that expression over
/// also_viewed and also_bought. The action relation does not enter the
/// score. Throws UnknownEntity when a row is missing.
double action_score(const EmbeddingTable& tab, EntityRef v0, Relation r, EntityRef e);

/// Rewards for a batch of (v0, e) product pairs: action scores min-max
/// rescaled to [0, 1] over the batch. Pairs with e == v0 get 0 and do not
/// take part in the rescaling; a batch whose remaining scores are all equal
/// maps them to 1.
std::vector<double> transe_rewards(const EmbeddingTable& tab,
                                   std::span<const std::pair<EntityRef, EntityRef>> pairs);

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& tab,
                     const nlohmann::json& extra = {});
EmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace kapr
