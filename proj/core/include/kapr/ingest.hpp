#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kapr/kg_store.hpp"

namespace kapr {

struct ProductRecord {
  std::string external_id;
  std::string title;
  std::string description;
  std::optional<std::string> brand;
  std::vector<std::string> categories;
  std::vector<std::string> also_viewed;
  std::vector<std::string> also_bought;

  friend bool operator==(const ProductRecord&, const ProductRecord&) = default;
};

struct ReviewRecord {
  std::string user_id;
  std::string product_id;
  std::string text;

  friend bool operator==(const ReviewRecord&, const ReviewRecord&) = default;
};

struct Diagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

template <class Record>
struct ParseResult {
  std::vector<Record> records;
  std::vector<Diagnostic> diagnostics;
};

/// Amazon-style metadata, one JSON object per line:
/// {asin, title, description, brand, categories: [[...]], related: {also_viewed, also_bought}}.
/// Bad lines become diagnostics; MalformedRecord is thrown only when more
/// than half of the non-blank lines are bad.
ParseResult<ProductRecord> parse_metadata(std::istream& in);
ParseResult<ProductRecord> parse_metadata(const std::filesystem::path& path);

/// Reviews, one JSON object per line: {reviewerID, asin, reviewText}.
ParseResult<ReviewRecord> parse_reviews(std::istream& in);
ParseResult<ReviewRecord> parse_reviews(const std::filesystem::path& path);

nlohmann::json to_json(const ProductRecord& p);
nlohmann::json to_json(const ReviewRecord& r);
void write_metadata(const std::filesystem::path& path, const std::vector<ProductRecord>& products);
void write_reviews(const std::filesystem::path& path, const std::vector<ReviewRecord>& reviews);

/// product external id -> selected words
using FeatureWords = std::map<std::string, std::set<std::string>>;

/// Picks the top-F TF-IDF words of every review (corpus = all reviews) and
/// unions them per product. Throws EmptyCorpus for an empty review list.
FeatureWords select_feature_words(const std::vector<ReviewRecord>& reviews, std::size_t f = 15);

struct BuildReport {
  std::size_t dropped_references = 0;  // also_* ids not present in the dataset
  std::size_t dropped_reviews = 0;     // reviews of unknown products
};

struct BuiltGraph {
  KnowledgeGraph graph;
  NameTable names;
  BuildReport report;
};

/// Materializes all six relations. Products keep record order; users,
/// brands and categories are numbered by first appearance; words are
/// numbered in lexicographic order.
BuiltGraph build_graph(const std::vector<ProductRecord>& products,
                       const std::vector<ReviewRecord>& reviews, const FeatureWords& words);

struct SplitSpec {
  double train_fraction = 0.85;
  std::uint64_t seed = 0;
};

using EdgeList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

struct EdgeSplit {
  EdgeList train;
  EdgeList test;
};

/// Shuffles the relation's edges with the seed and cuts them at
/// round(fraction * n). Both halves are returned sorted. Throws
/// InvalidFraction unless 0 < fraction < 1, and SchemaViolation for
/// relations other than also_viewed/also_bought.
EdgeSplit split_pairs(const KnowledgeGraph& g, Relation r, const SplitSpec& spec);

/// Copy of g without the listed (head, tail) edges of relation r.
KnowledgeGraph without_edges(const KnowledgeGraph& g, Relation r, const EdgeList& edges);

struct SynthConfig {
  std::uint32_t products = 200;
  std::uint32_t clusters = 10;
  std::uint32_t substitute_pairs = 200;
  std::uint32_t complement_pairs = 200;
  std::uint32_t vocabulary = 600;
  std::uint32_t users = 300;
  std::uint32_t brands = 30;
  std::uint32_t reviews_per_product = 3;
  std::uint32_t words_per_review = 8;
  /// Probability that a background review or word is drawn from the whole
  /// population instead of the product's own cluster.
  double noise = 0.3;
  /// Probability that a substitute pair shares its brand.
  double shared_brand = 0.8;
  std::uint64_t seed = 7;
};

struct SynthDataset {
  std::vector<ProductRecord> products;
  std::vector<ReviewRecord> reviews;
  EdgeList substitutes;  // planted also_viewed pairs, a < b
  EdgeList complements;  // planted also_bought pairs, a < b
  std::vector<std::uint32_t> cluster_of;
};

/// Generates a clustered catalogue with planted substitute pairs (same
/// cluster, usually same brand) and complement pairs (partner clusters,
/// shared purchasers). Every planted pair gets a dedicated review on each
/// side carrying a shared pair word, and no review carries more than
/// words_per_review + 1 distinct words, so with F > words_per_review each
/// planted pair shares a described_by word.
SynthDataset synth_generate(const SynthConfig& cfg);

/// Closed-form expected edges per head entity implied by cfg.
GraphStats synth_expected_stats(const SynthConfig& cfg);

nlohmann::json to_json(const SynthConfig& cfg);

}  // namespace kapr
