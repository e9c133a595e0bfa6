#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kapr/embed.hpp"
#include "kapr/env.hpp"
#include "kapr/ingest.hpp"
#include "kapr/mfi.hpp"
#include "kapr/policy.hpp"
#include "kapr/reason.hpp"

namespace kapr {

struct DataSection {
  std::string metadata;  // empty: use the synthetic generator
  std::string reviews;
  SynthConfig synth;
};

struct GraphSection {
  std::size_t feature_words = 15;
  double train_fraction = 0.85;
  nlohmann::json patterns;  // null: PatternSet::defaults()
};

struct EmbedSection {
  std::size_t dim = 100;
  std::size_t epochs = 50;
  double lr = 0.01;
  double margin = 1.0;
  double bias_lr = 0.05;
};

struct MfiSection {
  std::string word_vectors;  // empty: hashed vectors
  std::string doc_vectors;   // empty: TF-IDF embedder
  std::size_t product_dim = 300;
  std::size_t category_dim = 100;
  std::size_t category_words = 15;
  std::size_t layers = 2;
  std::size_t hidden = 256;
  std::size_t epochs = 30;
  std::size_t negatives = 1;
  std::size_t batch_size = 32;
  double lr = 0.001;
};

struct AgentSection {
  // Set from experiment.variant, not read from JSON.
  std::string policy = "dynamic";  // dynamic | static | uniform
  std::string reward = "mfi";      // mfi | transe
  std::size_t history = 1;
  std::size_t horizon = 3;
  std::size_t action_limit = 250;
  std::size_t hidden = 512;
  std::size_t affinity = 256;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.001;
  std::string optimizer = "adam";  // adam | sgd
  double gamma = 0.99;
  double entropy_weight = 0.0;
};

struct InferSection {
  std::vector<std::size_t> beam{25, 5, 1};
  bool stochastic = false;
  std::size_t top_n = 10;
};

struct EvalSection {
  std::size_t negatives = 500;
  std::vector<std::size_t> ks{10, 30, 50};
  std::size_t top_k = 10;
};

struct ExperimentSection {
  std::string variant = "kapr";  // kapr | kapr-m | kapr-p | random
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string remove_relation;   // empty: keep all relations
  double degrade = 0.0;          // fraction of edges randomly rewired before reasoning
};

struct RunConfig {
  std::string output_dir = "kapr-run";
  std::size_t workers = 1;
  std::uint64_t seed = 1;
  DataSection data;
  GraphSection graph;
  EmbedSection embed;
  MfiSection mfi;
  AgentSection agent;
  InferSection infer;
  EvalSection eval;
  ExperimentSection experiment;
};

/// Fills a RunConfig from JSON; absent keys keep their defaults. Unknown
/// keys and wrongly typed values raise ConfigError naming the JSON path,
/// e.g. "$.agent.lr".
RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

/// Hash of the fully resolved configuration, leaving out output_dir and
/// workers since neither changes any result.
std::string config_hash(const RunConfig& cfg);

/// Applies "dotted.key=value" assignments; values parse as JSON, falling
/// back to a plain string.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& assignments);

/// Reads `path` (or an empty config when path is empty), applies overrides
/// and parses the result.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "KAPR_CONFIG";

/// Sets the policy, reward and beam mode a variant implies:
///   kapr    dynamic policy, MFI reward
///   kapr-m  dynamic policy, TransE reward
///   kapr-p  static policy, MFI reward
///   random  untrained uniform policy with a sampled beam
/// Throws UnknownVariant.
void apply_variant(RunConfig& cfg, std::string_view variant);

}  // namespace kapr
