#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kapr/config.hpp"
#include "kapr/eval.hpp"
#include "kapr/policy.hpp"

namespace kapr {

/// Where each stage reads and writes. Shared stages (synth through
/// train-mfi) live under `data`; agent, inference and evaluation outputs
/// under `run`. Both default to the configured output directory.
struct ArtifactPaths {
  std::filesystem::path data;
  std::filesystem::path run;

  std::filesystem::path metadata() const { return data / "data" / "metadata.jsonl"; }
  std::filesystem::path reviews() const { return data / "data" / "reviews.jsonl"; }
  std::filesystem::path full_graph() const { return data / "graph" / "full.graph"; }
  std::filesystem::path train_graph() const { return data / "graph" / "train.graph"; }
  /// Training graph after relation removal / degradation; what the agent walks.
  std::filesystem::path reasoning_graph() const { return data / "graph" / "reasoning.graph"; }
  std::filesystem::path split() const { return data / "graph" / "split.json"; }
  std::filesystem::path embeddings() const { return data / "embed" / "transe.bin"; }
  std::filesystem::path mfi() const { return data / "mfi" / "mfi.bin"; }
  std::filesystem::path policy() const { return run / "agent" / "policy.bin"; }
  std::filesystem::path training_log() const { return run / "agent" / "training.json"; }
  std::filesystem::path inference() const { return run / "infer" / "inference.jsonl"; }
  std::filesystem::path report_json() const { return run / "eval" / "report.json"; }
  std::filesystem::path report_text() const { return run / "eval" / "report.txt"; }
  std::filesystem::path manifest(const std::string& stage) const;
};

/// Runs the pipeline stages against one configuration. Each stage checks
/// that its inputs exist (MissingArtifact names the stage that makes them),
/// writes its outputs and a manifest with the config hash and the hashes of
/// every input and output file. Progress goes to `log`.
class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::ostream& log);
  Pipeline(RunConfig cfg, ArtifactPaths paths, std::ostream& log);

  const RunConfig& config() const noexcept { return cfg_; }
  const ArtifactPaths& paths() const noexcept { return paths_; }
  const std::string& config_hash() const noexcept { return hash_; }

  void synth();
  void build_graph();
  void train_embed();
  void train_mfi();
  AgentTrainingResult train_agent();
  void infer();
  MetricReport evaluate();

  /// Every stage in order; synth only when no input files are configured.
  MetricReport run_all();
  /// Stages from build-graph through train-mfi, skipped when their
  /// artifacts already exist.
  void prepare_shared();

 private:
  void write_manifest(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
                      const std::vector<std::filesystem::path>& outputs, nlohmann::json extra = {}) const;
  void require(const std::filesystem::path& p, const std::string& stage) const;
  nlohmann::json artifact_header() const;

  RunConfig cfg_;
  ArtifactPaths paths_;
  std::ostream* log_;
  std::string hash_;
};

struct ExperimentResult {
  MetricReport mean;                 // seed average
  std::vector<MetricReport> per_seed;
};

/// Runs one variant over cfg.experiment.seeds. Shared artifacts are cached
/// under output_dir/experiments/<hash of the shared settings>/seed-<s>, and
/// variant outputs under .../seed-<s>/<variant>. Writes the seed-averaged
/// report to output_dir/experiments/<variant>.json.
ExperimentResult run_experiment(const RunConfig& cfg, std::ostream& log);

/// Field-wise mean of reports with identical structure.
MetricReport average_reports(const std::vector<MetricReport>& reports);

}  // namespace kapr
