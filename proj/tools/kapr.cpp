// kapr: runs the recommendation pipeline stage by stage from one JSON config.
//
//   kapr synth        --config run.json
//   kapr build-graph  --config run.json
//   kapr train-embed | train-mfi | train-agent | infer | evaluate
//   kapr experiment   --config run.json --variant kapr-m
//   kapr report       results/experiments/kapr.json results/experiments/kapr-m.json
//
// Exit codes: 0 success, 1 configuration error, 2 missing upstream artifact,
// 3 data error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kapr/config.hpp"
#include "kapr/error.hpp"
#include "kapr/eval.hpp"
#include "kapr/pipeline.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 1, kMissing = 2, kData = 3 };

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string variant;
  std::string output_dir;
  int workers = 0;
  long long seed = -1;
  std::vector<std::string> reports;
};

kapr::RunConfig resolve(const Options& o) {
  std::string path = o.config;
  if (path.empty()) {
    if (const char* env = std::getenv(kapr::kConfigEnv)) path = env;
  }
  std::vector<std::string> overrides = o.overrides;
  if (!o.output_dir.empty()) overrides.push_back("output_dir=\"" + o.output_dir + "\"");
  if (o.workers > 0) overrides.push_back("workers=" + std::to_string(o.workers));
  if (o.seed >= 0) overrides.push_back("seed=" + std::to_string(o.seed));
  auto cfg = kapr::load_config(path, overrides);
  if (!o.variant.empty()) {
    cfg.experiment.variant = o.variant;
    kapr::apply_variant(cfg, o.variant);
  }
  return cfg;
}

int report(const Options& o) {
  std::vector<kapr::MetricReport> reports;
  for (const auto& path : o.reports) {
    std::ifstream in(path);
    if (!in) throw kapr::IoError("cannot open " + path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw kapr::FormatError(path + ": not valid JSON");
    reports.push_back(kapr::MetricReport::from_json(j));
  }
  if (reports.empty()) throw kapr::ConfigError("report: no report files given");
  const std::size_t top_k = o.config.empty() && !std::getenv(kapr::kConfigEnv) ? 10 : resolve(o).eval.top_k;
  std::cout << kapr::render_table(reports, top_k);
  return kOk;
}

int run(const std::string& command, const Options& o) {
  if (command == "report") return report(o);
  const auto cfg = resolve(o);
  if (command == "experiment") {
    const auto res = kapr::run_experiment(cfg, std::cerr);
    const kapr::MetricReport reports[] = {res.mean};
    std::cout << kapr::render_table(reports, cfg.eval.top_k);
    return kOk;
  }
  kapr::Pipeline p(cfg, std::cerr);
  if (command == "synth") p.synth();
  else if (command == "build-graph") p.build_graph();
  else if (command == "train-embed") p.train_embed();
  else if (command == "train-mfi") p.train_mfi();
  else if (command == "train-agent") p.train_agent();
  else if (command == "infer") p.infer();
  else if (command == "evaluate") p.evaluate();
  else if (command == "run") p.run_all();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-aware path reasoning for substitute and complement recommendation"};
  app.require_subcommand(1);
  Options o;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Generate a synthetic dataset with planted relations"},
      {"build-graph", "Parse the dataset, build the knowledge graph and split train/test pairs"},
      {"train-embed", "Train TransE embeddings on the reasoning graph"},
      {"train-mfi", "Train the substitute and complement classifiers"},
      {"train-agent", "Train the path-reasoning policy with REINFORCE"},
      {"infer", "Beam-search paths and rank recommendations for test products"},
      {"evaluate", "Compute Hits@k, top-k metrics and path statistics"},
      {"run", "Run every stage in order"},
      {"experiment", "Run a variant over all configured seeds and average the reports"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", o.config, std::string("JSON config file (default: $") + kapr::kConfigEnv + ")");
    sub->add_option("-s,--set", o.overrides, "Override a config key, e.g. --set agent.lr=0.01");
    sub->add_option("--variant", o.variant, "kapr | kapr-m | kapr-p | random");
    sub->add_option("-o,--output-dir", o.output_dir, "Output directory");
    sub->add_option("-j,--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Base seed")->check(CLI::NonNegativeNumber);
  }
  auto* rep = app.add_subcommand("report", "Render metric tables from report JSON files");
  rep->add_option("reports", o.reports, "Report files")->required();
  rep->add_option("-c,--config", o.config, "Config file (for eval.top_k)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const kapr::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n  run `kapr " << e.stage() << "` first\n";
    return kMissing;
  } catch (const kapr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const kapr::UnknownVariant& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const kapr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed data: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
