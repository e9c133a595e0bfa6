#include "kapr/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include "kapr/artifact.hpp"
#include "kapr/embed.hpp"
#include "kapr/env.hpp"
#include "kapr/error.hpp"
#include "kapr/ingest.hpp"
#include "kapr/kg_store.hpp"
#include "kapr/mfi.hpp"
#include "kapr/reason.hpp"
#include "kapr/rng.hpp"

namespace kapr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Independent seed streams per stage.
enum SeedStream : std::uint64_t {
  kSplitSeed = 1,
  kEmbedSeed,
  kMfiSeed,
  kWordSeed,
  kPolicyInitSeed,
  kAgentSeed,
  kBeamSeed,
  kHitsSeed,
  kDegradeSeed,
};

constexpr const char* kInferenceFormat = "kapr.inference";
constexpr const char* kSplitFormat = "kapr.split";

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + ": not valid JSON");
  return j;
}

PatternSet patterns_of(const RunConfig& cfg) {
  return cfg.graph.patterns.is_null() ? PatternSet::defaults() : PatternSet::from_json(cfg.graph.patterns);
}

EdgeList edges_from(const json& j) {
  EdgeList out;
  for (const auto& e : j) out.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>());
  return out;
}

struct Split {
  std::map<TargetRelation, EdgeSplit> parts;
};

Split read_split(const fs::path& path) {
  const auto file = artifact::read(path, kSplitFormat);
  const json body = json::parse(file.payload);
  Split s;
  for (TargetRelation t : kTargets) {
    const auto& j = body.at(std::string(to_string(graph_relation(t))));
    s.parts[t] = {edges_from(j.at("train")), edges_from(j.at("test"))};
  }
  return s;
}

std::unique_ptr<PolicyNetwork> make_policy(const RunConfig& cfg, std::size_t dim) {
  const std::size_t k = cfg.agent.history;
  const std::uint64_t seed = derive_seed(cfg.seed, kPolicyInitSeed);
  if (cfg.agent.policy == "dynamic") {
    return std::make_unique<DynamicPolicy>(
        DynamicPolicyConfig{dim * (1 + 2 * (k + 1)), 2 * dim, cfg.agent.hidden, cfg.agent.affinity, seed});
  }
  if (cfg.agent.policy == "static") {
    return std::make_unique<StaticPolicy>(
        StaticPolicyConfig{dim * (1 + 2 * (k + 1)), cfg.agent.hidden, cfg.agent.action_limit + 1, seed});
  }
  return std::make_unique<UniformPolicy>();
}

EnvConfig env_config(const RunConfig& cfg) {
  return {cfg.agent.history, cfg.agent.horizon, cfg.agent.action_limit};
}

std::vector<std::uint32_t> query_sources(const Split& split) {
  std::set<std::uint32_t> s;
  for (const auto& [t, part] : split.parts) {
    for (const auto& [a, b] : part.test) {
      s.insert(a);
      s.insert(b);
    }
  }
  return {s.begin(), s.end()};
}

template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex m;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

fs::path ArtifactPaths::manifest(const std::string& stage) const {
  const bool shared = stage == "synth" || stage == "build-graph" || stage == "train-embed" || stage == "train-mfi";
  return (shared ? data : run) / "manifests" / (stage + ".json");
}

Pipeline::Pipeline(RunConfig cfg, std::ostream& log)
    : Pipeline(cfg, ArtifactPaths{cfg.output_dir, cfg.output_dir}, log) {}

Pipeline::Pipeline(RunConfig cfg, ArtifactPaths paths, std::ostream& log)
    : cfg_(std::move(cfg)), paths_(std::move(paths)), log_(&log), hash_(kapr::config_hash(cfg_)) {}

json Pipeline::artifact_header() const { return {{"config_hash", hash_}}; }

void Pipeline::require(const fs::path& p, const std::string& stage) const {
  if (!fs::exists(p)) throw MissingArtifact(stage, p.string());
}

void Pipeline::write_manifest(const std::string& stage, const std::vector<fs::path>& inputs,
                              const std::vector<fs::path>& outputs, json extra) const {
  json m = extra.is_object() ? std::move(extra) : json::object();
  m["stage"] = stage;
  m["version"] = artifact::kFormatVersion;
  m["config_hash"] = hash_;
  m["config"] = to_json(cfg_);
  for (const auto& p : inputs) m["inputs"][p.filename().string()] = artifact::hash_file(p);
  for (const auto& p : outputs) m["outputs"][p.filename().string()] = artifact::hash_file(p);
  write_text(paths_.manifest(stage), m.dump(2) + "\n");
}

void Pipeline::synth() {
  *log_ << "[synth] generating " << cfg_.data.synth.products << " products\n";
  const auto ds = synth_generate(cfg_.data.synth);
  write_metadata(paths_.metadata(), ds.products);
  write_reviews(paths_.reviews(), ds.reviews);
  auto planted = json::object();
  planted["substitutes"] = ds.substitutes;
  planted["complements"] = ds.complements;
  write_manifest("synth", {}, {paths_.metadata(), paths_.reviews()},
                 {{"synth", to_json(cfg_.data.synth)}, {"planted", planted}});
}

void Pipeline::build_graph() {
  const bool external = !cfg_.data.metadata.empty();
  const fs::path meta = external ? fs::path(cfg_.data.metadata) : paths_.metadata();
  const fs::path revs = external ? fs::path(cfg_.data.reviews) : paths_.reviews();
  if (external) {
    if (!fs::exists(meta)) throw IoError("cannot open " + meta.string());
    if (!fs::exists(revs)) throw IoError("cannot open " + revs.string());
  } else {
    require(meta, "synth");
    require(revs, "synth");
  }
  auto products = parse_metadata(meta);
  auto reviews = parse_reviews(revs);
  for (const auto& d : products.diagnostics) *log_ << "[build-graph] " << meta.filename().string() << ":" << d.line << ": " << d.message << "\n";
  for (const auto& d : reviews.diagnostics) *log_ << "[build-graph] " << revs.filename().string() << ":" << d.line << ": " << d.message << "\n";
  const auto words = select_feature_words(reviews.records, cfg_.graph.feature_words);
  auto built = kapr::build_graph(products.records, reviews.records, words);
  *log_ << "[build-graph] " << built.graph.edge_count() << " edges\n";

  KnowledgeGraph train = built.graph;
  json split_body = json::object();
  const SplitSpec spec{cfg_.graph.train_fraction, derive_seed(cfg_.seed, kSplitSeed)};
  for (TargetRelation t : kTargets) {
    const Relation r = graph_relation(t);
    const auto parts = split_pairs(built.graph, r, spec);
    train = without_edges(train, r, parts.test);
    split_body[std::string(to_string(r))] = {{"train", parts.train}, {"test", parts.test}};
  }
  KnowledgeGraph reasoning = train;
  if (!cfg_.experiment.remove_relation.empty()) {
    reasoning = remove_relation(reasoning, *parse_relation(cfg_.experiment.remove_relation));
  }
  if (cfg_.experiment.degrade > 0.0) {
    reasoning = degrade_graph(reasoning, cfg_.experiment.degrade, derive_seed(cfg_.seed, kDegradeSeed));
  }

  const json header = artifact_header();
  save_graph(paths_.full_graph(), built.graph, &built.names, header);
  save_graph(paths_.train_graph(), train, &built.names, header);
  save_graph(paths_.reasoning_graph(), reasoning, &built.names, header);
  json split_manifest = header;
  split_manifest["format"] = kSplitFormat;
  artifact::write(paths_.split(), split_manifest, split_body.dump());

  json stats = json::object();
  const auto gs = graph_stats(built.graph);
  for (Relation r : kGraphRelations) stats[std::string(to_string(r))] = gs.per_head[index_of(r)];
  write_manifest("build-graph", {meta, revs},
                 {paths_.full_graph(), paths_.train_graph(), paths_.reasoning_graph(), paths_.split()},
                 {{"per_head", stats},
                  {"dropped_references", built.report.dropped_references},
                  {"dropped_reviews", built.report.dropped_reviews},
                  {"diagnostics", products.diagnostics.size() + reviews.diagnostics.size()}});
}

void Pipeline::train_embed() {
  require(paths_.reasoning_graph(), "build-graph");
  const auto g = load_graph(paths_.reasoning_graph());
  TransEConfig tc;
  tc.dim = cfg_.embed.dim;
  tc.epochs = cfg_.embed.epochs;
  tc.lr = cfg_.embed.lr;
  tc.margin = cfg_.embed.margin;
  tc.bias_lr = cfg_.embed.bias_lr;
  tc.seed = derive_seed(cfg_.seed, kEmbedSeed);
  *log_ << "[train-embed] dim " << tc.dim << ", " << tc.epochs << " epochs\n";
  const auto res = train_transe(g.graph, tc);
  save_embeddings(paths_.embeddings(), res.table, artifact_header());
  write_manifest("train-embed", {paths_.reasoning_graph()}, {paths_.embeddings()},
                 {{"loss_history", res.loss_history}});
}

void Pipeline::train_mfi() {
  require(paths_.split(), "build-graph");
  const bool external = !cfg_.data.metadata.empty();
  const fs::path meta = external ? fs::path(cfg_.data.metadata) : paths_.metadata();
  if (!external) require(meta, "synth");
  const auto products = parse_metadata(meta).records;
  const auto split = read_split(paths_.split());

  const std::uint64_t word_seed = derive_seed(cfg_.seed, kWordSeed);
  const WordVectors words = cfg_.mfi.word_vectors.empty() ? WordVectors(cfg_.mfi.category_dim, word_seed)
                                                          : WordVectors::load(cfg_.mfi.word_vectors, word_seed);
  if (words.dim() != cfg_.mfi.category_dim) {
    throw ConfigError("$.mfi.category_dim: word vectors have dimension " + std::to_string(words.dim()));
  }
  std::unique_ptr<DocumentEmbedder> embedder;
  if (cfg_.mfi.doc_vectors.empty()) {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& p : products) corpus.push_back(product_tokens(p));
    embedder = std::make_unique<TfidfEmbedder>(corpus, words, cfg_.mfi.product_dim, word_seed);
  } else {
    embedder = std::make_unique<PrecomputedEmbedder>(PrecomputedEmbedder::load(cfg_.mfi.doc_vectors));
  }
  if (embedder->dim() != cfg_.mfi.product_dim) {
    throw ConfigError("$.mfi.product_dim: document vectors have dimension " + std::to_string(embedder->dim()));
  }
  MfiBundle bundle{MfiModel({}, TargetRelation::Substitute), MfiModel({}, TargetRelation::Complement),
                   build_features(products, *embedder, words, cfg_.mfi.category_words)};
  const MfiConfig mc{cfg_.mfi.product_dim, cfg_.mfi.category_dim, cfg_.mfi.layers, cfg_.mfi.hidden, 1e-5,
                     derive_seed(cfg_.seed, kMfiSeed)};
  bundle.substitute = MfiModel(mc, TargetRelation::Substitute);
  bundle.complement = MfiModel(mc, TargetRelation::Complement);
  MfiTrainingConfig tc;
  tc.epochs = cfg_.mfi.epochs;
  tc.negatives = cfg_.mfi.negatives;
  tc.batch_size = cfg_.mfi.batch_size;
  tc.lr = cfg_.mfi.lr;
  json losses = json::object();
  for (TargetRelation t : kTargets) {
    tc.seed = derive_seed(derive_seed(cfg_.seed, kMfiSeed), static_cast<std::uint64_t>(t) + 1);
    auto& model = t == TargetRelation::Substitute ? bundle.substitute : bundle.complement;
    const auto& positives = split.parts.at(t).train;
    *log_ << "[train-mfi] " << to_string(t) << ": " << positives.size() << " positive pairs\n";
    if (positives.empty()) throw EmptyCorpus("no training pairs for " + std::string(to_string(t)));
    losses[std::string(to_string(t))] = kapr::train_mfi(model, bundle.features, positives, tc).loss_history;
  }
  save_mfi(paths_.mfi(), bundle, artifact_header());
  write_manifest("train-mfi", {meta, paths_.split()}, {paths_.mfi()}, {{"loss_history", losses}});
}

AgentTrainingResult Pipeline::train_agent() {
  require(paths_.reasoning_graph(), "build-graph");
  require(paths_.embeddings(), "train-embed");
  if (cfg_.agent.reward == "mfi") require(paths_.mfi(), "train-mfi");
  const auto g = load_graph(paths_.reasoning_graph());
  const auto tab = load_embeddings(paths_.embeddings());
  const auto patterns = patterns_of(cfg_);
  const Environment env(g.graph, tab, patterns, env_config(cfg_));
  auto policy = make_policy(cfg_, tab.dim());

  std::unique_ptr<MfiBundle> bundle;
  std::unique_ptr<MfiScorer> scorer;
  std::unique_ptr<TrainingRewarder> rewarder;
  const MfiRewarder* mfi_rewarder = nullptr;
  const TransERewarder* transe_rewarder = nullptr;
  if (cfg_.agent.reward == "mfi") {
    bundle = std::make_unique<MfiBundle>(load_mfi(paths_.mfi()));
    scorer = std::make_unique<MfiScorer>(*bundle);
    auto r = std::make_unique<MfiRewarder>(*scorer);
    mfi_rewarder = r.get();
    rewarder = std::move(r);
  } else {
    auto r = std::make_unique<TransERewarder>(tab, patterns);
    transe_rewarder = r.get();
    rewarder = std::move(r);
  }

  std::vector<EntityRef> starts;
  for (std::uint32_t i = 0; i < g.graph.population(EntityKind::Product); ++i) starts.push_back(product(i));

  AgentTrainingResult res;
  if (policy->kind() != "uniform") {
    AgentTrainingConfig ac;
    ac.epochs = cfg_.agent.epochs;
    ac.batch_size = cfg_.agent.batch_size;
    ac.lr = cfg_.agent.lr;
    ac.optimizer = *parse_optimizer(cfg_.agent.optimizer);
    ac.gamma = cfg_.agent.gamma;
    ac.entropy_weight = cfg_.agent.entropy_weight;
    ac.seed = derive_seed(cfg_.seed, kAgentSeed);
    ac.workers = cfg_.workers;
    *log_ << "[train-agent] " << policy->kind() << " policy, " << cfg_.agent.reward << " reward, "
          << starts.size() << " start products\n";
    res = kapr::train_agent(*policy, env, starts, *rewarder, ac);
    for (std::size_t e = 0; e < res.mean_return.size(); ++e) {
      *log_ << "[train-agent] epoch " << e << " mean return " << res.mean_return[e] << "\n";
    }
  } else {
    *log_ << "[train-agent] uniform policy has no parameters; nothing to train\n";
  }
  const std::size_t calls = mfi_rewarder ? mfi_rewarder->calls() : transe_rewarder->calls();
  save_policy(paths_.policy(), *policy, artifact_header());
  json log = {{"policy", policy->kind()},
              {"reward", cfg_.agent.reward},
              {"reward_calls", calls},
              {"episodes", res.episodes},
              {"mean_return", res.mean_return},
              {"loss", res.loss}};
  write_text(paths_.training_log(), log.dump(2) + "\n");
  std::vector<fs::path> inputs{paths_.reasoning_graph(), paths_.embeddings()};
  if (bundle) inputs.push_back(paths_.mfi());
  write_manifest("train-agent", inputs, {paths_.policy(), paths_.training_log()},
                 {{"reward", cfg_.agent.reward}, {"reward_calls", calls}});
  return res;
}

void Pipeline::infer() {
  require(paths_.policy(), "train-agent");
  require(paths_.mfi(), "train-mfi");
  require(paths_.embeddings(), "train-embed");
  require(paths_.reasoning_graph(), "build-graph");
  const auto reasoning = load_graph(paths_.reasoning_graph());
  const auto train = load_graph(paths_.train_graph());
  const auto tab = load_embeddings(paths_.embeddings());
  const auto policy = load_policy(paths_.policy());
  const auto bundle = load_mfi(paths_.mfi());
  const MfiScorer scorer(bundle);
  const auto patterns = patterns_of(cfg_);
  const Environment env(reasoning.graph, tab, patterns, env_config(cfg_));
  const auto split = read_split(paths_.split());
  const auto sources = query_sources(split);
  const BeamConfig beam{cfg_.infer.beam, cfg_.infer.stochastic, derive_seed(cfg_.seed, kBeamSeed)};
  const PairScorer pair_scorer = [&scorer](TargetRelation t, std::uint32_t i, std::uint32_t j) {
    return scorer.score(t, i, j);
  };
  *log_ << "[infer] " << sources.size() << " source products, beam";
  for (auto k : beam.sizes) *log_ << " " << k;
  *log_ << "\n";

  std::vector<std::string> lines(sources.size());
  parallel_for(sources.size(), cfg_.workers, [&](std::size_t i) {
    const EntityRef v0 = product(sources[i]);
    const auto paths = beam_search(v0, *policy, env, beam);
    std::string out;
    for (TargetRelation t : kTargets) {
      InferenceRecord rec;
      rec.recommendation = rank(collect_candidates(paths, t, pair_scorer), v0, t, train.graph, cfg_.infer.top_n);
      rec.paths = paths;
      out += to_json(rec, reasoning.names).dump() + "\n";
    }
    lines[i] = std::move(out);
  });
  json header = artifact_header();
  header["format"] = kInferenceFormat;
  header["version"] = artifact::kFormatVersion;
  std::string text = header.dump() + "\n";
  for (const auto& l : lines) text += l;
  write_text(paths_.inference(), text);
  write_manifest("infer", {paths_.policy(), paths_.mfi(), paths_.embeddings(), paths_.reasoning_graph()},
                 {paths_.inference()});
}

MetricReport Pipeline::evaluate() {
  require(paths_.inference(), "infer");
  require(paths_.mfi(), "train-mfi");
  const auto full = load_graph(paths_.full_graph());
  const auto split = read_split(paths_.split());
  const auto bundle = load_mfi(paths_.mfi());
  const MfiScorer scorer(bundle);

  std::ifstream in(paths_.inference());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(paths_.inference().string() + ": empty");
  const json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != kInferenceFormat ||
      header.value("version", 0) != artifact::kFormatVersion) {
    throw FormatError(paths_.inference().string() + ": not an inference file of this version");
  }
  std::vector<InferenceRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(inference_from_json(json::parse(line), full.names));
  }

  const KnowledgeGraph* graphs[] = {&full.graph};
  const RelatedIndex related(graphs);
  const auto products = full.graph.population(EntityKind::Product);
  MetricReport report;
  report.variant = cfg_.experiment.variant;
  std::vector<InferenceRecord> one_per_source;
  for (TargetRelation t : kTargets) {
    std::map<std::uint32_t, std::set<std::uint32_t>> retrieved;
    std::map<std::uint32_t, const InferenceRecord*> by_source;
    for (const auto& r : records) {
      if (r.recommendation.relation != t) continue;
      by_source[r.recommendation.source.id] = &r;
      auto& set = retrieved[r.recommendation.source.id];
      for (const auto& p : r.paths) set.insert(p.entities[p.stripped_length()].id);
      if (t == TargetRelation::Substitute) one_per_source.push_back(r);
    }
    // Products the beam reached rank ahead of the rest; MFI orders within
    // each group.
    const CandidateScorer cs = [&](std::uint32_t a, std::uint32_t c) {
      const auto it = retrieved.find(a);
      const bool hit = it != retrieved.end() && it->second.contains(c);
      return (hit ? 2.0 : 0.0) + scorer.score(t, a, c);
    };
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::map<std::uint32_t, std::set<std::uint32_t>> truth;
    for (const auto& [a, b] : split.parts.at(t).test) {
      pairs.emplace_back(a, b);
      pairs.emplace_back(b, a);
      truth[a].insert(b);
      truth[b].insert(a);
    }
    RelationMetrics rm;
    rm.test_pairs = pairs.size();
    const HitsConfig hc{cfg_.eval.negatives, cfg_.eval.ks, derive_seed(cfg_.seed, kHitsSeed)};
    const auto hits = hits_at_k(cs, pairs, related, products, hc);
    for (std::size_t i = 0; i < hc.ks.size(); ++i) rm.hits.emplace_back(hc.ks[i], hits[i]);

    std::vector<std::vector<std::uint32_t>> recs;
    std::vector<std::set<std::uint32_t>> truths;
    for (const auto& [src, items] : truth) {
      std::vector<std::uint32_t> list;
      if (auto it = by_source.find(src); it != by_source.end()) {
        for (const auto& item : it->second->recommendation.items) list.push_back(item.product);
      }
      recs.push_back(std::move(list));
      truths.push_back(items);
    }
    rm.topk = topk_metrics(recs, truths, cfg_.eval.top_k);
    report.relations.emplace(t, std::move(rm));
  }
  report.paths = path_stats(one_per_source);
  report.metadata = {{"seed", cfg_.seed}, {"config_hash", hash_}, {"variant", cfg_.experiment.variant}};
  if (fs::exists(paths_.training_log())) {
    const auto log = read_json(paths_.training_log());
    report.metadata["reward"] = log.at("reward");
    report.metadata["reward_calls"] = log.at("reward_calls");
    report.metadata["policy"] = log.at("policy");
  }
  const MetricReport reports[] = {report};
  write_text(paths_.report_json(), report.to_json().dump(2) + "\n");
  write_text(paths_.report_text(), render_table(reports, cfg_.eval.top_k));
  write_manifest("evaluate", {paths_.inference(), paths_.mfi(), paths_.split()},
                 {paths_.report_json(), paths_.report_text()});
  *log_ << render_table(reports, cfg_.eval.top_k);
  return report;
}

void Pipeline::prepare_shared() {
  if (cfg_.data.metadata.empty() && !fs::exists(paths_.metadata())) synth();
  if (!fs::exists(paths_.split())) build_graph();
  if (!fs::exists(paths_.embeddings())) train_embed();
  if (!fs::exists(paths_.mfi())) train_mfi();
}

MetricReport Pipeline::run_all() {
  if (cfg_.data.metadata.empty()) synth();
  build_graph();
  train_embed();
  train_mfi();
  train_agent();
  infer();
  return evaluate();
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ConfigError("no reports to average");
  MetricReport out = reports.front();
  const double n = static_cast<double>(reports.size());
  for (auto& [t, m] : out.relations) {
    for (auto& [k, v] : m.hits) v = 0.0;
    m.topk = {0.0, 0.0, 0.0, 0.0, m.topk.queries};
  }
  out.paths = {};
  auto seeds = json::array();
  for (const auto& r : reports) {
    for (auto& [t, m] : out.relations) {
      const auto& src = r.relations.at(t);
      for (std::size_t i = 0; i < m.hits.size(); ++i) m.hits[i].second += src.hits.at(i).second / n;
      m.topk.ndcg += src.topk.ndcg / n;
      m.topk.recall += src.topk.recall / n;
      m.topk.hr += src.topk.hr / n;
      m.topk.precision += src.topk.precision / n;
    }
    out.paths.paths_per_product += r.paths.paths_per_product / n;
    out.paths.products_per_product += r.paths.products_per_product / n;
    out.paths.paths_per_pair += r.paths.paths_per_pair / n;
    seeds.push_back(r.metadata.value("seed", json()));
  }
  out.metadata = {{"variant", out.variant}, {"seeds", seeds}};
  if (reports.front().metadata.contains("reward")) out.metadata["reward"] = reports.front().metadata["reward"];
  std::size_t calls = 0;
  for (const auto& r : reports) calls += r.metadata.value("reward_calls", std::size_t{0});
  out.metadata["reward_calls"] = calls;
  return out;
}

ExperimentResult run_experiment(const RunConfig& base, std::ostream& log) {
  RunConfig shared = base;
  shared.output_dir = "";
  shared.workers = 1;
  shared.seed = 0;
  shared.agent = {};
  shared.infer = {};
  shared.eval = {};
  shared.experiment.variant = "kapr";
  shared.experiment.seeds = {};
  const std::string tag = config_hash(shared).substr(0, 12);
  const fs::path root = fs::path(base.output_dir) / "experiments";

  ExperimentResult res;
  for (std::uint64_t seed : base.experiment.seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    ArtifactPaths paths;
    paths.data = root / tag / ("seed-" + std::to_string(seed));
    paths.run = paths.data / cfg.experiment.variant;
    log << "[experiment] " << cfg.experiment.variant << " seed " << seed << "\n";
    Pipeline p(cfg, paths, log);
    p.prepare_shared();
    p.train_agent();
    p.infer();
    res.per_seed.push_back(p.evaluate());
  }
  res.mean = average_reports(res.per_seed);
  res.mean.metadata["config_hash"] = config_hash(base);
  json j = res.mean.to_json();
  j["per_seed"] = json::array();
  for (const auto& r : res.per_seed) j["per_seed"].push_back(r.to_json());
  write_text(root / (base.experiment.variant + ".json"), j.dump(2) + "\n");
  const MetricReport reports[] = {res.mean};
  write_text(root / (base.experiment.variant + ".txt"), render_table(reports, base.eval.top_k));
  return res;
}

}  // namespace kapr
