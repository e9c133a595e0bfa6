#include "kapr/config.hpp"

#include <fstream>
#include <set>

#include "kapr/artifact.hpp"
#include "kapr/error.hpp"

namespace kapr {

namespace {

using nlohmann::json;

template <class T>
  requires std::is_unsigned_v<T>
void read_value(const json& j, T& out, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(path + ": expected a non-negative integer");
  }
  const auto v = j.get<std::uint64_t>();
  if (v > std::numeric_limits<T>::max()) throw ConfigError(path + ": value out of range");
  out = static_cast<T>(v);
}

void read_value(const json& j, double& out, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  out = j.get<double>();
}

void read_value(const json& j, bool& out, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
  out = j.get<bool>();
}

void read_value(const json& j, std::string& out, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  out = j.get<std::string>();
}

void read_value(const json& j, json& out, const std::string&) { out = j; }

template <class T>
void read_value(const json& j, std::vector<T>& out, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    T v{};
    read_value(j[i], v, path + "[" + std::to_string(i) + "]");
    out.push_back(std::move(v));
  }
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void field(const char* key, T& v) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read_value(*it, v, path_ + "." + key);
  }

  template <class F>
  void section(const char* key, F&& f) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      Reader sub(*it, path_ + "." + key);
      f(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(path_ + "." + key + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <class T>
  void field(const char* key, T& v) {
    j_[key] = v;
  }

  template <class F>
  void section(const char* key, F&& f) {
    Writer sub(j_[key]);
    f(sub);
  }

 private:
  json& j_;
};

template <class B>
void visit(B& b, RunConfig& c) {
  b.field("output_dir", c.output_dir);
  b.field("workers", c.workers);
  b.field("seed", c.seed);
  b.section("data", [&](auto& s) {
    s.field("metadata", c.data.metadata);
    s.field("reviews", c.data.reviews);
    s.section("synth", [&](auto& t) {
      auto& y = c.data.synth;
      t.field("products", y.products);
      t.field("clusters", y.clusters);
      t.field("substitute_pairs", y.substitute_pairs);
      t.field("complement_pairs", y.complement_pairs);
      t.field("vocabulary", y.vocabulary);
      t.field("users", y.users);
      t.field("brands", y.brands);
      t.field("reviews_per_product", y.reviews_per_product);
      t.field("words_per_review", y.words_per_review);
      t.field("noise", y.noise);
      t.field("shared_brand", y.shared_brand);
      t.field("seed", y.seed);
    });
  });
  b.section("graph", [&](auto& s) {
    s.field("feature_words", c.graph.feature_words);
    s.field("train_fraction", c.graph.train_fraction);
    s.field("patterns", c.graph.patterns);
  });
  b.section("embed", [&](auto& s) {
    s.field("dim", c.embed.dim);
    s.field("epochs", c.embed.epochs);
    s.field("lr", c.embed.lr);
    s.field("margin", c.embed.margin);
    s.field("bias_lr", c.embed.bias_lr);
  });
  b.section("mfi", [&](auto& s) {
    auto& m = c.mfi;
    s.field("word_vectors", m.word_vectors);
    s.field("doc_vectors", m.doc_vectors);
    s.field("product_dim", m.product_dim);
    s.field("category_dim", m.category_dim);
    s.field("category_words", m.category_words);
    s.field("layers", m.layers);
    s.field("hidden", m.hidden);
    s.field("epochs", m.epochs);
    s.field("negatives", m.negatives);
    s.field("batch_size", m.batch_size);
    s.field("lr", m.lr);
  });
  b.section("agent", [&](auto& s) {
    auto& a = c.agent;
    s.field("history", a.history);
    s.field("horizon", a.horizon);
    s.field("action_limit", a.action_limit);
    s.field("hidden", a.hidden);
    s.field("affinity", a.affinity);
    s.field("epochs", a.epochs);
    s.field("batch_size", a.batch_size);
    s.field("lr", a.lr);
    s.field("optimizer", a.optimizer);
    s.field("gamma", a.gamma);
    s.field("entropy_weight", a.entropy_weight);
  });
  b.section("infer", [&](auto& s) {
    s.field("beam", c.infer.beam);
    s.field("stochastic", c.infer.stochastic);
    s.field("top_n", c.infer.top_n);
  });
  b.section("eval", [&](auto& s) {
    s.field("negatives", c.eval.negatives);
    s.field("ks", c.eval.ks);
    s.field("top_k", c.eval.top_k);
  });
  b.section("experiment", [&](auto& s) {
    s.field("variant", c.experiment.variant);
    s.field("seeds", c.experiment.seeds);
    s.field("remove_relation", c.experiment.remove_relation);
    s.field("degrade", c.experiment.degrade);
  });
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path + ": " + what);
}

void validate(const RunConfig& c) {
  require(!c.output_dir.empty(), "$.output_dir", "must not be empty");
  require(c.workers >= 1, "$.workers", "must be at least 1");
  require(c.data.metadata.empty() == c.data.reviews.empty(), "$.data",
          "metadata and reviews must be given together");
  require(c.data.synth.products >= 2 && c.data.synth.clusters >= 1, "$.data.synth", "needs 2+ products and 1+ cluster");
  require(c.graph.feature_words >= 1, "$.graph.feature_words", "must be at least 1");
  require(c.graph.train_fraction > 0.0 && c.graph.train_fraction < 1.0, "$.graph.train_fraction",
          "must lie strictly between 0 and 1");
  if (!c.graph.patterns.is_null()) (void)PatternSet::from_json(c.graph.patterns);
  require(c.embed.dim >= 1, "$.embed.dim", "must be at least 1");
  require(c.mfi.product_dim >= 1 && c.mfi.category_dim >= 1, "$.mfi", "feature dimensions must be positive");
  require(c.mfi.batch_size >= 1, "$.mfi.batch_size", "must be at least 1");
  require(parse_optimizer(c.agent.optimizer).has_value(), "$.agent.optimizer", "expected adam or sgd");
  require(c.agent.horizon >= 1, "$.agent.horizon", "must be at least 1");
  require(c.agent.action_limit >= 1, "$.agent.action_limit", "must be at least 1");
  require(c.agent.batch_size >= 1, "$.agent.batch_size", "must be at least 1");
  require(c.agent.gamma > 0.0 && c.agent.gamma <= 1.0, "$.agent.gamma", "must lie in (0, 1]");
  require(c.infer.beam.size() == c.agent.horizon, "$.infer.beam", "needs one width per reasoning step");
  for (std::size_t i = 0; i < c.infer.beam.size(); ++i) {
    require(c.infer.beam[i] >= 1, "$.infer.beam[" + std::to_string(i) + "]", "must be at least 1");
  }
  require(c.infer.top_n >= 1, "$.infer.top_n", "must be at least 1");
  require(c.eval.top_k >= 1, "$.eval.top_k", "must be at least 1");
  require(!c.eval.ks.empty(), "$.eval.ks", "must not be empty");
  require(!c.experiment.seeds.empty(), "$.experiment.seeds", "must not be empty");
  require(c.experiment.degrade >= 0.0 && c.experiment.degrade <= 1.0, "$.experiment.degrade", "must lie in [0, 1]");
  if (!c.experiment.remove_relation.empty()) {
    const auto r = parse_relation(c.experiment.remove_relation);
    require(r && is_graph_relation(*r), "$.experiment.remove_relation", "unknown relation");
  }
}

}  // namespace

RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  const json root = j.is_null() ? json::object() : j;
  Reader r(root, "$");
  visit(r, c);
  r.finish();
  validate(c);
  apply_variant(c, c.experiment.variant);
  return c;
}

nlohmann::json to_json(const RunConfig& cfg) {
  json j;
  Writer w(j);
  RunConfig copy = cfg;
  visit(w, copy);
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output_dir");
  j.erase("workers");
  return artifact::hash_json(j);
}

void apply_overrides(nlohmann::json& j, const std::vector<std::string>& assignments) {
  if (j.is_null()) j = json::object();
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq);
    const std::string text = a.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError("override '" + a + "' has an empty key segment");
      if (!node->is_object()) throw ConfigError("$." + key.substr(0, start) + ": not an object");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      if (node->is_null()) *node = json::object();
      start = dot + 1;
    }
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  }
  apply_overrides(j, overrides);
  return parse_config(j);
}

void apply_variant(RunConfig& cfg, std::string_view variant) {
  if (variant == "kapr") {
    cfg.agent.policy = "dynamic";
    cfg.agent.reward = "mfi";
  } else if (variant == "kapr-m") {
    cfg.agent.policy = "dynamic";
    cfg.agent.reward = "transe";
  } else if (variant == "kapr-p") {
    cfg.agent.policy = "static";
    cfg.agent.reward = "mfi";
  } else if (variant == "random") {
    cfg.agent.policy = "uniform";
    cfg.agent.reward = "mfi";
    cfg.infer.stochastic = true;
  } else {
    throw UnknownVariant(std::string(variant));
  }
  cfg.experiment.variant = std::string(variant);
}

}  // namespace kapr
