#include "kapr/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <unordered_map>
#include <unordered_set>

#include "kapr/error.hpp"
#include "kapr/rng.hpp"
#include "kapr/text.hpp"

namespace kapr {

namespace {

using nlohmann::json;

std::string required_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw MalformedRecord(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw MalformedRecord(std::string("field '") + key + "' is not a string");
  auto s = it->get<std::string>();
  if (s.empty()) throw MalformedRecord(std::string("field '") + key + "' is empty");
  return s;
}

std::string optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw MalformedRecord(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

std::vector<std::string> string_list(const json& v, const char* key) {
  if (v.is_null()) return {};
  if (!v.is_array()) throw MalformedRecord(std::string("field '") + key + "' is not an array");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw MalformedRecord(std::string("field '") + key + "' holds a non-string");
    out.push_back(x.get<std::string>());
  }
  return out;
}

ProductRecord product_from_json(const json& j) {
  if (!j.is_object()) throw MalformedRecord("line is not a JSON object");
  ProductRecord p;
  p.external_id = required_string(j, "asin");
  p.title = required_string(j, "title");
  p.description = optional_string(j, "description");
  if (auto b = optional_string(j, "brand"); !b.empty()) p.brand = std::move(b);
  if (auto it = j.find("categories"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw MalformedRecord("field 'categories' is not an array");
    std::unordered_set<std::string> seen;
    auto add = [&](const std::string& c) {
      if (!c.empty() && seen.insert(c).second) p.categories.push_back(c);
    };
    for (const auto& entry : *it) {
      if (entry.is_string()) {
        add(entry.get<std::string>());
      } else {
        for (const auto& c : string_list(entry, "categories")) add(c);
      }
    }
  }
  if (auto it = j.find("related"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw MalformedRecord("field 'related' is not an object");
    p.also_viewed = string_list(it->value("also_viewed", json()), "also_viewed");
    p.also_bought = string_list(it->value("also_bought", json()), "also_bought");
  }
  return p;
}

ReviewRecord review_from_json(const json& j) {
  if (!j.is_object()) throw MalformedRecord("line is not a JSON object");
  ReviewRecord r;
  r.user_id = required_string(j, "reviewerID");
  r.product_id = required_string(j, "asin");
  r.text = optional_string(j, "reviewText");
  return r;
}

template <class Record, class Convert, class Key>
ParseResult<Record> parse_lines(std::istream& in, Convert convert, Key key) {
  ParseResult<Record> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  std::size_t nonblank = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++nonblank;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw MalformedRecord(std::string("invalid JSON: ") + e.what());
      }
      Record rec = convert(j);
      if (auto k = key(rec); k && !seen.insert(*k).second) {
        throw MalformedRecord("duplicate id '" + *k + "'");
      }
      out.records.push_back(std::move(rec));
    } catch (const MalformedRecord& e) {
      out.diagnostics.push_back({lineno, e.what()});
    }
  }
  if (nonblank > 0 && out.diagnostics.size() * 2 > nonblank) {
    throw MalformedRecord(std::to_string(out.diagnostics.size()) + " of " +
                          std::to_string(nonblank) + " lines failed to parse");
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace

ParseResult<ProductRecord> parse_metadata(std::istream& in) {
  return parse_lines<ProductRecord>(in, product_from_json, [](const ProductRecord& p) {
    return std::optional<std::string>(p.external_id);
  });
}

ParseResult<ProductRecord> parse_metadata(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_metadata(in);
}

ParseResult<ReviewRecord> parse_reviews(std::istream& in) {
  return parse_lines<ReviewRecord>(in, review_from_json, [](const ReviewRecord&) {
    return std::optional<std::string>();
  });
}

ParseResult<ReviewRecord> parse_reviews(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_reviews(in);
}

nlohmann::json to_json(const ProductRecord& p) {
  json j = {{"asin", p.external_id}, {"title", p.title}, {"description", p.description}};
  if (p.brand) j["brand"] = *p.brand;
  j["categories"] = json::array({p.categories});
  j["related"] = {{"also_viewed", p.also_viewed}, {"also_bought", p.also_bought}};
  return j;
}

nlohmann::json to_json(const ReviewRecord& r) {
  return {{"reviewerID", r.user_id}, {"asin", r.product_id}, {"reviewText", r.text}};
}

void write_metadata(const std::filesystem::path& path, const std::vector<ProductRecord>& products) {
  std::vector<json> rows;
  rows.reserve(products.size());
  for (const auto& p : products) rows.push_back(to_json(p));
  write_lines(path, rows);
}

void write_reviews(const std::filesystem::path& path, const std::vector<ReviewRecord>& reviews) {
  std::vector<json> rows;
  rows.reserve(reviews.size());
  for (const auto& r : reviews) rows.push_back(to_json(r));
  write_lines(path, rows);
}

FeatureWords select_feature_words(const std::vector<ReviewRecord>& reviews, std::size_t f) {
  if (reviews.empty()) throw EmptyCorpus("no reviews");
  if (f == 0) throw ConfigError("feature word count must be at least 1");
  std::vector<std::vector<std::string>> docs;
  docs.reserve(reviews.size());
  for (const auto& r : reviews) docs.push_back(tokenize(r.text));
  const auto top = top_terms(docs, f);
  FeatureWords out;
  for (std::size_t i = 0; i < reviews.size(); ++i) {
    auto& words = out[reviews[i].product_id];
    words.insert(top[i].begin(), top[i].end());
  }
  return out;
}

BuiltGraph build_graph(const std::vector<ProductRecord>& products,
                       const std::vector<ReviewRecord>& reviews, const FeatureWords& words) {
  BuiltGraph out;
  std::unordered_map<std::string, std::uint32_t> product_ids, user_ids, brand_ids, category_ids;
  auto intern = [](std::unordered_map<std::string, std::uint32_t>& table,
                   std::vector<std::string>& names, const std::string& key) {
    auto [it, inserted] = table.emplace(key, static_cast<std::uint32_t>(names.size()));
    if (inserted) names.push_back(key);
    return it->second;
  };

  auto& product_names = out.names.of(EntityKind::Product);
  for (const auto& p : products) intern(product_ids, product_names, p.external_id);

  std::set<std::string> vocabulary;
  for (const auto& [asin, ws] : words) {
    if (product_ids.contains(asin)) vocabulary.insert(ws.begin(), ws.end());
  }
  auto& word_names = out.names.of(EntityKind::Word);
  word_names.assign(vocabulary.begin(), vocabulary.end());

  // Populations first: users/brands/categories by first appearance.
  for (const auto& p : products) {
    if (p.brand) intern(brand_ids, out.names.of(EntityKind::Brand), *p.brand);
    for (const auto& c : p.categories) intern(category_ids, out.names.of(EntityKind::Category), c);
  }
  for (const auto& r : reviews) {
    if (product_ids.contains(r.product_id)) intern(user_ids, out.names.of(EntityKind::User), r.user_id);
  }

  Populations pops{};
  for (EntityKind k : kEntityKinds) {
    pops[index_of(k)] = static_cast<std::uint32_t>(out.names.of(k).size());
  }
  out.graph = KnowledgeGraph(pops);
  auto& g = out.graph;

  for (std::uint32_t pid = 0; pid < products.size(); ++pid) {
    const auto& p = products[pid];
    if (p.brand) g.add_triple(product(pid), Relation::ProducedBy, {EntityKind::Brand, brand_ids.at(*p.brand)});
    for (const auto& c : p.categories) {
      g.add_triple(product(pid), Relation::BelongTo, {EntityKind::Category, category_ids.at(c)});
    }
    auto link = [&](const std::vector<std::string>& others, Relation r) {
      for (const auto& o : others) {
        auto it = product_ids.find(o);
        if (it == product_ids.end()) {
          ++out.report.dropped_references;
          continue;
        }
        if (it->second == pid) continue;
        g.add_triple(product(pid), r, product(it->second));
      }
    };
    link(p.also_viewed, Relation::AlsoViewed);
    link(p.also_bought, Relation::AlsoBought);
  }

  for (const auto& [asin, ws] : words) {
    auto it = product_ids.find(asin);
    if (it == product_ids.end()) continue;
    for (const auto& w : ws) {
      const auto wid = static_cast<std::uint32_t>(
          std::lower_bound(word_names.begin(), word_names.end(), w) - word_names.begin());
      g.add_triple(product(it->second), Relation::DescribedBy, {EntityKind::Word, wid});
    }
  }

  for (const auto& r : reviews) {
    auto it = product_ids.find(r.product_id);
    if (it == product_ids.end()) {
      ++out.report.dropped_reviews;
      continue;
    }
    g.add_triple({EntityKind::User, user_ids.at(r.user_id)}, Relation::Purchase, product(it->second));
  }
  return out;
}

EdgeSplit split_pairs(const KnowledgeGraph& g, Relation r, const SplitSpec& spec) {
  if (!is_product_relation(r)) {
    throw SchemaViolation("only also_viewed/also_bought can be split, got " + std::string(to_string(r)));
  }
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw InvalidFraction("train fraction must lie in (0, 1), got " + std::to_string(spec.train_fraction));
  }
  auto edges = g.edges(r);
  Rng rng(spec.seed);
  rng.shuffle(std::span(edges));
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(edges.size())));
  EdgeSplit out;
  out.train.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train), edges.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

KnowledgeGraph without_edges(const KnowledgeGraph& g, Relation r, const EdgeList& edges) {
  KnowledgeGraph out = g;
  const auto s = schema_of(r);
  for (auto [h, t] : edges) out.remove_triple({s.head, h}, r, {s.tail, t});
  return out;
}

}  // namespace kapr
