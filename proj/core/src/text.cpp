#include "kapr/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "kapr/error.hpp"

namespace kapr {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 3) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

DocumentFrequencies::DocumentFrequencies(const std::vector<std::vector<std::string>>& docs)
    : documents_(docs.size()) {
  for (const auto& doc : docs) {
    std::set<std::string_view> seen(doc.begin(), doc.end());
    for (auto term : seen) {
      auto it = df_.find(term);
      if (it == df_.end()) {
        df_.emplace(std::string(term), 1);
      } else {
        ++it->second;
      }
    }
  }
}

std::size_t DocumentFrequencies::df(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

double DocumentFrequencies::idf(const std::string& term) const {
  return std::log(static_cast<double>(documents_) / (1.0 + static_cast<double>(df(term))));
}

std::vector<TermScore> rank_terms(const std::vector<std::string>& doc,
                                  const DocumentFrequencies& df) {
  std::map<std::string, std::size_t> tf;
  for (const auto& t : doc) ++tf[t];
  std::vector<TermScore> out;
  out.reserve(tf.size());
  for (const auto& [term, count] : tf) {
    out.push_back({term, static_cast<double>(count) * df.idf(term)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TermScore& a, const TermScore& b) { return a.score > b.score; });
  return out;
}

std::vector<std::vector<std::string>> top_terms(const std::vector<std::vector<std::string>>& docs,
                                                std::size_t f) {
  if (docs.empty()) throw EmptyCorpus("no documents");
  const DocumentFrequencies df(docs);
  std::vector<std::vector<std::string>> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    auto ranked = rank_terms(doc, df);
    std::vector<std::string> terms;
    for (std::size_t i = 0; i < ranked.size() && i < f; ++i) terms.push_back(std::move(ranked[i].term));
    out.push_back(std::move(terms));
  }
  return out;
}

}  // namespace kapr
