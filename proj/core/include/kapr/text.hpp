#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace kapr {

/// Lowercases, splits on non-alphanumeric bytes and drops tokens shorter
/// than three characters.
std::vector<std::string> tokenize(std::string_view text);

/// Document frequencies over a tokenized corpus.
class DocumentFrequencies {
 public:
  explicit DocumentFrequencies(const std::vector<std::vector<std::string>>& docs);

  std::size_t documents() const noexcept { return documents_; }
  std::size_t df(const std::string& term) const;
  /// ln(N / (1 + df)). Negative for terms present in nearly every document.
  double idf(const std::string& term) const;

 private:
  std::size_t documents_ = 0;
  std::map<std::string, std::size_t, std::less<>> df_;
};

struct TermScore {
  std::string term;
  double score = 0.0;
};

/// Every distinct term of `doc` scored by raw count times idf, ordered by
/// descending score with ties broken lexicographically.
std::vector<TermScore> rank_terms(const std::vector<std::string>& doc,
                                  const DocumentFrequencies& df);

/// The top-F terms of every document. Throws EmptyCorpus when `docs` is empty.
std::vector<std::vector<std::string>> top_terms(const std::vector<std::vector<std::string>>& docs,
                                                std::size_t f);

}  // namespace kapr
