#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mdqa/corpus.hpp"

namespace mdqa {

struct Bm25Params {
  double k1 = 0.9;  // term-frequency saturation
  double b = 0.4;   // length normalization

  /// Throws ConfigError unless k1 >= 0 and 0 <= b <= 1.
  void validate() const;
  bool operator==(const Bm25Params&) const = default;
};

struct Posting {
  std::uint32_t doc;  // dense document number
  std::uint32_t tf;
};

struct SearchHit {
  std::string passage_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

/// Lowercases ASCII and splits on every run of characters that are neither
/// ASCII alphanumerics nor non-ASCII bytes. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

/// Immutable inverted index with the statistics BM25 needs.
class Index {
 public:
  Index() = default;

  static Index build(std::span<const Passage> passages, Bm25Params params = {});

  const Bm25Params& params() const noexcept { return params_; }
  /// Scoring parameters are not baked into the postings, so they may change
  /// before the index is shared.
  void set_params(Bm25Params params);

  std::size_t size() const noexcept { return ids_.size(); }
  double avgdl() const noexcept { return avgdl_; }
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }

  /// Postings sorted by document number; nullptr for unknown terms.
  const std::vector<Posting>* postings(std::string_view term) const;
  std::size_t doc_frequency(std::string_view term) const;
  double idf(std::string_view term) const;

  /// Dense document number of a passage id, or -1.
  std::int64_t doc_of(std::string_view passage_id) const;
  const std::string& passage_id(std::uint32_t doc) const { return ids_.at(doc); }
  const std::string& article_id(std::uint32_t doc) const { return article_ids_.at(doc); }
  std::uint32_t doc_length(std::uint32_t doc) const { return lengths_.at(doc); }

  /// Term frequency of `term` in `doc` (0 when absent).
  std::uint32_t term_frequency(std::string_view term, std::uint32_t doc) const;

  /// Writes the line-based snapshot: magic header, parameters, per-document
  /// metadata (including full passage records when given) and postings.
  void save(std::ostream& out, std::span<const Passage> passages = {}) const;

 private:
  friend struct IndexSnapshot;
  void finalize();

  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::string> article_ids_;
  std::vector<std::uint32_t> lengths_;
  std::unordered_map<std::string, std::uint32_t> doc_by_id_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avgdl_ = 0.0;
};

/// An index together with the passages it was built from.
struct IndexSnapshot {
  Index index;
  std::vector<Passage> passages;

  /// Throws DataError on a wrong magic/version or any broken invariant.
  static IndexSnapshot load(std::istream& in);
};

inline constexpr std::string_view kIndexMagic = "MDQA-BM25-INDEX";
inline constexpr int kIndexVersion = 1;

/// BM25 over the unique query terms (each counted once):
///   sum idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)),
///   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).
/// Throws Error for an unknown passage id.
double bm25_score(const Index& index, std::span<const std::string> query_terms, std::string_view passage_id);

/// Top-k passages sharing at least one term with the query, ordered by
/// descending score then ascending passage id. When `allowed_articles` is
/// given, only passages from those articles are candidates.
std::vector<SearchHit> search(const Index& index, std::string_view query, std::size_t k,
                              const std::unordered_set<std::string>* allowed_articles = nullptr);

}  // namespace mdqa
