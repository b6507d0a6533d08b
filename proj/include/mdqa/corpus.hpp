#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace mdqa {

/// A source document as provided by a dataset (a Wikipedia page, a paper).
struct Article {
  std::string id;
  std::string title;
  std::string text;

  bool operator==(const Article&) const = default;
};

/// The unit that is indexed, retrieved, reranked and shown to the reader model.
/// Ids produced by windowing have the form "<article_id>#<window_index>".
struct Passage {
  std::string id;
  std::string article_id;
  std::string title;
  std::string text;
  std::size_t window_index = 0;

  bool operator==(const Passage&) const = default;
};

enum class AnswerType { span, binary, numeric, abstractive, extractive, boolean, none };

std::string_view to_string(AnswerType type) noexcept;
std::optional<AnswerType> parse_answer_type(std::string_view name) noexcept;

/// Gold answer marker for questions the context cannot answer.
inline constexpr std::string_view kUnanswerable = "unanswerable";

struct QaInstance {
  std::string question_id;
  std::string question;
  std::vector<std::string> gold_answers;
  AnswerType answer_type = AnswerType::span;
  // One id set per annotator reference.
  std::vector<std::vector<std::string>> gold_evidence_ids;
  std::vector<std::string> linked_article_ids;
  std::optional<std::string> grounding_article_id;
  // Reference decomposition, when the dataset provides one ("subquestions" on disk).
  std::vector<std::string> gold_decomposition;

  bool operator==(const QaInstance&) const = default;
};

/// Splits on '.', '!' or '?' followed by whitespace or end of text. Whitespace is
/// normalized first, so joining the result with single spaces reproduces
/// collapse_whitespace(text). Trailing text without a terminator is its own sentence.
std::vector<std::string> split_sentences(std::string_view text);

/// Non-overlapping windows of `window_size` consecutive sentences (last may be short).
std::vector<Passage> window_split(const Article& article, std::size_t window_size);

enum class CorpusFormat { article_jsonl, passage_jsonl };

using CorpusRecords = std::variant<std::vector<Article>, std::vector<Passage>>;

CorpusRecords load_corpus(const std::filesystem::path& path, CorpusFormat format);
std::vector<Article> load_articles(const std::filesystem::path& path);
std::vector<Passage> load_passages(const std::filesystem::path& path);
std::vector<Article> read_articles(std::istream& in);
std::vector<Passage> read_passages(std::istream& in);

void write_articles(std::ostream& out, std::span<const Article> articles);
void write_passages(std::ostream& out, std::span<const Passage> passages);

std::vector<QaInstance> load_qa_instances(const std::filesystem::path& path);
std::vector<QaInstance> read_qa_instances(std::istream& in);
void write_qa_instances(std::ostream& out, std::span<const QaInstance> instances);

/// Checks the QaInstance invariants that do not need a corpus.
void validate(const QaInstance& instance);

/// Read-only passage lookup by id and by source article.
class PassageStore {
 public:
  PassageStore() = default;
  explicit PassageStore(std::vector<Passage> passages);

  /// Appends more passages; ids must stay unique.
  void add(std::vector<Passage> passages);

  const Passage* find(std::string_view id) const;
  const Passage& at(std::string_view id) const;
  /// Passages of one article in window order; empty when unknown.
  std::vector<const Passage*> by_article(std::string_view article_id) const;
  /// An evidence id names either one passage or every passage of an article.
  /// Throws DataError when it is neither.
  std::vector<const Passage*> resolve(std::string_view evidence_id) const;

  std::span<const Passage> passages() const noexcept { return passages_; }
  std::size_t size() const noexcept { return passages_.size(); }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_article_;
};

/// Throws DataError naming the first gold evidence id that is neither a passage
/// id nor an article id in the store.
void validate_evidence(std::span<const QaInstance> instances, const PassageStore& store);

}  // namespace mdqa
