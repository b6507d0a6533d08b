#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mdqa/config.hpp"
#include "mdqa/corpus.hpp"
#include "mdqa/decompose.hpp"
#include "mdqa/error.hpp"
#include "mdqa/index.hpp"
#include "mdqa/prompting.hpp"
#include "mdqa/providers.hpp"
#include "mdqa/rerank.hpp"

namespace mdqa {

/// First-stage candidate generator.
class CandidateRetriever {
 public:
  virtual ~CandidateRetriever() = default;
  virtual std::string identity() const = 0;
  virtual std::vector<SearchHit> search(std::string_view query, std::size_t k,
                                        const std::unordered_set<std::string>* allowed_articles) = 0;
};

class Bm25Retriever final : public CandidateRetriever {
 public:
  explicit Bm25Retriever(const Index& index) : index_(index) {}
  std::string identity() const override;
  std::vector<SearchHit> search(std::string_view query, std::size_t k,
                                const std::unordered_set<std::string>* allowed_articles) override;

 private:
  const Index& index_;
};

/// Call counters the pipeline bumps as it works; reported in run manifests.
struct PipelineStats {
  std::atomic<std::size_t> retriever_calls{0};
  std::atomic<std::size_t> scorer_calls{0};
};

/// Non-owning handles to everything a run needs. Only the services a mode
/// actually uses must be set (gold mode needs no retriever or scorer,
/// static prompts need no embedder).
struct Services {
  const PassageStore* store = nullptr;
  CandidateRetriever* retriever = nullptr;
  RelevanceScorer* scorer = nullptr;
  CompletionService* completion = nullptr;
  EmbeddingService* embedder = nullptr;
  std::span<const PromptExample> example_pool;
  std::span<const DecompositionExample> decomposition_examples;
  TokenCounter counter = default_token_counter();
  std::string corpus_hash;
  PipelineStats* stats = nullptr;
};

/// Throws ConfigError when `services` cannot serve `config`.
void check_services(const RunConfig& config, const Services& services);

/// SHA-256 over every passage id, title and text, in order.
std::string corpus_hash(std::span<const Passage> passages);

struct RetrievedContexts {
  std::vector<ScoredPassage> contexts;     // merged, deduplicated, ranks renumbered from 1
  std::vector<ScoredPassage> retrieval_log;  // merged top retrieval_log_depth per subquestion
};

/// Per-subquestion top-k lists interleaved by rank, first occurrence wins.
std::vector<ScoredPassage> interleave_merge(const std::vector<std::vector<ScoredPassage>>& ranked_lists,
                                            std::size_t limit = static_cast<std::size_t>(-1));

/// Context passages for one question under the configured source:
///   gold                 first non-empty gold evidence set, relevance 0, original order
///   full_retrieval       per subquestion BM25 top bm25_depth, rerank, top k
///   linked_intersection  as full_retrieval, candidates limited to linked articles
///   rerank_only          per subquestion rerank of the grounding article's passages, top k
/// Throws Error naming the mode and subquestion when a candidate set is empty.
RetrievedContexts retrieve_with_log(const Decomposition& decomposition, const RunConfig& config,
                                    const Services& services, const QaInstance& instance);

std::vector<ScoredPassage> retrieve_contexts(const Decomposition& decomposition, const RunConfig& config,
                                             const Services& services, const QaInstance& instance);

enum class RecordStatus { ok, parse_failed, failed };
std::string_view to_string(RecordStatus status) noexcept;

struct ContextRef {
  std::string passage_id;
  std::string article_id;
  double relevance = 0.0;
  std::size_t rank = 0;
  bool operator==(const ContextRef&) const = default;
};

struct AnswerRecord {
  std::string question_id;
  std::string question;
  std::vector<std::string> subquestions;
  bool decomposed = false;
  std::vector<ContextRef> contexts_used;   // contexts that made it into the prompt
  std::vector<ContextRef> retrieval_log;  // empty in gold mode
  std::vector<std::string> examples_used;
  std::string prompt_hash;
  std::string completion;
  std::string evidence;
  std::string answer;
  RecordStatus status = RecordStatus::ok;
  std::string error_stage;
  std::string error;
  std::map<std::string, double> timings_ms;

  bool operator==(const AnswerRecord&) const = default;
};

/// Timings are left out when `with_timings` is false so repeated runs
/// serialize identically.
nlohmann::json to_json(const AnswerRecord& record, bool with_timings = true);
AnswerRecord answer_record_from_json(const nlohmann::json& j);
std::vector<AnswerRecord> read_answer_records(std::istream& in);
std::vector<AnswerRecord> load_answer_records(const std::filesystem::path& path);

/// A failure inside one pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)), detail_(message) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string stage_;
  std::string detail_;
};

/// decompose -> retrieve -> select examples -> build prompt -> complete -> parse.
/// Stage failures throw StageError; an unparseable completion yields a
/// parse_failed record instead.
AnswerRecord answer_question(const QaInstance& instance, const RunConfig& config, const Services& services);

struct BatchResult {
  std::vector<AnswerRecord> records;  // input order
  nlohmann::json manifest;
  std::size_t failed = 0;
  std::size_t parse_failed = 0;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every instance with at most config.parallelism workers. A failing
/// instance becomes a failed record and the batch continues.
BatchResult run_batch(std::span<const QaInstance> instances, const RunConfig& config, const Services& services,
                      const ProgressFn& progress = {});

}  // namespace mdqa
