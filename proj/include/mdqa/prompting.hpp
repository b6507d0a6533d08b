#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdqa/corpus.hpp"
#include "mdqa/providers.hpp"
#include "mdqa/rerank.hpp"
#include "mdqa/tokens.hpp"

namespace mdqa {

struct ContextDoc {
  std::string title;
  std::string text;
  bool operator==(const ContextDoc&) const = default;
};

/// A worked demonstration: documents, question, evidence paragraph, answer.
struct PromptExample {
  std::string id;
  std::vector<ContextDoc> contexts;
  std::string question;
  std::string evidence;  // may be empty when chain-of-thought is off
  std::string answer;
  std::optional<EmbeddingVector> embedding;

  bool operator==(const PromptExample&) const = default;
};

struct TokenBudget {
  std::size_t model_limit = 4000;
  std::size_t reserved_output = 512;

  void validate() const;  // reserved_output < model_limit
  std::size_t prompt_limit() const noexcept { return model_limit - reserved_output; }
  bool operator==(const TokenBudget&) const = default;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Pool indices of the k most similar examples, most similar first; ties go
/// to the lower index. Examples without a stored embedding are embedded from
/// their question text.
std::vector<std::size_t> knn_rank(std::string_view question, std::span<const PromptExample> pool, std::size_t k,
                                  EmbeddingService& embedder);

/// The k most similar examples in prompt order: most similar LAST.
std::vector<PromptExample> knn_select(std::string_view question, std::span<const PromptExample> pool, std::size_t k,
                                      EmbeddingService& embedder);

/// "[Document i]: Title: {title}. Content: {text}" for i = 1.., blank line between.
std::string render_context_block(std::span<const ContextDoc> contexts);

struct AggregationOptions {
  bool cot = true;
  TokenBudget budget;
  std::size_t per_passage_cap_tokens = 300;
  TokenCounter counter = default_token_counter();
};

struct BuiltPrompt {
  std::string text;
  std::size_t examples_used = 0;   // survivors are the LAST examples_used of the input
  std::size_t contexts_used = 0;   // survivors are the first contexts_used (a rank prefix)
  bool passages_truncated = false;
  std::size_t estimated_tokens = 0;
};

/// Instruction header, one "Example i:" block per demonstration, then the
/// target block ending in the cue "Evidence:" (cot) or "Answer:". When over
/// budget: cap every passage, then drop the lowest-ranked contexts down to
/// one, then drop demonstrations from the front (least similar) down to none.
/// Throws BudgetError when even that does not fit.
BuiltPrompt build_aggregation_prompt(std::span<const PromptExample> examples, std::span<const ScoredPassage> contexts,
                                     std::string_view question, const AggregationOptions& options);

struct AggregationOutput {
  std::string evidence;
  std::string answer;
  bool operator==(const AggregationOutput&) const = default;
};

/// Answer is the text after the last "Answer:" marker up to the end of that
/// line; evidence (cot only) is everything before the marker. Without a
/// marker a plain completion is the answer and a cot completion is a
/// ParseError.
AggregationOutput parse_aggregation_output(std::string_view completion, bool cot);

// ---------------------------------------------------------------------------
// Example pools

std::vector<PromptExample> read_example_pool(std::istream& in);
std::vector<PromptExample> load_example_pool(const std::filesystem::path& path);
void write_example(std::ostream& out, const PromptExample& example);

struct TrainingItem {
  QaInstance instance;
  std::vector<ContextDoc> contexts;  // gold contexts
};

/// Gold contexts resolved from the first non-empty gold evidence set.
std::vector<ContextDoc> gold_contexts(const QaInstance& instance, const PassageStore& store);

/// `count` distinct indices from [0, n), ascending, reproducible for a seed.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

std::string build_bootstrap_prompt(const TrainingItem& item);

struct BootstrapResult {
  std::vector<PromptExample> pool;
  std::size_t sampled = 0;
  std::size_t skipped = 0;
};

class BootstrapAborted : public Error {
 public:
  BootstrapAborted(const std::string& message, std::size_t completed)
      : Error(message), completed_(completed) {}
  std::size_t completed() const noexcept { return completed_; }

 private:
  std::size_t completed_;
};

/// Samples round(fraction * n) training items with a seeded RNG and asks the
/// model for an evidence paragraph given documents, question and gold answer.
/// Per-item failures are skipped and counted; an unavailable provider aborts
/// with BootstrapAborted after every finished example went through `sink`.
BootstrapResult bootstrap_example_pool(std::span<const TrainingItem> training, CompletionService& service,
                                       double fraction, std::uint64_t seed,
                                       const std::function<void(const PromptExample&)>& sink = {});

}  // namespace mdqa
