#pragma once

#include <cstddef>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mdqa/corpus.hpp"
#include "mdqa/error.hpp"
#include "mdqa/http.hpp"

namespace mdqa {

struct ScoredPassage {
  Passage passage;
  double relevance = 0.0;
  std::size_t rank = 0;  // 1-based
};

class RerankError : public Error {
 public:
  using Error::Error;
};

/// Scores (question, passage) relevance. Implementations must be safe to
/// call from several threads at once.
class RelevanceScorer {
 public:
  virtual ~RelevanceScorer() = default;
  virtual std::string identity() const = 0;
  /// One score per candidate, aligned with the input order.
  virtual std::vector<double> score(std::string_view question, std::span<const Passage> candidates) = 0;
};

/// Scores every candidate once and returns the best `top_k`, ordered by
/// descending relevance then ascending passage id.
std::vector<ScoredPassage> rerank(std::string_view question, std::span<const Passage> candidates,
                                  RelevanceScorer& scorer, std::size_t top_k);

/// Fraction of the question's unique tokens that also occur in the passage.
double fallback_score(std::string_view question, const Passage& passage);

/// Deterministic offline scorer built on fallback_score.
class FallbackScorer final : public RelevanceScorer {
 public:
  std::string identity() const override { return "fallback-overlap-v1"; }
  std::vector<double> score(std::string_view question, std::span<const Passage> candidates) override;
};

/// Text a sequence-to-sequence relevance model sees for one candidate:
/// "Query: {question} Document: {title}. {text} Relevant:".
std::string format_scorer_input(std::string_view question, std::string_view title, std::string_view text);

// ---------------------------------------------------------------------------
// Remote scoring service: POST /rescore
//   request  {"query": s, "documents": [{"id": s, "title": s, "text": s}, ...]}
//   response {"scores": [x, ...]}   aligned with "documents", each x <= 0

struct RerankDocument {
  std::string id;
  std::string title;
  std::string text;
};

struct RerankRequest {
  std::string query;
  std::vector<RerankDocument> candidates;

  /// Throws RerankError for an empty list or duplicate ids.
  void validate() const;
};

struct ScorerClientOptions {
  std::size_t batch_size = 16;
  std::size_t max_chars = 2048;  // about 512 scorer tokens
  RetryPolicy retry;
};

class ScorerClient {
 public:
  ScorerClient(Endpoint endpoint, ScorerClientOptions options, std::shared_ptr<Throttle> throttle = nullptr);

  const ScorerClientOptions& options() const noexcept { return options_; }
  /// Sends one batch; no retries here.
  std::vector<double> send(const std::string& query, std::span<const RerankDocument> batch) const;
  std::string identity() const { return "remote:" + http_.endpoint().url; }

 private:
  JsonHttpClient http_;
  ScorerClientOptions options_;
};

/// Scores a request in batches of the configured size, retrying transport
/// failures; results are reassembled in input order.
std::vector<double> remote_score(const ScorerClient& client, const RerankRequest& request);

class RemoteScorer final : public RelevanceScorer {
 public:
  explicit RemoteScorer(std::shared_ptr<ScorerClient> client) : client_(std::move(client)) {}
  std::string identity() const override { return client_->identity(); }
  std::vector<double> score(std::string_view question, std::span<const Passage> candidates) override;

 private:
  std::shared_ptr<ScorerClient> client_;
};

/// Memoizes another scorer by (scorer id, question, passage id, content hash).
class CachingScorer final : public RelevanceScorer {
 public:
  explicit CachingScorer(std::shared_ptr<RelevanceScorer> inner) : inner_(std::move(inner)) {}
  std::string identity() const override { return inner_->identity(); }
  std::vector<double> score(std::string_view question, std::span<const Passage> candidates) override;
  std::size_t cached_entries() const;

 private:
  std::string key(std::string_view question, const Passage& p) const;

  std::shared_ptr<RelevanceScorer> inner_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, double> cache_;
};

}  // namespace mdqa
