#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mdqa/http.hpp"
#include "mdqa/tokens.hpp"

namespace mdqa {

struct CompletionRequest {
  std::string prompt;
  std::size_t max_tokens = 512;
  double temperature = 0.0;
  std::vector<std::string> stop_sequences;  // at most 4

  nlohmann::json to_json() const;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

// ---------------------------------------------------------------------------
// Transports

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string identity() const = 0;
  /// One raw request, no caching or retries.
  virtual std::string send(const CompletionRequest& request) = 0;
};

/// POST /complete {"prompt","max_tokens","temperature","stop"} -> {"text"}
class HttpCompletionClient final : public CompletionClient {
 public:
  HttpCompletionClient(Endpoint endpoint, std::shared_ptr<Throttle> throttle = nullptr);
  std::string identity() const override { return "http:" + http_.endpoint().url; }
  std::string send(const CompletionRequest& request) override;

 private:
  JsonHttpClient http_;
};

/// OpenAI-style POST /v1/completions {"model","prompt",...} -> {"choices":[{"text"}]}
class OpenAiCompletionClient final : public CompletionClient {
 public:
  OpenAiCompletionClient(Endpoint endpoint, std::string model, std::shared_ptr<Throttle> throttle = nullptr);
  std::string identity() const override { return "openai:" + model_; }
  std::string send(const CompletionRequest& request) override;

 private:
  JsonHttpClient http_;
  std::string model_;
};

/// Offline completion model. Looks up canned responses by SHA-256 of the
/// prompt and otherwise answers with a deterministic heuristic.
class MockCompletionClient final : public CompletionClient {
 public:
  MockCompletionClient() = default;
  /// Loads {"prompt_sha256": hex, "text": s} lines.
  static std::shared_ptr<MockCompletionClient> from_fixture(const std::filesystem::path& path);

  void add_canned(std::string_view prompt, std::string text);
  void add_canned_hash(std::string prompt_sha256, std::string text);
  /// Requests whose prompt contains `marker` fail with ProviderError.
  void fail_when_contains(std::string marker);
  /// Requests whose prompt contains `marker` fail with TransportError.
  void transport_fail_when_contains(std::string marker);
  /// Overrides the heuristic for prompts without a canned response.
  void set_responder(std::function<std::string(const CompletionRequest&)> responder);

  std::string identity() const override { return "mock-completion-v1"; }
  std::string send(const CompletionRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

  /// The default heuristic, exposed for tests.
  static std::string heuristic_response(std::string_view prompt);

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> canned_;
  std::vector<std::string> failing_;
  std::vector<std::string> transport_failing_;
  std::function<std::string(const CompletionRequest&)> responder_;
  std::atomic<std::size_t> calls_{0};
};

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual std::string identity() const = 0;
  virtual std::vector<std::vector<double>> send(std::span<const std::string> texts) = 0;
};

/// POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}
class HttpEmbeddingClient final : public EmbeddingClient {
 public:
  HttpEmbeddingClient(Endpoint endpoint, std::shared_ptr<Throttle> throttle = nullptr);
  std::string identity() const override { return "http:" + http_.endpoint().url; }
  std::vector<std::vector<double>> send(std::span<const std::string> texts) override;

 private:
  JsonHttpClient http_;
};

/// OpenAI-style POST /v1/embeddings {"model","input"} -> {"data":[{"embedding"}]}
class OpenAiEmbeddingClient final : public EmbeddingClient {
 public:
  OpenAiEmbeddingClient(Endpoint endpoint, std::string model, std::shared_ptr<Throttle> throttle = nullptr);
  std::string identity() const override { return "openai:" + model_; }
  std::vector<std::vector<double>> send(std::span<const std::string> texts) override;

 private:
  JsonHttpClient http_;
  std::string model_;
};

/// Hash-seeded pseudorandom unit vectors; explicit vectors may be pinned per text.
class MockEmbeddingClient final : public EmbeddingClient {
 public:
  explicit MockEmbeddingClient(std::size_t dimension = 64) : dimension_(dimension) {}
  void pin(std::string text, std::vector<double> vector);
  std::string identity() const override { return "mock-embedding-v1-d" + std::to_string(dimension_); }
  std::vector<std::vector<double>> send(std::span<const std::string> texts) override;
  std::size_t calls() const noexcept { return calls_.load(); }

  static std::vector<double> hashed_unit_vector(std::string_view text, std::size_t dimension);

 private:
  std::size_t dimension_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> pinned_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Services: validation, caching, retries on top of a transport

/// Request/response store, one JSON file per request hash under `dir`
/// (memory only when no directory is given). Writes replace files atomically.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const nlohmann::json& request, const std::string& response);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> memory_;
};

struct CompletionOptions {
  std::size_t model_limit = 4000;  // prompt + output tokens
  TokenCounter counter = default_token_counter();
  RetryPolicy retry;
};

class CompletionService {
 public:
  CompletionService(std::shared_ptr<CompletionClient> client, std::shared_ptr<ResponseCache> cache,
                    CompletionOptions options = {});

  /// Validates the request and its token budget before sending, serves
  /// repeated requests from the cache, retries transport failures and cuts
  /// the text at the first stop sequence.
  std::string complete(const CompletionRequest& request);

  std::string identity() const { return client_->identity(); }
  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  const CompletionOptions& options() const noexcept { return options_; }

  /// Cache key: SHA-256 of the client identity and the canonical request.
  std::string cache_key(const CompletionRequest& request) const;

 private:
  std::shared_ptr<CompletionClient> client_;
  std::shared_ptr<ResponseCache> cache_;
  CompletionOptions options_;
  std::atomic<std::size_t> network_calls_{0};
};

class EmbeddingService {
 public:
  EmbeddingService(std::shared_ptr<EmbeddingClient> client, RetryPolicy retry = {});

  /// One vector per text, in order; cached by text hash.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
  EmbeddingVector embed_one(const std::string& text);

  std::string identity() const { return client_->identity(); }
  std::size_t network_calls() const noexcept { return network_calls_.load(); }

 private:
  std::shared_ptr<EmbeddingClient> client_;
  RetryPolicy retry_;
  std::shared_mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
  std::size_t dimension_ = 0;
  std::atomic<std::size_t> network_calls_{0};
};

/// Free-function forms of the two provider operations.
std::string complete(CompletionService& service, const CompletionRequest& request);
std::vector<EmbeddingVector> embed(EmbeddingService& service, std::span<const std::string> texts);

/// Truncates `text` at the earliest occurrence of any stop sequence.
std::string cut_at_stop(std::string text, std::span<const std::string> stop_sequences);

}  // namespace mdqa
