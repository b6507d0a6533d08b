#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mdqa/http.hpp"
#include "mdqa/index.hpp"
#include "mdqa/prompting.hpp"

namespace mdqa {

enum class ContextSource { gold, linked_intersection, full_retrieval, rerank_only };
enum class PromptMode { fixed, dynamic };  // "static" / "dynamic" on disk

std::string_view to_string(ContextSource source) noexcept;
std::string_view to_string(PromptMode mode) noexcept;
std::optional<ContextSource> parse_context_source(std::string_view name) noexcept;
std::optional<PromptMode> parse_prompt_mode(std::string_view name) noexcept;

/// One experiment configuration. Defaults reproduce the dynamic 4-shot,
/// chain-of-thought, full-retrieval setting.
struct RunConfig {
  bool decomposition_enabled = true;
  ContextSource context_source = ContextSource::full_retrieval;
  bool cot = true;
  std::size_t bm25_depth = 1000;
  std::size_t contexts_per_question = 5;
  std::size_t shots = 4;
  PromptMode prompt_mode = PromptMode::dynamic;
  TokenBudget budget;  // reserved_output doubles as the answer's max_tokens
  Bm25Params bm25;
  std::size_t per_passage_cap_tokens = 300;
  std::size_t retrieval_log_depth = 10;
  std::size_t parallelism = 4;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
/// Fields absent from `j` keep the values already in `base`; unknown fields are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// SHA-256 of the canonical JSON form.
std::string config_hash(const RunConfig& config);

struct ProviderEndpointConfig {
  std::string kind = "native";  // native | openai
  std::string url;
  std::string model;
  std::string api_key_env;
};

struct ProvidersConfig {
  ProviderEndpointConfig completion{"native", "", "", "MDQA_COMPLETION_API_KEY"};
  ProviderEndpointConfig embedding{"native", "", "", "MDQA_EMBEDDING_API_KEY"};
  ProviderEndpointConfig scorer{"native", "", "", "MDQA_SCORER_API_KEY"};
  std::size_t scorer_batch_size = 16;
  std::size_t scorer_max_chars = 2048;
  std::size_t max_in_flight = 8;
  double requests_per_minute = 0.0;
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_dir;
};

/// Everything `mdqa run` reads from its config file: the run configuration,
/// input locations and provider endpoints. Relative paths resolve against
/// the config file's directory.
struct AppConfig {
  RunConfig run;
  std::optional<std::filesystem::path> index_path;
  std::vector<std::filesystem::path> passage_paths;
  std::optional<std::filesystem::path> example_pool_path;
  std::optional<std::filesystem::path> decomposition_examples_path;
  std::optional<std::filesystem::path> mock_completions_path;
  ProvidersConfig providers;
};

AppConfig load_app_config(const std::filesystem::path& path);
AppConfig app_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

}  // namespace mdqa
