#include "mdqa/config.hpp"

#include <cstdint>
#include <fstream>
#include <set>

#include "mdqa/error.hpp"
#include "mdqa/hashing.hpp"

namespace mdqa {

using nlohmann::json;

std::string_view to_string(ContextSource source) noexcept {
  switch (source) {
    case ContextSource::gold: return "gold";
    case ContextSource::linked_intersection: return "linked_intersection";
    case ContextSource::full_retrieval: return "full_retrieval";
    case ContextSource::rerank_only: return "rerank_only";
  }
  return "full_retrieval";
}

std::string_view to_string(PromptMode mode) noexcept { return mode == PromptMode::fixed ? "static" : "dynamic"; }

std::optional<ContextSource> parse_context_source(std::string_view name) noexcept {
  for (auto s : {ContextSource::gold, ContextSource::linked_intersection, ContextSource::full_retrieval,
                 ContextSource::rerank_only}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::optional<PromptMode> parse_prompt_mode(std::string_view name) noexcept {
  if (name == "static") return PromptMode::fixed;
  if (name == "dynamic") return PromptMode::dynamic;
  return std::nullopt;
}

void RunConfig::validate() const {
  if (bm25_depth == 0) throw ConfigError("bm25_depth must be at least 1");
  if (contexts_per_question == 0) throw ConfigError("contexts_per_question must be at least 1");
  if (retrieval_log_depth == 0) throw ConfigError("retrieval_log_depth must be at least 1");
  if (parallelism == 0) throw ConfigError("parallelism must be at least 1");
  if (per_passage_cap_tokens == 0) throw ConfigError("per_passage_cap_tokens must be at least 1");
  budget.validate();
  bm25.validate();
}

json to_json(const RunConfig& c) {
  return json{{"decomposition_enabled", c.decomposition_enabled},
              {"context_source", std::string(to_string(c.context_source))},
              {"cot", c.cot},
              {"bm25_depth", c.bm25_depth},
              {"contexts_per_question", c.contexts_per_question},
              {"shots", c.shots},
              {"prompt_mode", std::string(to_string(c.prompt_mode))},
              {"budget", {{"model_limit", c.budget.model_limit}, {"reserved_output", c.budget.reserved_output}}},
              {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
              {"per_passage_cap_tokens", c.per_passage_cap_tokens},
              {"retrieval_log_depth", c.retrieval_log_depth},
              {"parallelism", c.parallelism}};
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  const std::set<std::string_view> names(known);
  for (const auto& [key, value] : j.items()) {
    if (!names.contains(key)) throw ConfigError("unknown field '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, const char* field, T& out) {
  auto it = j.find(field);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t>) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0) throw ConfigError("");
    }
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("");
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ConfigError("field '" + std::string(field) + "' has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

ProviderEndpointConfig endpoint_from_json(const json& j, ProviderEndpointConfig base, std::string_view where) {
  reject_unknown(j, {"kind", "url", "model", "api_key_env"}, where);
  read(j, "kind", base.kind);
  read(j, "url", base.url);
  read(j, "model", base.model);
  read(j, "api_key_env", base.api_key_env);
  if (base.kind != "native" && base.kind != "openai") {
    throw ConfigError(std::string(where) + ".kind must be 'native' or 'openai'");
  }
  return base;
}

}  // namespace

RunConfig run_config_from_json(const json& j, RunConfig c) {
  reject_unknown(j,
                 {"decomposition_enabled", "context_source", "cot", "bm25_depth", "contexts_per_question", "shots",
                  "prompt_mode", "budget", "bm25", "per_passage_cap_tokens", "retrieval_log_depth", "parallelism"},
                 "run config");
  read(j, "decomposition_enabled", c.decomposition_enabled);
  if (auto it = j.find("context_source"); it != j.end()) {
    const auto name = it->is_string() ? it->get<std::string>() : it->dump();
    const auto source = parse_context_source(name);
    if (!source) {
      throw ConfigError("invalid context_source '" + name +
                        "' (expected gold, linked_intersection, full_retrieval or rerank_only)");
    }
    c.context_source = *source;
  }
  read(j, "cot", c.cot);
  read(j, "bm25_depth", c.bm25_depth);
  read(j, "contexts_per_question", c.contexts_per_question);
  read(j, "shots", c.shots);
  if (auto it = j.find("prompt_mode"); it != j.end()) {
    const auto name = it->is_string() ? it->get<std::string>() : it->dump();
    const auto mode = parse_prompt_mode(name);
    if (!mode) throw ConfigError("invalid prompt_mode '" + name + "' (expected static or dynamic)");
    c.prompt_mode = *mode;
  }
  if (auto it = j.find("budget"); it != j.end()) {
    reject_unknown(*it, {"model_limit", "reserved_output"}, "budget");
    read(*it, "model_limit", c.budget.model_limit);
    read(*it, "reserved_output", c.budget.reserved_output);
  }
  if (auto it = j.find("bm25"); it != j.end()) {
    reject_unknown(*it, {"k1", "b"}, "bm25");
    read(*it, "k1", c.bm25.k1);
    read(*it, "b", c.bm25.b);
  }
  read(j, "per_passage_cap_tokens", c.per_passage_cap_tokens);
  read(j, "retrieval_log_depth", c.retrieval_log_depth);
  read(j, "parallelism", c.parallelism);
  c.validate();
  return c;
}

std::string config_hash(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

AppConfig app_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"run", "inputs", "providers"}, "config");
  AppConfig app;
  if (auto it = j.find("run"); it != j.end()) app.run = run_config_from_json(*it);
  if (auto it = j.find("inputs"); it != j.end()) {
    const json& in = *it;
    reject_unknown(in, {"index", "passages", "example_pool", "decomposition_examples", "mock_completions"},
                   "inputs");
    std::string s;
    if (in.contains("index")) {
      read(in, "index", s);
      app.index_path = resolve(base_dir, s);
    }
    if (auto p = in.find("passages"); p != in.end()) {
      if (!p->is_array()) throw ConfigError("inputs.passages must be a list of paths");
      for (const auto& v : *p) {
        if (!v.is_string()) throw ConfigError("inputs.passages must be a list of paths");
        app.passage_paths.push_back(resolve(base_dir, v.get<std::string>()));
      }
    }
    if (in.contains("example_pool")) {
      read(in, "example_pool", s);
      app.example_pool_path = resolve(base_dir, s);
    }
    if (in.contains("decomposition_examples")) {
      read(in, "decomposition_examples", s);
      app.decomposition_examples_path = resolve(base_dir, s);
    }
    if (in.contains("mock_completions")) {
      read(in, "mock_completions", s);
      app.mock_completions_path = resolve(base_dir, s);
    }
  }
  if (auto it = j.find("providers"); it != j.end()) {
    const json& pj = *it;
    reject_unknown(pj,
                   {"completion", "embedding", "scorer", "scorer_batch_size", "scorer_max_chars", "max_in_flight",
                    "requests_per_minute", "retry", "cache_dir"},
                   "providers");
    auto& p = app.providers;
    if (pj.contains("completion")) p.completion = endpoint_from_json(pj["completion"], p.completion, "providers.completion");
    if (pj.contains("embedding")) p.embedding = endpoint_from_json(pj["embedding"], p.embedding, "providers.embedding");
    if (pj.contains("scorer")) p.scorer = endpoint_from_json(pj["scorer"], p.scorer, "providers.scorer");
    read(pj, "scorer_batch_size", p.scorer_batch_size);
    read(pj, "scorer_max_chars", p.scorer_max_chars);
    read(pj, "max_in_flight", p.max_in_flight);
    read(pj, "requests_per_minute", p.requests_per_minute);
    if (auto r = pj.find("retry"); r != pj.end()) {
      reject_unknown(*r, {"attempts", "initial_backoff_ms", "multiplier"}, "providers.retry");
      std::size_t attempts = static_cast<std::size_t>(p.retry.attempts);
      std::size_t backoff = static_cast<std::size_t>(p.retry.initial_backoff.count());
      read(*r, "attempts", attempts);
      read(*r, "initial_backoff_ms", backoff);
      read(*r, "multiplier", p.retry.multiplier);
      if (attempts == 0) throw ConfigError("providers.retry.attempts must be at least 1");
      p.retry.attempts = static_cast<int>(attempts);
      p.retry.initial_backoff = std::chrono::milliseconds(backoff);
    }
    if (pj.contains("cache_dir")) {
      std::string s;
      read(pj, "cache_dir", s);
      p.cache_dir = resolve(base_dir, s);
    }
    if (p.scorer_batch_size == 0) throw ConfigError("providers.scorer_batch_size must be at least 1");
    if (p.max_in_flight == 0) throw ConfigError("providers.max_in_flight must be at least 1");
  }
  return app;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return app_config_from_json(j, path.parent_path());
}

}  // namespace mdqa
