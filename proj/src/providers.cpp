#include "mdqa/providers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "mdqa/corpus.hpp"
#include "mdqa/hashing.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

using nlohmann::json;

nlohmann::json CompletionRequest::to_json() const {
  return json{{"prompt", prompt}, {"max_tokens", max_tokens}, {"temperature", temperature}, {"stop", stop_sequences}};
}

std::string cut_at_stop(std::string text, std::span<const std::string> stop_sequences) {
  std::size_t cut = std::string::npos;
  for (const auto& stop : stop_sequences) {
    if (stop.empty()) continue;
    cut = std::min(cut, text.find(stop));
  }
  if (cut != std::string::npos) text.resize(cut);
  return text;
}

// ---------------------------------------------------------------------------
// HTTP transports

HttpCompletionClient::HttpCompletionClient(Endpoint endpoint, std::shared_ptr<Throttle> throttle)
    : http_(std::move(endpoint), std::move(throttle)) {}

std::string HttpCompletionClient::send(const CompletionRequest& request) {
  const auto response = http_.post("/complete", request.to_json());
  const auto it = response.find("text");
  if (it == response.end() || !it->is_string()) throw ProtocolError("completion response lacks 'text'");
  return it->get<std::string>();
}

OpenAiCompletionClient::OpenAiCompletionClient(Endpoint endpoint, std::string model,
                                               std::shared_ptr<Throttle> throttle)
    : http_(std::move(endpoint), std::move(throttle)), model_(std::move(model)) {}

std::string OpenAiCompletionClient::send(const CompletionRequest& request) {
  json body{{"model", model_},
            {"prompt", request.prompt},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature}};
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  const auto response = http_.post("/v1/completions", body);
  const auto choices = response.find("choices");
  if (choices == response.end() || !choices->is_array() || choices->empty() ||
      !(*choices)[0].contains("text") || !(*choices)[0]["text"].is_string()) {
    throw ProtocolError("completion response lacks choices[0].text");
  }
  return (*choices)[0]["text"].get<std::string>();
}

namespace {

std::vector<std::vector<double>> parse_vectors(const json& list, std::size_t expected) {
  if (!list.is_array() || list.size() != expected) {
    throw ProtocolError("embedding response holds " + std::to_string(list.is_array() ? list.size() : 0) +
                        " vectors for " + std::to_string(expected) + " texts");
  }
  std::vector<std::vector<double>> out;
  out.reserve(expected);
  for (const auto& v : list) {
    if (!v.is_array()) throw ProtocolError("embedding vector is not a list");
    std::vector<double> values;
    values.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) throw ProtocolError("embedding value is not a number");
      values.push_back(x.get<double>());
    }
    out.push_back(std::move(values));
  }
  return out;
}

}  // namespace

HttpEmbeddingClient::HttpEmbeddingClient(Endpoint endpoint, std::shared_ptr<Throttle> throttle)
    : http_(std::move(endpoint), std::move(throttle)) {}

std::vector<std::vector<double>> HttpEmbeddingClient::send(std::span<const std::string> texts) {
  const auto response = http_.post("/embed", json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}});
  const auto it = response.find("vectors");
  if (it == response.end()) throw ProtocolError("embedding response lacks 'vectors'");
  return parse_vectors(*it, texts.size());
}

OpenAiEmbeddingClient::OpenAiEmbeddingClient(Endpoint endpoint, std::string model,
                                             std::shared_ptr<Throttle> throttle)
    : http_(std::move(endpoint), std::move(throttle)), model_(std::move(model)) {}

std::vector<std::vector<double>> OpenAiEmbeddingClient::send(std::span<const std::string> texts) {
  const auto response = http_.post(
      "/v1/embeddings", json{{"model", model_}, {"input", std::vector<std::string>(texts.begin(), texts.end())}});
  const auto data = response.find("data");
  if (data == response.end() || !data->is_array()) throw ProtocolError("embedding response lacks 'data'");
  json vectors = json::array();
  for (const auto& item : *data) vectors.push_back(item.value("embedding", json::array()));
  return parse_vectors(vectors, texts.size());
}

// ---------------------------------------------------------------------------
// Mocks

std::shared_ptr<MockCompletionClient> MockCompletionClient::from_fixture(const std::filesystem::path& path) {
  auto client = std::make_shared<MockCompletionClient>();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto rec = json::parse(line);
      client->add_canned_hash(rec.at("prompt_sha256").get<std::string>(), rec.at("text").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError(std::string("bad canned completion: ") + e.what(), line_no);
    }
  }
  return client;
}

void MockCompletionClient::add_canned(std::string_view prompt, std::string text) {
  add_canned_hash(sha256_hex(prompt), std::move(text));
}

void MockCompletionClient::add_canned_hash(std::string prompt_sha256, std::string text) {
  std::lock_guard lock(mutex_);
  canned_[std::move(prompt_sha256)] = std::move(text);
}

void MockCompletionClient::fail_when_contains(std::string marker) {
  std::lock_guard lock(mutex_);
  failing_.push_back(std::move(marker));
}

void MockCompletionClient::transport_fail_when_contains(std::string marker) {
  std::lock_guard lock(mutex_);
  transport_failing_.push_back(std::move(marker));
}

void MockCompletionClient::set_responder(std::function<std::string(const CompletionRequest&)> responder) {
  std::lock_guard lock(mutex_);
  responder_ = std::move(responder);
}

std::string MockCompletionClient::send(const CompletionRequest& request) {
  ++calls_;
  std::function<std::string(const CompletionRequest&)> responder;
  {
    std::lock_guard lock(mutex_);
    for (const auto& m : transport_failing_) {
      if (request.prompt.find(m) != std::string::npos) throw TransportError("mock transport failure");
    }
    for (const auto& m : failing_) {
      if (request.prompt.find(m) != std::string::npos) throw ProviderError("mock provider refused the request");
    }
    if (auto it = canned_.find(sha256_hex(request.prompt)); it != canned_.end()) return it->second;
    responder = responder_;
  }
  return responder ? responder(request) : heuristic_response(request.prompt);
}

std::string MockCompletionClient::heuristic_response(std::string_view prompt) {
  const std::string_view body = text::trim(prompt);
  const auto last_line_start = body.rfind('\n');
  const std::string_view last_line =
      last_line_start == std::string_view::npos ? body : body.substr(last_line_start + 1);

  // Decomposition cue: echo the target question as its only subquestion.
  if (last_line == "1:") {
    const auto q = body.rfind("Question:");
    if (q == std::string_view::npos) return " unanswerable";
    std::string_view rest = body.substr(q + 9);
    rest = rest.substr(0, rest.find('\n'));
    return " " + std::string(text::trim(rest));
  }

  const bool wants_evidence = text::starts_with(last_line, "Evidence:");
  const bool wants_answer = text::starts_with(last_line, "Answer:");
  if (!wants_evidence && !wants_answer) return "unanswerable";

  // Answer from the first document of the target block.
  constexpr std::string_view kDoc = "[Document 1]: Title: ";
  const auto doc = body.rfind(kDoc);
  std::string title;
  std::string first_sentence;
  if (doc != std::string_view::npos) {
    const auto line_end = body.find('\n', doc);
    const std::string rest(body.substr(doc + kDoc.size(), line_end == std::string_view::npos ? std::string_view::npos
                                                                                             : line_end - doc - kDoc.size()));
    const auto content = rest.find(". Content: ");
    title = content == std::string::npos ? rest : rest.substr(0, content);
    if (content != std::string::npos) {
      const auto sentences = split_sentences(rest.substr(content + 11));
      if (!sentences.empty()) first_sentence = sentences.front();
    }
  }
  const std::string answer = title.empty() ? std::string(kUnanswerable) : title;
  if (wants_answer) return " " + answer;
  std::string out = " According to [Document 1], ";
  out += first_sentence.empty() ? std::string("there is no usable information.") : first_sentence;
  out += "\n\nAnswer: " + answer;
  return out;
}

void MockEmbeddingClient::pin(std::string text, std::vector<double> vector) {
  std::lock_guard lock(mutex_);
  pinned_[std::move(text)] = std::move(vector);
}

std::vector<double> MockEmbeddingClient::hashed_unit_vector(std::string_view text, std::size_t dimension) {
  const std::string digest = sha256_hex(text);
  std::uint64_t seed = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    const char c = digest[i];
    seed = (seed << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
  }
  std::mt19937_64 rng(seed);
  std::vector<double> v(dimension);
  double norm = 0.0;
  for (auto& x : v) {
    // mt19937_64 output is fully specified, unlike the standard distributions.
    x = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v.assign(dimension, 0.0);
    if (dimension) v[0] = 1.0;
    return v;
  }
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> MockEmbeddingClient::send(std::span<const std::string> texts) {
  ++calls_;
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  std::lock_guard lock(mutex_);
  for (const auto& t : texts) {
    if (auto it = pinned_.find(t); it != pinned_.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(hashed_unit_vector(t, dimension_));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  {
    std::shared_lock lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  std::ifstream in(*dir_ / (key + ".json"));
  if (!in) return std::nullopt;
  try {
    const auto rec = json::parse(in);
    std::string response = rec.at("response").get<std::string>();
    std::unique_lock lock(mutex_);
    memory_.emplace(key, response);
    return response;
  } catch (const json::exception&) {
    return std::nullopt;  // unreadable entries are recomputed
  }
}

void ResponseCache::put(const std::string& key, const nlohmann::json& request, const std::string& response) {
  {
    std::unique_lock lock(mutex_);
    memory_[key] = response;
  }
  if (!dir_) return;
  const json rec{{"key", key}, {"request", request}, {"response", response}};
  std::ostringstream tag;
  tag << std::this_thread::get_id();
  const auto final_path = *dir_ / (key + ".json");
  const auto tmp_path = *dir_ / (key + ".json.tmp." + tag.str());
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry '" + tmp_path.string() + "'");
    out << rec.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
  }
  std::filesystem::rename(tmp_path, final_path);
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return memory_.size();
}

// ---------------------------------------------------------------------------
// Services

CompletionService::CompletionService(std::shared_ptr<CompletionClient> client, std::shared_ptr<ResponseCache> cache,
                                     CompletionOptions options)
    : client_(std::move(client)), cache_(std::move(cache)), options_(std::move(options)) {
  if (!client_) throw ConfigError("completion service needs a client");
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
  if (!options_.counter) options_.counter = default_token_counter();
}

std::string CompletionService::cache_key(const CompletionRequest& request) const {
  return sha256_hex(client_->identity() + "\n" + request.to_json().dump());
}

std::string CompletionService::complete(const CompletionRequest& request) {
  if (request.prompt.empty()) throw Error("completion prompt is empty");
  if (request.max_tokens == 0) throw Error("completion max_tokens must be positive");
  if (!(request.temperature >= 0.0)) throw Error("completion temperature must be non-negative");
  if (request.stop_sequences.size() > 4) throw Error("at most 4 stop sequences are allowed");
  const std::size_t prompt_tokens = options_.counter(request.prompt);
  if (prompt_tokens + request.max_tokens > options_.model_limit) {
    throw BudgetError("prompt of ~" + std::to_string(prompt_tokens) + " tokens plus " +
                      std::to_string(request.max_tokens) + " output tokens exceeds the model limit of " +
                      std::to_string(options_.model_limit));
  }

  const std::string key = cache_key(request);
  if (auto hit = cache_->get(key)) return *hit;

  std::string text = with_retry(options_.retry, [&] {
    ++network_calls_;
    return client_->send(request);
  });
  text = cut_at_stop(std::move(text), request.stop_sequences);
  cache_->put(key, request.to_json(), text);
  return text;
}

EmbeddingService::EmbeddingService(std::shared_ptr<EmbeddingClient> client, RetryPolicy retry)
    : client_(std::move(client)), retry_(retry) {
  if (!client_) throw ConfigError("embedding service needs a client");
}

std::vector<EmbeddingVector> EmbeddingService::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error("embed needs at least one text");
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> keys;
  std::vector<std::size_t> misses;
  {
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      keys.push_back(sha256_hex(texts[i]));
      if (auto it = cache_.find(keys.back()); it != cache_.end()) {
        out[i] = it->second;
      } else {
        misses.push_back(i);
      }
    }
  }
  if (misses.empty()) return out;

  // Duplicate texts within a request are sent once.
  std::vector<std::string> pending;
  std::unordered_map<std::string, std::size_t> slot_of;
  for (auto i : misses) {
    if (slot_of.emplace(keys[i], pending.size()).second) pending.push_back(texts[i]);
  }
  auto vectors = with_retry(retry_, [&] {
    ++network_calls_;
    return client_->send(pending);
  });
  if (vectors.size() != pending.size()) {
    throw ProtocolError("embedding provider returned " + std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(pending.size()) + " texts");
  }
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw ProtocolError("embedding provider returned an empty vector");
  for (const auto& v : vectors) {
    if (v.size() != dim) throw ProtocolError("embedding dimensions differ within one batch");
    for (double x : v) {
      if (!std::isfinite(x)) throw ProtocolError("embedding provider returned a non-finite value");
    }
  }

  std::unique_lock lock(mutex_);
  if (dimension_ == 0) dimension_ = dim;
  if (dim != dimension_) {
    throw ProtocolError("embedding dimension changed from " + std::to_string(dimension_) + " to " +
                        std::to_string(dim));
  }
  for (auto i : misses) {
    EmbeddingVector v{vectors[slot_of.at(keys[i])]};
    cache_[keys[i]] = v;
    out[i] = std::move(v);
  }
  return out;
}

EmbeddingVector EmbeddingService::embed_one(const std::string& text) {
  return embed(std::span<const std::string>(&text, 1)).front();
}

std::string complete(CompletionService& service, const CompletionRequest& request) {
  return service.complete(request);
}

std::vector<EmbeddingVector> embed(EmbeddingService& service, std::span<const std::string> texts) {
  return service.embed(texts);
}

}  // namespace mdqa
