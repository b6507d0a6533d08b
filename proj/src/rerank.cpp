#include "mdqa/rerank.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <unordered_set>

#include "mdqa/hashing.hpp"
#include "mdqa/index.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

std::vector<ScoredPassage> rerank(std::string_view question, std::span<const Passage> candidates,
                                  RelevanceScorer& scorer, std::size_t top_k) {
  if (candidates.empty()) throw RerankError("rerank needs at least one candidate");
  if (top_k == 0) throw RerankError("rerank top_k must be at least 1");
  {
    std::unordered_set<std::string_view> ids;
    for (const auto& c : candidates) {
      if (!ids.insert(c.id).second) throw RerankError("duplicate candidate id '" + c.id + "'");
    }
  }

  std::vector<double> scores;
  try {
    scores = scorer.score(question, candidates);
  } catch (const Error& e) {
    throw RerankError("scorer '" + scorer.identity() + "' failed: " + e.what());
  }
  if (scores.size() != candidates.size()) {
    throw RerankError("scorer '" + scorer.identity() + "' returned " + std::to_string(scores.size()) +
                      " scores for " + std::to_string(candidates.size()) + " candidates");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw RerankError("scorer '" + scorer.identity() + "' returned a non-finite score");
  }

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(top_k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return candidates[a].id < candidates[b].id;
                    });
  std::vector<ScoredPassage> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back(ScoredPassage{candidates[order[i]], scores[order[i]], i + 1});
  }
  return out;
}

double fallback_score(std::string_view question, const Passage& passage) {
  const auto q_terms = tokenize(question);
  const std::unordered_set<std::string> q_unique(q_terms.begin(), q_terms.end());
  if (q_unique.empty()) return 0.0;
  const auto p_terms = tokenize(passage.text);
  const std::unordered_set<std::string> p_unique(p_terms.begin(), p_terms.end());
  std::size_t shared = 0;
  for (const auto& t : q_unique) shared += p_unique.count(t);
  return static_cast<double>(shared) / static_cast<double>(q_unique.size());
}

std::vector<double> FallbackScorer::score(std::string_view question, std::span<const Passage> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(fallback_score(question, c));
  return out;
}

std::string format_scorer_input(std::string_view question, std::string_view title, std::string_view text) {
  std::string out;
  out.reserve(question.size() + title.size() + text.size() + 32);
  out.append("Query: ").append(question).append(" Document: ").append(title).append(". ").append(text);
  out.append(" Relevant:");
  return out;
}

// ---------------------------------------------------------------------------

void RerankRequest::validate() const {
  if (candidates.empty()) throw RerankError("rerank request has no candidates");
  std::unordered_set<std::string_view> ids;
  for (const auto& c : candidates) {
    if (!ids.insert(c.id).second) throw RerankError("duplicate candidate id '" + c.id + "'");
  }
}

ScorerClient::ScorerClient(Endpoint endpoint, ScorerClientOptions options, std::shared_ptr<Throttle> throttle)
    : http_(std::move(endpoint), std::move(throttle)), options_(options) {
  if (options_.batch_size == 0) throw ConfigError("scorer batch_size must be at least 1");
}

std::vector<double> ScorerClient::send(const std::string& query, std::span<const RerankDocument> batch) const {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& d : batch) docs.push_back({{"id", d.id}, {"title", d.title}, {"text", d.text}});
  const auto response = http_.post("/rescore", {{"query", query}, {"documents", docs}});
  const auto it = response.find("scores");
  if (it == response.end() || !it->is_array()) throw ProtocolError("rescore response lacks a 'scores' list");
  if (it->size() != batch.size()) {
    throw ProtocolError("rescore returned " + std::to_string(it->size()) + " scores for " +
                        std::to_string(batch.size()) + " documents");
  }
  std::vector<double> scores;
  scores.reserve(batch.size());
  for (const auto& v : *it) {
    if (!v.is_number()) throw ProtocolError("rescore score is not a number");
    const double s = v.get<double>();
    if (!std::isfinite(s)) throw ProtocolError("rescore score is not finite");
    if (s > 0.0) throw ProtocolError("rescore score " + std::to_string(s) + " is not a log-probability");
    scores.push_back(s);
  }
  return scores;
}

std::vector<double> remote_score(const ScorerClient& client, const RerankRequest& request) {
  request.validate();
  const std::size_t batch = client.options().batch_size;
  std::vector<double> scores;
  scores.reserve(request.candidates.size());
  for (std::size_t begin = 0; begin < request.candidates.size(); begin += batch) {
    const std::size_t n = std::min(batch, request.candidates.size() - begin);
    const std::span<const RerankDocument> slice(request.candidates.data() + begin, n);
    auto part = with_retry(client.options().retry, [&] { return client.send(request.query, slice); });
    scores.insert(scores.end(), part.begin(), part.end());
  }
  return scores;
}

std::vector<double> RemoteScorer::score(std::string_view question, std::span<const Passage> candidates) {
  RerankRequest request;
  request.query = std::string(question);
  request.candidates.reserve(candidates.size());
  const std::size_t cap = client_->options().max_chars;
  for (const auto& p : candidates) {
    std::string_view body = p.text;
    if (text::utf8_length(body) > cap) {
      spdlog::warn("passage '{}' exceeds the scorer cap of {} characters; truncating", p.id, cap);
      body = text::utf8_prefix(body, cap);
    }
    request.candidates.push_back(RerankDocument{p.id, p.title, std::string(body)});
  }
  return remote_score(*client_, request);
}

std::string CachingScorer::key(std::string_view question, const Passage& p) const {
  std::string content = p.title;
  content.push_back('\0');
  content.append(p.text);
  std::string k = inner_->identity();
  k.push_back('\0');
  k.append(question);
  k.push_back('\0');
  k.append(p.id);
  k.push_back('\0');
  k.append(sha256_hex(content));
  return sha256_hex(k);
}

std::vector<double> CachingScorer::score(std::string_view question, std::span<const Passage> candidates) {
  std::vector<double> out(candidates.size(), 0.0);
  std::vector<std::string> keys;
  keys.reserve(candidates.size());
  std::vector<std::size_t> misses;
  {
    std::shared_lock lock(mutex_);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      keys.push_back(key(question, candidates[i]));
      if (auto it = cache_.find(keys.back()); it != cache_.end()) {
        out[i] = it->second;
      } else {
        misses.push_back(i);
      }
    }
  }
  if (misses.empty()) return out;

  std::vector<Passage> pending;
  pending.reserve(misses.size());
  for (auto i : misses) pending.push_back(candidates[i]);
  const auto fresh = inner_->score(question, pending);
  if (fresh.size() != pending.size()) {
    throw ProtocolError("scorer returned " + std::to_string(fresh.size()) + " scores for " +
                        std::to_string(pending.size()) + " candidates");
  }
  std::unique_lock lock(mutex_);
  for (std::size_t j = 0; j < misses.size(); ++j) {
    out[misses[j]] = fresh[j];
    cache_[keys[misses[j]]] = fresh[j];
  }
  return out;
}

std::size_t CachingScorer::cached_entries() const {
  std::shared_lock lock(mutex_);
  return cache_.size();
}

}  // namespace mdqa
