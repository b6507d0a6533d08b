#include "mdqa/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_set>

#include "mdqa/hashing.hpp"
#include "mdqa/json_io.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

using nlohmann::json;

std::string Bm25Retriever::identity() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "bm25(k1=%g,b=%g)", index_.params().k1, index_.params().b);
  return buf;
}

std::vector<SearchHit> Bm25Retriever::search(std::string_view query, std::size_t k,
                                             const std::unordered_set<std::string>* allowed_articles) {
  return mdqa::search(index_, query, k, allowed_articles);
}

void check_services(const RunConfig& config, const Services& s) {
  config.validate();
  if (!s.store) throw ConfigError("no passage store configured");
  if (!s.completion) throw ConfigError("no completion provider configured");
  if (config.context_source == ContextSource::full_retrieval ||
      config.context_source == ContextSource::linked_intersection) {
    if (!s.retriever) throw ConfigError(std::string(to_string(config.context_source)) + " needs an index");
  }
  if (config.context_source != ContextSource::gold && !s.scorer) {
    throw ConfigError(std::string(to_string(config.context_source)) + " needs a relevance scorer");
  }
  if (config.shots > 0 && s.example_pool.empty()) {
    throw ConfigError(std::string(to_string(config.prompt_mode)) + " prompts with shots=" +
                      std::to_string(config.shots) + " need a non-empty example pool");
  }
  if (config.prompt_mode == PromptMode::dynamic && config.shots > 0 && !s.embedder) {
    throw ConfigError("dynamic prompts need an embedding provider");
  }
}

std::string corpus_hash(std::span<const Passage> passages) {
  std::string buf;
  for (const auto& p : passages) {
    buf += sha256_hex(p.id + '\0' + p.article_id + '\0' + p.title + '\0' + p.text);
    buf += '\n';
  }
  return sha256_hex(buf);
}

std::vector<ScoredPassage> interleave_merge(const std::vector<std::vector<ScoredPassage>>& lists, std::size_t limit) {
  std::vector<ScoredPassage> out;
  std::unordered_set<std::string> seen;
  std::size_t depth = 0;
  for (const auto& l : lists) depth = std::max(depth, l.size());
  for (std::size_t r = 0; r < depth && out.size() < limit; ++r) {
    for (const auto& l : lists) {
      if (r >= l.size() || out.size() >= limit) continue;
      if (!seen.insert(l[r].passage.id).second) continue;
      out.push_back(l[r]);
      out.back().rank = out.size();
    }
  }
  return out;
}

namespace {

std::vector<ScoredPassage> gold_passages(const QaInstance& instance, const PassageStore& store) {
  std::vector<ScoredPassage> out;
  std::unordered_set<std::string> seen;
  for (const auto& set : instance.gold_evidence_ids) {
    if (set.empty()) continue;
    for (const auto& id : set) {
      for (const Passage* p : store.resolve(id)) {
        if (!seen.insert(p->id).second) continue;
        out.push_back(ScoredPassage{*p, 0.0, out.size() + 1});
      }
    }
    break;
  }
  if (out.empty()) throw Error("gold: question '" + instance.question_id + "' has no gold evidence");
  return out;
}

std::vector<ContextRef> refs_of(std::span<const ScoredPassage> passages) {
  std::vector<ContextRef> out;
  out.reserve(passages.size());
  for (const auto& p : passages) out.push_back(ContextRef{p.passage.id, p.passage.article_id, p.relevance, p.rank});
  return out;
}

json to_json(const std::vector<ContextRef>& refs) {
  json out = json::array();
  for (const auto& c : refs) {
    out.push_back({{"id", c.passage_id}, {"article_id", c.article_id}, {"score", c.relevance}, {"rank", c.rank}});
  }
  return out;
}

std::vector<ContextRef> refs_from_json(const json& j) {
  std::vector<ContextRef> out;
  for (const auto& c : j) {
    out.push_back(ContextRef{c.at("id").get<std::string>(), c.value("article_id", ""), c.value("score", 0.0),
                             c.value("rank", std::size_t{0})});
  }
  return out;
}

}  // namespace

RetrievedContexts retrieve_with_log(const Decomposition& decomposition, const RunConfig& config, const Services& s,
                                    const QaInstance& instance) {
  RetrievedContexts result;
  if (config.context_source == ContextSource::gold) {
    result.contexts = gold_passages(instance, *s.store);
    return result;
  }

  const std::string mode(to_string(config.context_source));
  std::unordered_set<std::string> linked;
  if (config.context_source == ContextSource::linked_intersection) {
    linked.insert(instance.linked_article_ids.begin(), instance.linked_article_ids.end());
  }
  std::vector<Passage> grounding;
  if (config.context_source == ContextSource::rerank_only) {
    if (!instance.grounding_article_id) {
      throw Error("rerank_only: question '" + instance.question_id + "' has no grounding article");
    }
    for (const Passage* p : s.store->by_article(*instance.grounding_article_id)) grounding.push_back(*p);
  }

  const std::size_t depth = std::max(config.contexts_per_question, config.retrieval_log_depth);
  std::vector<std::vector<ScoredPassage>> top_k, logged;
  for (const auto& sub : decomposition.subquestions) {
    std::vector<Passage> candidates;
    if (config.context_source == ContextSource::rerank_only) {
      candidates = grounding;
    } else {
      if (s.stats) ++s.stats->retriever_calls;
      const auto hits = s.retriever->search(
          sub, config.bm25_depth, config.context_source == ContextSource::linked_intersection ? &linked : nullptr);
      candidates.reserve(hits.size());
      for (const auto& h : hits) candidates.push_back(s.store->at(h.passage_id));
    }
    if (candidates.empty()) throw Error(mode + ": no candidate passages for subquestion '" + sub + "'");
    if (s.stats) ++s.stats->scorer_calls;
    auto ranked = rerank(sub, candidates, *s.scorer, depth);
    logged.emplace_back(ranked.begin(), ranked.begin() + std::min(ranked.size(), config.retrieval_log_depth));
    ranked.resize(std::min(ranked.size(), config.contexts_per_question));
    top_k.push_back(std::move(ranked));
  }
  result.contexts = interleave_merge(top_k);
  result.retrieval_log = interleave_merge(logged);
  return result;
}

std::vector<ScoredPassage> retrieve_contexts(const Decomposition& decomposition, const RunConfig& config,
                                             const Services& services, const QaInstance& instance) {
  return retrieve_with_log(decomposition, config, services, instance).contexts;
}

std::string_view to_string(RecordStatus status) noexcept {
  switch (status) {
    case RecordStatus::ok: return "ok";
    case RecordStatus::parse_failed: return "parse_failed";
    case RecordStatus::failed: return "failed";
  }
  return "failed";
}

json to_json(const AnswerRecord& r, bool with_timings) {
  json j{{"question_id", r.question_id},
         {"question", r.question},
         {"subquestions", r.subquestions},
         {"decomposed", r.decomposed},
         {"contexts_used", to_json(r.contexts_used)},
         {"retrieval_log", to_json(r.retrieval_log)},
         {"examples_used", r.examples_used},
         {"prompt_hash", r.prompt_hash},
         {"completion", r.completion},
         {"evidence", r.evidence},
         {"answer", r.answer},
         {"status", std::string(to_string(r.status))}};
  if (r.status == RecordStatus::failed) {
    j["error_stage"] = r.error_stage;
    j["error"] = r.error;
  }
  if (with_timings) j["timings_ms"] = r.timings_ms;
  return j;
}

AnswerRecord answer_record_from_json(const json& j) {
  AnswerRecord r;
  try {
    r.question_id = require_string(j, "question_id");
    r.question = j.value("question", "");
    r.subquestions = j.value("subquestions", std::vector<std::string>{});
    r.decomposed = j.value("decomposed", false);
    r.contexts_used = refs_from_json(j.value("contexts_used", json::array()));
    r.retrieval_log = refs_from_json(j.value("retrieval_log", json::array()));
    r.examples_used = j.value("examples_used", std::vector<std::string>{});
    r.prompt_hash = j.value("prompt_hash", "");
    r.completion = j.value("completion", "");
    r.evidence = j.value("evidence", "");
    r.answer = j.value("answer", "");
    const auto status = j.value("status", "ok");
    if (status == "ok") {
      r.status = RecordStatus::ok;
    } else if (status == "parse_failed") {
      r.status = RecordStatus::parse_failed;
    } else if (status == "failed") {
      r.status = RecordStatus::failed;
    } else {
      throw DataError("unknown record status '" + status + "'");
    }
    r.error_stage = j.value("error_stage", "");
    r.error = j.value("error", "");
    r.timings_ms = j.value("timings_ms", std::map<std::string, double>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed answer record: ") + e.what());
  }
  return r;
}

std::vector<AnswerRecord> read_answer_records(std::istream& in) {
  std::vector<AnswerRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(answer_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), n);
    } catch (const DataError& e) {
      throw DataError(e.what(), n);
    }
  }
  return out;
}

std::vector<AnswerRecord> load_answer_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return read_answer_records(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

class StageTimer {
 public:
  StageTimer(AnswerRecord& record, std::string stage) : record_(record), stage_(std::move(stage)) {}
  ~StageTimer() {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    record_.timings_ms[stage_] = std::chrono::duration<double, std::milli>(elapsed).count();
  }
  const std::string& stage() const noexcept { return stage_; }

 private:
  AnswerRecord& record_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <typename F>
auto in_stage(AnswerRecord& record, const char* stage, F&& f) {
  StageTimer timer(record, stage);
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

AnswerRecord answer_question(const QaInstance& instance, const RunConfig& config, const Services& s) {
  AnswerRecord record;
  record.question_id = instance.question_id;
  record.question = instance.question;

  const Decomposition decomposition = in_stage(record, "decompose", [&] {
    return decompose(instance.question, *s.completion, config.decomposition_enabled, s.decomposition_examples);
  });
  record.subquestions = decomposition.subquestions;
  record.decomposed = decomposition.decomposed;

  RetrievedContexts retrieved =
      in_stage(record, "retrieve", [&] { return retrieve_with_log(decomposition, config, s, instance); });
  record.retrieval_log = refs_of(retrieved.retrieval_log);

  const std::vector<PromptExample> examples = in_stage(record, "select_examples", [&] {
    const std::size_t shots = std::min(config.shots, s.example_pool.size());
    if (shots == 0) return std::vector<PromptExample>{};
    if (config.prompt_mode == PromptMode::fixed) {
      return std::vector<PromptExample>(s.example_pool.begin(), s.example_pool.begin() + shots);
    }
    return knn_select(instance.question, s.example_pool, shots, *s.embedder);
  });

  AggregationOptions options;
  options.cot = config.cot;
  options.budget = config.budget;
  options.per_passage_cap_tokens = config.per_passage_cap_tokens;
  options.counter = s.counter;
  const BuiltPrompt prompt = in_stage(record, "build_prompt", [&] {
    return build_aggregation_prompt(examples, retrieved.contexts, instance.question, options);
  });
  record.prompt_hash = sha256_hex(prompt.text);
  record.contexts_used = refs_of(std::span(retrieved.contexts).first(prompt.contexts_used));
  for (std::size_t i = examples.size() - prompt.examples_used; i < examples.size(); ++i) {
    record.examples_used.push_back(examples[i].id);
  }

  record.completion = in_stage(record, "complete", [&] {
    CompletionRequest request;
    request.prompt = prompt.text;
    request.max_tokens = config.budget.reserved_output;
    request.temperature = 0.0;
    request.stop_sequences = {"\nExample"};
    return s.completion->complete(request);
  });

  StageTimer timer(record, "parse");
  try {
    const AggregationOutput out = parse_aggregation_output(record.completion, config.cot);
    record.evidence = out.evidence;
    record.answer = out.answer;
    if (record.answer.empty()) record.status = RecordStatus::parse_failed;
  } catch (const ParseError& e) {
    record.status = RecordStatus::parse_failed;
    spdlog::warn("question '{}': {}", instance.question_id, e.what());
  }
  return record;
}

BatchResult run_batch(std::span<const QaInstance> instances, const RunConfig& config, const Services& services,
                      const ProgressFn& progress) {
  check_services(config, services);
  BatchResult result;
  result.records.resize(instances.size());

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      const QaInstance& q = instances[i];
      try {
        result.records[i] = answer_question(q, config, services);
      } catch (const std::exception& e) {
        AnswerRecord failed;
        failed.question_id = q.question_id;
        failed.question = q.question;
        failed.status = RecordStatus::failed;
        if (const auto* se = dynamic_cast<const StageError*>(&e)) {
          failed.error_stage = se->stage();
          failed.error = se->detail();
        } else {
          failed.error = e.what();
        }
        spdlog::error("question '{}' failed: {}", q.question_id, e.what());
        result.records[i] = std::move(failed);
      }
      const std::size_t finished = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, instances.size());
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(config.parallelism, std::max<std::size_t>(instances.size(), 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::size_t ok = 0;
  for (const auto& r : result.records) {
    if (r.status == RecordStatus::failed) ++result.failed;
    if (r.status == RecordStatus::parse_failed) ++result.parse_failed;
    if (r.status == RecordStatus::ok) ++ok;
  }
  json providers{{"completion", services.completion->identity()}};
  providers["embedding"] = services.embedder ? json(services.embedder->identity()) : json(nullptr);
  providers["scorer"] = services.scorer ? json(services.scorer->identity()) : json(nullptr);
  providers["retriever"] = services.retriever ? json(services.retriever->identity()) : json(nullptr);
  json calls{{"completion_network", services.completion->network_calls()}};
  calls["embedding_network"] = services.embedder ? services.embedder->network_calls() : 0;
  if (services.stats) {
    calls["retriever"] = services.stats->retriever_calls.load();
    calls["scorer"] = services.stats->scorer_calls.load();
  }
  result.manifest = json{{"config", to_json(config)},
                         {"config_hash", config_hash(config)},
                         {"corpus_hash", services.corpus_hash},
                         {"providers", providers},
                         {"counts",
                          {{"instances", instances.size()},
                           {"ok", ok},
                           {"parse_failed", result.parse_failed},
                           {"failed", result.failed}}},
                         {"calls", calls}};
  return result;
}

}  // namespace mdqa
