#include "mdqa/prompting.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "mdqa/error.hpp"
#include "mdqa/json_io.hpp"
#include "mdqa/templates.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

void TokenBudget::validate() const {
  if (model_limit == 0) throw ConfigError("budget model_limit must be positive");
  if (reserved_output == 0) throw ConfigError("budget reserved_output must be positive");
  if (reserved_output >= model_limit) throw ConfigError("budget reserved_output must be below model_limit");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ProtocolError("cosine similarity of vectors with different dimensions");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::size_t> knn_rank(std::string_view question, std::span<const PromptExample> pool, std::size_t k,
                                  EmbeddingService& embedder) {
  if (pool.empty()) throw Error("knn selection needs a non-empty example pool");
  if (k == 0) return {};

  std::vector<std::string> texts{std::string(question)};
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].embedding) {
      missing.push_back(i);
      texts.push_back(pool[i].question);
    }
  }
  const auto vectors = embedder.embed(texts);
  const auto& query = vectors.front().values;

  std::vector<double> sims(pool.size());
  std::size_t next_missing = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].embedding) {
      sims[i] = cosine_similarity(query, pool[i].embedding->values);
    } else {
      sims[i] = cosine_similarity(query, vectors[1 + next_missing++].values);
    }
  }

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return a < b;
                    });
  order.resize(take);
  return order;
}

std::vector<PromptExample> knn_select(std::string_view question, std::span<const PromptExample> pool, std::size_t k,
                                      EmbeddingService& embedder) {
  const auto ranked = knn_rank(question, pool, k, embedder);
  std::vector<PromptExample> out;
  out.reserve(ranked.size());
  for (auto it = ranked.rbegin(); it != ranked.rend(); ++it) out.push_back(pool[*it]);
  return out;
}

std::string render_context_block(std::span<const ContextDoc> contexts) {
  std::string out;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (i) out += "\n\n";
    out += "[Document " + std::to_string(i + 1) + "]: Title: " + contexts[i].title + ". Content: " + contexts[i].text;
  }
  return out;
}

namespace {

std::string cap_text(const std::string& text, std::size_t cap_tokens, const TokenCounter& counter) {
  if (counter(text) <= cap_tokens) return text;
  std::size_t lo = 0;
  std::size_t hi = text::utf8_length(text);
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (counter(text::utf8_prefix(text, mid)) <= cap_tokens) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return std::string(text::utf8_prefix(text, lo));
}

std::vector<ContextDoc> capped(std::span<const ContextDoc> docs, std::optional<std::size_t> cap,
                               const TokenCounter& counter, bool& changed) {
  std::vector<ContextDoc> out(docs.begin(), docs.end());
  if (!cap) return out;
  for (auto& d : out) {
    auto t = cap_text(d.text, *cap, counter);
    if (t.size() != d.text.size()) {
      changed = true;
      d.text = std::move(t);
    }
  }
  return out;
}

}  // namespace

BuiltPrompt build_aggregation_prompt(std::span<const PromptExample> examples, std::span<const ScoredPassage> contexts,
                                     std::string_view question, const AggregationOptions& options) {
  if (contexts.empty()) throw Error("aggregation prompt needs at least one context");
  options.budget.validate();
  const TokenCounter counter = options.counter ? options.counter : default_token_counter();
  for (const auto& ex : examples) {
    if (ex.answer.empty()) throw Error("prompt example '" + ex.id + "' has no answer");
    if (options.cot && ex.evidence.empty()) {
      throw Error("prompt example '" + ex.id + "' has no evidence but chain-of-thought is on");
    }
  }

  std::vector<ContextDoc> target_docs;
  target_docs.reserve(contexts.size());
  for (const auto& c : contexts) target_docs.push_back(ContextDoc{c.passage.title, c.passage.text});

  const std::string_view header =
      options.cot ? templates::kAggregationHeaderCot : templates::kAggregationHeaderPlain;

  auto render = [&](std::size_t first_example, std::size_t n_contexts, std::optional<std::size_t> cap,
                    bool& truncated) {
    std::string out(header);
    std::size_t number = 1;
    for (std::size_t e = first_example; e < examples.size(); ++e, ++number) {
      const auto& ex = examples[e];
      out += "\nExample " + std::to_string(number) + ":\n\n";
      if (!ex.contexts.empty()) out += render_context_block(capped(ex.contexts, cap, counter, truncated)) + "\n\n";
      out += "Question: " + ex.question + "\n\n";
      if (options.cot) out += "Evidence: " + ex.evidence + "\n\n";
      out += "Answer: " + ex.answer + "\n";
    }
    out += "\nExample " + std::to_string(number) + ":\n\n";
    const auto docs = capped(std::span(target_docs).first(n_contexts), cap, counter, truncated);
    out += render_context_block(docs) + "\n\n";
    out += "Question: ";
    out += question;
    out += "\n\n";
    out += options.cot ? "Evidence:" : "Answer:";
    return out;
  };

  const std::size_t limit = options.budget.prompt_limit();
  std::size_t first_example = 0;
  std::size_t n_contexts = target_docs.size();
  std::optional<std::size_t> cap;
  bool truncated = false;

  auto attempt = [&]() -> std::optional<BuiltPrompt> {
    bool t = false;
    std::string text = render(first_example, n_contexts, cap, t);
    const std::size_t tokens = counter(text);
    if (tokens > limit) return std::nullopt;
    truncated = t;
    return BuiltPrompt{std::move(text), examples.size() - first_example, n_contexts, truncated, tokens};
  };

  if (auto p = attempt()) return *p;
  cap = options.per_passage_cap_tokens;
  if (auto p = attempt()) return *p;
  while (n_contexts > 1) {
    --n_contexts;
    if (auto p = attempt()) return *p;
  }
  while (first_example < examples.size()) {
    ++first_example;
    if (auto p = attempt()) return *p;
  }
  throw BudgetError("prompt does not fit " + std::to_string(limit) +
                    " tokens even with one capped context and no examples");
}

AggregationOutput parse_aggregation_output(std::string_view completion, bool cot) {
  constexpr std::string_view kMarker = "Answer:";
  AggregationOutput out;
  const auto pos = completion.rfind(kMarker);
  if (pos == std::string_view::npos) {
    if (cot) throw ParseError("completion has no 'Answer:' marker");
    out.answer = std::string(text::trim(completion));
    return out;
  }
  std::string_view answer = text::trim(completion.substr(pos + kMarker.size()));
  answer = text::trim(answer.substr(0, answer.find('\n')));
  out.answer = std::string(answer);
  if (cot) {
    std::string_view evidence = text::trim(completion.substr(0, pos));
    if (text::starts_with(evidence, "Evidence:")) evidence = text::trim(evidence.substr(9));
    out.evidence = std::string(evidence);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pools

namespace {

PromptExample example_from_json(const Json& r) {
  PromptExample ex;
  ex.id = require_string(r, "id");
  ex.question = require_string(r, "question");
  ex.answer = require_string(r, "answer");
  if (ex.answer.empty()) throw DataError("example '" + ex.id + "' has an empty answer");
  if (auto it = r.find("evidence"); it != r.end() && !it->is_null()) ex.evidence = require_string(r, "evidence");
  if (auto it = r.find("contexts"); it != r.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("field 'contexts' must be a list");
    for (const auto& c : *it) ex.contexts.push_back(ContextDoc{require_string(c, "title"), require_string(c, "contents")});
  }
  if (auto it = r.find("embedding"); it != r.end() && !it->is_null()) {
    EmbeddingVector v;
    try {
      v.values = it->get<std::vector<double>>();
    } catch (const Json::exception&) {
      throw DataError("field 'embedding' must be a list of numbers");
    }
    ex.embedding = std::move(v);
  }
  return ex;
}

}  // namespace

std::vector<PromptExample> read_example_pool(std::istream& in) {
  std::vector<PromptExample> pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      pool.push_back(example_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      throw DataError(std::string("malformed example: ") + e.what(), line_no);
    } catch (const DataError& e) {
      throw DataError(e.what(), line_no);
    }
  }
  return pool;
}

std::vector<PromptExample> load_example_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_example_pool(in);
}

void write_example(std::ostream& out, const PromptExample& ex) {
  Json contexts = Json::array();
  for (const auto& c : ex.contexts) contexts.push_back({{"title", c.title}, {"contents", c.text}});
  Json r{{"id", ex.id},
         {"question", ex.question},
         {"contexts", contexts},
         {"evidence", ex.evidence},
         {"answer", ex.answer}};
  if (ex.embedding) r["embedding"] = ex.embedding->values;
  out << dump_line(r) << '\n';
}

std::vector<ContextDoc> gold_contexts(const QaInstance& instance, const PassageStore& store) {
  std::vector<ContextDoc> out;
  for (const auto& set : instance.gold_evidence_ids) {
    if (set.empty()) continue;
    for (const auto& id : set) {
      for (const Passage* p : store.resolve(id)) out.push_back(ContextDoc{p->title, p->text});
    }
    break;
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  count = std::min(count, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with rejection sampling; std distributions are not
  // reproducible across standard libraries.
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t range = n - i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(idx[i], idx[i + static_cast<std::size_t>(r % range)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::string build_bootstrap_prompt(const TrainingItem& item) {
  std::string out(templates::kBootstrapHeader);
  out += "\n";
  if (!item.contexts.empty()) out += render_context_block(item.contexts) + "\n\n";
  out += "Question: " + item.instance.question + "\n\n";
  out += "Answer: " + item.instance.gold_answers.front() + "\n\n";
  out += "Evidence:";
  return out;
}

BootstrapResult bootstrap_example_pool(std::span<const TrainingItem> training, CompletionService& service,
                                       double fraction, std::uint64_t seed,
                                       const std::function<void(const PromptExample&)>& sink) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("bootstrap fraction must lie in (0, 1]");
  BootstrapResult result;
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(training.size())));
  const auto chosen = sample_indices(training.size(), count, seed);
  result.sampled = chosen.size();

  for (std::size_t i : chosen) {
    const TrainingItem& item = training[i];
    if (item.contexts.empty() || item.instance.gold_answers.empty()) {
      throw DataError("training item '" + item.instance.question_id + "' lacks gold contexts or answers");
    }
    CompletionRequest request;
    request.prompt = build_bootstrap_prompt(item);
    request.max_tokens = 256;
    request.stop_sequences = {"Question:"};
    std::string evidence;
    try {
      const std::string completion = service.complete(request);
      std::string_view body = completion;
      if (auto marker = body.find("Answer:"); marker != std::string_view::npos) body = body.substr(0, marker);
      evidence = std::string(text::trim(body));
    } catch (const ProviderUnavailable& e) {
      throw BootstrapAborted(std::string("bootstrap aborted: ") + e.what(), result.pool.size());
    } catch (const Error& e) {
      spdlog::warn("skipping '{}': {}", item.instance.question_id, e.what());
    }
    if (evidence.empty()) {
      ++result.skipped;
      continue;
    }
    PromptExample ex{item.instance.question_id, item.contexts, item.instance.question, std::move(evidence),
                     item.instance.gold_answers.front(), std::nullopt};
    if (sink) sink(ex);
    result.pool.push_back(std::move(ex));
  }
  if (result.skipped) spdlog::info("bootstrap skipped {} of {} sampled instances", result.skipped, result.sampled);
  return result;
}

}  // namespace mdqa
