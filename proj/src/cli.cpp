#include "mdqa/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>

#include "mdqa/config.hpp"
#include "mdqa/corpus.hpp"
#include "mdqa/datasets.hpp"
#include "mdqa/decompose.hpp"
#include "mdqa/eval.hpp"
#include "mdqa/index.hpp"
#include "mdqa/json_io.hpp"
#include "mdqa/pipeline.hpp"
#include "mdqa/prompting.hpp"
#include "mdqa/providers.hpp"
#include "mdqa/rerank.hpp"

#ifndef MDQA_DATA_DIR
#define MDQA_DATA_DIR "data"
#endif

namespace mdqa {

namespace fs = std::filesystem;

namespace {

/// Flag values that override the config file when given.
struct RunOverrides {
  std::optional<std::string> context_source;
  std::optional<std::size_t> shots;
  std::optional<std::string> prompt_mode;
  bool cot = false;
  bool no_cot = false;
  bool no_decomposition = false;
  std::optional<std::size_t> k;
  std::optional<std::size_t> bm25_depth;
  std::optional<std::size_t> parallelism;
  std::optional<std::size_t> model_limit;
  std::optional<std::size_t> reserved_output;
};

struct InputOverrides {
  std::string config_path;
  bool mock = false;
  std::optional<std::string> index;
  std::vector<std::string> passages;
  std::optional<std::string> example_pool;
  std::optional<std::string> decomposition_examples;
  std::optional<std::string> mock_completions;
};

void add_input_flags(CLI::App* cmd, InputOverrides& in) {
  cmd->add_option("--config", in.config_path, "JSON config file (flags override its values)")->check(CLI::ExistingFile);
  cmd->add_flag("--mock-providers", in.mock, "Use offline mock completion, embedding and scoring services");
  cmd->add_option("--index", in.index, "Index snapshot (overrides inputs.index)");
  cmd->add_option("--passages", in.passages, "Extra passage JSONL files (added to inputs.passages)")->default_str("none");
  cmd->add_option("--example-pool", in.example_pool, "Few-shot example pool JSONL");
  cmd->add_option("--decomposition-examples", in.decomposition_examples, "Decomposition examples JSONL");
  cmd->add_option("--mock-completions", in.mock_completions, "Canned completions for --mock-providers");
}

void add_run_flags(CLI::App* cmd, RunOverrides& o) {
  cmd->add_option("--context-source", o.context_source,
                  "gold | linked_intersection | full_retrieval | rerank_only (default full_retrieval)");
  cmd->add_option("--shots", o.shots, "Few-shot examples per prompt (default 4)");
  cmd->add_option("--prompt-mode", o.prompt_mode, "static | dynamic (default dynamic)");
  auto* cot = cmd->add_flag("--cot", o.cot, "Ask for an evidence paragraph before the answer (default)");
  auto* no_cot = cmd->add_flag("--no-cot", o.no_cot, "Ask for the answer directly");
  cot->excludes(no_cot);
  cmd->add_flag("--no-decomposition", o.no_decomposition, "Use the question as its only subquestion");
  cmd->add_option("-k,--contexts-per-question", o.k, "Contexts kept per subquestion (default 5)");
  cmd->add_option("--bm25-depth", o.bm25_depth, "BM25 candidates reranked per subquestion (default 1000)");
  cmd->add_option("--parallelism", o.parallelism, "Questions answered concurrently (default 4)");
  cmd->add_option("--model-limit", o.model_limit, "Prompt plus output token limit (default 4000)");
  cmd->add_option("--reserved-output", o.reserved_output, "Tokens reserved for the answer (default 512)");
}

AppConfig load_config(const InputOverrides& in, const RunOverrides* o) {
  AppConfig app = in.config_path.empty() ? AppConfig{} : load_app_config(in.config_path);
  if (in.index) app.index_path = *in.index;
  for (const auto& p : in.passages) app.passage_paths.emplace_back(p);
  if (in.example_pool) app.example_pool_path = *in.example_pool;
  if (in.decomposition_examples) app.decomposition_examples_path = *in.decomposition_examples;
  if (in.mock_completions) app.mock_completions_path = *in.mock_completions;
  if (!o) return app;

  RunConfig& c = app.run;
  if (o->context_source) {
    auto s = parse_context_source(*o->context_source);
    if (!s) throw ConfigError("invalid context_source '" + *o->context_source + "'");
    c.context_source = *s;
  }
  if (o->prompt_mode) {
    auto m = parse_prompt_mode(*o->prompt_mode);
    if (!m) throw ConfigError("invalid prompt_mode '" + *o->prompt_mode + "'");
    c.prompt_mode = *m;
  }
  if (o->shots) c.shots = *o->shots;
  if (o->cot) c.cot = true;
  if (o->no_cot) c.cot = false;
  if (o->no_decomposition) c.decomposition_enabled = false;
  if (o->k) c.contexts_per_question = *o->k;
  if (o->bm25_depth) c.bm25_depth = *o->bm25_depth;
  if (o->parallelism) c.parallelism = *o->parallelism;
  if (o->model_limit) c.budget.model_limit = *o->model_limit;
  if (o->reserved_output) c.budget.reserved_output = *o->reserved_output;
  c.validate();
  return app;
}

struct Providers {
  std::shared_ptr<CompletionService> completion;
  std::shared_ptr<EmbeddingService> embedder;
  std::shared_ptr<RelevanceScorer> scorer;
};

Endpoint endpoint_of(const ProviderEndpointConfig& c) {
  Endpoint e;
  e.url = c.url;
  if (!c.api_key_env.empty()) e.api_key = api_key_from_env(c.api_key_env);
  return e;
}

/// Completion is always built; embedding and scoring only when configured
/// (scoring falls back to token overlap).
Providers make_providers(const AppConfig& app, bool mock) {
  Providers p;
  CompletionOptions options;
  options.model_limit = app.run.budget.model_limit;
  options.retry = app.providers.retry;
  if (mock) {
    auto client = app.mock_completions_path ? MockCompletionClient::from_fixture(*app.mock_completions_path)
                                            : std::make_shared<MockCompletionClient>();
    p.completion = std::make_shared<CompletionService>(client, std::make_shared<ResponseCache>(), options);
    p.embedder = std::make_shared<EmbeddingService>(std::make_shared<MockEmbeddingClient>(), app.providers.retry);
    p.scorer = std::make_shared<FallbackScorer>();
    return p;
  }

  const auto& pc = app.providers;
  auto throttle = std::make_shared<Throttle>(pc.max_in_flight, pc.requests_per_minute);
  if (pc.completion.url.empty()) {
    throw ConfigError("providers.completion.url is not set (or pass --mock-providers)");
  }
  std::shared_ptr<CompletionClient> completion;
  if (pc.completion.kind == "openai") {
    completion = std::make_shared<OpenAiCompletionClient>(endpoint_of(pc.completion), pc.completion.model, throttle);
  } else {
    completion = std::make_shared<HttpCompletionClient>(endpoint_of(pc.completion), throttle);
  }
  p.completion = std::make_shared<CompletionService>(completion, std::make_shared<ResponseCache>(pc.cache_dir), options);

  if (!pc.embedding.url.empty()) {
    std::shared_ptr<EmbeddingClient> embedding;
    if (pc.embedding.kind == "openai") {
      embedding = std::make_shared<OpenAiEmbeddingClient>(endpoint_of(pc.embedding), pc.embedding.model, throttle);
    } else {
      embedding = std::make_shared<HttpEmbeddingClient>(endpoint_of(pc.embedding), throttle);
    }
    p.embedder = std::make_shared<EmbeddingService>(embedding, pc.retry);
  }

  if (!pc.scorer.url.empty()) {
    ScorerClientOptions so;
    so.batch_size = pc.scorer_batch_size;
    so.max_chars = pc.scorer_max_chars;
    so.retry = pc.retry;
    auto client = std::make_shared<ScorerClient>(endpoint_of(pc.scorer), so, throttle);
    p.scorer = std::make_shared<CachingScorer>(std::make_shared<RemoteScorer>(client));
  } else {
    spdlog::info("no scorer endpoint configured; reranking by token overlap");
    p.scorer = std::make_shared<FallbackScorer>();
  }
  return p;
}

IndexSnapshot load_snapshot(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open index '" + path.string() + "'");
  try {
    return IndexSnapshot::load(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Index and passage store for a command.
struct Corpus {
  std::optional<IndexSnapshot> snapshot;
  PassageStore store;
  std::unique_ptr<Bm25Retriever> retriever;
  std::string hash;
};

std::unique_ptr<Corpus> load_corpus_inputs(const AppConfig& app) {
  auto c = std::make_unique<Corpus>();
  std::vector<Passage> all;
  if (app.index_path) {
    c->snapshot = load_snapshot(*app.index_path);
    c->snapshot->index.set_params(app.run.bm25);
    all = c->snapshot->passages;
  }
  for (const auto& p : app.passage_paths) {
    auto more = load_passages(p);
    all.insert(all.end(), more.begin(), more.end());
  }
  c->hash = corpus_hash(all);
  c->store = PassageStore(std::move(all));
  if (c->snapshot) c->retriever = std::make_unique<Bm25Retriever>(c->snapshot->index);
  return c;
}

std::vector<DecompositionExample> load_decomposition_inputs(const AppConfig& app) {
  fs::path path = app.decomposition_examples_path.value_or(fs::path(MDQA_DATA_DIR) / "decomposition_examples.jsonl");
  if (!fs::exists(path)) {
    spdlog::warn("decomposition examples '{}' not found; decomposing zero-shot", path.string());
    return {};
  }
  return load_decomposition_examples(path);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string> split_csv(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto comma = v.find(',', start);
      const auto part = v.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

void print_record(std::ostream& out, const AnswerRecord& r) {
  out << "question: " << r.question << "\n";
  for (std::size_t i = 0; i < r.subquestions.size(); ++i) out << "  " << i + 1 << ": " << r.subquestions[i] << "\n";
  out << "contexts:\n";
  for (const auto& c : r.contexts_used) out << "  [" << c.rank << "] " << c.passage_id << " (" << c.relevance << ")\n";
  if (!r.evidence.empty()) out << "evidence: " << r.evidence << "\n";
  out << "answer: " << r.answer << "\n";
  if (r.status != RecordStatus::ok) out << "status: " << to_string(r.status) << "\n";
}

// ---------------------------------------------------------------------------

struct IndexArgs {
  std::vector<std::string> corpus;
  std::vector<std::string> passages;
  std::size_t window_size = 3;
  double k1 = 0.9;
  double b = 0.4;
  std::string out;
};

int cmd_index(const IndexArgs& a, std::ostream& out) {
  if (a.corpus.empty() && a.passages.empty()) throw CLI::ValidationError("give at least one --corpus or --passages file");
  Bm25Params params{a.k1, a.b};
  params.validate();
  std::vector<Passage> passages;
  for (const auto& path : a.corpus) {
    for (const auto& article : load_articles(path)) {
      auto windows = window_split(article, a.window_size);
      passages.insert(passages.end(), windows.begin(), windows.end());
    }
  }
  for (const auto& path : a.passages) {
    auto more = load_passages(path);
    passages.insert(passages.end(), more.begin(), more.end());
  }
  const Index index = Index::build(passages, params);
  auto file = open_out(a.out);
  index.save(file, passages);
  file.close();
  if (!file) throw Error("failed writing '" + a.out + "'");
  char avg[32];
  std::snprintf(avg, sizeof avg, "%.4f", index.avgdl());
  out << "passages " << index.size() << "\nvocabulary " << index.vocabulary_size() << "\navgdl " << avg << "\n";
  return kExitOk;
}

struct SearchArgs {
  InputOverrides in;
  std::string query;
  std::size_t k = 10;
  std::vector<std::string> articles;
  bool rerank = false;
};

int cmd_search(const SearchArgs& a, std::ostream& out) {
  AppConfig app = load_config(a.in, nullptr);
  if (!app.index_path) throw ConfigError("search needs --index or inputs.index");
  auto corpus = load_corpus_inputs(app);
  const auto allowed_list = split_csv(a.articles);
  const std::unordered_set<std::string> allowed(allowed_list.begin(), allowed_list.end());
  const auto* filter = allowed.empty() ? nullptr : &allowed;

  if (!a.rerank) {
    for (const auto& hit : search(corpus->snapshot->index, a.query, a.k, filter)) {
      const Passage& p = corpus->store.at(hit.passage_id);
      out << hit.rank << '\t' << hit.score << '\t' << hit.passage_id << '\t' << p.title << '\n';
    }
    return kExitOk;
  }
  Providers providers;
  if (a.in.mock || app.providers.scorer.url.empty()) {
    providers.scorer = std::make_shared<FallbackScorer>();
  } else {
    providers = make_providers(app, false);
  }
  std::vector<Passage> candidates;
  for (const auto& hit : search(corpus->snapshot->index, a.query, app.run.bm25_depth, filter)) {
    candidates.push_back(corpus->store.at(hit.passage_id));
  }
  if (candidates.empty()) return kExitOk;
  for (const auto& s : rerank(a.query, candidates, *providers.scorer, a.k)) {
    out << s.rank << '\t' << s.relevance << '\t' << s.passage.id << '\t' << s.passage.title << '\n';
  }
  return kExitOk;
}

struct DecomposeArgs {
  InputOverrides in;
  std::string question;
};

int cmd_decompose(const DecomposeArgs& a, std::ostream& out) {
  AppConfig app = load_config(a.in, nullptr);
  const auto examples = load_decomposition_inputs(app);
  Providers providers = make_providers(app, a.in.mock);
  const Decomposition d = decompose(a.question, *providers.completion, true, examples);
  for (std::size_t i = 0; i < d.subquestions.size(); ++i) out << i + 1 << ": " << d.subquestions[i] << "\n";
  return kExitOk;
}

struct AnswerArgs {
  InputOverrides in;
  RunOverrides run;
  std::string question;
  std::string id = "adhoc";
  std::vector<std::string> linked;
  std::optional<std::string> grounding;
  std::vector<std::string> gold;
  bool json = false;
};

struct Prepared {
  AppConfig app;
  std::unique_ptr<Corpus> corpus;
  std::vector<PromptExample> pool;
  std::vector<DecompositionExample> decomposition_examples;
  Providers providers;
  PipelineStats stats;
  Services services;
};

std::unique_ptr<Prepared> prepare(const InputOverrides& in, const RunOverrides& o) {
  auto p = std::make_unique<Prepared>();
  p->app = load_config(in, &o);
  const RunConfig& c = p->app.run;
  const bool needs_index =
      c.context_source == ContextSource::full_retrieval || c.context_source == ContextSource::linked_intersection;
  if (needs_index && !p->app.index_path) {
    throw ConfigError(std::string(to_string(c.context_source)) + " needs an index (--index or inputs.index)");
  }
  if (!p->app.index_path && p->app.passage_paths.empty()) {
    throw ConfigError("no passages: give an index or passage files");
  }
  if (p->app.example_pool_path) p->pool = load_example_pool(*p->app.example_pool_path);
  if (c.decomposition_enabled) p->decomposition_examples = load_decomposition_inputs(p->app);
  p->providers = make_providers(p->app, in.mock);
  p->corpus = load_corpus_inputs(p->app);

  Services& s = p->services;
  s.store = &p->corpus->store;
  s.retriever = p->corpus->retriever.get();
  s.scorer = p->providers.scorer.get();
  s.completion = p->providers.completion.get();
  s.embedder = p->providers.embedder.get();
  s.example_pool = p->pool;
  s.decomposition_examples = p->decomposition_examples;
  s.corpus_hash = p->corpus->hash;
  s.stats = &p->stats;
  check_services(c, s);
  return p;
}

int cmd_answer(const AnswerArgs& a, std::ostream& out) {
  auto p = prepare(a.in, a.run);
  QaInstance q;
  q.question_id = a.id;
  q.question = a.question;
  q.gold_answers = {"unknown"};
  q.linked_article_ids = split_csv(a.linked);
  q.grounding_article_id = a.grounding;
  const auto gold = split_csv(a.gold);
  if (!gold.empty()) q.gold_evidence_ids = {gold};
  const AnswerRecord r = answer_question(q, p->app.run, p->services);
  if (a.json) {
    out << dump_line(to_json(r, false)) << "\n";
  } else {
    print_record(out, r);
  }
  return r.status == RecordStatus::ok ? kExitOk : kExitRuntime;
}

struct RunArgs {
  InputOverrides in;
  RunOverrides run;
  std::string questions;
  std::string out;
};

int cmd_run(const RunArgs& a, bool progress, std::ostream& out, std::ostream& err) {
  auto p = prepare(a.in, a.run);
  const auto questions = load_qa_instances(a.questions);
  for (const auto& q : questions) validate(q);
  if (p->app.run.context_source == ContextSource::gold) validate_evidence(questions, p->corpus->store);

  const std::size_t step = std::max<std::size_t>(1, questions.size() / 20);
  const BatchResult result = run_batch(questions, p->app.run, p->services, [&](std::size_t done, std::size_t total) {
    if (progress && (done % step == 0 || done == total)) err << "answered " << done << "/" << total << "\n";
  });

  const fs::path out_path(a.out);
  auto records = open_out(out_path);
  fs::path timings_path = out_path;
  timings_path += ".timings.jsonl";
  auto timings = open_out(timings_path);
  for (const auto& r : result.records) {
    records << dump_line(to_json(r, false)) << '\n';
    timings << dump_line(Json{{"question_id", r.question_id}, {"timings_ms", r.timings_ms}}) << '\n';
  }
  fs::path manifest_path = out_path;
  manifest_path += ".manifest.json";
  Json manifest = result.manifest;
  manifest["questions"] = a.questions;
  open_out(manifest_path) << manifest.dump(2) << '\n';

  out << result.records.size() << " records, " << result.failed << " failed, " << result.parse_failed
      << " unparsed answers\n";
  return result.failed == 0 ? kExitOk : kExitRuntime;
}

struct BootstrapArgs {
  InputOverrides in;
  std::string training;
  double fraction = 0.1;
  std::uint64_t seed = 13;
  std::string out;
};

int cmd_bootstrap(const BootstrapArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig app = load_config(a.in, nullptr);
  if (!app.index_path && app.passage_paths.empty()) throw ConfigError("bootstrap needs --index or --passages");
  if (!(a.fraction > 0.0 && a.fraction <= 1.0)) throw ConfigError("--fraction must lie in (0, 1]");
  auto corpus = load_corpus_inputs(app);
  Providers providers = make_providers(app, a.in.mock);

  std::vector<TrainingItem> training;
  for (auto& q : load_qa_instances(a.training)) {
    validate(q);
    auto contexts = gold_contexts(q, corpus->store);
    training.push_back(TrainingItem{std::move(q), std::move(contexts)});
  }
  auto file = open_out(a.out);
  auto sink = [&](const PromptExample& ex) {
    write_example(file, ex);
    file.flush();
  };
  try {
    const auto result = bootstrap_example_pool(training, *providers.completion, a.fraction, a.seed, sink);
    out << result.pool.size() << " examples from " << result.sampled << " sampled, " << result.skipped
        << " skipped\n";
  } catch (const BootstrapAborted& e) {
    err << e.what() << "\n" << e.completed() << " examples kept in " << a.out << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string records;
  std::string gold;
  std::string profile;
  std::optional<std::string> out;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto profile = parse_dataset_profile(a.profile);
  if (!profile) throw CLI::ValidationError("--profile must be iirc, qasper or strategyqa");
  const auto records = load_answer_records(a.records);
  const auto gold = load_qa_instances(a.gold);
  const EvalReport report = evaluate_run(records, gold, *profile);
  out << format_report(report);
  if (a.out) {
    auto file = open_out(*a.out);
    write_report_jsonl(file, report);
  }
  return kExitOk;
}

struct ConvertArgs {
  std::string dataset;
  std::vector<std::string> inputs;
  std::string out_dir;
  std::size_t window_size = 3;
};

int cmd_convert(const ConvertArgs& a, std::ostream& out) {
  datasets::Converted c;
  auto need = [&](std::size_t n, const char* what) {
    if (a.inputs.size() != n) throw CLI::ValidationError(std::string("--input expects ") + what);
  };
  if (a.dataset == "iirc") {
    need(2, "the questions file and the context articles file");
    c = datasets::convert_iirc(datasets::read_json_file(a.inputs[0]), datasets::read_json_file(a.inputs[1]));
  } else if (a.dataset == "qasper") {
    need(1, "the papers file");
    c = datasets::convert_qasper(datasets::read_json_file(a.inputs[0]));
  } else if (a.dataset == "strategyqa") {
    need(2, "the questions file and the paragraphs file");
    c = datasets::convert_strategyqa(datasets::read_json_file(a.inputs[0]), datasets::read_json_file(a.inputs[1]));
  } else {
    throw CLI::ValidationError("--dataset must be iirc, qasper or strategyqa");
  }
  const fs::path dir(a.out_dir);
  auto articles = open_out(dir / "articles.jsonl");
  write_articles(articles, c.articles);
  auto passages = open_out(dir / "passages.jsonl");
  write_passages(passages, c.passages);
  auto questions = open_out(dir / "questions.jsonl");
  write_qa_instances(questions, c.instances);
  out << c.articles.size() << " articles, " << c.passages.size() << " passages, " << c.instances.size()
      << " questions";
  if (c.dropped_evidence) out << ", " << c.dropped_evidence << " unmatched evidence strings dropped";
  out << "\n";
  return kExitOk;
}

void setup_logging(bool verbose, bool quiet) {
  auto logger = spdlog::get("mdqa");
  if (!logger) {
    logger = spdlog::stderr_color_mt("mdqa");
    spdlog::set_default_logger(logger);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-document question answering: decompose, retrieve, aggregate."};
  app.name("mdqa");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  bool verbose = false, quiet = false;
  auto* v = app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Errors only")->excludes(v);

  IndexArgs index_args;
  auto* index = app.add_subcommand("index", "Window a corpus into passages and build a BM25 index snapshot");
  index->add_option("--corpus", index_args.corpus, "Article JSONL, split into sentence windows")
      ->default_str("none")
      ->check(CLI::ExistingFile);
  index->add_option("--passages", index_args.passages, "Passage JSONL, indexed as is")->default_str("none")->check(CLI::ExistingFile);
  index->add_option("--window-size", index_args.window_size, "Sentences per passage window")
      ->check(CLI::PositiveNumber);
  index->add_option("--k1", index_args.k1, "BM25 k1");
  index->add_option("--b", index_args.b, "BM25 b");
  index->add_option("-o,--out", index_args.out, "Snapshot path")->required();

  SearchArgs search_args;
  auto* search_cmd = app.add_subcommand("search", "BM25 search over an index snapshot");
  add_input_flags(search_cmd, search_args.in);
  search_cmd->add_option("--query", search_args.query, "Query text")->required();
  search_cmd->add_option("-k", search_args.k, "Results to print")->check(CLI::PositiveNumber);
  search_cmd->add_option("--articles", search_args.articles, "Only passages of these article ids (comma separated)")->default_str("none");
  search_cmd->add_flag("--rerank", search_args.rerank, "Rerank the BM25 candidates with the configured scorer");

  DecomposeArgs decompose_args;
  auto* decompose_cmd = app.add_subcommand("decompose", "Split a question into subquestions");
  add_input_flags(decompose_cmd, decompose_args.in);
  decompose_cmd->add_option("--question", decompose_args.question, "Question text")->required();

  AnswerArgs answer_args;
  auto* answer_cmd = app.add_subcommand("answer", "Answer one question");
  add_input_flags(answer_cmd, answer_args.in);
  add_run_flags(answer_cmd, answer_args.run);
  answer_cmd->add_option("--question", answer_args.question, "Question text")->required();
  answer_cmd->add_option("--id", answer_args.id, "Question id in the record");
  answer_cmd->add_option("--linked", answer_args.linked, "Linked article ids for linked_intersection")->default_str("none");
  answer_cmd->add_option("--grounding", answer_args.grounding, "Grounding article id for rerank_only");
  answer_cmd->add_option("--gold", answer_args.gold, "Gold evidence ids for gold contexts")->default_str("none");
  answer_cmd->add_flag("--json", answer_args.json, "Print the answer record as JSON");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Answer a question file and write answer records plus a manifest");
  add_input_flags(run, run_args.in);
  add_run_flags(run, run_args.run);
  run->add_option("--questions", run_args.questions, "QA JSONL")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out", run_args.out, "Answer record JSONL; manifest and timings go next to it")->required();

  BootstrapArgs bootstrap_args;
  auto* bootstrap = app.add_subcommand("bootstrap", "Generate evidence paragraphs for a sample of training questions");
  add_input_flags(bootstrap, bootstrap_args.in);
  bootstrap->add_option("--training", bootstrap_args.training, "Training QA JSONL with gold evidence")
      ->required()
      ->check(CLI::ExistingFile);
  bootstrap->add_option("--fraction", bootstrap_args.fraction, "Fraction of training questions to sample");
  bootstrap->add_option("--seed", bootstrap_args.seed, "Sampling seed");
  bootstrap->add_option("-o,--out", bootstrap_args.out, "Example pool JSONL")->required();

  EvaluateArgs evaluate_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score answer records against gold annotations");
  evaluate->add_option("--records", evaluate_args.records, "Answer record JSONL")->required();
  evaluate->add_option("--gold", evaluate_args.gold, "Gold QA JSONL")->required();
  evaluate->add_option("--profile", evaluate_args.profile, "iirc | qasper | strategyqa")->required();
  evaluate->add_option("-o,--out", evaluate_args.out, "Per-instance report JSONL");

  ConvertArgs convert_args;
  auto* convert = app.add_subcommand("convert", "Convert IIRC, Qasper or StrategyQA files to the corpus format");
  convert->add_option("--dataset", convert_args.dataset, "iirc | qasper | strategyqa")->required();
  convert->add_option("--input", convert_args.inputs,
                      "iirc: questions, context articles; qasper: papers; strategyqa: questions, paragraphs")
      ->required()
      ->check(CLI::ExistingFile);
  convert->add_option("--out-dir", convert_args.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kExitUsage;
  }
  setup_logging(verbose, quiet);

  try {
    if (*index) return cmd_index(index_args, out);
    if (*search_cmd) return cmd_search(search_args, out);
    if (*decompose_cmd) return cmd_decompose(decompose_args, out);
    if (*answer_cmd) return cmd_answer(answer_args, out);
    if (*run) return cmd_run(run_args, !quiet, out, err);
    if (*bootstrap) return cmd_bootstrap(bootstrap_args, out, err);
    if (*evaluate) return cmd_evaluate(evaluate_args, out);
    if (*convert) return cmd_convert(convert_args, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"mdqa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mdqa
