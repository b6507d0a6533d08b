#include <doctest.h>

#include <json.hpp>
#include <algorithm>
#include <sstream>

#include "mdqa/cli.hpp"

#include "testkit.hpp"

using namespace mdqa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run_cli(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string e2e(const char* name) { return (testkit::fixture_dir() / "e2e" / name).string(); }

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

// Builds the e2e index once per test directory.
std::string build_index(const testkit::TempDir& dir) {
  const std::string path = (dir / "e2e.mdqa").string();
  const auto o = cli({"-q", "index", "--corpus", e2e("articles.jsonl"), "-o", path});
  REQUIRE_MESSAGE(o.code == 0, o.err);
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("index prints stats and uses 3-sentence windows by default") {
    testkit::TempDir dir;
    testkit::write_file(dir / "three.jsonl",
                        "{\"id\":\"a\",\"title\":\"A\",\"contents\":\"One. Two. Three.\"}\n"
                        "{\"id\":\"b\",\"title\":\"B\",\"contents\":\"Four five.\"}\n"
                        "{\"id\":\"c\",\"title\":\"C\",\"contents\":\"Six. Seven.\"}\n");
    const auto o = cli({"-q", "index", "--corpus", (dir / "three.jsonl").string(), "-o", (dir / "i.mdqa").string()});
    CHECK(o.code == 0);
    CHECK(contains(o.out, "passages 3\n"));
    CHECK(contains(o.out, "vocabulary 7\n"));

    const auto small = cli({"-q", "index", "--corpus", (dir / "three.jsonl").string(), "--window-size", "1", "-o",
                            (dir / "j.mdqa").string()});
    CHECK(contains(small.out, "passages 6\n"));
  }

  TEST_CASE("missing input files are named in the error") {
    testkit::TempDir dir;
    const std::string missing = (dir / "nope.jsonl").string();
    const auto o = cli({"index", "--corpus", missing, "-o", (dir / "x.mdqa").string()});
    CHECK(o.code != 0);
    CHECK(contains(o.err, missing));
  }

  TEST_CASE("search ranks the relevant article first") {
    testkit::TempDir dir;
    const auto index = build_index(dir);
    const auto o = cli({"-q", "search", "--index", index, "--query", "Titanic iceberg", "-k", "2"});
    CHECK(o.code == 0);
    CHECK(o.out.rfind("1\t", 0) == 0);
    CHECK(contains(o.out.substr(0, o.out.find('\n')), "titanic#0"));

    const auto filtered = cli({"-q", "search", "--index", index, "--query", "Titanic", "--articles", "eiffel_tower"});
    CHECK(filtered.code == 0);
    CHECK_FALSE(contains(filtered.out, "titanic#"));

    const auto reranked =
        cli({"-q", "search", "--index", index, "--query", "Titanic iceberg", "--rerank", "--mock-providers"});
    CHECK(reranked.code == 0);
    CHECK(contains(reranked.out, "titanic#0"));
  }

  TEST_CASE("run with mock providers is deterministic") {
    testkit::TempDir dir;
    const auto index = build_index(dir);
    auto run_to = [&](const std::string& name, const std::string& parallelism) {
      const std::string out = (dir / name).string();
      const auto o = cli({"-q", "run", "--config", e2e("config_full.json"), "--index", index, "--mock-providers",
                          "--parallelism", parallelism, "--questions", e2e("questions.jsonl"), "-o", out});
      REQUIRE_MESSAGE(o.code == 0, o.err);
      CHECK(contains(o.out, "10 records, 0 failed"));
      return testkit::read_file(out);
    };
    const auto first = run_to("a.jsonl", "3");
    const auto second = run_to("b.jsonl", "1");
    CHECK(first == second);
    CHECK(std::count(first.begin(), first.end(), '\n') == 10);
    CHECK(fs::exists(dir / "a.jsonl.manifest.json"));
    CHECK(fs::exists(dir / "a.jsonl.timings.jsonl"));
    CHECK_FALSE(contains(first, "timings_ms"));
  }

  TEST_CASE("gold mode never touches the retriever or scorer") {
    testkit::TempDir dir;
    const auto index = build_index(dir);
    const std::string out = (dir / "gold.jsonl").string();
    const auto o = cli({"-q", "run", "--config", e2e("config_gold.json"), "--index", index, "--mock-providers",
                        "--questions", e2e("questions.jsonl"), "-o", out});
    REQUIRE_MESSAGE(o.code == 0, o.err);
    const auto manifest = nlohmann::json::parse(testkit::read_file(dir / "gold.jsonl.manifest.json"));
    CHECK(manifest["calls"]["retriever"] == 0);
    CHECK(manifest["calls"]["scorer"] == 0);
    CHECK(manifest["config"]["context_source"] == "gold");
    CHECK(manifest["counts"]["instances"] == 10);
  }

  TEST_CASE("usage errors exit 1") {
    testkit::TempDir dir;
    const auto index = build_index(dir);
    const auto bad_source = cli({"run", "--index", index, "--mock-providers", "--context-source", "everything",
                                 "--questions", e2e("questions.jsonl"), "-o", (dir / "r.jsonl").string()});
    CHECK(bad_source.code == 1);
    CHECK(contains(bad_source.err, "everything"));

    CHECK(cli({"answer", "--index", index, "--question", "q?", "--cot", "--no-cot"}).code == 1);
    CHECK(cli({"-v", "-q", "index", "--corpus", e2e("articles.jsonl"), "-o", (dir / "y").string()}).code == 1);
    CHECK(cli({}).code == 1);
    CHECK(cli({"frobnicate"}).code == 1);
    CHECK(cli({"evaluate", "--records", "r", "--gold", "g", "--profile", "squad"}).code == 1);
  }

  TEST_CASE("help lists the defaults") {
    const auto top = cli({"--help"});
    CHECK(top.code == 0);
    CHECK(contains(top.out, "index"));
    CHECK(contains(top.out, "evaluate"));
    const auto run = cli({"run", "--help"});
    CHECK(run.code == 0);
    CHECK(contains(run.out, "--context-source"));
    CHECK(contains(run.out, "default 4000"));
    CHECK(contains(run.out, "default 512"));
    const auto index = cli({"index", "--help"});
    CHECK(contains(index.out, "--window-size"));
    CHECK(contains(index.out, "3"));
  }

  TEST_CASE("evaluate prints the metric table") {
    testkit::TempDir dir;
    testkit::write_file(dir / "gold.jsonl",
                        "{\"question_id\":\"a\",\"question\":\"A?\",\"gold_answers\":[\"yes\"],\"answer_type\":\"binary\","
                        "\"gold_evidence_ids\":[[\"x\"]]}\n"
                        "{\"question_id\":\"b\",\"question\":\"B?\",\"gold_answers\":[\"no\"],\"answer_type\":\"binary\","
                        "\"gold_evidence_ids\":[[\"y\"]]}\n");
    testkit::write_file(dir / "records.jsonl",
                        "{\"question_id\":\"a\",\"question\":\"A?\",\"answer\":\"yes\"}\n"
                        "{\"question_id\":\"b\",\"question\":\"B?\",\"answer\":\"no\"}\n");
    const auto iirc = cli({"evaluate", "--records", (dir / "records.jsonl").string(), "--gold",
                           (dir / "gold.jsonl").string(), "--profile", "iirc", "-o", (dir / "report.jsonl").string()});
    CHECK(iirc.code == 0);
    CHECK(contains(iirc.out, "100.0"));
    CHECK(fs::exists(dir / "report.jsonl"));

    const auto sqa = cli({"evaluate", "--records", (dir / "records.jsonl").string(), "--gold",
                          (dir / "gold.jsonl").string(), "--profile", "strategyqa"});
    CHECK(sqa.code == 0);
    CHECK(contains(sqa.out, "absent"));

    testkit::write_file(dir / "other.jsonl", "{\"question_id\":\"zz\",\"question\":\"Z?\",\"answer\":\"yes\"}\n");
    const auto mismatch = cli({"evaluate", "--records", (dir / "other.jsonl").string(), "--gold",
                               (dir / "gold.jsonl").string(), "--profile", "iirc"});
    CHECK(mismatch.code != 0);
    CHECK(contains(mismatch.err, "zz"));
  }

  TEST_CASE("decompose, answer and bootstrap with mock providers") {
    testkit::TempDir dir;
    const auto index = build_index(dir);
    const auto d = cli({"-q", "decompose", "--config", e2e("config_full.json"), "--mock-providers", "--question",
                        "How long had the First World War been over when Messe was named aide-de-camp?"});
    CHECK(d.code == 0);
    CHECK(d.out.rfind("1: ", 0) == 0);

    const auto a = cli({"-q", "answer", "--config", e2e("config_full.json"), "--index", index, "--mock-providers",
                        "--question", "When did the Titanic sink?", "--json"});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    const auto record = nlohmann::json::parse(a.out);
    CHECK(record["question_id"] == "adhoc");
    CHECK_FALSE(record["contexts_used"].empty());

    const std::string pool = (dir / "pool.jsonl").string();
    const auto b = cli({"-q", "bootstrap", "--index", index, "--mock-providers", "--training",
                        e2e("questions.jsonl"), "--fraction", "0.5", "-o", pool});
    REQUIRE_MESSAGE(b.code == 0, b.err);
    CHECK(contains(b.out, "from 5 sampled"));
    CHECK(fs::exists(pool));
  }

  TEST_CASE("convert writes the three corpus files") {
    testkit::TempDir dir;
    testkit::write_file(dir / "papers.json", R"({
      "p1": {"title": "A Paper", "abstract": "We study things.",
             "full_text": [{"section_name": "Intro", "paragraphs": ["We use BERT.", "Results are good."]}],
             "qas": [{"question": "Which model?", "question_id": "p1q1",
                      "answers": [{"answer": {"unanswerable": false, "extractive_spans": ["BERT"], "yes_no": null,
                                              "free_form_answer": "", "evidence": ["We use BERT."]}}]}]}
    })");
    const auto o = cli({"-q", "convert", "--dataset", "qasper", "--input", (dir / "papers.json").string(), "--out-dir",
                        dir.path().string()});
    REQUIRE_MESSAGE(o.code == 0, o.err);
    CHECK(contains(o.out, "1 questions"));
    for (const char* f : {"articles.jsonl", "passages.jsonl", "questions.jsonl"}) CHECK(fs::exists(dir / f));
    CHECK(cli({"convert", "--dataset", "squad", "--input", "x", "--out-dir", dir.path().string()}).code == 1);
  }
}
