#include <doctest.h>

#include <algorithm>
#include <mutex>
#include <random>
#include <set>

#include "mdqa/error.hpp"
#include "mdqa/rerank.hpp"

#include "testkit.hpp"

using namespace mdqa;
using nlohmann::json;

namespace {

Passage P(std::string id, std::string text = "x") { return Passage{std::move(id), "a", "T", std::move(text), 0}; }

std::vector<std::string> ids_of(const std::vector<ScoredPassage>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(s.passage.id);
  return out;
}

ScorerClientOptions fast_options(std::size_t batch) {
  ScorerClientOptions o;
  o.batch_size = batch;
  o.retry.attempts = 3;
  o.retry.initial_backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST_SUITE("rerank") {
  TEST_CASE("ordering contract") {
    std::vector<Passage> one{P("only")};
    FallbackScorer fallback;
    const auto single = rerank("anything", one, fallback, 5);
    REQUIRE(single.size() == 1);
    CHECK(single[0].rank == 1);

    testkit::TableScorer table({{"a", -0.1}, {"b", -2.3}, {"c", -0.5}});
    std::vector<Passage> abc{P("a"), P("b"), P("c")};
    CHECK(ids_of(rerank("q", abc, table, 2)) == std::vector<std::string>{"a", "c"});
    CHECK(table.calls() == 1);

    testkit::TableScorer ties({{"b", -1}, {"a", -1}, {"c", -0.5}});
    CHECK(ids_of(rerank("q", abc, ties, 3)) == std::vector<std::string>{"c", "a", "b"});
  }

  TEST_CASE("input errors") {
    FallbackScorer fallback;
    std::vector<Passage> none;
    CHECK_THROWS_AS(rerank("q", none, fallback, 1), RerankError);
    std::vector<Passage> dup{P("a"), P("a")};
    CHECK_THROWS_AS(rerank("q", dup, fallback, 1), RerankError);
    std::vector<Passage> one{P("a")};
    CHECK_THROWS_AS(rerank("q", one, fallback, 0), RerankError);
  }

  TEST_CASE("fallback score") {
    CHECK(fallback_score("when did the war end", P("p", "The war did end when the treaty was signed")) == 1.0);
    CHECK(fallback_score("when did the war end", P("p", "peace")) == 0.0);
    CHECK(fallback_score("alpha beta gamma delta", P("p", "beta delta epsilon")) == 0.5);
  }

  TEST_CASE("fallback ranking over 1000 candidates equals a sort of fallback scores") {
    std::mt19937_64 rng(17);
    const auto candidates = testkit::synthetic_passages(rng, 1000, 40);
    const std::string question = testkit::random_words(rng, 6, 40);
    FallbackScorer fallback;
    const auto ranked = rerank(question, candidates, fallback, candidates.size());

    std::vector<std::pair<double, std::string>> expected;
    for (const auto& c : candidates) expected.emplace_back(-fallback_score(question, c), c.id);
    std::sort(expected.begin(), expected.end());
    REQUIRE(ranked.size() == expected.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(ranked[i].passage.id == expected[i].second);
  }

  TEST_CASE("permutation invariance, subset and top_k prefix") {
    std::mt19937_64 rng(23);
    FallbackScorer fallback;
    for (int t = 0; t < 50; ++t) {
      auto candidates = testkit::synthetic_passages(rng, 5 + rng() % 40, 10);
      const std::string q = testkit::random_words(rng, 4, 10);
      const std::size_t k = 1 + rng() % candidates.size();
      const auto base = ids_of(rerank(q, candidates, fallback, k));
      CHECK(base.size() == std::min(k, candidates.size()));
      std::set<std::string> unique(base.begin(), base.end());
      CHECK(unique.size() == base.size());
      std::shuffle(candidates.begin(), candidates.end(), rng);
      CHECK(ids_of(rerank(q, candidates, fallback, k)) == base);
      const auto wider = ids_of(rerank(q, candidates, fallback, k + 1));
      CHECK(std::equal(base.begin(), base.end(), wider.begin()));
    }
  }

  TEST_CASE("an irrelevant extra candidate keeps relative order") {
    std::mt19937_64 rng(29);
    FallbackScorer fallback;
    auto candidates = testkit::synthetic_passages(rng, 30, 10);
    const std::string q = "w1 w2 w3";
    const auto before = ids_of(rerank(q, candidates, fallback, 30));
    candidates.push_back(P("zzz", "nothing shared"));
    auto after = ids_of(rerank(q, candidates, fallback, 31));
    after.erase(std::remove(after.begin(), after.end(), "zzz"), after.end());
    CHECK(after == before);
  }

  TEST_CASE("scorer input template") {
    CHECK(format_scorer_input("When?", "WWI", "It ended.") == "Query: When? Document: WWI. It ended. Relevant:");
  }

  TEST_CASE("remote scorer over the wire") {
    testkit::MockServer server;
    std::vector<std::size_t> batch_sizes;
    std::mutex m;
    server.on("/rescore", [&](const json& body, int&) {
      std::lock_guard lock(m);
      batch_sizes.push_back(body["documents"].size());
      std::vector<double> scores;
      for (const auto& d : body["documents"]) {
        // Encodes the id so the test can check reassembly order.
        scores.push_back(-std::stoi(d["id"].get<std::string>().substr(1)) / 100.0);
      }
      return json{{"scores", scores}};
    });
    server.start();

    auto client = std::make_shared<ScorerClient>(testkit::endpoint(server.url()), fast_options(2));
    RemoteScorer scorer(client);
    std::vector<Passage> five{P("d1"), P("d2"), P("d3"), P("d4"), P("d5")};
    const auto scores = scorer.score("q", five);
    CHECK(scores == std::vector<double>{-0.01, -0.02, -0.03, -0.04, -0.05});
    CHECK(server.requests() == 3);
    CHECK(batch_sizes == std::vector<std::size_t>{2, 2, 1});
  }

  TEST_CASE("remote scorer protocol errors") {
    testkit::MockServer server;
    server.on("/rescore", [](const json& body, int&) {
      if (body["query"] == "short") return json{{"scores", {-0.1, -0.2}}};
      if (body["query"] == "positive") return json{{"scores", {0.5}}};
      return json{{"nothing", true}};
    });
    server.start();
    auto client = std::make_shared<ScorerClient>(testkit::endpoint(server.url()), fast_options(16));
    RemoteScorer scorer(client);
    std::vector<Passage> three{P("a"), P("b"), P("c")};
    CHECK_THROWS_AS(scorer.score("short", three), ProtocolError);
    std::vector<Passage> one{P("a")};
    CHECK_THROWS_AS(scorer.score("positive", one), ProtocolError);
    CHECK_THROWS_AS(scorer.score("other", one), ProtocolError);
    // rerank wraps the failure instead of returning a partial list.
    CHECK_THROWS_AS(rerank("short", three, scorer, 2), RerankError);
  }

  TEST_CASE("remote scorer retries transport failures then gives up") {
    testkit::MockServer server;
    std::atomic<int> calls{0};
    server.on("/rescore", [&](const json&, int& status) {
      if (++calls < 3) {
        status = 503;
        return json::object();
      }
      return json{{"scores", {-0.3}}};
    });
    server.start();
    auto client = std::make_shared<ScorerClient>(testkit::endpoint(server.url()), fast_options(4));
    RemoteScorer scorer(client);
    std::vector<Passage> one{P("a")};
    CHECK(scorer.score("q", one) == std::vector<double>{-0.3});
    CHECK(calls == 3);

    auto dead = std::make_shared<ScorerClient>(testkit::endpoint("http://127.0.0.1:1"), fast_options(4));
    RemoteScorer dead_scorer(dead);
    CHECK_THROWS_AS(dead_scorer.score("q", one), ProviderUnavailable);
  }

  TEST_CASE("overlong passages are truncated to the character cap") {
    testkit::MockServer server;
    std::size_t seen = 0;
    server.on("/rescore", [&](const json& body, int&) {
      seen = body["documents"][0]["text"].get<std::string>().size();
      return json{{"scores", {-1.0}}};
    });
    server.start();
    auto opts = fast_options(4);
    opts.max_chars = 10;
    RemoteScorer scorer(std::make_shared<ScorerClient>(testkit::endpoint(server.url()), opts));
    std::vector<Passage> one{P("a", std::string(50, 'x'))};
    scorer.score("q", one);
    CHECK(seen == 10);
  }

  TEST_CASE("caching scorer memoizes by question and content") {
    auto inner = std::make_shared<testkit::TableScorer>(std::unordered_map<std::string, double>{{"a", -1}, {"b", -2}});
    CachingScorer cache(inner);
    std::vector<Passage> ab{P("a"), P("b")};
    CHECK(cache.score("q", ab) == std::vector<double>{-1, -2});
    CHECK(cache.score("q", ab) == std::vector<double>{-1, -2});
    CHECK(inner->calls() == 1);
    CHECK(cache.cached_entries() == 2);
    std::vector<Passage> changed{P("a", "new text")};
    cache.score("q", changed);
    cache.score("other question", changed);
    CHECK(inner->calls() == 3);
  }
}
