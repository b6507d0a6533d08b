#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mdqa/error.hpp"
#include "mdqa/index.hpp"

#include "oracles.hpp"
#include "testkit.hpp"

using namespace mdqa;

namespace {

Passage P(std::string id, std::string text, std::string article = "a") {
  return Passage{std::move(id), std::move(article), "T", std::move(text), 0};
}

}  // namespace

TEST_SUITE("index") {
  TEST_CASE("tokenize") {
    CHECK(tokenize("Giovanni Messe") == std::vector<std::string>{"giovanni", "messe"});
    CHECK(tokenize("armistice on 11 November 1918.") ==
          std::vector<std::string>{"armistice", "on", "11", "november", "1918"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("aide-de-camp's") == std::vector<std::string>{"aide", "de", "camp", "s"});
    CHECK(tokenize("Caf\xc3\xa9 X") == std::vector<std::string>{"caf\xc3\xa9", "x"});
  }

  TEST_CASE("build statistics") {
    std::vector<Passage> ps{P("p1", "the war ended"), P("p2", "war and war again"), P("p3", "peace")};
    const auto idx = Index::build(ps);
    CHECK(idx.size() == 3);
    const auto* war = idx.postings("war");
    REQUIRE(war != nullptr);
    REQUIRE(war->size() == 2);
    CHECK(idx.term_frequency("war", static_cast<std::uint32_t>(idx.doc_of("p2"))) == 2);
    CHECK(idx.doc_frequency("war") == 2);
    CHECK(idx.postings("missing") == nullptr);
    for (const auto& posting : *war) CHECK(posting.tf >= 1);

    CHECK(Index::build(std::vector<Passage>{}).size() == 0);
    std::vector<Passage> ab{P("x", "a b"), P("y", "a")};
    CHECK(Index::build(ab).avgdl() == doctest::Approx(1.5));

    std::vector<Passage> dup{P("x", "a"), P("x", "b")};
    CHECK_THROWS_WITH_AS(Index::build(dup), doctest::Contains("'x'"), Error);
  }

  TEST_CASE("bm25_score single-document case equals ln(4/3)") {
    std::vector<Passage> ps{P("only", "war")};
    const auto idx = Index::build(ps);
    const std::vector<std::string> q{"war"};
    CHECK(bm25_score(idx, q, "only") == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
    const std::vector<std::string> none{"peace"};
    CHECK(bm25_score(idx, none, "only") == 0.0);
    CHECK_THROWS_AS(bm25_score(idx, q, "nope"), Error);
  }

  TEST_CASE("bm25_score matches the raw-text oracle and ignores duplicated terms") {
    std::mt19937_64 rng(11);
    const auto ps = testkit::synthetic_passages(rng, 5, 12);
    const auto idx = Index::build(ps);
    const auto raw = testkit::raw_docs(ps);
    for (int t = 0; t < 20; ++t) {
      const std::string query = testkit::random_words(rng, 2, 12);
      const auto terms = tokenize(query);
      auto doubled = terms;
      doubled.insert(doubled.end(), terms.begin(), terms.end());
      for (const auto& p : ps) {
        const double expected = oracle::bm25(raw, query, p.id, 0.9, 0.4);
        CHECK(bm25_score(idx, terms, p.id) == doctest::Approx(expected).epsilon(1e-9));
        CHECK(bm25_score(idx, doubled, p.id) == bm25_score(idx, terms, p.id));
      }
    }
  }

  TEST_CASE("search ordering, ranks and edge cases") {
    std::mt19937_64 rng(5);
    const auto ps = testkit::synthetic_passages(rng, 100);
    const auto idx = Index::build(ps);
    const auto raw = testkit::raw_docs(ps);
    for (int t = 0; t < 20; ++t) {
      const std::string query = testkit::random_words(rng, 1 + rng() % 4, 60);
      const auto expected = oracle::bm25_rank(raw, query, 0.9, 0.4);
      const auto hits = search(idx, query, 1000);
      REQUIRE(hits.size() == expected.size());
      for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].passage_id == expected[i].first);
        CHECK(hits[i].rank == i + 1);
        if (i) CHECK(hits[i].score <= hits[i - 1].score);
      }
    }
    CHECK(search(idx, "zzz unknown", 10).empty());
    CHECK(search(idx, "", 10).empty());
  }

  TEST_CASE("ties break by ascending passage id") {
    std::vector<Passage> ps{P("c", "war"), P("a", "war"), P("b", "war")};
    const auto idx = Index::build(ps);
    const auto hits = search(idx, "war", 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].passage_id == "a");
    CHECK(hits[1].passage_id == "b");
    CHECK(hits[2].passage_id == "c");
  }

  TEST_CASE("search is prefix-monotone in k") {
    std::mt19937_64 rng(9);
    const auto ps = testkit::synthetic_passages(rng, 60, 15);
    const auto idx = Index::build(ps);
    for (int t = 0; t < 30; ++t) {
      const std::string query = testkit::random_words(rng, 3, 15);
      const std::size_t k = 1 + rng() % 20;
      const auto small = search(idx, query, k);
      const auto large = search(idx, query, k + 1 + rng() % 20);
      REQUIRE(small.size() <= large.size());
      for (std::size_t i = 0; i < small.size(); ++i) CHECK(small[i].passage_id == large[i].passage_id);
    }
  }

  // Exact only while avgdl is unchanged and the query has one term: N moves
  // each term's idf by a different amount, so multi-term orderings can flip.
  TEST_CASE("unrelated passages keep the hit ordering of single-term queries") {
    std::mt19937_64 rng(21);
    auto ps = testkit::synthetic_passages(rng, 40, 20);
    auto grown = ps;
    // Mirror every passage length with unrelated tokens so avgdl stays put.
    for (const auto& p : ps) {
      std::string text;
      for (std::size_t i = 0; i < tokenize(p.text).size(); ++i) text += "zz ";
      grown.push_back(P("zz-" + p.id, text, "zz"));
    }
    const auto small = Index::build(ps);
    const auto large = Index::build(grown);
    REQUIRE(small.avgdl() == large.avgdl());
    for (int w = 0; w < 20; ++w) {
      const std::string query = "w" + std::to_string(w);
      const auto before = search(small, query, 100);
      const auto after = search(large, query, 100);
      REQUIRE(before.size() == after.size());
      for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].passage_id == after[i].passage_id);
    }
  }

  TEST_CASE("allowed articles restrict candidates") {
    std::vector<Passage> ps{P("a#0", "war war war", "a"), P("b#0", "war", "b"), P("c#0", "war peace", "c")};
    const auto idx = Index::build(ps);
    std::unordered_set<std::string> allowed{"b", "c"};
    const auto hits = search(idx, "war", 10, &allowed);
    REQUIRE(hits.size() == 2);
    for (const auto& h : hits) CHECK(h.passage_id != "a#0");
    CHECK(hits[0].rank == 1);
  }

  TEST_CASE("snapshot round-trip") {
    std::mt19937_64 rng(3);
    const auto ps = testkit::synthetic_passages(rng, 30);
    auto idx = Index::build(ps, Bm25Params{1.2, 0.75});
    std::ostringstream out;
    idx.save(out, ps);
    std::istringstream in(out.str());
    const auto snap = IndexSnapshot::load(in);
    CHECK(snap.passages == ps);
    CHECK(snap.index.params() == Bm25Params{1.2, 0.75});
    CHECK(snap.index.size() == idx.size());
    CHECK(snap.index.vocabulary_size() == idx.vocabulary_size());
    const auto a = search(idx, "w0 w2", 10);
    const auto b = search(snap.index, "w0 w2", 10);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].passage_id == b[i].passage_id);
      CHECK(a[i].score == b[i].score);
    }

    std::istringstream bad("NOT-AN-INDEX 1\n");
    CHECK_THROWS_AS(IndexSnapshot::load(bad), DataError);
  }

  TEST_CASE("parameter validation") {
    CHECK_THROWS_AS((Bm25Params{-0.1, 0.4}.validate()), ConfigError);
    CHECK_THROWS_AS((Bm25Params{0.9, 1.5}.validate()), ConfigError);
    CHECK_NOTHROW((Bm25Params{0.0, 1.0}.validate()));
  }
}
