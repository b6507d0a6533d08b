#include <doctest.h>

#include <random>
#include <sstream>

#include "mdqa/corpus.hpp"
#include "mdqa/error.hpp"
#include "mdqa/text.hpp"

#include "testkit.hpp"

using namespace mdqa;

TEST_SUITE("corpus") {
  TEST_CASE("split_sentences follows the punctuation rule") {
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("A war ended. It ended in 1918.") ==
          std::vector<std::string>{"A war ended.", "It ended in 1918."});
    CHECK(split_sentences("Was it long? Yes! Very.") == std::vector<std::string>{"Was it long?", "Yes!", "Very."});
    CHECK(split_sentences("No terminator here") == std::vector<std::string>{"No terminator here"});
    // A period inside a token is not a boundary.
    CHECK(split_sentences("Version 1.5 shipped.  Then\nit broke.") ==
          std::vector<std::string>{"Version 1.5 shipped.", "Then it broke."});
  }

  TEST_CASE("window_split produces 3/3/1 windows for seven sentences") {
    Article a{"art", "Title", "S1. S2. S3. S4. S5. S6. S7."};
    const auto ps = window_split(a, 3);
    REQUIRE(ps.size() == 3);
    CHECK(ps[0].text == "S1. S2. S3.");
    CHECK(ps[1].text == "S4. S5. S6.");
    CHECK(ps[2].text == "S7.");
    CHECK(ps[0].id == "art#0");
    CHECK(ps[2].id == "art#2");
    CHECK(ps[2].window_index == 2);
    CHECK(ps[1].article_id == "art");
    CHECK(ps[1].title == "Title");

    CHECK(window_split(Article{"x", "T", "One. Two. Three."}, 3).size() == 1);
    CHECK(window_split(Article{"x", "T", ""}, 3).empty());
    CHECK_THROWS_AS(window_split(a, 0), Error);
  }

  TEST_CASE("windows partition the sentence sequence") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n_sentences = rng() % 12;
      std::string text;
      for (std::size_t s = 0; s < n_sentences; ++s) {
        text += testkit::random_words(rng, 1 + rng() % 6, 20);
        text += (rng() % 3 == 0) ? "? " : ". ";
      }
      Article a{"a", "T", text};
      const auto sentences = split_sentences(text);
      for (std::size_t w = 1; w <= 5; ++w) {
        const auto ps = window_split(a, w);
        std::size_t count = 0;
        std::vector<std::string> joined;
        for (const auto& p : ps) {
          count += split_sentences(p.text).size();
          joined.push_back(p.text);
        }
        CHECK(count == sentences.size());
        CHECK(text::join(joined, " ") == text::join(sentences, " "));
      }
      if (!sentences.empty()) CHECK(window_split(a, sentences.size()).size() == 1);
    }
  }

  TEST_CASE("article files load and round-trip") {
    std::istringstream two(
        "{\"id\":\"a\",\"title\":\"A\",\"contents\":\"x.\"}\n{\"id\":\"b\",\"title\":\"B\",\"contents\":\"y.\"}\n");
    const auto articles = read_articles(two);
    REQUIRE(articles.size() == 2);
    CHECK(articles[1].title == "B");

    std::ostringstream out;
    write_articles(out, articles);
    std::istringstream back(out.str());
    CHECK(read_articles(back) == articles);

    std::istringstream empty("");
    CHECK(read_articles(empty).empty());
  }

  TEST_CASE("passage and QA files round-trip") {
    std::vector<Passage> ps{{"a#0", "a", "T", "text one", 0}, {"a#1", "a", "T", "text two", 1}};
    std::ostringstream out;
    write_passages(out, ps);
    std::istringstream in(out.str());
    CHECK(read_passages(in) == ps);

    QaInstance q;
    q.question_id = "q1";
    q.question = "When?";
    q.gold_answers = {"1918"};
    q.gold_evidence_ids = {{"a#0"}, {"a"}};
    q.linked_article_ids = {"a"};
    q.grounding_article_id = "a";
    q.gold_decomposition = {"A?", "B?"};
    QaInstance none;
    none.question_id = "q2";
    none.question = "Who?";
    none.gold_answers = {std::string(kUnanswerable)};
    none.answer_type = AnswerType::none;
    std::vector<QaInstance> qs{q, none};
    std::ostringstream qout;
    write_qa_instances(qout, qs);
    CHECK(qout.str().find("\"subquestions\"") != std::string::npos);
    std::istringstream qin(qout.str());
    CHECK(read_qa_instances(qin) == qs);
  }

  TEST_CASE("malformed input reports the line") {
    std::string lines;
    for (int i = 0; i < 4; ++i) lines += "{\"id\":\"a" + std::to_string(i) + "\",\"title\":\"T\",\"contents\":\"x\"}\n";
    lines += "{\"id\":\"a1\",\"title\":\"T\",\"contents\":\"x\"}\n";
    std::istringstream dup(lines);
    try {
      read_articles(dup);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.line() == 5);
      CHECK(std::string(e.what()).find("a1") != std::string::npos);
    }

    std::istringstream broken("{\"id\":\"a\",\"title\":\"T\",\"contents\":\"x\"}\n{not json\n");
    try {
      read_articles(broken);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.line() == 2);
    }

    std::istringstream missing("{\"id\":\"a\",\"title\":\"T\"}\n");
    CHECK_THROWS_WITH_AS(read_articles(missing), doctest::Contains("contents"), DataError);

    std::istringstream blank("{\"id\":\"a\",\"title\":\"\",\"contents\":\"\"}\n");
    CHECK_THROWS_AS(read_articles(blank), DataError);
  }

  TEST_CASE("QA invariants") {
    QaInstance q;
    q.question_id = "q";
    q.question = "Q?";
    q.gold_answers = {"unanswerable"};
    q.answer_type = AnswerType::span;
    CHECK_THROWS_AS(validate(q), DataError);
    q.answer_type = AnswerType::none;
    CHECK_NOTHROW(validate(q));
    q.gold_answers = {"x"};
    CHECK_THROWS_AS(validate(q), DataError);
  }

  TEST_CASE("PassageStore resolves passage and article ids") {
    PassageStore store({{"a#0", "a", "A", "x", 0}, {"a#1", "a", "A", "y", 1}, {"b#0", "b", "B", "z", 0}});
    CHECK(store.size() == 3);
    CHECK(store.at("b#0").text == "z");
    CHECK(store.find("c#0") == nullptr);
    CHECK_THROWS_AS(store.at("c#0"), DataError);
    REQUIRE(store.resolve("a#1").size() == 1);
    const auto a = store.resolve("a");
    REQUIRE(a.size() == 2);
    CHECK(a[0]->id == "a#0");
    CHECK(a[1]->id == "a#1");
    CHECK_THROWS_AS(store.resolve("zzz"), DataError);
    CHECK_THROWS_AS(store.add({{"a#0", "a", "A", "dup", 0}}), DataError);

    QaInstance q;
    q.question_id = "q";
    q.question = "Q?";
    q.gold_answers = {"x"};
    q.gold_evidence_ids = {{"a#0", "missing#3"}};
    std::vector<QaInstance> qs{q};
    CHECK_THROWS_WITH_AS(validate_evidence(qs, store), doctest::Contains("missing#3"), DataError);
  }

  TEST_CASE("utf8 helpers never split a code point") {
    const std::string s = "caf\xc3\xa9 \xe2\x82\xac";  // "café €"
    CHECK(text::utf8_length(s) == 6);
    CHECK(text::utf8_prefix(s, 4) == "caf\xc3\xa9");
    CHECK(text::utf8_prefix(s, 100) == s);
    CHECK(text::collapse_whitespace("  a \n\t b  ") == "a b");
  }
}
