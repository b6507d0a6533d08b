#include "mdqa/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "mdqa/error.hpp"
#include "mdqa/json_io.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

namespace {

constexpr std::array<std::pair<AnswerType, std::string_view>, 7> kAnswerTypeNames{{
    {AnswerType::span, "span"},
    {AnswerType::binary, "binary"},
    {AnswerType::numeric, "numeric"},
    {AnswerType::abstractive, "abstractive"},
    {AnswerType::extractive, "extractive"},
    {AnswerType::boolean, "boolean"},
    {AnswerType::none, "none"},
}};

bool is_terminator(char c) noexcept { return c == '.' || c == '!' || c == '?'; }

std::vector<std::string> string_list(const Json& record, std::string_view field, bool required) {
  std::vector<std::string> out;
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) {
    if (required) throw DataError("missing required field '" + std::string(field) + "'");
    return out;
  }
  if (!it->is_array()) throw DataError("field '" + std::string(field) + "' must be a list of strings");
  for (const auto& v : *it) {
    if (!v.is_string()) throw DataError("field '" + std::string(field) + "' must be a list of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

template <typename Parse>
auto read_jsonl(std::istream& in, Parse parse) {
  using Record = decltype(parse(std::declval<const Json&>()));
  std::vector<Record> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (!record.is_object()) throw DataError("record is not an object", line_no);
    try {
      Record parsed = parse(record);
      const std::string& id = [&]() -> const std::string& {
        if constexpr (std::is_same_v<Record, QaInstance>) {
          return parsed.question_id;
        } else {
          return parsed.id;
        }
      }();
      if (!seen.insert(id).second) throw DataError("duplicate id '" + id + "'");
      out.push_back(std::move(parsed));
    } catch (const DataError& e) {
      if (e.line()) throw;
      throw DataError(e.what(), line_no);
    }
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

void validate_article(const Article& a) {
  if (a.id.empty()) throw DataError("empty id");
  if (a.text.empty() && a.title.empty()) throw DataError("article '" + a.id + "' has neither title nor text");
}

}  // namespace

std::string_view to_string(AnswerType type) noexcept {
  for (const auto& [t, name] : kAnswerTypeNames) {
    if (t == type) return name;
  }
  return "span";
}

std::optional<AnswerType> parse_answer_type(std::string_view name) noexcept {
  for (const auto& [t, n] : kAnswerTypeNames) {
    if (n == name) return t;
  }
  return std::nullopt;
}

std::vector<std::string> split_sentences(std::string_view raw) {
  const std::string normalized = text::collapse_whitespace(raw);
  std::vector<std::string> sentences;
  std::size_t start = 0;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    if (!is_terminator(normalized[i])) continue;
    if (i + 1 == normalized.size() || normalized[i + 1] == ' ') {
      sentences.emplace_back(normalized.substr(start, i + 1 - start));
      start = i + 2;
    }
  }
  if (start < normalized.size()) sentences.emplace_back(normalized.substr(start));
  return sentences;
}

std::vector<Passage> window_split(const Article& article, std::size_t window_size) {
  if (window_size == 0) throw Error("window_size must be at least 1");
  const auto sentences = split_sentences(article.text);
  std::vector<Passage> passages;
  passages.reserve((sentences.size() + window_size - 1) / window_size);
  for (std::size_t begin = 0; begin < sentences.size(); begin += window_size) {
    const std::size_t end = std::min(sentences.size(), begin + window_size);
    std::vector<std::string> window(sentences.begin() + static_cast<std::ptrdiff_t>(begin),
                                    sentences.begin() + static_cast<std::ptrdiff_t>(end));
    const std::size_t index = passages.size();
    passages.push_back(Passage{article.id + "#" + std::to_string(index), article.id, article.title,
                               text::join(window, " "), index});
  }
  return passages;
}

// ---------------------------------------------------------------------------
// JSON mapping

std::string require_string(const Json& record, std::string_view field) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) throw DataError("missing required field '" + std::string(field) + "'");
  if (!it->is_string()) throw DataError("field '" + std::string(field) + "' must be a string");
  return it->get<std::string>();
}

std::string dump_line(const Json& record) {
  return record.dump(-1, ' ', false, Json::error_handler_t::replace);
}

Json to_json(const Article& a) { return Json{{"id", a.id}, {"title", a.title}, {"contents", a.text}}; }

Json to_json(const Passage& p) {
  return Json{{"id", p.id},
              {"title", p.title},
              {"contents", p.text},
              {"article_id", p.article_id},
              {"window_index", p.window_index}};
}

Json to_json(const QaInstance& q) {
  Json j{{"question_id", q.question_id},
         {"question", q.question},
         {"gold_answers", q.gold_answers},
         {"answer_type", std::string(to_string(q.answer_type))},
         {"gold_evidence_ids", q.gold_evidence_ids},
         {"linked_article_ids", q.linked_article_ids}};
  j["grounding_article_id"] = q.grounding_article_id ? Json(*q.grounding_article_id) : Json(nullptr);
  if (!q.gold_decomposition.empty()) j["subquestions"] = q.gold_decomposition;
  return j;
}

Article article_from_json(const Json& r) {
  Article a{require_string(r, "id"), require_string(r, "title"), require_string(r, "contents")};
  validate_article(a);
  return a;
}

Passage passage_from_json(const Json& r) {
  Passage p;
  p.id = require_string(r, "id");
  p.title = require_string(r, "title");
  p.text = require_string(r, "contents");
  if (p.id.empty()) throw DataError("empty id");
  if (auto it = r.find("article_id"); it != r.end() && !it->is_null()) {
    p.article_id = require_string(r, "article_id");
  }
  if (auto it = r.find("window_index"); it != r.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw DataError("field 'window_index' must be a non-negative integer");
    p.window_index = it->get<std::size_t>();
  }
  if (p.article_id.empty()) {
    // "<article>#<n>" ids carry their provenance.
    const auto hash = p.id.rfind('#');
    std::size_t index = 0;
    const char* first = p.id.data() + hash + 1;
    const char* last = p.id.data() + p.id.size();
    if (hash != std::string::npos && hash > 0 && first != last &&
        std::from_chars(first, last, index).ptr == last) {
      p.article_id = p.id.substr(0, hash);
      if (r.find("window_index") == r.end()) p.window_index = index;
    } else {
      p.article_id = p.id;
    }
  }
  return p;
}

QaInstance qa_instance_from_json(const Json& r) {
  QaInstance q;
  q.question_id = require_string(r, "question_id");
  q.question = require_string(r, "question");
  q.gold_answers = string_list(r, "gold_answers", true);
  const std::string type_name = require_string(r, "answer_type");
  const auto type = parse_answer_type(type_name);
  if (!type) throw DataError("unknown answer_type '" + type_name + "'");
  q.answer_type = *type;
  if (auto it = r.find("gold_evidence_ids"); it != r.end() && !it->is_null()) {
    if (!it->is_array()) throw DataError("field 'gold_evidence_ids' must be a list of id lists");
    for (const auto& set : *it) {
      if (!set.is_array()) throw DataError("field 'gold_evidence_ids' must be a list of id lists");
      std::vector<std::string> ids;
      for (const auto& id : set) {
        if (!id.is_string()) throw DataError("field 'gold_evidence_ids' must hold strings");
        ids.push_back(id.get<std::string>());
      }
      q.gold_evidence_ids.push_back(std::move(ids));
    }
  }
  q.linked_article_ids = string_list(r, "linked_article_ids", false);
  if (auto it = r.find("grounding_article_id"); it != r.end() && !it->is_null()) {
    q.grounding_article_id = require_string(r, "grounding_article_id");
  }
  q.gold_decomposition = string_list(r, "subquestions", false);
  validate(q);
  return q;
}

void validate(const QaInstance& q) {
  if (q.question_id.empty()) throw DataError("empty question_id");
  if (q.question.empty()) throw DataError("question '" + q.question_id + "' is empty");
  const bool marker_only = q.gold_answers.size() == 1 && q.gold_answers.front() == kUnanswerable;
  if ((q.answer_type == AnswerType::none) != marker_only) {
    throw DataError("question '" + q.question_id +
                    "': answer_type none requires gold_answers == [\"unanswerable\"] and vice versa");
  }
  if (q.gold_answers.empty()) throw DataError("question '" + q.question_id + "' has no gold answers");
}

// ---------------------------------------------------------------------------
// Files

std::vector<Article> read_articles(std::istream& in) { return read_jsonl(in, article_from_json); }
std::vector<Passage> read_passages(std::istream& in) { return read_jsonl(in, passage_from_json); }
std::vector<QaInstance> read_qa_instances(std::istream& in) { return read_jsonl(in, qa_instance_from_json); }

std::vector<Article> load_articles(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_articles(in);
}

std::vector<Passage> load_passages(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_passages(in);
}

CorpusRecords load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  if (format == CorpusFormat::article_jsonl) return load_articles(path);
  return load_passages(path);
}

std::vector<QaInstance> load_qa_instances(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_qa_instances(in);
}

void write_articles(std::ostream& out, std::span<const Article> articles) {
  for (const auto& a : articles) out << dump_line(to_json(a)) << '\n';
}

void write_passages(std::ostream& out, std::span<const Passage> passages) {
  for (const auto& p : passages) out << dump_line(to_json(p)) << '\n';
}

void write_qa_instances(std::ostream& out, std::span<const QaInstance> instances) {
  for (const auto& q : instances) out << dump_line(to_json(q)) << '\n';
}

// ---------------------------------------------------------------------------
// PassageStore

PassageStore::PassageStore(std::vector<Passage> passages) { add(std::move(passages)); }

void PassageStore::add(std::vector<Passage> passages) {
  passages_.reserve(passages_.size() + passages.size());
  for (auto& p : passages) {
    const std::size_t slot = passages_.size();
    if (!by_id_.emplace(p.id, slot).second) throw DataError("duplicate passage id '" + p.id + "'");
    by_article_[p.article_id].push_back(slot);
    passages_.push_back(std::move(p));
  }
  for (auto& [article, slots] : by_article_) {
    std::stable_sort(slots.begin(), slots.end(), [this](std::size_t a, std::size_t b) {
      return passages_[a].window_index < passages_[b].window_index;
    });
  }
}

const Passage* PassageStore::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& PassageStore::at(std::string_view id) const {
  const Passage* p = find(id);
  if (!p) throw DataError("unknown passage id '" + std::string(id) + "'");
  return *p;
}

std::vector<const Passage*> PassageStore::by_article(std::string_view article_id) const {
  std::vector<const Passage*> out;
  auto it = by_article_.find(std::string(article_id));
  if (it == by_article_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t slot : it->second) out.push_back(&passages_[slot]);
  return out;
}

std::vector<const Passage*> PassageStore::resolve(std::string_view evidence_id) const {
  if (const Passage* p = find(evidence_id)) return {p};
  auto out = by_article(evidence_id);
  if (out.empty()) throw DataError("evidence id '" + std::string(evidence_id) + "' not in corpus");
  return out;
}

void validate_evidence(std::span<const QaInstance> instances, const PassageStore& store) {
  for (const auto& q : instances) {
    for (const auto& set : q.gold_evidence_ids) {
      for (const auto& id : set) {
        if (!store.find(id) && store.by_article(id).empty()) {
          throw DataError("question '" + q.question_id + "': gold evidence id '" + id + "' not in corpus");
        }
      }
    }
  }
}

}  // namespace mdqa
