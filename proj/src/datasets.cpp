#include "mdqa/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "mdqa/error.hpp"
#include "mdqa/text.hpp"

namespace mdqa::datasets {

using nlohmann::json;

namespace {

std::string str(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

const json& list(const json& j, const char* key) {
  static const json empty = json::array();
  auto it = j.find(key);
  return (it != j.end() && it->is_array()) ? *it : empty;
}

void push_unique(std::vector<std::string>& v, std::string s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(std::move(s));
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

Converted convert_iirc(const json& questions, const json& context_articles) {
  Converted out;
  if (!questions.is_array()) throw DataError("IIRC questions file must be a list");
  if (!context_articles.is_object()) throw DataError("IIRC context articles file must be an object");

  for (const auto& [title, body] : context_articles.items()) {
    if (!body.is_string()) continue;
    Article a{text::to_lower_ascii(title), title, body.get<std::string>()};
    if (a.text.empty() && a.title.empty()) continue;
    out.articles.push_back(std::move(a));
  }

  std::set<std::string> main_ids;
  for (const auto& paragraph : questions) {
    const std::string pid = str(paragraph, "pid");
    const std::string main_id = "main:" + pid;
    if (main_ids.insert(main_id).second) {
      out.articles.push_back(Article{main_id, str(paragraph, "title"), str(paragraph, "text")});
    }
    for (const auto& q : list(paragraph, "questions")) {
      QaInstance inst;
      inst.question_id = str(q, "qid");
      inst.question = str(q, "question");
      const json& answer = q.contains("answer") ? q["answer"] : json::object();
      const std::string type = str(answer, "type");
      if (type == "none") {
        inst.answer_type = AnswerType::none;
        inst.gold_answers = {std::string(kUnanswerable)};
      } else if (type == "binary") {
        inst.answer_type = AnswerType::binary;
        inst.gold_answers = {text::to_lower_ascii(str(answer, "answer_value"))};
      } else if (type == "value") {
        inst.answer_type = AnswerType::numeric;
        std::string value = str(answer, "answer_value");
        if (const std::string unit = str(answer, "answer_unit"); !unit.empty()) value += " " + unit;
        inst.gold_answers = {value};
      } else {
        inst.answer_type = AnswerType::span;
        std::vector<std::string> spans;
        for (const auto& s : list(answer, "answer_spans")) spans.push_back(str(s, "text"));
        inst.gold_answers = {text::join(spans, ", ")};
      }

      std::vector<std::string> gold_ids;
      std::size_t i = 0;
      for (const auto& ctx : list(q, "context")) {
        const std::string passage = str(ctx, "passage");
        Passage snippet;
        snippet.id = inst.question_id + "#gold" + std::to_string(i);
        snippet.article_id = passage == "main" ? main_id : text::to_lower_ascii(passage);
        snippet.title = passage == "main" ? str(paragraph, "title") : passage;
        snippet.text = str(ctx, "text");
        snippet.window_index = i++;
        gold_ids.push_back(snippet.id);
        out.passages.push_back(std::move(snippet));
      }
      inst.gold_evidence_ids.push_back(std::move(gold_ids));
      for (const auto& link : list(q, "question_links")) {
        if (link.is_string()) push_unique(inst.linked_article_ids, text::to_lower_ascii(link.get<std::string>()));
      }
      push_unique(inst.linked_article_ids, main_id);
      if (inst.gold_answers.front().empty()) continue;
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

Converted convert_qasper(const json& papers) {
  Converted out;
  if (!papers.is_object()) throw DataError("Qasper file must be an object keyed by paper id");
  for (const auto& [paper_id, paper] : papers.items()) {
    const std::string title = str(paper, "title");
    std::unordered_map<std::string, std::string> paragraph_ids;
    std::size_t index = 0;
    for (const auto& section : list(paper, "full_text")) {
      for (const auto& para : list(section, "paragraphs")) {
        if (!para.is_string() || text::trim(para.get<std::string>()).empty()) continue;
        Passage p{paper_id + "#" + std::to_string(index), paper_id, title, para.get<std::string>(), index};
        paragraph_ids.emplace(p.text, p.id);
        out.passages.push_back(std::move(p));
        ++index;
      }
    }

    for (const auto& qa : list(paper, "qas")) {
      QaInstance inst;
      inst.question_id = str(qa, "question_id");
      inst.question = str(qa, "question");
      inst.grounding_article_id = paper_id;
      bool have_type = false;
      for (const auto& wrapper : list(qa, "answers")) {
        const json& a = wrapper.contains("answer") ? wrapper["answer"] : wrapper;
        std::string gold;
        AnswerType type;
        if (a.value("unanswerable", false)) {
          gold = std::string(kUnanswerable);
          type = AnswerType::none;
        } else if (a.contains("yes_no") && a["yes_no"].is_boolean()) {
          gold = a["yes_no"].get<bool>() ? "yes" : "no";
          type = AnswerType::boolean;
        } else if (!list(a, "extractive_spans").empty()) {
          std::vector<std::string> spans;
          for (const auto& s : list(a, "extractive_spans")) {
            if (s.is_string()) spans.push_back(s.get<std::string>());
          }
          gold = text::join(spans, ", ");
          type = AnswerType::extractive;
        } else {
          gold = str(a, "free_form_answer");
          type = AnswerType::abstractive;
        }
        if (gold.empty()) continue;
        // The first answerable reference decides the type; "none" only when all are.
        if (!have_type || (inst.answer_type == AnswerType::none && type != AnswerType::none)) {
          inst.answer_type = type;
          have_type = true;
        }
        push_unique(inst.gold_answers, gold);

        std::vector<std::string> ids;
        for (const auto& ev : list(a, "evidence")) {
          if (!ev.is_string()) continue;
          auto it = paragraph_ids.find(ev.get<std::string>());
          if (it == paragraph_ids.end()) {
            ++out.dropped_evidence;
            continue;
          }
          push_unique(ids, it->second);
        }
        inst.gold_evidence_ids.push_back(std::move(ids));
      }
      if (inst.gold_answers.empty()) continue;
      if (inst.answer_type == AnswerType::none && inst.gold_answers.size() > 1) {
        inst.answer_type = AnswerType::abstractive;
      }
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

Converted convert_strategyqa(const json& questions, const json& paragraphs) {
  Converted out;
  if (!questions.is_array()) throw DataError("StrategyQA questions file must be a list");
  if (!paragraphs.is_object()) throw DataError("StrategyQA paragraphs file must be an object");
  for (const auto& [key, para] : paragraphs.items()) {
    Article a{key, str(para, "title"), str(para, "content")};
    if (a.text.empty() && a.title.empty()) continue;
    out.articles.push_back(std::move(a));
  }
  for (const auto& q : questions) {
    QaInstance inst;
    inst.question_id = str(q, "qid");
    inst.question = str(q, "question");
    inst.answer_type = AnswerType::boolean;
    inst.gold_answers = {q.value("answer", false) ? "yes" : "no"};
    for (const auto& step : list(q, "decomposition")) {
      if (step.is_string()) inst.gold_decomposition.push_back(step.get<std::string>());
    }
    // evidence: annotator -> step -> list of (id list | "operation" | "no_evidence")
    for (const auto& annotator : list(q, "evidence")) {
      std::vector<std::string> ids;
      if (annotator.is_array()) {
        for (const auto& step : annotator) {
          if (!step.is_array()) continue;
          for (const auto& item : step) {
            if (!item.is_array()) continue;
            for (const auto& id : item) {
              if (id.is_string()) push_unique(ids, id.get<std::string>());
            }
          }
        }
      }
      inst.gold_evidence_ids.push_back(std::move(ids));
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

}  // namespace mdqa::datasets
