#include "mdqa/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "mdqa/error.hpp"
#include "mdqa/json_io.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && text::is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !text::is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view input) {
  std::string s;
  s.reserve(input.size());
  for (char c : input) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    s += static_cast<char>(u < 0x80 ? std::tolower(u) : u);
  }
  std::vector<std::string> kept;
  for (auto& tok : split_ws(s)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    kept.push_back(std::move(tok));
  }
  return text::join(kept, " ");
}

double token_f1(std::string_view prediction, std::string_view gold) {
  const auto p = split_ws(normalize_answer(prediction));
  const auto g = split_ws(normalize_answer(gold));
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / p.size();
  const double recall = static_cast<double>(common) / g.size();
  return 2 * precision * recall / (precision + recall);
}

double exact_match(std::string_view prediction, std::string_view gold) {
  return normalize_answer(prediction) == normalize_answer(gold) ? 1.0 : 0.0;
}

double answer_f1(std::string_view prediction, std::string_view gold) {
  if (normalize_answer(gold) == kUnanswerable) return exact_match(prediction, gold);
  return token_f1(prediction, gold);
}

double max_over_golds(const AnswerMetric& metric, std::string_view prediction, std::span<const std::string> golds) {
  if (golds.empty()) throw Error("no gold answers to compare against");
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, metric(prediction, g));
  return best;
}

double accuracy_boolean(std::string_view prediction, std::string_view gold) {
  const std::string g = normalize_answer(gold);
  if (g != "yes" && g != "no") throw Error("boolean gold must be yes or no, got '" + std::string(gold) + "'");
  const auto tokens = split_ws(normalize_answer(prediction));
  if (tokens.empty()) return 0.0;
  std::string mapped;
  if (tokens.front() == "yes" || tokens.front() == "true") mapped = "yes";
  if (tokens.front() == "no" || tokens.front() == "false") mapped = "no";
  return mapped == g ? 1.0 : 0.0;
}

std::optional<double> recall_at_k(std::span<const std::string> retrieved, std::span<const std::vector<std::string>> gold_sets,
                                  std::size_t k) {
  if (k == 0) throw Error("recall@k needs k >= 1");
  const std::unordered_set<std::string> top(retrieved.begin(), retrieved.begin() + std::min(k, retrieved.size()));
  std::optional<double> best;
  for (const auto& set : gold_sets) {
    const std::set<std::string> gold(set.begin(), set.end());
    if (gold.empty()) continue;
    std::size_t hit = 0;
    for (const auto& id : gold) hit += top.count(id);
    const double r = static_cast<double>(hit) / gold.size();
    best = std::max(best.value_or(0.0), r);
  }
  return best;
}

std::optional<double> evidence_f1(std::span<const std::string> predicted,
                                  std::span<const std::vector<std::string>> gold_sets) {
  const std::set<std::string> pred(predicted.begin(), predicted.end());
  std::optional<double> best;
  for (const auto& set : gold_sets) {
    const std::set<std::string> gold(set.begin(), set.end());
    if (gold.empty()) continue;
    std::size_t hit = 0;
    for (const auto& id : pred) hit += gold.count(id);
    double f1 = 0.0;
    if (hit > 0) {
      const double p = static_cast<double>(hit) / pred.size();
      const double r = static_cast<double>(hit) / gold.size();
      f1 = 2 * p * r / (p + r);
    }
    best = std::max(best.value_or(0.0), f1);
  }
  return best;
}

std::vector<std::string> sari_tokens(std::string_view s) { return split_ws(text::to_lower_ascii(s)); }

namespace {

using GramSet = std::set<std::string>;

GramSet ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  GramSet out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g = tokens[i];
    for (std::size_t j = 1; j < n; ++j) g += '\x1f' + tokens[i + j];
    out.insert(std::move(g));
  }
  return out;
}

double ratio(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2 * p * r / (p + r); }

}  // namespace

double sari(std::string_view source, std::string_view prediction, std::span<const std::string> references) {
  if (references.empty()) throw Error("SARI needs at least one reference");
  const auto src = sari_tokens(source);
  const auto out = sari_tokens(prediction);
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(sari_tokens(r));
  const double nrefs = static_cast<double>(refs.size());

  double total = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const GramSet s = ngrams(src, n);
    const GramSet o = ngrams(out, n);
    std::map<std::string, double> weight;  // fraction of references holding the gram
    GramSet ref_union;
    for (const auto& r : refs) {
      for (const auto& g : ngrams(r, n)) {
        weight[g] += 1.0 / nrefs;
        ref_union.insert(g);
      }
    }
    auto w = [&](const std::string& g) {
      auto it = weight.find(g);
      return it == weight.end() ? 0.0 : it->second;
    };

    double keep_num = 0, keep_p_den = 0, keep_r_den = 0;
    double del_num = 0, del_den = 0;
    for (const auto& g : s) {
      keep_r_den += w(g);
      if (o.count(g)) {
        keep_num += w(g);
        keep_p_den += 1;
      } else {
        del_num += 1 - w(g);
        del_den += 1;
      }
    }
    double add_num = 0, add_p_den = 0, add_r_den = 0;
    for (const auto& g : o) {
      if (s.count(g)) continue;
      add_p_den += 1;
      if (ref_union.count(g)) add_num += 1;
    }
    for (const auto& g : ref_union) {
      if (!s.count(g)) add_r_den += 1;
    }
    const double keep = f1_of(ratio(keep_num, keep_p_den), ratio(keep_num, keep_r_den));
    const double add = f1_of(ratio(add_num, add_p_den), ratio(add_num, add_r_den));
    const double del = ratio(del_num, del_den);
    total += (add + keep + del) / 3.0;
  }
  return total / 4.0;
}

std::string serialize_decomposition(std::span<const std::string> subquestions) {
  return text::join(std::vector<std::string>(subquestions.begin(), subquestions.end()), " ; ");
}

std::string_view to_string(DatasetProfile profile) noexcept {
  switch (profile) {
    case DatasetProfile::iirc: return "iirc";
    case DatasetProfile::qasper: return "qasper";
    case DatasetProfile::strategyqa: return "strategyqa";
  }
  return "iirc";
}

std::optional<DatasetProfile> parse_dataset_profile(std::string_view name) noexcept {
  for (auto p : {DatasetProfile::iirc, DatasetProfile::qasper, DatasetProfile::strategyqa}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

namespace {

std::string qasper_type(AnswerType t) {
  return t == AnswerType::none ? std::string(kUnanswerable) : std::string(to_string(t));
}

/// StrategyQA gold evidence names whole paragraphs while the log holds
/// passages: a logged passage counts under its own id when that id is gold,
/// otherwise under its article id.
std::vector<std::string> logged_evidence_ids(const AnswerRecord& r, const QaInstance& q) {
  std::unordered_set<std::string> gold;
  for (const auto& set : q.gold_evidence_ids) gold.insert(set.begin(), set.end());
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& c : r.retrieval_log) {
    const std::string& id = gold.count(c.passage_id) || c.article_id.empty() ? c.passage_id : c.article_id;
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

InstanceScores score_instance(const AnswerRecord& r, const QaInstance& q, DatasetProfile profile) {
  InstanceScores s;
  s.question_id = q.question_id;
  s.answer_type = profile == DatasetProfile::qasper ? qasper_type(q.answer_type) : std::string(to_string(q.answer_type));
  switch (profile) {
    case DatasetProfile::iirc:
      s.metrics["f1"] = max_over_golds(answer_f1, r.answer, q.gold_answers);
      s.metrics["em"] = max_over_golds(exact_match, r.answer, q.gold_answers);
      break;
    case DatasetProfile::qasper: {
      s.metrics["answer_f1"] = max_over_golds(answer_f1, r.answer, q.gold_answers);
      std::vector<std::string> predicted;
      for (const auto& c : r.contexts_used) predicted.push_back(c.passage_id);
      if (auto f = evidence_f1(predicted, q.gold_evidence_ids)) s.metrics["evidence_f1"] = *f;
      break;
    }
    case DatasetProfile::strategyqa: {
      if (q.gold_answers.empty()) throw Error("question '" + q.question_id + "' has no gold answer");
      s.metrics["accuracy"] = accuracy_boolean(r.answer, q.gold_answers.front());
      if (!r.retrieval_log.empty()) {
        if (auto rec = recall_at_k(logged_evidence_ids(r, q), q.gold_evidence_ids, 10)) s.metrics["recall@10"] = *rec;
      }
      if (!q.gold_decomposition.empty() && !r.subquestions.empty()) {
        const std::string reference = serialize_decomposition(q.gold_decomposition);
        s.metrics["sari"] =
            sari(q.question, serialize_decomposition(r.subquestions), std::span<const std::string>(&reference, 1));
      }
      break;
    }
  }
  return s;
}

std::vector<std::string> metric_names(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::iirc: return {"f1", "em"};
    case DatasetProfile::qasper: return {"answer_f1", "evidence_f1"};
    case DatasetProfile::strategyqa: return {"accuracy", "recall@10", "sari"};
  }
  return {};
}

void accumulate_means(std::span<const InstanceScores> rows, std::map<std::string, double>& means,
                      std::map<std::string, std::size_t>& counts) {
  std::map<std::string, double> sums;
  for (const auto& row : rows) {
    for (const auto& [name, value] : row.metrics) {
      sums[name] += value;
      ++counts[name];
    }
  }
  for (const auto& [name, sum] : sums) means[name] = sum / static_cast<double>(counts[name]);
}

std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
  return buf;
}

}  // namespace

EvalReport evaluate_run(std::span<const AnswerRecord> records, std::span<const QaInstance> gold,
                        DatasetProfile profile) {
  if (records.empty()) throw Error("nothing to evaluate: no answer records");
  std::unordered_map<std::string, const QaInstance*> by_id;
  for (const auto& q : gold) by_id.emplace(q.question_id, &q);

  std::vector<std::string> unmatched;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!by_id.count(r.question_id)) unmatched.push_back(r.question_id + " (no gold)");
    if (!seen.insert(r.question_id).second) unmatched.push_back(r.question_id + " (duplicate record)");
  }
  for (const auto& q : gold) {
    if (!seen.count(q.question_id)) unmatched.push_back(q.question_id + " (no record)");
  }
  if (!unmatched.empty()) throw Error("unmatched question ids: " + text::join(unmatched, ", "));

  EvalReport report;
  report.profile = profile;
  report.metric_names = metric_names(profile);
  for (const auto& r : records) report.per_instance.push_back(score_instance(r, *by_id.at(r.question_id), profile));
  accumulate_means(report.per_instance, report.aggregate, report.counts);

  if (profile == DatasetProfile::qasper) {
    std::map<std::string, std::vector<InstanceScores>> groups;
    for (const auto& row : report.per_instance) {
      InstanceScores only_answer{row.question_id, row.answer_type, {}};
      only_answer.metrics["answer_f1"] = row.metrics.at("answer_f1");
      groups[row.answer_type].push_back(std::move(only_answer));
    }
    for (const auto& [type, rows] : groups) {
      std::map<std::string, std::size_t> counts;
      accumulate_means(rows, report.breakdowns[type], counts);
      report.breakdown_counts[type] = rows.size();
    }
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "profile " << to_string(report.profile) << ", " << report.per_instance.size() << " instances\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %8s %8s\n", "metric", "score", "n");
  out << line;
  for (const auto& name : report.metric_names) {
    auto it = report.aggregate.find(name);
    const std::string value = it == report.aggregate.end() ? "absent" : fmt_pct(it->second);
    const auto n = report.counts.count(name) ? report.counts.at(name) : 0;
    std::snprintf(line, sizeof line, "%-14s %8s %8zu\n", name.c_str(), value.c_str(), n);
    out << line;
  }
  if (!report.breakdowns.empty()) {
    out << "\nanswer_f1 by answer type\n";
    for (const auto& [type, metrics] : report.breakdowns) {
      std::snprintf(line, sizeof line, "%-14s %8s %8zu\n", type.c_str(), fmt_pct(metrics.at("answer_f1")).c_str(),
                    report.breakdown_counts.at(type));
      out << line;
    }
  }
  return out.str();
}

void write_report_jsonl(std::ostream& out, const EvalReport& report) {
  for (const auto& row : report.per_instance) {
    out << dump_line(Json{{"question_id", row.question_id}, {"answer_type", row.answer_type}, {"metrics", row.metrics}})
        << '\n';
  }
  for (const auto& [type, metrics] : report.breakdowns) {
    out << dump_line(Json{{"answer_type", type}, {"metrics", metrics}, {"count", report.breakdown_counts.at(type)}})
        << '\n';
  }
  out << dump_line(Json{{"profile", std::string(to_string(report.profile))},
                        {"aggregate", report.aggregate},
                        {"counts", report.counts},
                        {"instances", report.per_instance.size()}})
      << '\n';
}

}  // namespace mdqa
