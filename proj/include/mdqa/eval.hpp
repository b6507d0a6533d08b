#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdqa/corpus.hpp"
#include "mdqa/pipeline.hpp"

namespace mdqa {

/// Lowercase, strip punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

/// F1 over whitespace tokens of the normalized strings. Both empty gives 1,
/// exactly one empty gives 0.
double token_f1(std::string_view prediction, std::string_view gold);
double exact_match(std::string_view prediction, std::string_view gold);

/// Token F1, except that a gold of "unanswerable" only matches exactly.
double answer_f1(std::string_view prediction, std::string_view gold);

using AnswerMetric = std::function<double(std::string_view prediction, std::string_view gold)>;

/// Throws Error when `golds` is empty.
double max_over_golds(const AnswerMetric& metric, std::string_view prediction, std::span<const std::string> golds);

/// Maps the prediction to yes/no by its first word (yes/true, no/false) and
/// compares with the gold. Throws Error when the gold is not yes or no.
double accuracy_boolean(std::string_view prediction, std::string_view gold);

/// |gold ∩ top-k| / |gold| for the best gold set. nullopt when every set is empty.
std::optional<double> recall_at_k(std::span<const std::string> retrieved, std::span<const std::vector<std::string>> gold_sets,
                                  std::size_t k);

/// Best set-F1 between predicted ids and one gold set. nullopt when every set is empty.
std::optional<double> evidence_f1(std::span<const std::string> predicted,
                                  std::span<const std::vector<std::string>> gold_sets);

/// Lowercase whitespace tokens.
std::vector<std::string> sari_tokens(std::string_view text);

/// Mean over n = 1..4 of (F1_add + F1_keep + P_del) / 3. N-grams count once
/// per sentence; a reference weight is the fraction of references holding
/// the n-gram. A precision or recall with an empty denominator is 1.
/// Throws Error when `references` is empty.
double sari(std::string_view source, std::string_view prediction, std::span<const std::string> references);

/// Subquestions joined with " ; ", the form decompositions are scored in.
std::string serialize_decomposition(std::span<const std::string> subquestions);

enum class DatasetProfile { iirc, qasper, strategyqa };
std::string_view to_string(DatasetProfile profile) noexcept;
std::optional<DatasetProfile> parse_dataset_profile(std::string_view name) noexcept;

struct InstanceScores {
  std::string question_id;
  std::string answer_type;
  std::map<std::string, double> metrics;  // metrics that could not be scored are absent
};

struct EvalReport {
  DatasetProfile profile = DatasetProfile::iirc;
  std::vector<std::string> metric_names;  // display order
  std::vector<InstanceScores> per_instance;
  std::map<std::string, double> aggregate;
  std::map<std::string, std::size_t> counts;  // instances scored per metric
  std::map<std::string, std::map<std::string, double>> breakdowns;  // answer type -> metric -> mean
  std::map<std::string, std::size_t> breakdown_counts;
};

/// Scores records against gold instances by question id:
///   iirc        f1, em
///   qasper      answer_f1 (by answer type), evidence_f1
///   strategyqa  accuracy, recall@10 over the retrieval log, sari
/// Throws Error for an empty record list or ids present on one side only.
EvalReport evaluate_run(std::span<const AnswerRecord> records, std::span<const QaInstance> gold,
                        DatasetProfile profile);

/// Aggregates x100 with one decimal; unscored metrics print as "absent".
std::string format_report(const EvalReport& report);

/// One JSON line per instance, then one per answer type, then the aggregate.
void write_report_jsonl(std::ostream& out, const EvalReport& report);

}  // namespace mdqa
