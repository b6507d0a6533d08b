#pragma once

// Adapters from the raw IIRC, Qasper and StrategyQA releases to the canonical
// article / passage / QA line formats.

#include <cstddef>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "mdqa/corpus.hpp"

namespace mdqa::datasets {

struct Converted {
  std::vector<Article> articles;   // windowed at index time
  std::vector<Passage> passages;   // used as-is (paragraphs, gold snippets)
  std::vector<QaInstance> instances;
  std::size_t dropped_evidence = 0;  // evidence strings that matched no paragraph
};

/// IIRC: `questions` is the train/dev/test list, `context_articles` the
/// title -> text map. Gold evidence becomes snippet passages "<qid>#gold<i>".
Converted convert_iirc(const nlohmann::json& questions, const nlohmann::json& context_articles);

/// Qasper: one passage per full-text paragraph, "<paper_id>#<i>"; no windowing.
Converted convert_qasper(const nlohmann::json& papers);

/// StrategyQA: each paragraph becomes an article (windowed later); gold
/// evidence ids are paragraph keys, i.e. article ids.
Converted convert_strategyqa(const nlohmann::json& questions, const nlohmann::json& paragraphs);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace mdqa::datasets
