#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdqa/providers.hpp"

namespace mdqa {

struct Decomposition {
  std::string question;
  std::vector<std::string> subquestions;  // never empty
  bool decomposed = false;                // false <=> subquestions == {question}

  static Decomposition identity(std::string question);
  bool operator==(const Decomposition&) const = default;
};

struct DecompositionExample {
  std::string question;
  std::vector<std::string> subquestions;
};

/// Few-shot decomposition prompt: header, then for every example
///   Question: <q>
///   1: <s1>
///   2: <s2>
/// separated by blank lines, then "Question: <target>" and the cue "1:".
std::string build_decomposition_prompt(std::string_view question, std::span<const DecompositionExample> examples);

/// Reads consecutive "<n>: <text>" lines with strictly increasing n, stopping
/// at the first line that does not match. Throws ParseError when none match.
std::vector<std::string> parse_subquestions(std::string_view completion);

/// Loads decomposition examples stored as QA records with a "subquestions" field.
std::vector<DecompositionExample> load_decomposition_examples(const std::filesystem::path& path);

struct DecomposeOptions {
  std::size_t max_tokens = 256;
  double temperature = 0.0;
};

/// Identity decomposition when disabled; otherwise prompt, complete and
/// parse. Unparseable output falls back to the identity with a warning.
/// Completion failures propagate.
Decomposition decompose(std::string_view question, CompletionService& service, bool enabled,
                        std::span<const DecompositionExample> examples, const DecomposeOptions& options = {});

}  // namespace mdqa
