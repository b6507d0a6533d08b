#include "mdqa/decompose.hpp"

#include <spdlog/spdlog.h>

#include <cctype>
#include <charconv>
#include <optional>

#include "mdqa/corpus.hpp"
#include "mdqa/error.hpp"
#include "mdqa/templates.hpp"
#include "mdqa/text.hpp"

namespace mdqa {

namespace {

struct NumberedLine {
  unsigned long number;
  std::string text;
};

std::optional<NumberedLine> match_numbered(std::string_view line) {
  line = text::trim(line);
  std::size_t digits = 0;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits == 0 || digits >= line.size() || line[digits] != ':') return std::nullopt;
  unsigned long n = 0;
  if (std::from_chars(line.data(), line.data() + digits, n).ec != std::errc{}) return std::nullopt;
  const auto body = text::trim(line.substr(digits + 1));
  if (body.empty()) return std::nullopt;
  return NumberedLine{n, std::string(body)};
}

}  // namespace

Decomposition Decomposition::identity(std::string question) {
  Decomposition d;
  d.subquestions = {question};
  d.question = std::move(question);
  d.decomposed = false;
  return d;
}

std::string build_decomposition_prompt(std::string_view question, std::span<const DecompositionExample> examples) {
  std::string prompt(templates::kDecompositionHeader);
  for (const auto& ex : examples) {
    prompt += "\nQuestion: " + ex.question + "\n";
    for (std::size_t i = 0; i < ex.subquestions.size(); ++i) {
      prompt += std::to_string(i + 1) + ": " + ex.subquestions[i] + "\n";
    }
  }
  prompt += "\nQuestion: ";
  prompt += question;
  prompt += "\n1:";
  return prompt;
}

std::vector<std::string> parse_subquestions(std::string_view completion) {
  std::vector<std::string> out;
  unsigned long last = 0;
  for (const auto& line : text::split_lines(text::trim(completion))) {
    auto m = match_numbered(line);
    if (!m || (!out.empty() && m->number <= last)) break;
    last = m->number;
    out.push_back(std::move(m->text));
  }
  if (out.empty()) throw ParseError("no numbered subquestions in completion");
  return out;
}

std::vector<DecompositionExample> load_decomposition_examples(const std::filesystem::path& path) {
  std::vector<DecompositionExample> out;
  for (auto& q : load_qa_instances(path)) {
    if (q.gold_decomposition.empty()) {
      throw DataError("decomposition example '" + q.question_id + "' has no subquestions");
    }
    out.push_back(DecompositionExample{std::move(q.question), std::move(q.gold_decomposition)});
  }
  return out;
}

Decomposition decompose(std::string_view question, CompletionService& service, bool enabled,
                        std::span<const DecompositionExample> examples, const DecomposeOptions& options) {
  if (!enabled) return Decomposition::identity(std::string(question));

  CompletionRequest request;
  request.prompt = build_decomposition_prompt(question, examples);
  request.max_tokens = options.max_tokens;
  request.temperature = options.temperature;
  request.stop_sequences = {"Question:"};
  const std::string completion = service.complete(request);

  // The prompt ends with the "1:" cue, so a non-empty first line continues subquestion 1.
  const std::string_view first_line = std::string_view(completion).substr(0, completion.find('\n'));
  std::string numbered = completion;
  if (!text::trim(first_line).empty() && !match_numbered(first_line)) numbered = "1:" + completion;

  std::vector<std::string> subquestions;
  try {
    subquestions = parse_subquestions(numbered);
  } catch (const ParseError&) {
    spdlog::warn("could not parse a decomposition for '{}'; using the question as is", question);
    return Decomposition::identity(std::string(question));
  }
  if (subquestions.size() == 1 && subquestions.front() == text::trim(question)) {
    return Decomposition::identity(std::string(question));
  }
  Decomposition d;
  d.question = std::string(question);
  d.subquestions = std::move(subquestions);
  d.decomposed = true;
  return d;
}

}  // namespace mdqa
