#pragma once

// Hard-prompt assembly: ordered few-shot examples (visual cue + language
// command + optional rationale + canonical UMRF block) followed by the
// operator's query and a fixed completion cue. Byte-deterministic by
// construction, since example ordering is exactly the thing under study.

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "umrf_forge/command.hpp"
#include "umrf_forge/errors.hpp"
#include "umrf_forge/io.hpp"
#include "umrf_forge/umrf.hpp"

namespace umrf_forge {

// The line after which the provider is expected to emit the UMRF document.
inline constexpr std::string_view kCompletionCue = "UMRF:";

struct FewShotExample {
  int example_id = 0;
  MultimodalCommand visual_cue;  // marker(s) + referent text; may be marker-only or empty
  std::string nl_command;
  std::optional<std::string> cot_rationale;
  UmrfGraph umrf_output;
};

enum class OrderingFlag { VisualFirst, LanguageFirst };

inline char flag_letter(OrderingFlag f) {
  return f == OrderingFlag::VisualFirst ? 'V' : 'L';
}

inline std::optional<OrderingFlag> flag_from_letter(char c) {
  if (c == 'V' || c == 'v') return OrderingFlag::VisualFirst;
  if (c == 'L' || c == 'l') return OrderingFlag::LanguageFirst;
  return std::nullopt;
}

struct PromptSpec {
  std::vector<std::pair<FewShotExample, OrderingFlag>> examples;
  MultimodalCommand query;
  bool include_cot = true;
  // chars/4 token heuristic against the provider context window, leaving
  // room for a 1024-token completion out of a 4096-token window
  int token_budget = 3072;
};

struct Prompt {
  std::string text;
  int token_estimate = 0;
};

// Ordered (example_id, flag) pairs rendered like "5L+4V".
inline std::string structure_label(
    const std::vector<std::pair<int, OrderingFlag>>& structure) {
  std::string out;
  for (std::size_t i = 0; i < structure.size(); ++i) {
    if (i) out += '+';
    out += std::to_string(structure[i].first);
    out += flag_letter(structure[i].second);
  }
  return out;
}

inline std::vector<std::pair<int, OrderingFlag>> spec_structure(const PromptSpec& spec) {
  std::vector<std::pair<int, OrderingFlag>> out;
  out.reserve(spec.examples.size());
  for (const auto& [ex, flag] : spec.examples) out.emplace_back(ex.example_id, flag);
  return out;
}

inline std::string render_example(const FewShotExample& ex, OrderingFlag flag,
                                  bool include_cot) {
  if (ex.nl_command.empty())
    throw Error(Errc::argument, "few-shot example " + std::to_string(ex.example_id) +
                                    " has an empty nl_command");
  std::vector<std::string> blocks;
  std::string visual = render_command(ex.visual_cue);
  if (flag == OrderingFlag::VisualFirst) {
    if (!visual.empty()) blocks.push_back(visual);
    blocks.push_back(ex.nl_command);
  } else {
    blocks.push_back(ex.nl_command);
    if (!visual.empty()) blocks.push_back(visual);
  }
  if (include_cot && ex.cot_rationale && !ex.cot_rationale->empty())
    blocks.push_back(*ex.cot_rationale);
  blocks.push_back(serialize_graph(ex.umrf_output));

  std::string out;
  for (const auto& b : blocks) {
    out += b;
    out += '\n';
  }
  out += '\n';  // one blank line terminates the example
  return out;
}

inline int estimate_tokens(std::string_view text) {
  return static_cast<int>((text.size() + 3) / 4);
}

class BudgetError : public Error {
 public:
  BudgetError(std::string message, int estimate, int budget, std::vector<int> drop_ids)
      : Error(Errc::budget, std::move(message)),
        estimate_(estimate),
        budget_(budget),
        drop_ids_(std::move(drop_ids)) {}
  int estimate() const { return estimate_; }
  int budget() const { return budget_; }
  // example_ids of the trailing examples that would have to go, last first
  const std::vector<int>& drop_ids() const { return drop_ids_; }

 private:
  int estimate_;
  int budget_;
  std::vector<int> drop_ids_;
};

inline Prompt build_prompt(const PromptSpec& spec) {
  if (spec.examples.empty())
    throw Error(Errc::argument, "prompt spec has no few-shot examples");
  for (std::size_t i = 0; i < spec.examples.size(); ++i)
    for (std::size_t j = i + 1; j < spec.examples.size(); ++j)
      if (spec.examples[i].first.example_id == spec.examples[j].first.example_id &&
          spec.examples[i].second == spec.examples[j].second)
        throw Error(Errc::argument,
                    "duplicate (example_id, ordering) pair: " +
                        std::to_string(spec.examples[i].first.example_id) +
                        flag_letter(spec.examples[i].second));

  std::vector<std::string> rendered;
  rendered.reserve(spec.examples.size());
  for (const auto& [ex, flag] : spec.examples)
    rendered.push_back(render_example(ex, flag, spec.include_cot));

  std::string tail = render_command(spec.query);
  tail += '\n';
  tail += kCompletionCue;
  tail += '\n';

  std::string text;
  for (const auto& r : rendered) text += r;
  text += tail;

  Prompt prompt{std::move(text), 0};
  prompt.token_estimate = estimate_tokens(prompt.text);
  if (prompt.token_estimate > spec.token_budget) {
    // figure out how many trailing examples would need to go
    std::size_t keep = rendered.size();
    std::size_t len = prompt.text.size();
    std::vector<int> drop_ids;
    while (keep > 0 && static_cast<int>((len + 3) / 4) > spec.token_budget) {
      --keep;
      len -= rendered[keep].size();
      drop_ids.push_back(spec.examples[keep].first.example_id);
    }
    throw BudgetError("prompt estimate " + std::to_string(prompt.token_estimate) +
                          " tokens exceeds budget " + std::to_string(spec.token_budget) +
                          "; drop the last " + std::to_string(drop_ids.size()) +
                          " example(s)",
                      prompt.token_estimate, spec.token_budget, drop_ids);
  }
  return prompt;
}

// Completion text between the cue and the first blank line (or a stop
// sequence), with leading blank lines skipped. Providers habitually start
// completions with a newline.
inline std::string extract_candidate(std::string_view completion,
                                     const std::vector<std::string>& stop = {}) {
  std::string_view rest = completion;
  for (const auto& s : stop) {
    auto at = rest.find(s);
    if (at != std::string_view::npos) rest = rest.substr(0, at);
  }
  std::size_t begin = 0;
  while (begin < rest.size() && (rest[begin] == '\n' || rest[begin] == '\r')) ++begin;
  rest = rest.substr(begin);
  // first blank line = "\n" followed by only spaces/CR up to the next "\n"
  std::size_t pos = 0;
  while (pos < rest.size()) {
    std::size_t nl = rest.find('\n', pos);
    if (nl == std::string_view::npos) break;
    std::size_t scan = nl + 1;
    while (scan < rest.size() && (rest[scan] == ' ' || rest[scan] == '\t' || rest[scan] == '\r'))
      ++scan;
    if (scan >= rest.size() || rest[scan] == '\n') {
      rest = rest.substr(0, nl);
      break;
    }
    pos = nl + 1;
  }
  // trim trailing whitespace
  std::size_t end = rest.size();
  while (end > 0 && (rest[end - 1] == ' ' || rest[end - 1] == '\t' || rest[end - 1] == '\r' ||
                     rest[end - 1] == '\n'))
    --end;
  return std::string(rest.substr(0, end));
}

// The rendered query command at the tail of a built prompt: the lines after
// the last blank line, with the trailing cue line removed. Used by the mock
// provider for fixture matching.
inline std::string final_query_block(std::string_view prompt_text) {
  std::string_view rest = prompt_text;
  while (!rest.empty() && (rest.back() == '\n' || rest.back() == '\r')) rest.remove_suffix(1);
  if (rest.ends_with(kCompletionCue)) rest.remove_suffix(kCompletionCue.size());
  while (!rest.empty() && (rest.back() == '\n' || rest.back() == '\r')) rest.remove_suffix(1);
  auto last_blank = rest.rfind("\n\n");
  if (last_blank != std::string_view::npos) rest = rest.substr(last_blank + 2);
  return std::string(rest);
}

// JSON-lines example library: one record per few-shot example, the UMRF
// document embedded under "umrf_graph".
inline std::vector<FewShotExample> load_examples(const std::filesystem::path& path) {
  std::vector<FewShotExample> out;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    Json j;
    try {
      j = Json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::syntax, where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(Errc::schema, where + ": expected an object");
    FewShotExample ex;
    if (!j.contains("example_id") || !j["example_id"].is_number_integer())
      throw Error(Errc::schema, where + ": example_id must be an integer");
    ex.example_id = j["example_id"].get<int>();
    if (!j.contains("nl_command") || !j["nl_command"].is_string() ||
        j["nl_command"].get<std::string>().empty())
      throw Error(Errc::schema, where + ": nl_command must be a non-empty string");
    ex.nl_command = j["nl_command"].get<std::string>();
    if (j.contains("visual_cue") && j["visual_cue"].is_string())
      ex.visual_cue = parse_fragment(j["visual_cue"].get<std::string>());
    if (j.contains("cot_rationale") && j["cot_rationale"].is_string())
      ex.cot_rationale = j["cot_rationale"].get<std::string>();
    if (!j.contains("umrf_graph"))
      throw Error(Errc::schema, where + ": missing umrf_graph");
    ex.umrf_output = parse_graph(j["umrf_graph"].dump());
    auto violations = validate_graph(ex.umrf_output);
    if (!violations.empty())
      throw Error(Errc::schema, where + ": embedded graph is invalid: " +
                                    violations.front().message);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace umrf_forge
