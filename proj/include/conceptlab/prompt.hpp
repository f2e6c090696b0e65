#pragma once

// Prompt construction for the iterated labeling task, and label / rule /
// probability extraction from model replies.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conceptlab/exemplar.hpp"
#include "json.hpp"

namespace conceptlab {

enum class PromptMode { Chat, Completion, ChatElicitation };

std::string_view prompt_mode_name(PromptMode mode);
PromptMode parse_prompt_mode(std::string_view name);  // ConfigError on unknown names
inline bool is_chat(PromptMode m) { return m != PromptMode::Completion; }

struct Turn {
  std::string role;  // system, user, assistant
  std::string text;
};

struct PromptBundle {
  PromptMode mode = PromptMode::Chat;
  std::vector<Turn> turns;  // chat modes, system turn first
  std::string prefix;       // completion mode

  // Canonical plain-text rendering, used for golden files.
  std::string render() const;
};

// Prompt for labeling set `upto_set` given gold labels for every earlier set.
// Completion mode queries a single object, `query_object`, and also reveals
// the gold labels of the objects before it in the same set.
PromptBundle build_prompt(const ExemplarList& list, std::size_t upto_set, PromptMode mode,
                          std::size_t query_object = 0);

// "True"/"False" up to surrounding whitespace and letter case.
std::optional<bool> parse_boolean(std::string_view text);

struct ObjectLabel {
  std::optional<bool> label;
  std::string reason;  // set when label is nullopt
};

struct Extraction {
  std::vector<ObjectLabel> labels;
  std::optional<std::string> rule_text;
  // Which reply line labeled each object (chat modes), for logprob lookup.
  std::vector<std::optional<std::size_t>> line_of_object;

  std::size_t excluded() const;
};

// Chat reply: "- <object> -> <label>" lines aligned in order to the queried
// objects; a "Rule:" line anywhere is captured as the elicited rule.
Extraction extract_chat_labels(std::string_view reply, std::span<const std::string> objects);
// Completion: the first line of the completion must be a boolean variant.
ObjectLabel extract_completion_label(std::string_view completion);

struct TokenLogprob {
  std::string token;
  double logprob = 0;
};

// mT / (mT + mF) over the True and False token families in a top-k list.
// Throws DataError when neither family is present.
double true_probability(std::span<const TokenLogprob> top);

}  // namespace conceptlab
