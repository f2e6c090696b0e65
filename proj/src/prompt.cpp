#include "conceptlab/prompt.hpp"

#include <cctype>
#include <cmath>

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"

namespace conceptlab {

namespace {

// Reconstructed wording; the structure (bulleted objects, "object -> label"
// lines, gold labels as assistant turns, numbered groups) is what matters.
constexpr std::string_view kChatSystem =
    "You are learning what the word \"feppy\" means. It describes some objects but not others.\n"
    "Objects come in groups of one to five. Whether an object is feppy may depend on its own "
    "size, color and shape, and also on the other objects in its group.\n"
    "After each group you are told the correct labels. Use them to work out the rule.\n";

constexpr std::string_view kChatAnswer =
    "For the new group, label every object in the order given: True if it is feppy, False if "
    "it is not. Answer with one line per object:\n"
    "- <object> -> <True or False>";

constexpr std::string_view kElicitAnswer =
    "For the new group, first state the rule you have inferred, concisely, on one line "
    "starting with \"Rule:\". Then label every object in the order given: True if it is feppy, "
    "False if it is not. Answer with one line per object:\n"
    "- <object> -> <True or False>";

constexpr std::string_view kCompletionPreamble =
    "The word \"feppy\" describes some objects but not others. Objects come in groups of one "
    "to five, and each object is labeled True if it is feppy and False if it is not.\n";

std::string label_text(bool b) { return b ? "True" : "False"; }

std::string group_query(const ExemplarList& list, std::size_t s) {
  std::string out = "Group " + std::to_string(s + 1) + ":";
  for (const auto& o : list.sets[s].objects) out += "\n- " + describe(o, list.vocab);
  return out;
}

std::string group_answer(const ExemplarList& list, std::size_t s) {
  std::string out;
  const auto& set = list.sets[s];
  for (std::size_t i = 0; i < set.objects.size(); ++i) {
    if (i) out += "\n";
    out += "- " + describe(set.objects[i], list.vocab) + " -> " + label_text(set.labels[i]);
  }
  return out;
}

// Lowercased words of an object description, with list markers, quotes and
// brackets dropped.
std::string normalize_object(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (space && !out.empty()) out += ' ';
      space = false;
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      space = true;
    }
  }
  return out;
}

// "1. x", "2) x", "- x", "* x" -> "x"
std::string_view strip_list_marker(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) return line.substr(i + 1);
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) return line.substr(1);
  return line;
}

std::string strip_markup(std::string_view line) {
  std::string out;
  for (char c : line) {
    if (c != '*' && c != '`') out += c;
  }
  return trim(out);
}

}  // namespace

std::string_view prompt_mode_name(PromptMode mode) {
  switch (mode) {
    case PromptMode::Chat: return "chat";
    case PromptMode::Completion: return "completion";
    case PromptMode::ChatElicitation: return "chat-elicitation";
  }
  return "?";
}

PromptMode parse_prompt_mode(std::string_view name) {
  if (name == "chat") return PromptMode::Chat;
  if (name == "completion") return PromptMode::Completion;
  if (name == "chat-elicitation") return PromptMode::ChatElicitation;
  throw ConfigError("unknown prompt mode '" + std::string(name) + "'");
}

std::string PromptBundle::render() const {
  if (mode == PromptMode::Completion) return prefix;
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out += "\n\n";
    out += "[" + t.role + "]\n" + t.text;
  }
  return out + "\n";
}

PromptBundle build_prompt(const ExemplarList& list, std::size_t upto_set, PromptMode mode,
                          std::size_t query_object) {
  if (upto_set >= list.sets.size()) throw DataError("build_prompt: set index out of range");
  PromptBundle b;
  b.mode = mode;
  if (mode == PromptMode::Completion) {
    const auto& set = list.sets[upto_set];
    if (query_object >= set.objects.size()) throw DataError("build_prompt: object index out of range");
    std::string p(kCompletionPreamble);
    for (std::size_t s = 0; s < upto_set; ++s) {
      p += "\nGroup " + std::to_string(s + 1) + ":\n" + group_answer(list, s) + "\n";
    }
    p += "\nGroup " + std::to_string(upto_set + 1) + ":\n";
    for (std::size_t i = 0; i < query_object; ++i) {
      p += "- " + describe(set.objects[i], list.vocab) + " -> " + label_text(set.labels[i]) + "\n";
    }
    p += "- " + describe(set.objects[query_object], list.vocab) + " ->";
    b.prefix = std::move(p);
    return b;
  }
  std::string system(kChatSystem);
  system += mode == PromptMode::ChatElicitation ? kElicitAnswer : kChatAnswer;
  b.turns.push_back({"system", std::move(system)});
  for (std::size_t s = 0; s < upto_set; ++s) {
    b.turns.push_back({"user", group_query(list, s)});
    b.turns.push_back({"assistant", group_answer(list, s)});
  }
  b.turns.push_back({"user", group_query(list, upto_set)});
  return b;
}

std::optional<bool> parse_boolean(std::string_view text) {
  std::string t = to_lower(trim(std::string(text)));
  if (t == "true") return true;
  if (t == "false") return false;
  return std::nullopt;
}

std::size_t Extraction::excluded() const {
  std::size_t n = 0;
  for (const auto& l : labels) n += !l.label.has_value();
  return n;
}

Extraction extract_chat_labels(std::string_view reply, std::span<const std::string> objects) {
  Extraction ex;
  ex.labels.resize(objects.size());
  ex.line_of_object.resize(objects.size());
  std::vector<std::string> expected;
  for (const auto& o : objects) expected.push_back(normalize_object(o));

  std::vector<bool> done(objects.size(), false);
  std::size_t cursor = 0, mismatched = 0, label_line = 0;
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    std::string line = strip_markup(reply.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    if (to_lower(line.substr(0, 5)) == "rule:") {
      if (!ex.rule_text) ex.rule_text = trim(line.substr(5));
      continue;
    }
    const auto arrow = line.rfind("->");
    if (arrow == std::string::npos) continue;
    const std::size_t this_line = label_line++;
    std::string desc = normalize_object(strip_list_marker(std::string_view(line).substr(0, arrow)));
    std::string value = line.substr(arrow + 2);
    std::size_t j = cursor;
    while (j < expected.size() && (done[j] || expected[j] != desc)) ++j;
    if (j == expected.size()) {
      ++mismatched;
      continue;
    }
    done[j] = true;
    cursor = j + 1;
    ex.line_of_object[j] = this_line;
    if (auto b = parse_boolean(value)) {
      ex.labels[j].label = *b;
    } else {
      ex.labels[j].reason = "non-boolean label";
    }
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (done[i]) continue;
    if (mismatched > 0) {
      --mismatched;
      ex.labels[i].reason = "object mismatch";
    } else {
      ex.labels[i].reason = "missing label";
    }
  }
  return ex;
}

ObjectLabel extract_completion_label(std::string_view completion) {
  std::string_view first = completion.substr(0, completion.find('\n'));
  if (auto b = parse_boolean(first)) return {*b, ""};
  return {std::nullopt, "non-boolean completion"};
}

double true_probability(std::span<const TokenLogprob> top) {
  double mt = 0, mf = 0;
  for (const auto& t : top) {
    if (auto b = parse_boolean(t.token)) (*b ? mt : mf) += std::exp(t.logprob);
  }
  if (mt + mf <= 0) throw DataError("no True/False tokens among the top logprobs");
  return mt / (mt + mf);
}

}  // namespace conceptlab
