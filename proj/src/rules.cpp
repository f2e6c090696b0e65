#include "conceptlab/rules.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"
#include "conceptlab/random.hpp"

namespace conceptlab {

std::string_view rule_type_name(RuleType t) {
  return t == RuleType::Propositional ? "prop" : "fol";
}

const RuleEntry* RuleManifest::find(const std::string& id) const {
  for (const auto& r : rules) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

RuleManifest parse_manifest(std::string_view text, const FeatureVocab& vocab) {
  RuleManifest manifest;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    std::size_t sp = body.find_first_of(" \t");
    std::string id = body.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : trim(body.substr(sp));
    std::optional<RuleType> declared;
    if (rest.rfind("prop", 0) == 0 || rest.rfind("fol", 0) == 0) {
      std::size_t sp2 = rest.find_first_of(" \t");
      std::string tag = rest.substr(0, sp2);
      if (tag == "prop" || tag == "fol") {
        declared = tag == "prop" ? RuleType::Propositional : RuleType::FirstOrder;
        rest = sp2 == std::string::npos ? "" : trim(rest.substr(sp2));
      }
    }
    if (!seen.insert(id).second) {
      manifest.errors.push_back({line_no, id, "duplicate rule id"});
      continue;
    }
    try {
      if (rest.empty()) throw ParseError("missing concept", 0);
      Concept c = parse_concept(rest, vocab);
      RuleType derived = is_propositional(c) ? RuleType::Propositional : RuleType::FirstOrder;
      manifest.rules.push_back({id, declared.value_or(derived), rest, c});
    } catch (const ParseError& e) {
      manifest.errors.push_back({line_no, id, e.what()});
    }
  }
  return manifest;
}

RuleManifest load_manifest(const std::string& path, const FeatureVocab& vocab) {
  return parse_manifest(read_file(path), vocab);
}

RuleSplit split_rules(const std::vector<std::string>& ids, std::size_t held_out,
                      std::uint64_t seed) {
  if (held_out >= ids.size()) {
    throw ConfigError("held_out (" + std::to_string(held_out) + ") must be smaller than the " +
                      std::to_string(ids.size()) + " rules");
  }
  std::vector<std::size_t> perm(ids.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  }
  std::vector<bool> out(ids.size(), false);
  for (std::size_t i = 0; i < held_out; ++i) out[perm[i]] = true;
  RuleSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    (out[i] ? split.held_out : split.train).push_back(ids[i]);
  }
  return split;
}

nlohmann::json to_json(const RuleSplit& split) {
  return {{"seed", split.seed}, {"train", split.train}, {"held_out", split.held_out}};
}

}  // namespace conceptlab
