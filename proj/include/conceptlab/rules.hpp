#pragma once

// Rule manifests and held-out-rule splits.
//
// Manifest format, one rule per line, `#` comments:
//
//   <rule_id> [prop|fol] <concept>
//
// When the type column is omitted it is derived from the concept.

#include <cstdint>
#include <string>
#include <vector>

#include "conceptlab/concept.hpp"
#include "json.hpp"

namespace conceptlab {

enum class RuleType { Propositional, FirstOrder };

std::string_view rule_type_name(RuleType t);

struct RuleEntry {
  std::string id;
  RuleType type = RuleType::Propositional;
  std::string source;
  Concept rule;
};

struct ManifestError {
  std::size_t line = 0;
  std::string rule_id;
  std::string message;
};

struct RuleManifest {
  std::vector<RuleEntry> rules;
  std::vector<ManifestError> errors;  // lines that failed to parse

  const RuleEntry* find(const std::string& id) const;
};

RuleManifest parse_manifest(std::string_view text, const FeatureVocab& vocab);
RuleManifest load_manifest(const std::string& path, const FeatureVocab& vocab);

struct RuleSplit {
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> held_out;
};

// Seeded partition; both sides keep the input order. Throws ConfigError if
// held_out >= ids.size().
RuleSplit split_rules(const std::vector<std::string>& ids, std::size_t held_out,
                      std::uint64_t seed);

nlohmann::json to_json(const RuleSplit& split);

}  // namespace conceptlab
