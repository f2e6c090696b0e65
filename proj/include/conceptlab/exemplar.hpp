#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "conceptlab/concept.hpp"
#include "json.hpp"

namespace conceptlab {

inline constexpr std::size_t kDefaultSetCount = 25;

// One displayed set with the gold label of every object.
struct LabeledSet {
  std::vector<Obj> objects;
  std::vector<bool> labels;

  Context context(std::size_t target) const { return Context(objects, target); }
};

// A rule's ordered sequence of labeled sets.
struct ExemplarList {
  std::string rule_id;
  std::string rule_source;  // concept text as written in the manifest
  Concept rule;
  FeatureVocab vocab;
  std::uint64_t seed = 0;
  std::vector<LabeledSet> sets;

  std::size_t object_count() const;
};

// Flat presentation-order address of one object in a list.
struct ObjectRef {
  std::size_t set_index = 0;
  std::size_t object_index = 0;
  std::size_t flat_index = 0;
};

std::vector<ObjectRef> object_refs(const ExemplarList& list);

// One labeled object as seen by a learner.
struct Observation {
  Context context;
  bool label = false;
};

using Evidence = std::vector<Observation>;

// Evidence from sets [0, upto_set) of a list, in presentation order.
Evidence evidence_before(const ExemplarList& list, std::size_t upto_set);

// Set sizes are uniform on 1..5 and objects uniform with replacement over
// the vocab's universe. Equal arguments give identical lists.
ExemplarList generate_list(std::string rule_id, std::string rule_source, const Concept& rule,
                           const FeatureVocab& vocab, std::uint64_t seed,
                           std::size_t n_sets = kDefaultSetCount);

// Throws DataError if a stored label disagrees with eval of the rule.
void verify_labels(const ExemplarList& list);

nlohmann::json to_json(const ExemplarList& list);
ExemplarList list_from_json(const nlohmann::json& j);
std::string serialize(const ExemplarList& list);

void save_list(const ExemplarList& list, const std::string& path);
ExemplarList load_list(const std::string& path);

}  // namespace conceptlab
