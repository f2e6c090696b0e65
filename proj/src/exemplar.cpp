#include "conceptlab/exemplar.hpp"

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"
#include "conceptlab/random.hpp"

namespace conceptlab {

std::size_t ExemplarList::object_count() const {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.objects.size();
  return n;
}

std::vector<ObjectRef> object_refs(const ExemplarList& list) {
  std::vector<ObjectRef> refs;
  refs.reserve(list.object_count());
  for (std::size_t s = 0; s < list.sets.size(); ++s) {
    for (std::size_t o = 0; o < list.sets[s].objects.size(); ++o) {
      refs.push_back({s, o, refs.size()});
    }
  }
  return refs;
}

Evidence evidence_before(const ExemplarList& list, std::size_t upto_set) {
  Evidence ev;
  for (std::size_t s = 0; s < upto_set && s < list.sets.size(); ++s) {
    const auto& set = list.sets[s];
    for (std::size_t i = 0; i < set.objects.size(); ++i) ev.push_back({set.context(i), set.labels[i]});
  }
  return ev;
}

ExemplarList generate_list(std::string rule_id, std::string rule_source, const Concept& rule,
                           const FeatureVocab& vocab, std::uint64_t seed, std::size_t n_sets) {
  check_well_formed(rule, vocab);
  ExemplarList list{std::move(rule_id), std::move(rule_source), rule, vocab, seed, {}};
  Rng rng(seed);
  const std::size_t universe = vocab.universe_size();
  list.sets.reserve(n_sets);
  for (std::size_t s = 0; s < n_sets; ++s) {
    LabeledSet set;
    const std::size_t n = 1 + uniform_index(rng, kMaxSetSize);
    for (std::size_t i = 0; i < n; ++i) set.objects.push_back(object_at(uniform_index(rng, universe), vocab));
    for (std::size_t i = 0; i < n; ++i) set.labels.push_back(eval(rule, set.context(i)));
    list.sets.push_back(std::move(set));
  }
  return list;
}

void verify_labels(const ExemplarList& list) {
  for (std::size_t s = 0; s < list.sets.size(); ++s) {
    const auto& set = list.sets[s];
    if (set.labels.size() != set.objects.size()) {
      throw DataError(list.rule_id + ": set " + std::to_string(s) + " label count mismatch");
    }
    for (std::size_t i = 0; i < set.objects.size(); ++i) {
      if (eval(list.rule, set.context(i)) != set.labels[i]) {
        throw DataError(list.rule_id + ": gold label mismatch at set " + std::to_string(s) +
                        " object " + std::to_string(i));
      }
    }
  }
}

nlohmann::json to_json(const ExemplarList& list) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& set : list.sets) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& o : set.objects) objects.push_back(describe(o, list.vocab));
    sets.push_back({{"objects", objects}, {"labels", set.labels}});
  }
  return {{"rule_id", list.rule_id},
          {"concept", list.rule_source},
          {"vocab", list.vocab.to_json()},
          {"seed", list.seed},
          {"sets", sets}};
}

ExemplarList list_from_json(const nlohmann::json& j) {
  try {
    ExemplarList list{j.at("rule_id").get<std::string>(),
                      j.at("concept").get<std::string>(),
                      Concept::feature(Dimension::Size, 0),
                      j.contains("vocab") ? FeatureVocab::from_json(j.at("vocab")) : FeatureVocab(),
                      j.at("seed").get<std::uint64_t>(),
                      {}};
    list.rule = parse_concept(list.rule_source, list.vocab);
    for (const auto& js : j.at("sets")) {
      LabeledSet set;
      for (const auto& jo : js.at("objects")) {
        auto o = parse_object(jo.get<std::string>(), list.vocab);
        if (!o) throw DataError("unknown object '" + jo.get<std::string>() + "'");
        set.objects.push_back(*o);
      }
      set.labels = js.at("labels").get<std::vector<bool>>();
      if (set.objects.empty() || set.objects.size() > kMaxSetSize ||
          set.labels.size() != set.objects.size()) {
        throw DataError("malformed set in list " + list.rule_id);
      }
      list.sets.push_back(std::move(set));
    }
    return list;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("exemplar list: ") + e.what());
  }
}

std::string serialize(const ExemplarList& list) { return to_json(list).dump(1) + "\n"; }

void save_list(const ExemplarList& list, const std::string& path) {
  write_file_atomic(path, serialize(list));
}

ExemplarList load_list(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  return list_from_json(j);
}

}  // namespace conceptlab
