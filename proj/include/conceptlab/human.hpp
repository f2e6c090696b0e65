#pragma once

// Human response data: loading, subject exclusion and per-object response
// proportions.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conceptlab/exemplar.hpp"

namespace conceptlab {

// One row of the human CSV: subject_id,rule_id,set_index,object_index,response
struct HumanRow {
  std::string subject_id;
  std::string rule_id;
  std::size_t set_index = 0;
  std::size_t object_index = 0;
  std::optional<bool> response;
};

std::vector<HumanRow> read_human_csv(const std::string& path);
void write_human_csv(const std::string& path, std::span<const HumanRow> rows);

// Responses are indexed by the list's flat presentation order.
struct SubjectRecord {
  std::string subject_id;
  std::string rule_id;
  std::vector<std::optional<bool>> responses;
  std::size_t sets_completed = 0;
};

// Groups the rows of `gold.rule_id` into per-subject records. A set counts
// as completed when the subject responded to every object in it.
std::vector<SubjectRecord> assemble_subjects(std::span<const HumanRow> rows,
                                             const ExemplarList& gold);

// Fraction of answered objects labeled correctly; nullopt if none answered.
std::optional<double> subject_accuracy(const SubjectRecord& record, const ExemplarList& gold);

inline constexpr std::size_t kMinSetsCompleted = 5;

struct Exclusion {
  std::string subject_id;
  std::string reason;  // "min-sets" or "outlier-2sd"
  std::optional<double> accuracy;
};

struct FilterReport {
  std::vector<Exclusion> exclusions;
  double pool_mean = 0;
  double pool_sd = 0;  // sample SD over the pool left after the min-sets pass
};

struct FilterResult {
  std::vector<SubjectRecord> kept;
  FilterReport report;
};

// Drops subjects with fewer than 5 completed sets, then (single pass) those
// whose accuracy lies strictly more than 2 SD from the pool mean. Throws
// DataError when nobody is left.
FilterResult filter_subjects(std::span<const SubjectRecord> records, const ExemplarList& gold);

struct ResponseCount {
  std::size_t n_true = 0;
  std::size_t n_total = 0;
};

class HumanResponseTable {
 public:
  explicit HumanResponseTable(std::vector<ResponseCount> cells);

  std::size_t size() const { return cells_.size(); }
  const ResponseCount& cell(std::size_t i) const { return cells_.at(i); }
  // Undefined (nullopt) when nobody answered the object.
  std::optional<double> proportion(std::size_t i) const;
  std::vector<std::optional<double>> proportions() const;

 private:
  std::vector<ResponseCount> cells_;
};

HumanResponseTable human_proportions(std::span<const SubjectRecord> kept, const ExemplarList& gold);

struct MeanSd {
  double mean = 0;
  double sd = 0;
};

// Grand mean of per-rule means with SD sqrt(sum sd_i^2) / n.
MeanSd propagated_baseline(std::span<const MeanSd> per_rule);

}  // namespace conceptlab
