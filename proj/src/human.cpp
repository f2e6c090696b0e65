#include "conceptlab/human.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"

namespace conceptlab {

namespace {

std::optional<bool> parse_response(const std::string& text, std::size_t line_no) {
  std::string t = to_lower(trim(text));
  if (t.empty() || t == "na" || t == "missing") return std::nullopt;
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw DataError("human csv line " + std::to_string(line_no) + ": bad response '" + text + "'");
}

std::size_t parse_index(const std::string& text, std::size_t line_no) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(text, &used);
    if (used != text.size() || v < 0) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("human csv line " + std::to_string(line_no) + ": bad index '" + text + "'");
  }
}

}  // namespace

std::vector<HumanRow> read_human_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<HumanRow> rows;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (header) {
      header = false;
      if (f.size() >= 5 && trim(f[0]) == "subject_id") continue;
    }
    if (f.size() != 5) {
      throw DataError("human csv line " + std::to_string(line_no) + ": expected 5 fields");
    }
    rows.push_back({trim(f[0]), trim(f[1]), parse_index(trim(f[2]), line_no),
                    parse_index(trim(f[3]), line_no), parse_response(f[4], line_no)});
  }
  return rows;
}

void write_human_csv(const std::string& path, std::span<const HumanRow> rows) {
  std::string out = "subject_id,rule_id,set_index,object_index,response\n";
  for (const auto& r : rows) {
    out += csv_escape(r.subject_id) + ',' + csv_escape(r.rule_id) + ',' +
           std::to_string(r.set_index) + ',' + std::to_string(r.object_index) + ',' +
           (r.response ? (*r.response ? "True" : "False") : "") + '\n';
  }
  write_file_atomic(path, out);
}

std::vector<SubjectRecord> assemble_subjects(std::span<const HumanRow> rows,
                                             const ExemplarList& gold) {
  std::vector<std::size_t> set_offset(gold.sets.size() + 1, 0);
  for (std::size_t s = 0; s < gold.sets.size(); ++s) {
    set_offset[s + 1] = set_offset[s] + gold.sets[s].objects.size();
  }
  std::map<std::string, SubjectRecord> by_subject;
  std::vector<std::string> order;
  for (const auto& row : rows) {
    if (row.rule_id != gold.rule_id) continue;
    if (row.set_index >= gold.sets.size() ||
        row.object_index >= gold.sets[row.set_index].objects.size()) {
      throw DataError("human data for " + gold.rule_id + " references set " +
                      std::to_string(row.set_index) + " object " +
                      std::to_string(row.object_index) + " outside the list");
    }
    auto [it, inserted] = by_subject.try_emplace(row.subject_id);
    if (inserted) {
      it->second.subject_id = row.subject_id;
      it->second.rule_id = gold.rule_id;
      it->second.responses.assign(gold.object_count(), std::nullopt);
      order.push_back(row.subject_id);
    }
    it->second.responses[set_offset[row.set_index] + row.object_index] = row.response;
  }
  std::vector<SubjectRecord> out;
  for (const auto& id : order) {
    SubjectRecord rec = std::move(by_subject[id]);
    for (std::size_t s = 0; s < gold.sets.size(); ++s) {
      bool complete = true;
      for (std::size_t i = set_offset[s]; i < set_offset[s + 1]; ++i) {
        complete = complete && rec.responses[i].has_value();
      }
      rec.sets_completed += complete;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::optional<double> subject_accuracy(const SubjectRecord& record, const ExemplarList& gold) {
  std::size_t correct = 0, answered = 0, flat = 0;
  for (const auto& set : gold.sets) {
    for (bool label : set.labels) {
      if (flat < record.responses.size() && record.responses[flat]) {
        ++answered;
        correct += *record.responses[flat] == label;
      }
      ++flat;
    }
  }
  if (answered == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(answered);
}

FilterResult filter_subjects(std::span<const SubjectRecord> records, const ExemplarList& gold) {
  FilterResult result;
  std::vector<std::pair<const SubjectRecord*, double>> pool;
  for (const auto& rec : records) {
    if (rec.rule_id != gold.rule_id) {
      throw DataError("subject " + rec.subject_id + " belongs to rule " + rec.rule_id +
                      ", not " + gold.rule_id);
    }
    auto acc = subject_accuracy(rec, gold);
    if (rec.sets_completed < kMinSetsCompleted || !acc) {
      result.report.exclusions.push_back({rec.subject_id, "min-sets", acc});
      continue;
    }
    pool.emplace_back(&rec, *acc);
  }
  if (pool.empty()) throw DataError("no subjects left for rule " + gold.rule_id);

  double mean = 0;
  for (const auto& [rec, acc] : pool) mean += acc;
  mean /= static_cast<double>(pool.size());
  double ss = 0;
  for (const auto& [rec, acc] : pool) ss += (acc - mean) * (acc - mean);
  double sd = pool.size() > 1 ? std::sqrt(ss / static_cast<double>(pool.size() - 1)) : 0.0;
  result.report.pool_mean = mean;
  result.report.pool_sd = sd;

  for (const auto& [rec, acc] : pool) {
    if (std::abs(acc - mean) > 2 * sd) {
      result.report.exclusions.push_back({rec->subject_id, "outlier-2sd", acc});
    } else {
      result.kept.push_back(*rec);
    }
  }
  if (result.kept.empty()) throw DataError("no subjects left for rule " + gold.rule_id);
  return result;
}

HumanResponseTable::HumanResponseTable(std::vector<ResponseCount> cells) : cells_(std::move(cells)) {
  for (const auto& c : cells_) {
    if (c.n_true > c.n_total) throw DataError("response table: n_true exceeds n_total");
  }
}

std::optional<double> HumanResponseTable::proportion(std::size_t i) const {
  const auto& c = cells_.at(i);
  if (c.n_total == 0) return std::nullopt;
  return static_cast<double>(c.n_true) / static_cast<double>(c.n_total);
}

std::vector<std::optional<double>> HumanResponseTable::proportions() const {
  std::vector<std::optional<double>> out;
  out.reserve(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i) out.push_back(proportion(i));
  return out;
}

HumanResponseTable human_proportions(std::span<const SubjectRecord> kept, const ExemplarList& gold) {
  std::vector<ResponseCount> cells(gold.object_count());
  for (const auto& rec : kept) {
    if (rec.responses.size() != cells.size()) {
      throw DataError("subject " + rec.subject_id + " responses misaligned with list");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!rec.responses[i]) continue;
      ++cells[i].n_total;
      cells[i].n_true += *rec.responses[i];
    }
  }
  return HumanResponseTable(std::move(cells));
}

MeanSd propagated_baseline(std::span<const MeanSd> per_rule) {
  if (per_rule.empty()) throw DataError("propagated_baseline needs at least one rule");
  double sum = 0, var = 0;
  for (const auto& r : per_rule) {
    sum += r.mean;
    var += r.sd * r.sd;
  }
  const double n = static_cast<double>(per_rule.size());
  return {sum / n, std::sqrt(var) / n};
}

}  // namespace conceptlab
