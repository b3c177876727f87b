#include "kvqa/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace kvqa {

namespace {

constexpr const char* kColumnNames[] = {"Vis.", "Text.", "Temp.", "Know.", "All"};
constexpr const char* kNoValue = "—";  // em dash for absent types

std::string format3(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  return buf;
}

std::string format_full(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::vector<std::string> report_cells(const EvalReport& report,
                                      bool full_precision) {
  std::vector<std::string> cells;
  for (QuestionType type : kQuestionTypes) {
    const auto acc = report.accuracy(type);
    if (acc) {
      cells.push_back(full_precision ? format_full(*acc) : format3(*acc));
    } else {
      cells.push_back(kNoValue);
    }
  }
  cells.push_back(full_precision ? format_full(report.overall_accuracy)
                                 : format3(report.overall_accuracy));
  return cells;
}

}  // namespace

std::optional<double> EvalReport::accuracy(QuestionType type) const {
  auto it = counts.find(type);
  if (it == counts.end() || it->second == 0) return std::nullopt;
  auto hit = correct.find(type);
  const int n_correct = hit == correct.end() ? 0 : hit->second;
  return static_cast<double>(n_correct) / static_cast<double>(it->second);
}

CoverageError::CoverageError(std::vector<std::string> missing,
                             std::vector<std::string> extra)
    : std::runtime_error([&missing, &extra] {
        std::ostringstream msg;
        msg << "predictions do not cover the split exactly;";
        if (!missing.empty()) {
          msg << " missing:";
          for (const auto& id : missing) msg << " " << id;
          msg << ";";
        }
        if (!extra.empty()) {
          msg << " extra:";
          for (const auto& id : extra) msg << " " << id;
        }
        return msg.str();
      }()),
      missing_ids(std::move(missing)),
      extra_ids(std::move(extra)) {}

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const Corpus& corpus, const SplitAssignment& assignment,
                    Split split) {
  std::unordered_map<std::string, const QuestionInstance*> wanted;
  for (const auto& inst : corpus.instances) {
    if (assignment.of(inst.episode_id) == split) wanted.emplace(inst.id, &inst);
  }

  std::vector<std::string> extra;
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& pred : predictions) {
    if (!wanted.contains(pred.instance_id)) {
      extra.push_back(pred.instance_id);
    }
    by_id.emplace(pred.instance_id, &pred);
  }
  std::vector<std::string> missing;
  for (const auto& inst : corpus.instances) {
    if (assignment.of(inst.episode_id) == split && !by_id.contains(inst.id)) {
      missing.push_back(inst.id);
    }
  }
  if (!missing.empty() || !extra.empty()) {
    throw CoverageError(std::move(missing), std::move(extra));
  }

  EvalReport report;
  for (const auto& inst : corpus.instances) {
    if (assignment.of(inst.episode_id) != split) continue;
    const Prediction& pred = *by_id.at(inst.id);
    const bool is_correct = pred.predicted_index == inst.gold_index;
    report.counts[inst.qtype] += 1;
    if (is_correct) report.correct[inst.qtype] += 1;
    report.total += 1;
    if (is_correct) report.total_correct += 1;
    report.per_example.emplace_back(inst.id, is_correct);
  }
  report.overall_accuracy =
      report.total == 0
          ? 0.0
          : static_cast<double>(report.total_correct) / static_cast<double>(report.total);
  return report;
}

std::string emit_table(
    const std::vector<std::pair<std::string, EvalReport>>& reports) {
  constexpr std::size_t kColumns = 5;
  std::size_t name_width = std::string("Method").size();
  for (const auto& [name, report] : reports) {
    name_width = std::max(name_width, name.size());
  }

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "Method";
  for (std::size_t c = 0; c < kColumns; ++c) {
    out << "  " << std::right << std::setw(6) << kColumnNames[c];
  }
  out << '\n';

  for (const auto& [name, report] : reports) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name;
    for (const auto& cell : report_cells(report, /*full_precision=*/false)) {
      // The em dash is three bytes; pad by display width, not byte count.
      const int pad = cell == kNoValue ? 5 : static_cast<int>(6 - cell.size());
      out << "  ";
      for (int i = 0; i < pad; ++i) out << ' ';
      out << cell;
    }
    out << '\n';
  }
  return out.str();
}

std::string emit_csv(
    const std::vector<std::pair<std::string, EvalReport>>& reports) {
  std::ostringstream out;
  out << "method,vis,text,temp,know,all\n";
  for (const auto& [name, report] : reports) {
    out << name;
    for (const auto& cell : report_cells(report, /*full_precision=*/true)) {
      out << ',' << (cell == kNoValue ? "" : cell);
    }
    out << '\n';
  }
  return out.str();
}

double compare_knowledge_gain(const EvalReport& report_vsqa,
                              const EvalReport& report_full) {
  return report_full.overall_accuracy - report_vsqa.overall_accuracy;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["overall_accuracy"] = report.overall_accuracy;
  j["total"] = report.total;
  j["total_correct"] = report.total_correct;
  nlohmann::ordered_json per_type;
  for (QuestionType type : kQuestionTypes) {
    nlohmann::ordered_json entry;
    auto it = report.counts.find(type);
    entry["count"] = it == report.counts.end() ? 0 : it->second;
    auto hit = report.correct.find(type);
    entry["correct"] = hit == report.correct.end() ? 0 : hit->second;
    const auto acc = report.accuracy(type);
    if (acc) {
      entry["accuracy"] = *acc;
    } else {
      entry["accuracy"] = nullptr;
    }
    per_type[to_string(type)] = std::move(entry);
  }
  j["per_type"] = std::move(per_type);
  nlohmann::ordered_json examples = nlohmann::ordered_json::array();
  for (const auto& [id, correct] : report.per_example) {
    nlohmann::ordered_json e;
    e["id"] = id;
    e["correct"] = correct;
    examples.push_back(std::move(e));
  }
  j["per_example"] = std::move(examples);
  return j.dump(2) + "\n";
}

}  // namespace kvqa
