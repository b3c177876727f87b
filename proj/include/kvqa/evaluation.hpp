#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kvqa/corpus.hpp"
#include "kvqa/reasoner.hpp"

namespace kvqa {

struct EvalReport {
  std::map<QuestionType, int> counts;
  std::map<QuestionType, int> correct;
  int total = 0;
  int total_correct = 0;
  double overall_accuracy = 0.0;
  std::vector<std::pair<std::string, bool>> per_example;  // id, correct

  // Empty for types with no instances.
  std::optional<double> accuracy(QuestionType type) const;
};

struct CoverageError : std::runtime_error {
  CoverageError(std::vector<std::string> missing, std::vector<std::string> extra);
  std::vector<std::string> missing_ids;
  std::vector<std::string> extra_ids;
};

// Per-type and overall accuracy for predictions covering exactly the split.
EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const Corpus& corpus, const SplitAssignment& assignment,
                    Split split);

// Aligned text table: one row per report in the given order, columns
// Vis./Text./Temp./Know./All to three decimals; types with no instances
// print an em dash.
std::string emit_table(const std::vector<std::pair<std::string, EvalReport>>& reports);

// Same rows as CSV with full-precision values.
std::string emit_csv(const std::vector<std::pair<std::string, EvalReport>>& reports);

// overall(full) - overall(without knowledge).
double compare_knowledge_gain(const EvalReport& report_vsqa,
                              const EvalReport& report_full);

std::string report_to_json(const EvalReport& report);

}  // namespace kvqa
