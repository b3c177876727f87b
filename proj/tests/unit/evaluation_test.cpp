#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "kvqa/evaluation.hpp"
#include "kvqa/rng.hpp"
#include "test_support.hpp"

using namespace kvqa;

namespace {

SplitAssignment all_test(const Corpus& corpus) {
  SplitAssignment assignment;
  for (const auto& episode : corpus.episode_ids()) {
    assignment.by_episode.emplace(episode, Split::test);
  }
  return assignment;
}

Prediction predict_index(const std::string& id, int index) {
  std::array<double, 4> scores = {0.0, 0.0, 0.0, 0.0};
  scores[static_cast<std::size_t>(index)] = 1.0;
  return make_prediction(id, scores);
}

EvalReport report_with_overall(int total, int correct) {
  EvalReport report;
  report.counts[QuestionType::knowledge] = total;
  report.correct[QuestionType::knowledge] = correct;
  report.total = total;
  report.total_correct = correct;
  report.overall_accuracy = static_cast<double>(correct) / total;
  return report;
}

}  // namespace

TEST_CASE("evaluate reports all ones when every prediction is right") {
  Corpus corpus = kvqa::testing::tiny_corpus(2, 4);
  const auto assignment = all_test(corpus);
  std::vector<Prediction> predictions;
  for (const auto& inst : corpus.instances) {
    predictions.push_back(predict_index(inst.id, inst.gold_index));
  }
  const auto report = evaluate(predictions, corpus, assignment, Split::test);
  CHECK(report.overall_accuracy == 1.0);
  for (QuestionType type : kQuestionTypes) {
    if (report.counts.count(type) && report.counts.at(type) > 0) {
      CHECK(report.accuracy(type) == 1.0);
    }
  }
  CHECK(report.per_example.size() == corpus.instances.size());
}

TEST_CASE("evaluate: one instance per type, only the visual one wrong") {
  Corpus corpus = kvqa::testing::tiny_corpus(1, 4);
  // tiny_corpus assigns qtypes cyclically: visual, textual, temporal, knowledge.
  const auto assignment = all_test(corpus);
  std::vector<Prediction> predictions;
  for (const auto& inst : corpus.instances) {
    const int wrong = (inst.gold_index + 1) % 4;
    predictions.push_back(predict_index(
        inst.id, inst.qtype == QuestionType::visual ? wrong : inst.gold_index));
  }
  const auto report = evaluate(predictions, corpus, assignment, Split::test);
  CHECK(report.accuracy(QuestionType::visual) == 0.0);
  CHECK(report.accuracy(QuestionType::textual) == 1.0);
  CHECK(report.accuracy(QuestionType::temporal) == 1.0);
  CHECK(report.accuracy(QuestionType::knowledge) == 1.0);
  CHECK(report.overall_accuracy == 0.75);
}

TEST_CASE("evaluate agrees with an independent counting pass") {
  Corpus corpus = kvqa::testing::tiny_corpus(10, 25);  // 250 instances
  const auto assignment = all_test(corpus);
  Rng rng(3141);
  std::vector<Prediction> predictions;
  for (const auto& inst : corpus.instances) {
    predictions.push_back(
        predict_index(inst.id, static_cast<int>(rng.below(4))));
  }
  const auto report = evaluate(predictions, corpus, assignment, Split::test);

  // Oracle: recount with plain maps.
  std::map<QuestionType, int> counts, correct;
  int total_correct = 0;
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& inst = corpus.instances[i];
    counts[inst.qtype] += 1;
    if (predictions[i].predicted_index == inst.gold_index) {
      correct[inst.qtype] += 1;
      ++total_correct;
    }
  }
  CHECK(report.total == 250);
  CHECK(report.total_correct == total_correct);
  for (const auto& [type, n] : counts) {
    CHECK(report.counts.at(type) == n);
    const double expected =
        static_cast<double>(correct[type]) / static_cast<double>(n);
    CHECK(std::abs(*report.accuracy(type) - expected) < 1e-12);
  }
  CHECK(std::abs(report.overall_accuracy -
                 static_cast<double>(total_correct) / 250.0) < 1e-12);
}

TEST_CASE("evaluate is invariant to prediction order") {
  Corpus corpus = kvqa::testing::tiny_corpus(4, 6);
  const auto assignment = all_test(corpus);
  Rng rng(8);
  std::vector<Prediction> predictions;
  for (const auto& inst : corpus.instances) {
    predictions.push_back(
        predict_index(inst.id, static_cast<int>(rng.below(4))));
  }
  const auto a = evaluate(predictions, corpus, assignment, Split::test);
  std::reverse(predictions.begin(), predictions.end());
  const auto b = evaluate(predictions, corpus, assignment, Split::test);
  CHECK(a.overall_accuracy == b.overall_accuracy);
  CHECK(a.counts == b.counts);
  CHECK(a.correct == b.correct);
}

TEST_CASE("evaluate rejects incomplete or overfull prediction sets") {
  Corpus corpus = kvqa::testing::tiny_corpus(2, 3);
  const auto assignment = all_test(corpus);
  std::vector<Prediction> predictions;
  for (const auto& inst : corpus.instances) {
    predictions.push_back(predict_index(inst.id, inst.gold_index));
  }

  std::vector<Prediction> missing(predictions.begin(), predictions.end() - 1);
  try {
    evaluate(missing, corpus, assignment, Split::test);
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    REQUIRE(e.missing_ids.size() == 1);
    CHECK(e.missing_ids[0] == corpus.instances.back().id);
  }

  std::vector<Prediction> extra = predictions;
  extra.push_back(predict_index("stranger", 0));
  try {
    evaluate(extra, corpus, assignment, Split::test);
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    REQUIRE(e.extra_ids.size() == 1);
    CHECK(e.extra_ids[0] == "stranger");
  }
}

TEST_CASE("the weighted per-type mean equals the overall accuracy") {
  Rng rng(2024);
  for (int round = 0; round < 300; ++round) {
    EvalReport report;
    int total = 0;
    int total_correct = 0;
    for (QuestionType type : kQuestionTypes) {
      const int count = static_cast<int>(rng.below(40));
      const int correct =
          count == 0 ? 0 : static_cast<int>(rng.below(static_cast<std::uint64_t>(count) + 1));
      if (count > 0) {
        report.counts[type] = count;
        report.correct[type] = correct;
      }
      total += count;
      total_correct += correct;
    }
    if (total == 0) continue;
    report.total = total;
    report.total_correct = total_correct;
    report.overall_accuracy = static_cast<double>(total_correct) / total;

    double weighted = 0.0;
    for (QuestionType type : kQuestionTypes) {
      const auto acc = report.accuracy(type);
      if (acc) weighted += *acc * report.counts.at(type);
    }
    CHECK(std::abs(weighted / total - report.overall_accuracy) < 1e-12);
  }
}

TEST_CASE("emit_table prints three-decimal cells in insertion order") {
  EvalReport a = report_with_overall(1000, 652);
  const std::string table = emit_table({{"first", a}});
  CHECK(table.find("0.652") != std::string::npos);
  CHECK(table.find("Vis.") != std::string::npos);
  CHECK(table.find("Text.") != std::string::npos);
  CHECK(table.find("Temp.") != std::string::npos);
  CHECK(table.find("Know.") != std::string::npos);
  CHECK(table.find("All") != std::string::npos);
  // Visual/textual/temporal have no instances: em dash cells.
  CHECK(table.find("—") != std::string::npos);

  const std::string empty = emit_table({});
  CHECK(empty.find("Method") != std::string::npos);
  CHECK(empty.find('\n') == empty.size() - 1);  // header only

  EvalReport b = report_with_overall(100, 25);
  const std::string two = emit_table({{"first", a}, {"second", b}});
  CHECK(two.find("first") < two.find("second"));
}

TEST_CASE("emit_table output re-parses to its inputs") {
  Rng rng(606);
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (int i = 0; i < 5; ++i) {
    EvalReport report;
    int total = 0, total_correct = 0;
    for (QuestionType type : kQuestionTypes) {
      const int count = 1 + static_cast<int>(rng.below(200));
      const int correct = static_cast<int>(rng.below(static_cast<std::uint64_t>(count) + 1));
      report.counts[type] = count;
      report.correct[type] = correct;
      total += count;
      total_correct += correct;
    }
    report.total = total;
    report.total_correct = total_correct;
    report.overall_accuracy = static_cast<double>(total_correct) / total;
    rows.emplace_back("row" + std::to_string(i), report);
  }

  std::istringstream in(emit_table(rows));
  std::string header;
  std::getline(in, header);
  for (const auto& [name, report] : rows) {
    std::string row_name;
    in >> row_name;
    CHECK(row_name == name);
    for (QuestionType type : kQuestionTypes) {
      double value = 0.0;
      in >> value;
      CHECK(std::abs(value - *report.accuracy(type)) <= 5e-4);
    }
    double overall = 0.0;
    in >> overall;
    CHECK(std::abs(overall - report.overall_accuracy) <= 5e-4);
  }
}

TEST_CASE("emit_csv round-trips values exactly") {
  EvalReport report = report_with_overall(3, 2);  // 2/3 is not finite decimal
  const std::string csv = emit_csv({{"r", report}});
  std::istringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "method,vis,text,temp,know,all");
  std::getline(in, row);
  const auto last_comma = row.rfind(',');
  const double parsed = std::stod(row.substr(last_comma + 1));
  CHECK(parsed == report.overall_accuracy);
}

TEST_CASE("compare_knowledge_gain subtracts overall accuracies") {
  EvalReport same = report_with_overall(100, 60);
  CHECK(compare_knowledge_gain(same, same) == 0.0);

  EvalReport vsqa = report_with_overall(1000, 587);
  EvalReport full = report_with_overall(1000, 652);
  CHECK(compare_knowledge_gain(vsqa, full) ==
        doctest::Approx(0.065).epsilon(1e-12));

  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    EvalReport a = report_with_overall(500, static_cast<int>(rng.below(501)));
    EvalReport b = report_with_overall(500, static_cast<int>(rng.below(501)));
    CHECK(compare_knowledge_gain(a, b) ==
          b.overall_accuracy - a.overall_accuracy);
  }
}

TEST_CASE("report_to_json carries the aggregate fields") {
  EvalReport report = report_with_overall(10, 7);
  report.per_example = {{"q1", true}, {"q2", false}};
  const std::string json = report_to_json(report);
  CHECK(json.find("\"overall_accuracy\": 0.7") != std::string::npos);
  CHECK(json.find("\"q2\"") != std::string::npos);
}
