#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvqa/corpus.hpp"
#include "kvqa/knowledge_base.hpp"
#include "kvqa/tokenizer.hpp"

namespace kvqa {

// One text pair fed to the scorer: a question block (question plus its four
// candidate answers) and a knowledge sentence.
struct ScorerInput {
  std::string question_block;
  std::string knowledge_text;

  bool operator==(const ScorerInput&) const = default;
};

struct ScoredKnowledge {
  int kb_id = 0;
  double score = 0.0;  // sigmoid-mapped, in [0,1]

  bool operator==(const ScoredKnowledge&) const = default;
};

struct RetrievalConfig {
  int top_k = 5;
  int negatives_per_positive = 4;
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 0.001;
  double momentum = 0.9;
  int d_emb = 64;
  std::uint64_t seed = 0;
};

// Trainable pair scorer: both texts are embedded and mean-pooled, and the
// head scores [block_pool, knowledge_pool, block_pool*knowledge_pool].
struct ScorerParams {
  std::vector<double> emb;   // vocab.size() x d_emb, row-major
  std::vector<double> head;  // 3 * d_emb
  double bias = 0.0;
};

struct ScorerModel {
  Vocabulary vocab;
  int d_emb = 0;
  ScorerParams params;
};

struct LabeledPair {
  ScorerInput input;
  int label = 0;  // 1 = matching question-knowledge pair

  bool operator==(const LabeledPair&) const = default;
};

struct MissingKnowledgeError : std::runtime_error {
  explicit MissingKnowledgeError(std::vector<std::string> ids);
  std::vector<std::string> instance_ids;
};
struct DegenerateDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Question text followed by the four candidates behind [a1]..[a4] markers.
std::string question_block(const QuestionInstance& instance);

// One positive pair per question (its own knowledge) plus up to
// negatives_per_positive distinct negatives drawn uniformly from the rest of
// the KB. Deterministic given cfg.seed.
std::vector<LabeledPair> make_training_pairs(
    const std::vector<const QuestionInstance*>& instances,
    const KnowledgeBase& kb, const RetrievalConfig& cfg);

// Fresh model with seeded embeddings and a zero head, vocabulary built from
// the pair texts in first-occurrence order.
ScorerModel init_scorer(const std::vector<LabeledPair>& pairs,
                        const RetrievalConfig& cfg);

// sigmoid(head . encode(input) + bias); deterministic, in [0,1].
double score(const ScorerModel& model, const ScorerInput& input);

// Mean binary cross-entropy over the batch; accumulates gradients.
double scorer_loss_and_grads(const ScorerModel& model,
                             std::span<const LabeledPair> batch,
                             ScorerParams& grads);

struct ScorerTrainResult {
  ScorerModel model;
  std::vector<double> epoch_loss;
};

// Minimizes mean BCE with momentum SGD for cfg.epochs epochs; reproducible
// from cfg.seed. Throws DegenerateDataError when all labels agree.
ScorerTrainResult train_scorer(const std::vector<LabeledPair>& pairs,
                               const RetrievalConfig& cfg);

// Scores every KB entry and returns the min(k, N) best, sorted by score
// descending with ties broken by ascending kb_id.
std::vector<ScoredKnowledge> retrieve_topk(const ScorerModel& model,
                                           const QuestionInstance& question,
                                           const KnowledgeBase& kb, int k);

// Fraction of questions whose own knowledge entry appears in their top-k.
double recall_at_k(const ScorerModel& model,
                   const std::vector<const QuestionInstance*>& instances,
                   const KnowledgeBase& kb, int k);

}  // namespace kvqa
