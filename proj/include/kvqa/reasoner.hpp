#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kvqa/corpus.hpp"
#include "kvqa/knowledge_base.hpp"
#include "kvqa/representations.hpp"
#include "kvqa/retrieval.hpp"

namespace kvqa {

enum class VisualVariant { image, concepts, facial, caption, none };
const char* to_string(VisualVariant variant);
std::optional<VisualVariant> parse_visual_variant(std::string_view name);

struct Prediction {
  std::string instance_id;
  std::array<double, 4> candidate_scores{};
  int predicted_index = 0;  // argmax, lowest index on ties
  std::array<double, 4> probabilities{};  // softmax of the scores

  bool operator==(const Prediction&) const = default;
};

Prediction make_prediction(std::string instance_id,
                           const std::array<double, 4>& scores);

struct ReasonerConfig {
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 0.001;
  double momentum = 0.9;
  int d_emb = 64;
  int d_lang = 64;
  int l_max = 512;
  int n_frames = 4;
  VisualVariant visual = VisualVariant::image;
  int top_k = 5;
  std::uint64_t seed = 0;
};

// Language and visual representations concatenated into one shared linear
// head that scores each of the four candidates. Carries the corpus
// vocabularies its visual variant needs, so a restored checkpoint is
// self-contained.
struct FusionModel {
  VisualVariant variant = VisualVariant::none;
  int n_frames = 0;
  int d_visual = 0;
  std::vector<std::string> concept_vocab;
  std::vector<std::string> character_vocab;
  LanguageEncoder lang;
  std::vector<double> head;  // d_visual + d_lang
  double head_bias = 0.0;
};

struct DimensionMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptySplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Where the knowledge segment of the language input comes from.
struct RetrievedKnowledge {
  const ScorerModel* scorer = nullptr;
  const KnowledgeBase* kb = nullptr;
  int k = 5;
};
struct GoldKnowledge {};  // the instance's own annotation (oracle runs)
struct NoKnowledge {};    // vision+subtitles+QA ablation
using KnowledgeSource =
    std::variant<RetrievedKnowledge, GoldKnowledge, NoKnowledge>;

std::vector<std::string> knowledge_for(const KnowledgeSource& source,
                                       const QuestionInstance& instance);

// Visual vector for the model's variant; empty for caption and none, whose
// caption signal reaches the model through the language branch.
std::vector<double> visual_vector(const FusionModel& model,
                                  const ClipAssets& clip);

int visual_dim(const Corpus& corpus, VisualVariant variant, int n_frames);

// Word table over everything the training split can see.
Vocabulary build_language_vocab(const Corpus& corpus,
                                const SplitAssignment& assignment, Split split);

FusionModel init_fusion_model(Vocabulary vocab, const Corpus& corpus,
                              const ReasonerConfig& cfg);

// Scores all four candidates of one instance and softmaxes them.
Prediction score_candidates(const FusionModel& model,
                            const QuestionInstance& instance,
                            const ClipAssets& clip,
                            const std::vector<std::string>& knowledge);

struct FusionGrads {
  LanguageGrads lang;
  std::vector<double> head;
  double head_bias = 0.0;

  explicit FusionGrads(const FusionModel& model)
      : lang(model.lang), head(model.head.size(), 0.0) {}
};

struct ReasonerItem {
  const QuestionInstance* instance = nullptr;
  const ClipAssets* clip = nullptr;
  std::vector<std::string> knowledge;
};

// Mean 4-way cross-entropy over the batch; accumulates gradients for the head
// and the language encoder.
double reasoner_loss_and_grads(const FusionModel& model,
                               std::span<const ReasonerItem> batch,
                               FusionGrads& grads);

struct ReasonerTrainResult {
  FusionModel model;
  std::vector<double> epoch_loss;
};

// Trains on the train split with knowledge drawn once per instance from the
// given source (retrieval happens before the first epoch). Reproducible from
// cfg.seed.
ReasonerTrainResult train_reasoner(const Corpus& corpus,
                                   const SplitAssignment& assignment,
                                   const KnowledgeSource& source,
                                   const ReasonerConfig& cfg);

// One prediction per split instance, in corpus order.
std::vector<Prediction> predict_split(const FusionModel& model,
                                      const Corpus& corpus,
                                      const SplitAssignment& assignment,
                                      Split split,
                                      const KnowledgeSource& source);

}  // namespace kvqa
