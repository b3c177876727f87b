#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "kvqa/knowledge_base.hpp"
#include "kvqa/reasoner.hpp"
#include "kvqa/rng.hpp"
#include "kvqa/synthgen.hpp"
#include "test_support.hpp"

using namespace kvqa;

namespace {

SplitAssignment all_train(const Corpus& corpus) {
  SplitAssignment assignment;
  for (const auto& episode : corpus.episode_ids()) {
    assignment.by_episode.emplace(episode, Split::train);
  }
  return assignment;
}

// Tiny hand-set model: no visual branch, d_emb = 1, d_lang = 1.
FusionModel toy_model() {
  FusionModel model;
  model.variant = VisualVariant::none;
  model.n_frames = 1;
  model.d_visual = 0;

  Vocabulary vocab = language_vocabulary();
  vocab.add_word("ask");  // 6
  vocab.add_word("one");  // 7
  vocab.add_word("two");  // 8
  vocab.add_word("three");  // 9
  vocab.add_word("four");  // 10

  model.lang.vocab = vocab;
  model.lang.d_emb = 1;
  model.lang.d_lang = 1;
  model.lang.l_max = 64;
  model.lang.emb = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.4, -0.6, 0.8, 1.0};
  model.lang.w.assign(static_cast<std::size_t>(model.lang.feature_dim()), 0.0);
  model.lang.w[kMarkerCandidate - 1] = 1.5;  // read the candidate pool
  model.lang.b = {0.1};
  model.head = {2.0};
  model.head_bias = 0.25;
  return model;
}

QuestionInstance toy_instance() {
  QuestionInstance inst;
  inst.id = "toy";
  inst.episode_id = "e";
  inst.clip_id = "c";
  inst.question = "ask";
  inst.candidates = {"one", "two", "three", "four"};
  inst.gold_index = 1;
  inst.qtype = QuestionType::knowledge;
  inst.knowledge_text = "ask one";
  return inst;
}

ClipAssets toy_clip() {
  ClipAssets clip;
  clip.clip_id = "c";
  FrameRecord frame;
  frame.feature_vector = {1.0, 2.0};
  frame.caption = "ask";
  clip.frames.push_back(frame);
  return clip;
}

}  // namespace

TEST_CASE("make_prediction with equal scores picks index zero and is uniform") {
  const auto pred = make_prediction("x", {0.0, 0.0, 0.0, 0.0});
  CHECK(pred.predicted_index == 0);
  for (double p : pred.probabilities) CHECK(p == 0.25);
}

TEST_CASE("softmax probabilities always sum to one") {
  Rng rng(55);
  for (int round = 0; round < 200; ++round) {
    std::array<double, 4> scores{};
    for (double& s : scores) s = rng.uniform(-30.0, 30.0);
    const auto pred = make_prediction("x", scores);
    const double total = pred.probabilities[0] + pred.probabilities[1] +
                         pred.probabilities[2] + pred.probabilities[3];
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(pred.predicted_index ==
          static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                           scores.begin()));
  }
}

TEST_CASE("shifting all scores by a constant changes nothing") {
  Rng rng(77);
  for (int round = 0; round < 100; ++round) {
    std::array<double, 4> scores{};
    for (double& s : scores) s = rng.uniform(-5.0, 5.0);
    const double shift = rng.uniform(-100.0, 100.0);
    std::array<double, 4> shifted = scores;
    for (double& s : shifted) s += shift;
    const auto a = make_prediction("x", scores);
    const auto b = make_prediction("x", shifted);
    CHECK(a.predicted_index == b.predicted_index);
    for (int c = 0; c < 4; ++c) {
      CHECK(std::abs(a.probabilities[static_cast<std::size_t>(c)] -
                     b.probabilities[static_cast<std::size_t>(c)]) < 1e-12);
    }
  }
}

TEST_CASE("zero-initialized head scores all candidates equally") {
  Corpus corpus = kvqa::testing::tiny_corpus(3, 2);
  ReasonerConfig cfg;
  cfg.visual = VisualVariant::image;
  cfg.n_frames = 2;
  cfg.seed = 4;
  const auto model = init_fusion_model(
      build_language_vocab(corpus, all_train(corpus), Split::train), corpus, cfg);
  const auto pred = score_candidates(model, corpus.instances[0],
                                     corpus.clips.at("ep0_c0"), {"a fact"});
  CHECK(pred.predicted_index == 0);
  for (double s : pred.candidate_scores) CHECK(s == 0.0);
  for (double p : pred.probabilities) CHECK(p == 0.25);
}

TEST_CASE("score_candidates matches a hand-computed toy forward pass") {
  const auto model = toy_model();
  const auto pred =
      score_candidates(model, toy_instance(), toy_clip(), {});

  // Candidate pools are the single-token embeddings; caption "ask" and the
  // question "ask" pool to 0.2 but have zero weight.
  const std::array<double, 4> cand_emb = {0.4, -0.6, 0.8, 1.0};
  for (int c = 0; c < 4; ++c) {
    const double lang = std::tanh(1.5 * cand_emb[static_cast<std::size_t>(c)] + 0.1);
    const double expected = 2.0 * lang + 0.25;
    CHECK(pred.candidate_scores[static_cast<std::size_t>(c)] ==
          doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK(pred.predicted_index == 3);
}

TEST_CASE("permuting candidates permutes scores and (re)maps the argmax") {
  const auto model = toy_model();
  const auto base_inst = toy_instance();
  const auto clip = toy_clip();
  const auto base = score_candidates(model, base_inst, clip, {});

  std::array<int, 4> perm = {0, 1, 2, 3};
  do {
    QuestionInstance permuted = base_inst;
    for (int i = 0; i < 4; ++i) {
      permuted.candidates[static_cast<std::size_t>(i)] =
          base_inst.candidates[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const auto pred = score_candidates(model, permuted, clip, {});
    for (int i = 0; i < 4; ++i) {
      CHECK(pred.candidate_scores[static_cast<std::size_t>(i)] ==
            base.candidate_scores[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    }
    CHECK(perm[static_cast<std::size_t>(pred.predicted_index)] ==
          base.predicted_index);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("score_candidates verifies head width") {
  auto model = toy_model();
  model.head.push_back(1.0);
  CHECK_THROWS_AS(score_candidates(model, toy_instance(), toy_clip(), {}),
                  DimensionMismatchError);
}

TEST_CASE("train_reasoner with zero epochs returns the initialization") {
  Corpus corpus = kvqa::testing::tiny_corpus(3, 2);
  const auto assignment = all_train(corpus);
  ReasonerConfig cfg;
  cfg.epochs = 0;
  cfg.visual = VisualVariant::facial;
  cfg.seed = 13;
  const auto trained = train_reasoner(corpus, assignment, NoKnowledge{}, cfg);
  const auto init = init_fusion_model(
      build_language_vocab(corpus, assignment, Split::train), corpus, cfg);
  CHECK(trained.model.lang.emb == init.lang.emb);
  CHECK(trained.model.lang.w == init.lang.w);
  CHECK(trained.model.lang.b == init.lang.b);
  CHECK(trained.model.head == init.head);
  CHECK(trained.model.head_bias == init.head_bias);
  CHECK(trained.epoch_loss.empty());
}

TEST_CASE("initial mean loss equals ln 4 under the symmetric head") {
  Corpus corpus = kvqa::testing::tiny_corpus(4, 3);
  const auto assignment = all_train(corpus);
  ReasonerConfig cfg;
  cfg.visual = VisualVariant::image;
  cfg.n_frames = 1;
  cfg.seed = 77;
  const auto model = init_fusion_model(
      build_language_vocab(corpus, assignment, Split::train), corpus, cfg);

  std::vector<ReasonerItem> items;
  for (const auto& inst : corpus.instances) {
    items.push_back({&inst, &corpus.clips.at(inst.clip_id), {"a fact"}});
  }
  FusionGrads grads(model);
  const double loss = reasoner_loss_and_grads(model, items, grads);
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("gold-knowledge training solves the decidable synthetic task") {
  SynthSpec spec;
  spec.n_episodes = 8;
  spec.clips_per_episode = 2;
  spec.questions_per_clip = 3;  // 48 instances
  spec.n_knowledge = 9;
  spec.group_size = 1;
  spec.determinism = 1.0;
  spec.seed = 42;
  const auto result = generate(spec);
  const auto assignment = all_train(result.corpus);

  ReasonerConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.d_emb = 32;
  cfg.d_lang = 32;
  cfg.n_frames = 2;
  cfg.visual = VisualVariant::none;
  cfg.seed = 6;
  const auto trained =
      train_reasoner(result.corpus, assignment, GoldKnowledge{}, cfg);

  const auto predictions = predict_split(trained.model, result.corpus,
                                         assignment, Split::train,
                                         GoldKnowledge{});
  REQUIRE(predictions.size() == result.corpus.instances.size());
  int correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].predicted_index == result.corpus.instances[i].gold_index) {
      ++correct;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(predictions.size()) >=
        0.98);
}

TEST_CASE("train_reasoner requires a non-empty train split") {
  Corpus corpus = kvqa::testing::tiny_corpus(3, 2);
  SplitAssignment assignment;
  for (const auto& episode : corpus.episode_ids()) {
    assignment.by_episode.emplace(episode, Split::test);
  }
  CHECK_THROWS_AS(
      train_reasoner(corpus, assignment, NoKnowledge{}, ReasonerConfig{}),
      EmptySplitError);
}

TEST_CASE("predict_split returns empty for an empty split and is repeatable") {
  Corpus corpus = kvqa::testing::tiny_corpus(4, 2);
  SplitAssignment assignment;
  for (const auto& episode : corpus.episode_ids()) {
    assignment.by_episode.emplace(episode, Split::train);
  }
  ReasonerConfig cfg;
  cfg.epochs = 2;
  cfg.visual = VisualVariant::concepts;
  cfg.seed = 3;
  const auto trained = train_reasoner(corpus, assignment, NoKnowledge{}, cfg);

  CHECK(predict_split(trained.model, corpus, assignment, Split::test,
                      NoKnowledge{})
            .empty());
  const auto a =
      predict_split(trained.model, corpus, assignment, Split::train, NoKnowledge{});
  const auto b =
      predict_split(trained.model, corpus, assignment, Split::train, NoKnowledge{});
  CHECK(a == b);

  // Element-wise agreement with individually invoked score_candidates.
  std::size_t index = 0;
  for (const auto& inst : corpus.instances) {
    const auto single = score_candidates(trained.model, inst,
                                         corpus.clips.at(inst.clip_id), {});
    CHECK(a[index] == single);
    ++index;
  }
}

TEST_CASE("knowledge_for honors the three source kinds") {
  const auto inst = toy_instance();
  CHECK(knowledge_for(NoKnowledge{}, inst).empty());
  CHECK(knowledge_for(GoldKnowledge{}, inst) ==
        std::vector<std::string>{"ask one"});

  QuestionInstance no_knowledge = inst;
  no_knowledge.knowledge_text = "  ";
  CHECK(knowledge_for(GoldKnowledge{}, no_knowledge).empty());
}

TEST_CASE("reasoner analytic gradients match finite differences") {
  Corpus corpus = kvqa::testing::tiny_corpus(2, 2);
  const auto assignment = all_train(corpus);
  ReasonerConfig cfg;
  cfg.d_emb = 3;
  cfg.d_lang = 3;
  cfg.n_frames = 1;
  cfg.visual = VisualVariant::image;
  cfg.seed = 19;
  FusionModel model = init_fusion_model(
      build_language_vocab(corpus, assignment, Split::train), corpus, cfg);
  Rng rng(2);
  for (double& x : model.head) x = rng.uniform(-0.5, 0.5);
  model.head_bias = 0.2;

  std::vector<ReasonerItem> items;
  for (const auto& inst : corpus.instances) {
    items.push_back({&inst, &corpus.clips.at(inst.clip_id), {"fact number 1"}});
  }

  FusionGrads grads(model);
  reasoner_loss_and_grads(model, items, grads);

  auto loss_at = [&items](const FusionModel& m) {
    FusionGrads g(m);
    return reasoner_loss_and_grads(m, items, g);
  };
  const double h = 1e-5;
  auto check_vec = [&](std::vector<double>& target,
                       const std::vector<double>& analytic, std::size_t stride) {
    for (std::size_t i = 0; i < target.size(); i += stride) {
      const double saved = target[i];
      target[i] = saved + h;
      const double up = loss_at(model);
      target[i] = saved - h;
      const double down = loss_at(model);
      target[i] = saved;
      CHECK(analytic[i] ==
            doctest::Approx((up - down) / (2 * h)).epsilon(1e-4).scale(1.0));
    }
  };
  check_vec(model.head, grads.head, 1);
  check_vec(model.lang.b, grads.lang.b, 1);
  check_vec(model.lang.w, grads.lang.w, 7);
  check_vec(model.lang.emb, grads.lang.emb, 5);
}
