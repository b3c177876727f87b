#include "kvqa/reasoner.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "kvqa/rng.hpp"
#include "kvqa/sgd.hpp"

namespace kvqa {

namespace {

constexpr std::array<VisualVariant, 5> kVariants = {
    VisualVariant::image, VisualVariant::concepts, VisualVariant::facial,
    VisualVariant::caption, VisualVariant::none};

struct CandidateTrace {
  LanguageTrace lang;
  double score = 0.0;
};

struct InstanceTrace {
  std::vector<double> visual;
  std::array<CandidateTrace, 4> candidates;
  Prediction prediction;
};

InstanceTrace forward_instance(const FusionModel& model,
                               const QuestionInstance& instance,
                               const ClipAssets& clip,
                               const std::vector<std::string>& knowledge) {
  InstanceTrace trace;
  trace.visual = visual_vector(model, clip);
  if (static_cast<int>(trace.visual.size()) != model.d_visual) {
    throw DimensionMismatchError(
        "visual vector width " + std::to_string(trace.visual.size()) +
        " does not match model d_visual " + std::to_string(model.d_visual));
  }
  if (static_cast<int>(model.head.size()) != model.d_visual + model.lang.d_lang) {
    throw DimensionMismatchError(
        "head width " + std::to_string(model.head.size()) +
        " does not match d_visual + d_lang " +
        std::to_string(model.d_visual + model.lang.d_lang));
  }

  const std::string captions = repr_captions(clip).text;
  std::array<double, 4> scores{};
  for (std::size_t c = 0; c < 4; ++c) {
    const std::vector<int> ids = assemble_language_input(
        model.lang.vocab, captions, clip.subtitles, instance.question,
        instance.candidates[c], knowledge, model.lang.l_max);
    trace.candidates[c].lang = encode_language_trace(model.lang, ids);

    double s = model.head_bias;
    for (int k = 0; k < model.d_visual; ++k) {
      s += model.head[static_cast<std::size_t>(k)] *
           trace.visual[static_cast<std::size_t>(k)];
    }
    const double* head_lang = model.head.data() + model.d_visual;
    const auto& lang_out = trace.candidates[c].lang.out;
    for (int k = 0; k < model.lang.d_lang; ++k) {
      s += head_lang[k] * lang_out[static_cast<std::size_t>(k)];
    }
    trace.candidates[c].score = s;
    scores[c] = s;
  }
  trace.prediction = make_prediction(instance.id, scores);
  return trace;
}

}  // namespace

const char* to_string(VisualVariant variant) {
  switch (variant) {
    case VisualVariant::image: return "image";
    case VisualVariant::concepts: return "concepts";
    case VisualVariant::facial: return "facial";
    case VisualVariant::caption: return "caption";
    case VisualVariant::none: return "none";
  }
  return "unknown";
}

std::optional<VisualVariant> parse_visual_variant(std::string_view name) {
  for (VisualVariant v : kVariants) {
    if (name == to_string(v)) return v;
  }
  return std::nullopt;
}

Prediction make_prediction(std::string instance_id,
                           const std::array<double, 4>& scores) {
  Prediction pred;
  pred.instance_id = std::move(instance_id);
  pred.candidate_scores = scores;

  double max_score = scores[0];
  pred.predicted_index = 0;
  for (int c = 1; c < 4; ++c) {
    if (scores[static_cast<std::size_t>(c)] > max_score) {
      max_score = scores[static_cast<std::size_t>(c)];
      pred.predicted_index = c;
    }
  }

  double denom = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    pred.probabilities[c] = std::exp(scores[c] - max_score);
    denom += pred.probabilities[c];
  }
  for (std::size_t c = 0; c < 4; ++c) pred.probabilities[c] /= denom;
  return pred;
}

std::vector<std::string> knowledge_for(const KnowledgeSource& source,
                                       const QuestionInstance& instance) {
  if (std::holds_alternative<NoKnowledge>(source)) return {};
  if (std::holds_alternative<GoldKnowledge>(source)) {
    const std::string text = normalize_text(instance.knowledge_text);
    if (text.empty()) return {};
    return {text};
  }
  const auto& retrieved = std::get<RetrievedKnowledge>(source);
  std::vector<std::string> texts;
  for (const auto& hit :
       retrieve_topk(*retrieved.scorer, instance, *retrieved.kb, retrieved.k)) {
    texts.push_back(retrieved.kb->lookup(hit.kb_id).text);
  }
  return texts;
}

std::vector<double> visual_vector(const FusionModel& model,
                                  const ClipAssets& clip) {
  switch (model.variant) {
    case VisualVariant::image: return repr_image(clip, model.n_frames).vec;
    case VisualVariant::concepts: return repr_concepts(clip, model.concept_vocab).vec;
    case VisualVariant::facial: return repr_facial(clip, model.character_vocab).vec;
    case VisualVariant::caption:
    case VisualVariant::none:
      return {};
  }
  return {};
}

int visual_dim(const Corpus& corpus, VisualVariant variant, int n_frames) {
  switch (variant) {
    case VisualVariant::image: return n_frames * corpus.image_feature_dim();
    case VisualVariant::concepts: return static_cast<int>(corpus.concept_vocab.size());
    case VisualVariant::facial: return static_cast<int>(corpus.character_vocab.size());
    case VisualVariant::caption:
    case VisualVariant::none:
      return 0;
  }
  return 0;
}

Vocabulary build_language_vocab(const Corpus& corpus,
                                const SplitAssignment& assignment,
                                Split split) {
  Vocabulary vocab = language_vocabulary();
  std::unordered_set<std::string> seen_clips;
  for (const auto& inst : corpus.instances) {
    if (assignment.of(inst.episode_id) != split) continue;
    vocab.add_text(inst.question);
    for (const auto& candidate : inst.candidates) vocab.add_text(candidate);
    vocab.add_text(inst.knowledge_text);
    if (seen_clips.insert(inst.clip_id).second) {
      auto it = corpus.clips.find(inst.clip_id);
      if (it != corpus.clips.end()) {
        for (const auto& line : it->second.subtitles) vocab.add_text(line);
        for (const auto& frame : it->second.frames) vocab.add_text(frame.caption);
      }
    }
  }
  return vocab;
}

FusionModel init_fusion_model(Vocabulary vocab, const Corpus& corpus,
                              const ReasonerConfig& cfg) {
  FusionModel model;
  model.variant = cfg.visual;
  model.n_frames = cfg.n_frames;
  model.d_visual = visual_dim(corpus, cfg.visual, cfg.n_frames);
  model.concept_vocab = corpus.concept_vocab;
  model.character_vocab = corpus.character_vocab;
  model.lang = init_language_encoder(std::move(vocab), cfg.d_emb, cfg.d_lang,
                                     cfg.l_max, cfg.seed);
  // Zero head keeps the four candidate scores symmetric at initialization.
  model.head.assign(static_cast<std::size_t>(model.d_visual + cfg.d_lang), 0.0);
  model.head_bias = 0.0;
  return model;
}

Prediction score_candidates(const FusionModel& model,
                            const QuestionInstance& instance,
                            const ClipAssets& clip,
                            const std::vector<std::string>& knowledge) {
  return forward_instance(model, instance, clip, knowledge).prediction;
}

double reasoner_loss_and_grads(const FusionModel& model,
                               std::span<const ReasonerItem> batch,
                               FusionGrads& grads) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> d_lang_out(static_cast<std::size_t>(model.lang.d_lang));

  for (const auto& item : batch) {
    InstanceTrace trace =
        forward_instance(model, *item.instance, *item.clip, item.knowledge);
    const auto& probs = trace.prediction.probabilities;
    const int gold = item.instance->gold_index;
    loss += -std::log(std::max(probs[static_cast<std::size_t>(gold)], 1e-300));

    for (int c = 0; c < 4; ++c) {
      const double d_score =
          (probs[static_cast<std::size_t>(c)] - (c == gold ? 1.0 : 0.0)) * inv;
      grads.head_bias += d_score;
      for (int k = 0; k < model.d_visual; ++k) {
        grads.head[static_cast<std::size_t>(k)] +=
            d_score * trace.visual[static_cast<std::size_t>(k)];
      }
      const auto& lang_out = trace.candidates[static_cast<std::size_t>(c)].lang.out;
      const double* head_lang = model.head.data() + model.d_visual;
      double* grad_head_lang = grads.head.data() + model.d_visual;
      for (int k = 0; k < model.lang.d_lang; ++k) {
        grad_head_lang[k] += d_score * lang_out[static_cast<std::size_t>(k)];
        d_lang_out[static_cast<std::size_t>(k)] = d_score * head_lang[k];
      }
      encode_language_backward(model.lang,
                               trace.candidates[static_cast<std::size_t>(c)].lang,
                               d_lang_out, grads.lang);
    }
  }
  return loss * inv;
}

ReasonerTrainResult train_reasoner(const Corpus& corpus,
                                   const SplitAssignment& assignment,
                                   const KnowledgeSource& source,
                                   const ReasonerConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.d_emb < 1 || cfg.d_lang < 1 ||
      cfg.l_max < 1 || cfg.n_frames < 1 || cfg.top_k < 1) {
    throw std::invalid_argument("reasoner config counts out of range");
  }
  if (!(cfg.learning_rate > 0.0) || cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument(
        "reasoner config requires learning_rate > 0 and momentum in [0,1)");
  }
  const auto train_instances = instances_in_split(corpus, assignment, Split::train);
  if (train_instances.empty()) {
    throw EmptySplitError("train split holds no instances");
  }

  // Knowledge is resolved once, before the first epoch.
  std::vector<ReasonerItem> items;
  items.reserve(train_instances.size());
  for (const auto* inst : train_instances) {
    items.push_back({inst, &corpus.clips.at(inst->clip_id),
                     knowledge_for(source, *inst)});
  }

  ReasonerTrainResult result;
  result.model = init_fusion_model(
      build_language_vocab(corpus, assignment, Split::train), corpus, cfg);
  FusionModel& model = result.model;

  FusionGrads velocity(model);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Rng shuffle_rng(cfg.seed + 1);
  std::vector<ReasonerItem> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t end =
          std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = cursor; i < end; ++i) batch.push_back(items[order[i]]);

      FusionGrads grads(model);
      const double batch_loss = reasoner_loss_and_grads(model, batch, grads);
      epoch_loss += batch_loss * static_cast<double>(batch.size());

      sgd_momentum_step(model.lang.emb, grads.lang.emb, velocity.lang.emb,
                        cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(model.lang.w, grads.lang.w, velocity.lang.w,
                        cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(model.lang.b, grads.lang.b, velocity.lang.b,
                        cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(model.head, grads.head, velocity.head,
                        cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(std::span(&model.head_bias, 1),
                        std::span(&grads.head_bias, 1),
                        std::span(&velocity.head_bias, 1), cfg.learning_rate,
                        cfg.momentum);
      cursor = end;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(items.size()));
  }
  return result;
}

std::vector<Prediction> predict_split(const FusionModel& model,
                                      const Corpus& corpus,
                                      const SplitAssignment& assignment,
                                      Split split,
                                      const KnowledgeSource& source) {
  std::vector<Prediction> predictions;
  for (const auto& inst : corpus.instances) {
    if (assignment.of(inst.episode_id) != split) continue;
    try {
      const auto knowledge = knowledge_for(source, inst);
      predictions.push_back(
          score_candidates(model, inst, corpus.clips.at(inst.clip_id), knowledge));
    } catch (const DimensionMismatchError& e) {
      throw DimensionMismatchError("instance " + inst.id + ": " + e.what());
    } catch (const TokenBudgetError& e) {
      throw TokenBudgetError("instance " + inst.id + ": " + e.what());
    }
  }
  return predictions;
}

}  // namespace kvqa
