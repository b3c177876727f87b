#include "kvqa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kvqa/rng.hpp"
#include "kvqa/sgd.hpp"

namespace kvqa {

namespace {

constexpr int kPairFeatureBlocks = 3;  // block pool, knowledge pool, product

struct PairTrace {
  std::vector<int> block_tokens;
  std::vector<int> knowledge_tokens;
  std::vector<double> feature;  // 3 * d_emb
  double logit = 0.0;
  double prob = 0.0;
};

void mean_pool(const ScorerModel& model, const std::vector<int>& tokens,
               double* pool) {
  const std::size_t d = static_cast<std::size_t>(model.d_emb);
  if (tokens.empty()) return;
  for (int id : tokens) {
    const double* row =
        model.params.emb.data() + static_cast<std::size_t>(id) * d;
    for (std::size_t k = 0; k < d; ++k) pool[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t k = 0; k < d; ++k) pool[k] *= inv;
}

PairTrace forward_pair(const ScorerModel& model, const ScorerInput& input) {
  PairTrace trace;
  trace.block_tokens = model.vocab.encode(input.question_block);
  trace.knowledge_tokens = model.vocab.encode(input.knowledge_text);

  const std::size_t d = static_cast<std::size_t>(model.d_emb);
  trace.feature.assign(kPairFeatureBlocks * d, 0.0);
  mean_pool(model, trace.block_tokens, trace.feature.data());
  mean_pool(model, trace.knowledge_tokens, trace.feature.data() + d);
  for (std::size_t k = 0; k < d; ++k) {
    trace.feature[2 * d + k] = trace.feature[k] * trace.feature[d + k];
  }

  double z = model.params.bias;
  for (std::size_t k = 0; k < trace.feature.size(); ++k) {
    z += model.params.head[k] * trace.feature[k];
  }
  trace.logit = z;
  trace.prob = 1.0 / (1.0 + std::exp(-z));
  return trace;
}

void check_config(const RetrievalConfig& cfg) {
  if (cfg.top_k < 1 || cfg.negatives_per_positive < 1 || cfg.epochs < 0 ||
      cfg.batch_size < 1 || cfg.d_emb < 1) {
    throw std::invalid_argument("retrieval config counts out of range");
  }
  if (!(cfg.learning_rate > 0.0) || cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument(
        "retrieval config requires learning_rate > 0 and momentum in [0,1)");
  }
}

// Numerically stable binary cross-entropy from the logit.
double bce_from_logit(double z, int label) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z))
                                : std::log1p(std::exp(z));
  return softplus - static_cast<double>(label) * z;
}

void accumulate_pair_grads(const ScorerModel& model, const PairTrace& trace,
                           double d_logit, ScorerParams& grads) {
  const std::size_t d = static_cast<std::size_t>(model.d_emb);
  grads.bias += d_logit;

  std::vector<double> d_feature(trace.feature.size());
  for (std::size_t k = 0; k < trace.feature.size(); ++k) {
    grads.head[k] += d_logit * trace.feature[k];
    d_feature[k] = d_logit * model.params.head[k];
  }

  // Product block contributes to both pools.
  for (std::size_t k = 0; k < d; ++k) {
    d_feature[k] += d_feature[2 * d + k] * trace.feature[d + k];
    d_feature[d + k] += d_feature[2 * d + k] * trace.feature[k];
  }

  auto scatter = [&](const std::vector<int>& tokens, const double* d_pool) {
    if (tokens.empty()) return;
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (int id : tokens) {
      double* row = grads.emb.data() + static_cast<std::size_t>(id) * d;
      for (std::size_t k = 0; k < d; ++k) row[k] += d_pool[k] * inv;
    }
  };
  scatter(trace.block_tokens, d_feature.data());
  scatter(trace.knowledge_tokens, d_feature.data() + d);
}

}  // namespace

MissingKnowledgeError::MissingKnowledgeError(std::vector<std::string> ids)
    : std::runtime_error([&ids] {
        std::ostringstream msg;
        msg << "knowledge text not present in the KB for instances:";
        for (const auto& id : ids) msg << " " << id;
        return msg.str();
      }()),
      instance_ids(std::move(ids)) {}

std::string question_block(const QuestionInstance& instance) {
  std::string block = instance.question;
  for (std::size_t i = 0; i < instance.candidates.size(); ++i) {
    block += " [a" + std::to_string(i + 1) + "] " + instance.candidates[i];
  }
  return block;
}

std::vector<LabeledPair> make_training_pairs(
    const std::vector<const QuestionInstance*>& instances,
    const KnowledgeBase& kb, const RetrievalConfig& cfg) {
  check_config(cfg);
  std::vector<std::string> missing;
  for (const auto* inst : instances) {
    if (kb.find_normalized(normalize_text(inst->knowledge_text)) == 0) {
      missing.push_back(inst->id);
    }
  }
  if (!missing.empty()) throw MissingKnowledgeError(std::move(missing));

  Rng rng(cfg.seed);
  const int n = kb.size();
  std::vector<LabeledPair> pairs;
  for (const auto* inst : instances) {
    const std::string block = question_block(*inst);
    const int own_id = kb.find_normalized(normalize_text(inst->knowledge_text));
    pairs.push_back({{block, kb.lookup(own_id).text}, 1});

    // Distinct negatives, capped by what the KB can provide.
    const int wanted = std::min(cfg.negatives_per_positive, n - 1);
    std::vector<int> drawn;
    while (static_cast<int>(drawn.size()) < wanted) {
      const int kb_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(n))) + 1;
      if (kb_id == own_id) continue;
      if (std::find(drawn.begin(), drawn.end(), kb_id) != drawn.end()) continue;
      drawn.push_back(kb_id);
      pairs.push_back({{block, kb.lookup(kb_id).text}, 0});
    }
  }
  return pairs;
}

ScorerModel init_scorer(const std::vector<LabeledPair>& pairs,
                        const RetrievalConfig& cfg) {
  ScorerModel model;
  for (const auto& pair : pairs) {
    model.vocab.add_text(pair.input.question_block);
    model.vocab.add_text(pair.input.knowledge_text);
  }
  model.d_emb = cfg.d_emb;
  Rng rng(cfg.seed);
  model.params.emb.resize(static_cast<std::size_t>(model.vocab.size()) *
                          static_cast<std::size_t>(cfg.d_emb));
  for (double& x : model.params.emb) x = rng.uniform(-0.5, 0.5);
  // The product block starts at one so the head works as a raw lexical
  // overlap detector immediately; with a zero head no gradient would reach
  // the embeddings through the multiplicative features.
  model.params.head.assign(kPairFeatureBlocks * static_cast<std::size_t>(cfg.d_emb), 0.0);
  for (int k = 0; k < cfg.d_emb; ++k) {
    model.params.head[static_cast<std::size_t>(2 * cfg.d_emb + k)] = 1.0;
  }
  model.params.bias = 0.0;
  return model;
}

double score(const ScorerModel& model, const ScorerInput& input) {
  return forward_pair(model, input).prob;
}

double scorer_loss_and_grads(const ScorerModel& model,
                             std::span<const LabeledPair> batch,
                             ScorerParams& grads) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& pair : batch) {
    const PairTrace trace = forward_pair(model, pair.input);
    loss += bce_from_logit(trace.logit, pair.label);
    const double d_logit = (trace.prob - static_cast<double>(pair.label)) * inv;
    accumulate_pair_grads(model, trace, d_logit, grads);
  }
  return loss * inv;
}

ScorerTrainResult train_scorer(const std::vector<LabeledPair>& pairs,
                               const RetrievalConfig& cfg) {
  check_config(cfg);
  bool any_positive = false;
  bool any_negative = false;
  for (const auto& pair : pairs) {
    (pair.label == 1 ? any_positive : any_negative) = true;
  }
  if (!any_positive || !any_negative) {
    throw DegenerateDataError("training pairs must contain both labels");
  }

  ScorerTrainResult result;
  result.model = init_scorer(pairs, cfg);
  ScorerModel& model = result.model;

  ScorerParams velocity;
  velocity.emb.assign(model.params.emb.size(), 0.0);
  velocity.head.assign(model.params.head.size(), 0.0);
  velocity.bias = 0.0;

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Rng shuffle_rng(cfg.seed + 1);
  std::vector<LabeledPair> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t end =
          std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = cursor; i < end; ++i) batch.push_back(pairs[order[i]]);

      ScorerParams grads;
      grads.emb.assign(model.params.emb.size(), 0.0);
      grads.head.assign(model.params.head.size(), 0.0);
      grads.bias = 0.0;
      const double batch_loss = scorer_loss_and_grads(model, batch, grads);
      epoch_loss += batch_loss * static_cast<double>(batch.size());

      sgd_momentum_step(model.params.emb, grads.emb, velocity.emb,
                        cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(model.params.head, grads.head, velocity.head,
                        cfg.learning_rate, cfg.momentum);
      sgd_momentum_step(std::span(&model.params.bias, 1),
                        std::span(&grads.bias, 1), std::span(&velocity.bias, 1),
                        cfg.learning_rate, cfg.momentum);
      cursor = end;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  return result;
}

std::vector<ScoredKnowledge> retrieve_topk(const ScorerModel& model,
                                           const QuestionInstance& question,
                                           const KnowledgeBase& kb, int k) {
  if (kb.size() == 0) throw EmptyKbError("cannot retrieve from an empty KB");
  if (k < 1) throw std::invalid_argument("retrieve_topk: k must be >= 1");

  const std::string block = question_block(question);
  std::vector<ScoredKnowledge> scored;
  scored.reserve(static_cast<std::size_t>(kb.size()));
  for (const auto& entry : kb.entries()) {
    scored.push_back({entry.kb_id, score(model, {block, entry.text})});
  }
  std::sort(scored.begin(), scored.end(),
            [](const ScoredKnowledge& a, const ScoredKnowledge& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.kb_id < b.kb_id;
            });
  scored.resize(static_cast<std::size_t>(
      std::min(k, kb.size())));
  return scored;
}

double recall_at_k(const ScorerModel& model,
                   const std::vector<const QuestionInstance*>& instances,
                   const KnowledgeBase& kb, int k) {
  std::vector<std::string> missing;
  for (const auto* inst : instances) {
    if (kb.find_normalized(normalize_text(inst->knowledge_text)) == 0) {
      missing.push_back(inst->id);
    }
  }
  if (!missing.empty()) throw MissingKnowledgeError(std::move(missing));
  if (instances.empty()) return 0.0;

  int hits = 0;
  for (const auto* inst : instances) {
    const int own_id = kb.find_normalized(normalize_text(inst->knowledge_text));
    for (const auto& result : retrieve_topk(model, *inst, kb, k)) {
      if (result.kb_id == own_id) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

}  // namespace kvqa
