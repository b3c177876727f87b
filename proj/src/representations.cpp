#include "kvqa/representations.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "kvqa/rng.hpp"

namespace kvqa {

namespace {

std::vector<std::size_t> sample_frame_indices(std::size_t n_available,
                                              std::size_t n_wanted) {
  std::vector<std::size_t> indices;
  indices.reserve(n_wanted);
  if (n_wanted == 1) {
    indices.push_back(0);
    return indices;
  }
  if (n_available >= n_wanted) {
    // floor(i * (F-1) / (n-1)) spreads picks uniformly from first to last.
    for (std::size_t i = 0; i < n_wanted; ++i) {
      indices.push_back(i * (n_available - 1) / (n_wanted - 1));
    }
  } else {
    for (std::size_t i = 0; i < n_available; ++i) indices.push_back(i);
    while (indices.size() < n_wanted) indices.push_back(n_available - 1);
  }
  return indices;
}

}  // namespace

Representation repr_image(const ClipAssets& clip, int n_frames) {
  if (clip.frames.empty()) {
    throw std::invalid_argument("repr_image: clip " + clip.clip_id +
                                " has no frames");
  }
  if (n_frames < 1) {
    throw std::invalid_argument("repr_image: n_frames must be >= 1");
  }
  Representation repr{ReprRole::image, {}, {}};
  for (std::size_t idx : sample_frame_indices(clip.frames.size(),
                                              static_cast<std::size_t>(n_frames))) {
    const auto& feat = clip.frames[idx].feature_vector;
    repr.vec.insert(repr.vec.end(), feat.begin(), feat.end());
  }
  return repr;
}

Representation repr_concepts(const ClipAssets& clip,
                             const std::vector<std::string>& concept_vocab) {
  Representation repr{ReprRole::concepts,
                      std::vector<double>(concept_vocab.size(), 0.0),
                      {}};
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < concept_vocab.size(); ++i) {
    index.emplace(concept_vocab[i], i);
  }
  for (const auto& frame : clip.frames) {
    for (const auto& label : frame.concept_labels) {
      auto it = index.find(label);
      if (it != index.end()) repr.vec[it->second] += 1.0;
    }
  }
  return repr;
}

Representation repr_facial(const ClipAssets& clip,
                           const std::vector<std::string>& character_vocab) {
  Representation repr{ReprRole::facial,
                      std::vector<double>(character_vocab.size(), 0.0),
                      {}};
  std::unordered_set<std::string> present;
  for (const auto& frame : clip.frames) {
    present.insert(frame.characters_present.begin(),
                   frame.characters_present.end());
  }
  for (std::size_t i = 0; i < character_vocab.size(); ++i) {
    if (present.contains(character_vocab[i])) repr.vec[i] = 1.0;
  }
  return repr;
}

Representation repr_captions(const ClipAssets& clip) {
  Representation repr{ReprRole::caption_text, {}, {}};
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    if (i > 0) repr.text += ". ";
    repr.text += clip.frames[i].caption;
  }
  return repr;
}

Vocabulary language_vocabulary() {
  return Vocabulary::with_markers(
      {"<cap>", "<sub>", "<q>", "<cand>", "<know>"});
}

std::vector<int> assemble_language_input(const Vocabulary& vocab,
                                         const std::string& captions,
                                         const std::vector<std::string>& subtitles,
                                         const std::string& question,
                                         const std::string& candidate,
                                         const std::vector<std::string>& knowledge,
                                         int l_max) {
  if (tokenize(question).empty() || tokenize(candidate).empty()) {
    throw std::invalid_argument(
        "assemble_language_input: question and candidate must be non-empty");
  }

  std::vector<int> cap_ids = vocab.encode(captions);
  std::vector<int> sub_ids;
  for (const auto& line : subtitles) {
    for (int id : vocab.encode(line)) sub_ids.push_back(id);
  }
  std::vector<int> q_ids = vocab.encode(question);
  std::vector<int> cand_ids = vocab.encode(candidate);
  std::vector<int> know_ids;
  for (const auto& text : knowledge) {
    for (int id : vocab.encode(text)) know_ids.push_back(id);
  }

  auto segment_cost = [](const std::vector<int>& ids) -> int {
    return ids.empty() ? 0 : static_cast<int>(ids.size()) + 1;  // +1 marker
  };

  const int fixed = segment_cost(q_ids) + segment_cost(cand_ids);
  if (fixed > l_max) {
    throw TokenBudgetError(
        "question and candidate need " + std::to_string(fixed) +
        " tokens, budget is " + std::to_string(l_max));
  }

  // Shrink a segment to the given token budget. keep_back keeps the segment's
  // tail (recency); otherwise the head survives.
  auto shrink = [](std::vector<int>& ids, int keep, bool keep_back) {
    if (keep <= 0) {
      ids.clear();
      return;
    }
    if (static_cast<int>(ids.size()) <= keep) return;
    if (keep_back) {
      ids.erase(ids.begin(), ids.end() - keep);
    } else {
      ids.erase(ids.begin() + keep, ids.end());
    }
  };

  auto total = [&]() {
    return segment_cost(cap_ids) + segment_cost(sub_ids) + fixed +
           segment_cost(know_ids);
  };

  // Drop order: captions, subtitles, knowledge. Captions and subtitles lose
  // their oldest (front) tokens; knowledge loses its lowest-ranked (back).
  if (total() > l_max) {
    const int over = total() - l_max;
    const int cost = segment_cost(cap_ids);
    shrink(cap_ids, cost - over <= 1 ? 0 : static_cast<int>(cap_ids.size()) - over,
           /*keep_back=*/true);
  }
  if (total() > l_max) {
    const int over = total() - l_max;
    const int cost = segment_cost(sub_ids);
    shrink(sub_ids, cost - over <= 1 ? 0 : static_cast<int>(sub_ids.size()) - over,
           /*keep_back=*/true);
  }
  if (total() > l_max) {
    const int over = total() - l_max;
    const int cost = segment_cost(know_ids);
    shrink(know_ids, cost - over <= 1 ? 0 : static_cast<int>(know_ids.size()) - over,
           /*keep_back=*/false);
  }

  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(total()));
  auto emit = [&out](int marker, const std::vector<int>& ids) {
    if (ids.empty()) return;
    out.push_back(marker);
    out.insert(out.end(), ids.begin(), ids.end());
  };
  emit(kMarkerCaptions, cap_ids);
  emit(kMarkerSubtitles, sub_ids);
  emit(kMarkerQuestion, q_ids);
  emit(kMarkerCandidate, cand_ids);
  emit(kMarkerKnowledge, know_ids);
  return out;
}

LanguageEncoder init_language_encoder(Vocabulary vocab, int d_emb, int d_lang,
                                      int l_max, std::uint64_t seed) {
  if (d_emb < 1 || d_lang < 1 || l_max < 1) {
    throw std::invalid_argument("language encoder dimensions must be positive");
  }
  LanguageEncoder enc;
  enc.vocab = std::move(vocab);
  enc.d_emb = d_emb;
  enc.d_lang = d_lang;
  enc.l_max = l_max;
  Rng rng(seed);
  enc.emb.resize(static_cast<std::size_t>(enc.vocab.size()) *
                 static_cast<std::size_t>(d_emb));
  for (double& x : enc.emb) x = rng.uniform(-0.5, 0.5);
  enc.w.resize(static_cast<std::size_t>(d_lang) *
               static_cast<std::size_t>(enc.feature_dim()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(enc.feature_dim()));
  for (double& x : enc.w) x = rng.uniform(-scale, scale);
  // Couple every hidden unit to the candidate-knowledge overlap feature, so
  // token-overlap evidence is visible to the head from the first step instead
  // of having to emerge through the random projection.
  const std::size_t feat = static_cast<std::size_t>(enc.feature_dim());
  for (int r = 0; r < d_lang; ++r) {
    enc.w[static_cast<std::size_t>(r) * feat + feat - 1] += 1.0;
  }
  enc.b.assign(static_cast<std::size_t>(d_lang), 0.0);
  return enc;
}

namespace {

void split_segments(const std::vector<int>& ids,
                    std::array<std::vector<int>, kNumSegments>& segments) {
  int current = -1;
  for (int id : ids) {
    if (is_segment_marker(id)) {
      current = id - 1;
      continue;
    }
    if (current >= 0) segments[static_cast<std::size_t>(current)].push_back(id);
  }
}

}  // namespace

LanguageTrace encode_language_trace(const LanguageEncoder& enc,
                                    const std::vector<int>& ids) {
  LanguageTrace trace;
  split_segments(ids, trace.segment_tokens);

  const std::size_t d = static_cast<std::size_t>(enc.d_emb);
  trace.feature.assign(static_cast<std::size_t>(enc.feature_dim()), 0.0);
  for (std::size_t s = 0; s < kNumSegments; ++s) {
    const auto& tokens = trace.segment_tokens[s];
    trace.segment_counts[s] = static_cast<int>(tokens.size());
    if (tokens.empty()) continue;
    double* pool = trace.feature.data() + s * d;
    for (int id : tokens) {
      const double* row = enc.emb.data() + static_cast<std::size_t>(id) * d;
      for (std::size_t k = 0; k < d; ++k) pool[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (std::size_t k = 0; k < d; ++k) pool[k] *= inv;
  }

  // Interaction feature: dot product of the candidate and knowledge pools.
  {
    const double* cand = trace.feature.data() + (kMarkerCandidate - 1) * d;
    const double* know = trace.feature.data() + (kMarkerKnowledge - 1) * d;
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += cand[k] * know[k];
    trace.feature[kNumSegments * d] = dot;
  }

  trace.out.assign(static_cast<std::size_t>(enc.d_lang), 0.0);
  const std::size_t feat_dim = trace.feature.size();
  for (std::size_t r = 0; r < static_cast<std::size_t>(enc.d_lang); ++r) {
    const double* row = enc.w.data() + r * feat_dim;
    double acc = enc.b[r];
    for (std::size_t k = 0; k < feat_dim; ++k) acc += row[k] * trace.feature[k];
    trace.out[r] = std::tanh(acc);
  }
  return trace;
}

std::vector<double> encode_language(const LanguageEncoder& enc,
                                    const std::vector<int>& ids) {
  return encode_language_trace(enc, ids).out;
}

void encode_language_backward(const LanguageEncoder& enc,
                              const LanguageTrace& trace,
                              const std::vector<double>& d_out,
                              LanguageGrads& grads) {
  const std::size_t d = static_cast<std::size_t>(enc.d_emb);
  const std::size_t feat_dim = trace.feature.size();

  // Through tanh and the linear layer.
  std::vector<double> d_feature(feat_dim, 0.0);
  for (std::size_t r = 0; r < static_cast<std::size_t>(enc.d_lang); ++r) {
    const double d_pre = d_out[r] * (1.0 - trace.out[r] * trace.out[r]);
    grads.b[r] += d_pre;
    const double* row = enc.w.data() + r * feat_dim;
    double* grad_row = grads.w.data() + r * feat_dim;
    for (std::size_t k = 0; k < feat_dim; ++k) {
      grad_row[k] += d_pre * trace.feature[k];
      d_feature[k] += d_pre * row[k];
    }
  }

  // The overlap feature pushes gradient into both of its factor pools.
  {
    const double* cand = trace.feature.data() + (kMarkerCandidate - 1) * d;
    const double* know = trace.feature.data() + (kMarkerKnowledge - 1) * d;
    const double d_dot = d_feature[kNumSegments * d];
    double* d_cand = d_feature.data() + (kMarkerCandidate - 1) * d;
    double* d_know = d_feature.data() + (kMarkerKnowledge - 1) * d;
    for (std::size_t k = 0; k < d; ++k) {
      d_cand[k] += d_dot * know[k];
      d_know[k] += d_dot * cand[k];
    }
  }

  for (std::size_t s = 0; s < kNumSegments; ++s) {
    const auto& tokens = trace.segment_tokens[s];
    if (tokens.empty()) continue;
    const double inv = 1.0 / static_cast<double>(tokens.size());
    const double* d_pool = d_feature.data() + s * d;
    for (int id : tokens) {
      double* grad_row = grads.emb.data() + static_cast<std::size_t>(id) * d;
      for (std::size_t k = 0; k < d; ++k) grad_row[k] += d_pool[k] * inv;
    }
  }
}

}  // namespace kvqa
