#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kvqa/corpus.hpp"
#include "kvqa/tokenizer.hpp"

namespace kvqa {

enum class ReprRole { image, concepts, facial, caption_text, language };

struct Representation {
  ReprRole role;
  std::vector<double> vec;  // empty for caption_text
  std::string text;         // set for caption_text only

  std::size_t dim() const { return vec.size(); }
};

// Frame feature vectors of uniformly sampled frames, concatenated. With fewer
// frames than requested, the tail repeats the last frame.
Representation repr_image(const ClipAssets& clip, int n_frames);

// Counts of concept labels over all frames against the given vocabulary;
// out-of-vocabulary labels are ignored.
Representation repr_concepts(const ClipAssets& clip,
                             const std::vector<std::string>& concept_vocab);

// Multi-hot over the character vocabulary: 1 iff seen in any frame.
Representation repr_facial(const ClipAssets& clip,
                           const std::vector<std::string>& character_vocab);

// Frame captions joined with ". " in frame order.
Representation repr_captions(const ClipAssets& clip);

// Reserved marker ids delimiting the five language segments. The language
// vocabulary must be created via language_vocabulary() so these ids hold.
inline constexpr int kMarkerCaptions = 1;
inline constexpr int kMarkerSubtitles = 2;
inline constexpr int kMarkerQuestion = 3;
inline constexpr int kMarkerCandidate = 4;
inline constexpr int kMarkerKnowledge = 5;
inline constexpr int kNumSegments = 5;

inline bool is_segment_marker(int id) {
  return id >= kMarkerCaptions && id <= kMarkerKnowledge;
}

Vocabulary language_vocabulary();

struct TokenBudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Token ids in segment order captions, subtitles, question, candidate,
// knowledge, each non-empty segment introduced by its marker. When the total
// exceeds l_max, captions are dropped first (from their front), then
// subtitles (front), then knowledge (back); question and candidate tokens are
// never dropped. Throws TokenBudgetError when they alone cannot fit.
std::vector<int> assemble_language_input(const Vocabulary& vocab,
                                         const std::string& captions,
                                         const std::vector<std::string>& subtitles,
                                         const std::string& question,
                                         const std::string& candidate,
                                         const std::vector<std::string>& knowledge,
                                         int l_max);

// Small trainable text encoder: token embeddings are mean-pooled per segment;
// the five segment pools plus the candidate.knowledge pool dot product feed
// one linear+tanh layer of width d_lang.
struct LanguageEncoder {
  Vocabulary vocab;
  int d_emb = 0;
  int d_lang = 0;
  int l_max = 0;
  std::vector<double> emb;  // vocab.size() x d_emb, row-major
  std::vector<double> w;    // d_lang x feature_dim(), row-major
  std::vector<double> b;    // d_lang

  int feature_dim() const { return kNumSegments * d_emb + 1; }
};

LanguageEncoder init_language_encoder(Vocabulary vocab, int d_emb, int d_lang,
                                      int l_max, std::uint64_t seed);

struct LanguageTrace {
  std::array<std::vector<int>, kNumSegments> segment_tokens;
  std::array<int, kNumSegments> segment_counts{};
  std::vector<double> feature;  // feature_dim()
  std::vector<double> out;      // d_lang
};

std::vector<double> encode_language(const LanguageEncoder& enc,
                                    const std::vector<int>& ids);
LanguageTrace encode_language_trace(const LanguageEncoder& enc,
                                    const std::vector<int>& ids);

struct LanguageGrads {
  std::vector<double> emb;
  std::vector<double> w;
  std::vector<double> b;

  explicit LanguageGrads(const LanguageEncoder& enc)
      : emb(enc.emb.size(), 0.0), w(enc.w.size(), 0.0), b(enc.b.size(), 0.0) {}
};

// Accumulates d(loss)/d(params) into grads given d(loss)/d(out).
void encode_language_backward(const LanguageEncoder& enc,
                              const LanguageTrace& trace,
                              const std::vector<double>& d_out,
                              LanguageGrads& grads);

}  // namespace kvqa
