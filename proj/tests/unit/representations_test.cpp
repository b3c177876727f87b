#include <cmath>

#include "doctest.h"
#include "kvqa/representations.hpp"
#include "kvqa/rng.hpp"
#include "test_support.hpp"

using namespace kvqa;

namespace {

ClipAssets clip_with_frames(int n_frames, int d_img) {
  ClipAssets clip;
  clip.clip_id = "c";
  for (int f = 0; f < n_frames; ++f) {
    FrameRecord frame;
    for (int d = 0; d < d_img; ++d) {
      frame.feature_vector.push_back(100.0 * f + d);
    }
    frame.caption = "caption " + std::to_string(f);
    clip.frames.push_back(frame);
  }
  return clip;
}

}  // namespace

TEST_CASE("repr_image with one frame returns that frame's features") {
  const auto clip = clip_with_frames(1, 4);
  const auto repr = repr_image(clip, 1);
  CHECK(repr.role == ReprRole::image);
  CHECK(repr.vec == std::vector<double>{0, 1, 2, 3});
  CHECK(repr.dim() == 4);
}

TEST_CASE("repr_image subsamples uniformly: 10 frames, 3 picks -> 0,4,9") {
  const auto clip = clip_with_frames(10, 1);
  const auto repr = repr_image(clip, 3);
  CHECK(repr.vec == std::vector<double>{0, 400, 900});
}

TEST_CASE("repr_image matches the index formula for many frame counts") {
  for (int frames = 1; frames <= 12; ++frames) {
    for (int wanted = 1; wanted <= 12; ++wanted) {
      const auto clip = clip_with_frames(frames, 1);
      const auto repr = repr_image(clip, wanted);
      REQUIRE(repr.vec.size() == static_cast<std::size_t>(wanted));
      for (int i = 0; i < wanted; ++i) {
        std::size_t expected;
        if (wanted == 1) {
          expected = 0;
        } else if (frames >= wanted) {
          expected = static_cast<std::size_t>(i) *
                     (static_cast<std::size_t>(frames) - 1) /
                     (static_cast<std::size_t>(wanted) - 1);
        } else {
          expected = std::min<std::size_t>(static_cast<std::size_t>(i),
                                           static_cast<std::size_t>(frames) - 1);
        }
        CHECK(repr.vec[static_cast<std::size_t>(i)] ==
              100.0 * static_cast<double>(expected));
      }
    }
  }
}

TEST_CASE("repr_image pads short clips by repeating the last frame") {
  const auto clip = clip_with_frames(2, 1);
  const auto repr = repr_image(clip, 4);
  CHECK(repr.vec == std::vector<double>{0, 100, 100, 100});
}

TEST_CASE("repr_image validates its inputs") {
  ClipAssets empty;
  empty.clip_id = "empty";
  CHECK_THROWS_AS(repr_image(empty, 1), std::invalid_argument);
  CHECK_THROWS_AS(repr_image(clip_with_frames(2, 1), 0), std::invalid_argument);
}

TEST_CASE("repr_concepts counts labels against the vocabulary") {
  ClipAssets clip = clip_with_frames(2, 1);
  CHECK(repr_concepts(clip, {"cat", "sofa", "door"}).vec ==
        std::vector<double>{0, 0, 0});
  clip.frames[0].concept_labels = {"cat", "cat"};
  clip.frames[1].concept_labels = {"sofa", "unknown-label"};
  CHECK(repr_concepts(clip, {"cat", "sofa", "door"}).vec ==
        std::vector<double>{2, 1, 0});
}

TEST_CASE("repr_concepts equals a dictionary-count oracle on random clips") {
  Rng rng(123);
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e"};
  ClipAssets clip = clip_with_frames(50, 1);
  for (auto& frame : clip.frames) {
    const int n = static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
      frame.concept_labels.push_back(vocab[rng.below(vocab.size())]);
    }
  }
  std::map<std::string, int> oracle;
  for (const auto& frame : clip.frames) {
    for (const auto& label : frame.concept_labels) oracle[label] += 1;
  }
  const auto repr = repr_concepts(clip, vocab);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    CHECK(repr.vec[i] == static_cast<double>(oracle[vocab[i]]));
  }

  // Frame order must not matter.
  ClipAssets reversed = clip;
  std::reverse(reversed.frames.begin(), reversed.frames.end());
  CHECK(repr_concepts(reversed, vocab).vec == repr.vec);
}

TEST_CASE("repr_facial is a presence indicator over characters") {
  ClipAssets clip = clip_with_frames(3, 1);
  CHECK(repr_facial(clip, {"leonard", "penny"}).vec ==
        std::vector<double>{0, 0});
  clip.frames[1].characters_present = {"leonard"};
  CHECK(repr_facial(clip, {"leonard", "penny"}).vec ==
        std::vector<double>{1, 0});
  clip.frames[2].characters_present = {"penny", "leonard"};
  const auto repr = repr_facial(clip, {"leonard", "penny"});
  CHECK(repr.vec == std::vector<double>{1, 1});

  ClipAssets reordered = clip;
  std::swap(reordered.frames[0], reordered.frames[2]);
  CHECK(repr_facial(reordered, {"leonard", "penny"}).vec == repr.vec);
}

TEST_CASE("repr_captions joins captions in frame order") {
  ClipAssets one = clip_with_frames(1, 1);
  one.frames[0].caption = "two men talk";
  CHECK(repr_captions(one).text == "two men talk");

  ClipAssets three = clip_with_frames(3, 1);
  CHECK(repr_captions(three).text == "caption 0. caption 1. caption 2");

  // Splitting on the separator recovers the originals when captions avoid it.
  const auto joined = repr_captions(three).text;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = joined.find(". ", start);
    if (pos == std::string::npos) {
      parts.push_back(joined.substr(start));
      break;
    }
    parts.push_back(joined.substr(start, pos - start));
    start = pos + 2;
  }
  REQUIRE(parts.size() == 3);
  for (int f = 0; f < 3; ++f) {
    CHECK(parts[static_cast<std::size_t>(f)] == three.frames[static_cast<std::size_t>(f)].caption);
  }
}

namespace {

Vocabulary assemble_vocab() {
  Vocabulary vocab = language_vocabulary();
  vocab.add_text("c1 c2 c3 c4 c5 s1 s2 s3 q1 q2 a1 k1 k2 k3");
  return vocab;
}

std::vector<int> ids_of(const Vocabulary& vocab, const std::string& words) {
  return vocab.encode(words);
}

}  // namespace

TEST_CASE("assemble_language_input emits segments in order with markers") {
  const Vocabulary vocab = assemble_vocab();
  const auto ids = assemble_language_input(vocab, "c1 c2 c3 c4 c5",
                                           {"s1 s2", "s3"}, "q1 q2", "a1",
                                           {"k1 k2", "k3"}, 512);
  std::vector<int> expected = {kMarkerCaptions};
  for (int id : ids_of(vocab, "c1 c2 c3 c4 c5")) expected.push_back(id);
  expected.push_back(kMarkerSubtitles);
  for (int id : ids_of(vocab, "s1 s2 s3")) expected.push_back(id);
  expected.push_back(kMarkerQuestion);
  for (int id : ids_of(vocab, "q1 q2")) expected.push_back(id);
  expected.push_back(kMarkerCandidate);
  for (int id : ids_of(vocab, "a1")) expected.push_back(id);
  expected.push_back(kMarkerKnowledge);
  for (int id : ids_of(vocab, "k1 k2 k3")) expected.push_back(id);
  CHECK(ids == expected);
  CHECK(ids.size() == 19);
}

TEST_CASE("assemble_language_input trims by the documented priority") {
  const Vocabulary vocab = assemble_vocab();
  const std::string caps = "c1 c2 c3 c4 c5";
  const std::vector<std::string> subs = {"s1 s2", "s3"};
  const std::vector<std::string> know = {"k1 k2", "k3"};

  // Budget 16: captions lose their three oldest tokens.
  auto ids = assemble_language_input(vocab, caps, subs, "q1 q2", "a1", know, 16);
  CHECK(ids.size() == 16);
  std::vector<int> head = {kMarkerCaptions};
  for (int id : ids_of(vocab, "c4 c5")) head.push_back(id);
  CHECK(std::vector<int>(ids.begin(), ids.begin() + 3) == head);

  // Budget 13: captions vanish entirely, subtitles intact.
  ids = assemble_language_input(vocab, caps, subs, "q1 q2", "a1", know, 13);
  CHECK(ids.size() == 13);
  CHECK(ids[0] == kMarkerSubtitles);

  // Budget 8: knowledge keeps its top-ranked front.
  ids = assemble_language_input(vocab, caps, subs, "q1 q2", "a1", know, 8);
  std::vector<int> expected = {kMarkerQuestion};
  for (int id : ids_of(vocab, "q1 q2")) expected.push_back(id);
  expected.push_back(kMarkerCandidate);
  for (int id : ids_of(vocab, "a1")) expected.push_back(id);
  expected.push_back(kMarkerKnowledge);
  for (int id : ids_of(vocab, "k1 k2")) expected.push_back(id);
  CHECK(ids == expected);

  // Budget 5: exactly question and candidate.
  ids = assemble_language_input(vocab, caps, subs, "q1 q2", "a1", know, 5);
  expected = {kMarkerQuestion};
  for (int id : ids_of(vocab, "q1 q2")) expected.push_back(id);
  expected.push_back(kMarkerCandidate);
  for (int id : ids_of(vocab, "a1")) expected.push_back(id);
  CHECK(ids == expected);

  // Budget 4: question and candidate alone no longer fit.
  CHECK_THROWS_AS(
      assemble_language_input(vocab, caps, subs, "q1 q2", "a1", know, 4),
      TokenBudgetError);
}

TEST_CASE("assemble_language_input omits absent segments entirely") {
  const Vocabulary vocab = assemble_vocab();
  const auto ids =
      assemble_language_input(vocab, "", {}, "q1 q2", "a1", {}, 512);
  for (int id : ids) {
    CHECK(id != kMarkerCaptions);
    CHECK(id != kMarkerSubtitles);
    CHECK(id != kMarkerKnowledge);
  }
  CHECK(ids.front() == kMarkerQuestion);
}

TEST_CASE("assemble_language_input rejects empty question or candidate") {
  const Vocabulary vocab = assemble_vocab();
  CHECK_THROWS_AS(assemble_language_input(vocab, "", {}, "", "a1", {}, 512),
                  std::invalid_argument);
  CHECK_THROWS_AS(assemble_language_input(vocab, "", {}, "q1", "  ", {}, 512),
                  std::invalid_argument);
}

TEST_CASE("segment order is observable through the markers") {
  const Vocabulary vocab = assemble_vocab();
  const auto a =
      assemble_language_input(vocab, "c1 c2", {"s1"}, "q1", "a1", {}, 512);
  const auto b =
      assemble_language_input(vocab, "s1", {"c1 c2"}, "q1", "a1", {}, 512);
  CHECK(a != b);
}

TEST_CASE("truncation never drops question or candidate tokens") {
  const Vocabulary vocab = assemble_vocab();
  Rng rng(7);
  for (int round = 0; round < 50; ++round) {
    std::string caps;
    for (std::uint64_t i = 0; i < rng.below(30); ++i) caps += "c1 ";
    std::vector<std::string> subs;
    for (std::uint64_t i = 0; i < rng.below(5); ++i) subs.push_back("s1 s2");
    std::vector<std::string> know;
    for (std::uint64_t i = 0; i < rng.below(8); ++i) know.push_back("k1 k2 k3");
    const int l_max = 5 + static_cast<int>(rng.below(30));
    const auto ids = assemble_language_input(vocab, caps, subs, "q1 q2", "a1",
                                             know, l_max);
    CHECK(static_cast<int>(ids.size()) <= l_max);
    // Question and candidate segments survive verbatim.
    const auto q_pos = std::find(ids.begin(), ids.end(), kMarkerQuestion);
    REQUIRE(q_pos != ids.end());
    CHECK(*(q_pos + 1) == vocab.id_of("q1"));
    CHECK(*(q_pos + 2) == vocab.id_of("q2"));
    const auto cand_pos = std::find(ids.begin(), ids.end(), kMarkerCandidate);
    REQUIRE(cand_pos != ids.end());
    CHECK(*(cand_pos + 1) == vocab.id_of("a1"));
  }
}

TEST_CASE("encode_language gives the bias-only output for empty segments") {
  Vocabulary vocab = language_vocabulary();
  vocab.add_text("w");
  LanguageEncoder enc = init_language_encoder(vocab, 3, 2, 512, 5);
  enc.b = {0.25, -0.5};
  const auto out = encode_language(enc, {kMarkerQuestion});
  REQUIRE(out.size() == 2);
  CHECK(out[0] == doctest::Approx(std::tanh(0.25)).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(std::tanh(-0.5)).epsilon(1e-12));
}

TEST_CASE("encode_language is deterministic") {
  Vocabulary vocab = language_vocabulary();
  vocab.add_text("alpha beta gamma");
  const LanguageEncoder enc = init_language_encoder(vocab, 8, 4, 512, 9);
  const auto ids = assemble_language_input(vocab, "alpha", {}, "beta", "gamma",
                                           {"alpha beta"}, 512);
  CHECK(encode_language(enc, ids) == encode_language(enc, ids));
}

TEST_CASE("encode_language matches a hand-computed forward pass") {
  Vocabulary vocab = language_vocabulary();
  vocab.add_word("x");  // id 6
  vocab.add_word("y");  // id 7
  vocab.add_word("z");  // id 8

  LanguageEncoder enc;
  enc.vocab = vocab;
  enc.d_emb = 2;
  enc.d_lang = 2;
  enc.l_max = 512;
  enc.emb.assign(static_cast<std::size_t>(vocab.size()) * 2, 0.0);
  auto set_emb = [&enc](int id, double a, double b) {
    enc.emb[static_cast<std::size_t>(id) * 2] = a;
    enc.emb[static_cast<std::size_t>(id) * 2 + 1] = b;
  };
  set_emb(6, 0.5, -1.0);   // x
  set_emb(7, 1.5, 2.0);    // y
  set_emb(8, -0.25, 0.75); // z

  const int feat = enc.feature_dim();
  REQUIRE(feat == 11);
  enc.w.assign(static_cast<std::size_t>(2 * feat), 0.0);
  // Row 0 looks at the question pool, row 1 at candidate pool and the
  // overlap feature.
  enc.w[static_cast<std::size_t>((kMarkerQuestion - 1) * 2)] = 0.3;
  enc.w[static_cast<std::size_t>((kMarkerQuestion - 1) * 2 + 1)] = -0.2;
  enc.w[static_cast<std::size_t>(feat + (kMarkerCandidate - 1) * 2)] = 1.0;
  enc.w[static_cast<std::size_t>(feat + (kMarkerCandidate - 1) * 2 + 1)] = 0.5;
  enc.w[static_cast<std::size_t>(feat + feat - 1)] = 2.0;
  enc.b = {0.1, -0.1};

  // question = {x, y}, candidate = {z}, knowledge = {y}
  const std::vector<int> ids = {kMarkerQuestion, 6, 7, kMarkerCandidate, 8,
                                kMarkerKnowledge, 7};
  const auto out = encode_language(enc, ids);

  const double qx = (0.5 + 1.5) / 2.0;
  const double qy = (-1.0 + 2.0) / 2.0;
  const double dot = -0.25 * 1.5 + 0.75 * 2.0;
  const double expect0 = std::tanh(0.3 * qx - 0.2 * qy + 0.1);
  const double expect1 = std::tanh(1.0 * -0.25 + 0.5 * 0.75 + 2.0 * dot - 0.1);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == doctest::Approx(expect0).epsilon(1e-9));
  CHECK(out[1] == doctest::Approx(expect1).epsilon(1e-9));
}

TEST_CASE("encoder gradients match central finite differences") {
  Vocabulary vocab = language_vocabulary();
  vocab.add_text("alpha beta gamma delta");
  LanguageEncoder enc = init_language_encoder(vocab, 4, 3, 512, 21);
  const auto ids = assemble_language_input(
      vocab, "alpha beta", {"gamma"}, "alpha delta", "beta", {"delta gamma"},
      512);

  // Scalar objective: sum of encoder outputs.
  auto objective = [&](const LanguageEncoder& model) {
    double total = 0.0;
    for (double v : encode_language(model, ids)) total += v;
    return total;
  };

  LanguageGrads grads(enc);
  const auto trace = encode_language_trace(enc, ids);
  const std::vector<double> d_out(static_cast<std::size_t>(enc.d_lang), 1.0);
  encode_language_backward(enc, trace, d_out, grads);

  const double h = 1e-6;
  auto check_block = [&](std::vector<double> LanguageEncoder::* field,
                         const std::vector<double>& grad_block) {
    for (std::size_t i = 0; i < grad_block.size(); ++i) {
      LanguageEncoder plus = enc;
      (plus.*field)[i] += h;
      LanguageEncoder minus = enc;
      (minus.*field)[i] -= h;
      const double fd = (objective(plus) - objective(minus)) / (2 * h);
      CHECK(grad_block[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  };
  check_block(&LanguageEncoder::w, grads.w);
  check_block(&LanguageEncoder::b, grads.b);
  check_block(&LanguageEncoder::emb, grads.emb);
}

TEST_CASE("each role has one output width across a whole corpus") {
  const auto corpus = kvqa::testing::tiny_corpus(5, 2, 6);
  std::size_t image_dim = 0, concept_dim = 0, facial_dim = 0;
  bool first = true;
  for (const auto& [id, clip] : corpus.clips) {
    const auto image = repr_image(clip, 3);
    const auto concepts = repr_concepts(clip, corpus.concept_vocab);
    const auto facial = repr_facial(clip, corpus.character_vocab);
    if (first) {
      image_dim = image.dim();
      concept_dim = concepts.dim();
      facial_dim = facial.dim();
      first = false;
    }
    CHECK(image.dim() == image_dim);
    CHECK(concepts.dim() == concept_dim);
    CHECK(facial.dim() == facial_dim);
  }
  CHECK(image_dim == 18);  // 3 frames x 6 features
}
