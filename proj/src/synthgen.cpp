#include "kvqa/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "kvqa/rng.hpp"
#include "kvqa/tokenizer.hpp"

namespace kvqa {

namespace {

// Distinct prefixes keep the word pools disjoint; the syllable suffix encodes
// the index in little-endian base 8, which is injective.
const std::vector<std::string> kSyllables = {"ba", "de", "ki", "lo",
                                             "mu", "na", "po", "ru"};

std::string coded_word(const std::string& prefix, int index) {
  std::string word = prefix;
  int n = index;
  do {
    word += kSyllables[static_cast<std::size_t>(n) % kSyllables.size()];
    n /= static_cast<int>(kSyllables.size());
  } while (n > 0);
  return word;
}

std::string group_word(int g) { return coded_word("gru", g); }
std::string topic_word(int j) { return coded_word("zon", j); }
std::string keyword_word(int j) { return coded_word("vek", j); }
std::string answer_word(int j) { return coded_word("lum", j); }
std::string filler_word(int j) { return coded_word("mar", j); }
std::string concept_word(int j) { return coded_word("obj", j); }
std::string character_word(int j) { return coded_word("per", j); }

std::string padded(int value) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", value);
  return buf;
}

void check_spec(const SynthSpec& spec) {
  if (spec.n_episodes < 1 || spec.clips_per_episode < 1 ||
      spec.questions_per_clip < 1 || spec.n_knowledge < 1 ||
      spec.filler_vocab < 1 || spec.concept_vocab < 1 ||
      spec.character_vocab < 1 || spec.d_img < 1 || spec.frames_per_clip < 1) {
    throw std::invalid_argument("synth spec counts must be >= 1");
  }
  if (spec.determinism < 0.0 || spec.determinism > 1.0) {
    throw std::invalid_argument("determinism must lie in [0,1]");
  }
  if (spec.group_size < 1) {
    throw std::invalid_argument("group_size must be >= 1");
  }
  if (spec.n_knowledge < spec.group_size + 4) {
    // Four distinct templates outside the gold's group must exist for
    // candidate drawing.
    throw std::invalid_argument("n_knowledge must be >= group_size + 4");
  }
}

// k distinct templates in [0, n) whose group differs from excluded_group.
std::vector<int> draw_distinct_outside_group(Rng& rng, int n, int k,
                                             int group_size,
                                             int excluded_group) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < k) {
    const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (v / group_size == excluded_group) continue;
    if (std::find(out.begin(), out.end(), v) != out.end()) continue;
    out.push_back(v);
  }
  return out;
}

}  // namespace

const LedgerEntry* GroundTruthLedger::find(const std::string& instance_id) const {
  auto it = by_instance.find(instance_id);
  if (it == by_instance.end()) return nullptr;
  return &entries[it->second];
}

SynthResult generate(const SynthSpec& spec) {
  check_spec(spec);

  SynthResult result;
  auto& corpus = result.corpus;
  auto& ledger = result.ledger;

  for (int j = 0; j < spec.n_knowledge; ++j) {
    TemplateInfo info;
    info.template_id = j;
    info.group_id = j / spec.group_size;
    info.group = group_word(info.group_id);
    info.topic = topic_word(j);
    info.keyword = keyword_word(j);
    info.answer_token = answer_word(j);
    info.knowledge_text = "group " + info.group + " topic " + info.topic +
                          " hides word " + info.keyword;
    ledger.templates.push_back(std::move(info));
  }

  int global_question = 0;
  for (int ep = 0; ep < spec.n_episodes; ++ep) {
    Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(ep));
    const std::string episode_id = "ep" + padded(ep);

    for (int c = 0; c < spec.clips_per_episode; ++c) {
      const std::string clip_id = episode_id + "_c" + padded(c);
      ClipAssets clip;
      clip.clip_id = clip_id;

      const int n_subs = 2 + static_cast<int>(rng.below(2));
      for (int s = 0; s < n_subs; ++s) {
        std::string line =
            character_word(static_cast<int>(rng.below(
                static_cast<std::uint64_t>(spec.character_vocab)))) +
            ":";
        for (int w = 0; w < 4; ++w) {
          line += " " + filler_word(static_cast<int>(rng.below(
                            static_cast<std::uint64_t>(spec.filler_vocab))));
        }
        clip.subtitles.push_back(std::move(line));
      }

      for (int f = 0; f < spec.frames_per_clip; ++f) {
        FrameRecord frame;
        frame.feature_vector.reserve(static_cast<std::size_t>(spec.d_img));
        for (int d = 0; d < spec.d_img; ++d) {
          frame.feature_vector.push_back(rng.uniform(-1.0, 1.0));
        }
        const int n_concepts = 1 + static_cast<int>(rng.below(3));
        for (int k = 0; k < n_concepts; ++k) {
          frame.concept_labels.push_back(concept_word(static_cast<int>(
              rng.below(static_cast<std::uint64_t>(spec.concept_vocab)))));
        }
        const int n_chars = static_cast<int>(rng.below(3));
        for (int k = 0; k < n_chars; ++k) {
          frame.characters_present.push_back(character_word(static_cast<int>(
              rng.below(static_cast<std::uint64_t>(spec.character_vocab)))));
        }
        for (int w = 0; w < 4; ++w) {
          if (w > 0) frame.caption += " ";
          frame.caption += filler_word(static_cast<int>(
              rng.below(static_cast<std::uint64_t>(spec.filler_vocab))));
        }
        clip.frames.push_back(std::move(frame));
      }
      corpus.clips.emplace(clip_id, std::move(clip));

      for (int q = 0; q < spec.questions_per_clip; ++q) {
        const int template_id = global_question % spec.n_knowledge;
        ++global_question;
        const TemplateInfo& tmpl =
            ledger.templates[static_cast<std::size_t>(template_id)];

        QuestionInstance inst;
        inst.id = clip_id + "_q" + padded(q);
        inst.episode_id = episode_id;
        inst.clip_id = clip_id;
        inst.qtype = kQuestionTypes[static_cast<std::size_t>(
            rng.below(kQuestionTypes.size()))];
        inst.knowledge_text = tmpl.knowledge_text;
        inst.question =
            "in group " + tmpl.group + " what is the hidden word for " +
            tmpl.topic + " " +
            filler_word(static_cast<int>(
                rng.below(static_cast<std::uint64_t>(spec.filler_vocab))));
        inst.gold_index = static_cast<int>(rng.below(4));

        const bool decidable = rng.unit() < spec.determinism;
        std::vector<int> candidate_templates;
        if (decidable) {
          // Gold carries the answer token paired with the knowledge keyword;
          // the three wrong answers carry answer tokens from other groups so
          // the candidate set stays symmetric.
          candidate_templates = draw_distinct_outside_group(
              rng, spec.n_knowledge, 3, spec.group_size, tmpl.group_id);
          candidate_templates.insert(
              candidate_templates.begin() + inst.gold_index, template_id);
        } else {
          candidate_templates = draw_distinct_outside_group(
              rng, spec.n_knowledge, 4, spec.group_size, tmpl.group_id);
        }
        for (int t : candidate_templates) {
          inst.candidates.push_back(answer_word(t));
        }

        ledger.by_instance.emplace(inst.id, ledger.entries.size());
        ledger.entries.push_back(
            {inst.id, template_id, decidable, tmpl.keyword, tmpl.answer_token});
        corpus.instances.push_back(std::move(inst));
      }
    }
  }

  corpus.rebuild_vocabs();
  return result;
}

int oracle_answer(const QuestionInstance& instance,
                  const GroundTruthLedger& ledger) {
  const LedgerEntry* entry = ledger.find(instance.id);
  if (entry == nullptr) {
    throw OracleError("no ledger entry for instance " + instance.id);
  }
  if (!entry->decidable) {
    throw OracleError("instance " + instance.id +
                      " is not knowledge-decidable");
  }
  for (std::size_t c = 0; c < instance.candidates.size(); ++c) {
    const auto tokens = tokenize(instance.candidates[c]);
    if (std::find(tokens.begin(), tokens.end(), entry->answer_token) !=
        tokens.end()) {
      return static_cast<int>(c);
    }
  }
  throw OracleError("answer token " + entry->answer_token +
                    " missing from all candidates of " + instance.id);
}

void save_ledger(const GroundTruthLedger& ledger,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& entry : ledger.entries) {
    nlohmann::ordered_json record;
    record["instance_id"] = entry.instance_id;
    record["template_id"] = entry.template_id;
    record["decidable"] = entry.decidable;
    record["keyword"] = entry.keyword;
    record["answer_token"] = entry.answer_token;
    out << record.dump() << '\n';
  }
}

}  // namespace kvqa
