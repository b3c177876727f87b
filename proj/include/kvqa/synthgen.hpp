#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kvqa/corpus.hpp"

namespace kvqa {

// Controls for the seeded synthetic corpus. `determinism` is the probability
// that a question is decidable from its knowledge sentence: the sentence names
// a keyword whose paired answer token (the pairing exists only inside the
// generator) appears in exactly the gold candidate. Keywords never occur
// outside knowledge sentences, and every candidate carries some template's
// answer token, so the candidate set alone never identifies the answer.
//
// Knowledge templates come in topic groups of `group_size`; the question and
// the knowledge sentence both name the group and the topic, and the wrong
// candidates always come from other groups.
struct SynthSpec {
  int n_episodes = 10;
  int clips_per_episode = 3;
  int questions_per_clip = 4;
  int n_knowledge = 20;
  int group_size = 5;
  double determinism = 1.0;
  int filler_vocab = 50;
  int concept_vocab = 12;
  int character_vocab = 8;
  int d_img = 8;
  int frames_per_clip = 3;
  std::uint64_t seed = 0;
};

struct TemplateInfo {
  int template_id = 0;      // 0-based
  int group_id = 0;         // template_id / group_size
  std::string group;        // group token, shared with the question
  std::string topic;        // shared by the question and the knowledge sentence
  std::string keyword;      // appears only in the knowledge sentence
  std::string answer_token; // keyword's paired token; appears in candidates only
  std::string knowledge_text;
};

struct LedgerEntry {
  std::string instance_id;
  int template_id = 0;
  bool decidable = false;
  std::string keyword;
  std::string answer_token;
};

struct GroundTruthLedger {
  std::vector<TemplateInfo> templates;
  std::vector<LedgerEntry> entries;
  std::unordered_map<std::string, std::size_t> by_instance;

  const LedgerEntry* find(const std::string& instance_id) const;
};

struct SynthResult {
  Corpus corpus;
  GroundTruthLedger ledger;
};

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully reproducible from spec.seed; the corpus passes validate_corpus.
SynthResult generate(const SynthSpec& spec);

// Applies the generator's rule: the gold candidate is the one containing the
// answer token paired with the instance's knowledge keyword. Throws
// OracleError for unknown or non-decidable instances.
int oracle_answer(const QuestionInstance& instance,
                  const GroundTruthLedger& ledger);

void save_ledger(const GroundTruthLedger& ledger,
                 const std::filesystem::path& path);

}  // namespace kvqa
