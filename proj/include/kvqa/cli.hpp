#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kvqa {

// Flat configuration shared by every subcommand. Config files hold the same
// keys as the command-line flags (one key=value per line); flags override
// file values. Run manifests are written in this format, so a finished run
// can be replayed with --config <manifest>.
struct RunConfig {
  std::string command;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;  // mandatory for generate/train commands
  std::string ratios;                 // "train,val,test", must sum to 1
  std::uint64_t split_seed = 0;

  int gen_episodes = 10;
  int gen_clips_per_episode = 3;
  int gen_questions_per_clip = 4;
  int gen_knowledge = 20;
  int gen_group_size = 5;
  double gen_determinism = 1.0;
  int gen_filler_vocab = 50;
  int gen_concept_vocab = 12;
  int gen_character_vocab = 8;
  int gen_d_img = 8;
  int gen_frames_per_clip = 3;

  int scorer_epochs = 20;
  int scorer_batch = 16;
  double scorer_lr = 0.001;
  double scorer_momentum = 0.9;
  int scorer_negatives = 4;
  int scorer_d_emb = 64;

  int reasoner_epochs = 20;
  int reasoner_batch = 16;
  double reasoner_lr = 0.001;
  double reasoner_momentum = 0.9;
  int reasoner_d_emb = 64;
  int reasoner_d_lang = 64;
  int reasoner_l_max = 512;
  int reasoner_n_frames = 4;
  std::string reasoner_visual = "image";

  int top_k = 5;
  bool gold_knowledge = false;
  bool no_knowledge = false;
  std::string scorer_path;
  std::string reasoner_path;
  std::string split = "test";
  std::string question_id;
  std::string method_name;
  std::string compare_with;
};

// Parses "<command> [--key value ...]"; a --config file is applied before the
// remaining flags. Throws std::runtime_error on unknown keys or bad values.
RunConfig parse_args(const std::vector<std::string>& args);

// Executes one command; throws on failure. Outputs land under cfg.out and a
// manifest (config plus metric summary) is written next to them.
void run_command(const RunConfig& cfg);

// Full entry point: parse, run, report errors on stderr, return exit status.
int cli_main(int argc, char** argv);

}  // namespace kvqa
