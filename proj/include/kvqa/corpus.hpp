#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kvqa {

enum class QuestionType { visual, textual, temporal, knowledge };

const char* to_string(QuestionType type);
std::optional<QuestionType> parse_question_type(std::string_view name);
inline constexpr std::array<QuestionType, 4> kQuestionTypes = {
    QuestionType::visual, QuestionType::textual, QuestionType::temporal,
    QuestionType::knowledge};

// One annotated multi-choice question over a clip.
struct QuestionInstance {
  std::string id;
  std::string episode_id;
  std::string clip_id;
  std::string question;
  std::vector<std::string> candidates;  // exactly 4 when valid
  int gold_index = 0;                   // in {0,1,2,3}
  QuestionType qtype = QuestionType::knowledge;
  std::string knowledge_text;  // may be empty only in ablation corpora

  bool operator==(const QuestionInstance&) const = default;
};

struct FrameRecord {
  std::vector<double> feature_vector;
  std::vector<std::string> concept_labels;
  std::vector<std::string> characters_present;
  std::string caption;

  bool operator==(const FrameRecord&) const = default;
};

struct ClipAssets {
  std::string clip_id;
  std::vector<std::string> subtitles;
  std::vector<FrameRecord> frames;

  bool operator==(const ClipAssets&) const = default;
};

struct Corpus {
  std::vector<QuestionInstance> instances;
  std::map<std::string, ClipAssets> clips;
  std::vector<std::string> character_vocab;  // sorted unique
  std::vector<std::string> concept_vocab;    // sorted unique

  // Recomputes the derived vocabularies from the clips.
  void rebuild_vocabs();
  // Frame feature width, 0 for a corpus without frames.
  int image_feature_dim() const;
  std::vector<std::string> episode_ids() const;  // sorted unique

  bool operator==(const Corpus&) const = default;
};

enum class Split { train, val, test };
const char* to_string(Split split);
std::optional<Split> parse_split(std::string_view name);
inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::val,
                                                 Split::test};

struct SplitAssignment {
  std::map<std::string, Split> by_episode;

  Split of(const std::string& episode_id) const;  // throws on unknown episode
};

struct Violation {
  std::string instance_id;  // or clip_id for clip-level rules
  std::string rule;
  std::string detail;
};

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedRecordError : CorpusError {
  using CorpusError::CorpusError;
};
struct DanglingClipError : CorpusError {
  explicit DanglingClipError(std::vector<std::string> ids);
  std::vector<std::string> clip_ids;
};
struct TooFewEpisodesError : CorpusError {
  using CorpusError::CorpusError;
};

// Reads a bundle directory holding instances.jsonl and clips.jsonl.
// Order-preserving and deterministic; throws MalformedRecordError (with line
// number and field) or DanglingClipError.
Corpus load_corpus(const std::filesystem::path& dir);

// Writes the same bundle layout; load_corpus(save_corpus(c)) == c for any
// corpus that validates cleanly.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// Whole episodes are shuffled with `seed` and partitioned by largest-remainder
// counts, so the result depends only on (episode set, ratios, seed).
SplitAssignment split_by_episode(const Corpus& corpus,
                                 const std::array<double, 3>& ratios,
                                 std::uint64_t seed);

// Empty result iff every invariant holds; violations are data, not errors.
std::vector<Violation> validate_corpus(const Corpus& corpus);

std::vector<const QuestionInstance*> instances_in_split(
    const Corpus& corpus, const SplitAssignment& assignment, Split split);

}  // namespace kvqa
