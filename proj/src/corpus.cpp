#include "kvqa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "kvqa/rng.hpp"
#include "kvqa/tokenizer.hpp"

namespace kvqa {

namespace {

using Json = nlohmann::ordered_json;

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void malformed(const std::string& file, std::size_t line,
                            const std::string& field, const std::string& why) {
  std::ostringstream msg;
  msg << file << ":" << line << ": malformed record, field \"" << field
      << "\": " << why;
  throw MalformedRecordError(msg.str());
}

const Json& require_field(const Json& record, const std::string& file,
                          std::size_t line, const std::string& field) {
  auto it = record.find(field);
  if (it == record.end()) malformed(file, line, field, "missing");
  return *it;
}

void require_exact_fields(const Json& record, const std::string& file,
                          std::size_t line,
                          const std::vector<std::string>& fields) {
  for (auto it = record.begin(); it != record.end(); ++it) {
    if (std::find(fields.begin(), fields.end(), it.key()) == fields.end()) {
      malformed(file, line, it.key(), "unexpected field");
    }
  }
}

std::string string_field(const Json& record, const std::string& file,
                         std::size_t line, const std::string& field) {
  const Json& value = require_field(record, file, line, field);
  if (!value.is_string()) malformed(file, line, field, "expected string");
  return value.get<std::string>();
}

// Streams one JSON object per non-empty line, reporting 1-based line numbers.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) {
    throw CorpusError("cannot open " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  const std::string file = path.filename().string();
  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      malformed(file, line_no, "<record>", e.what());
    }
    if (!record.is_object()) malformed(file, line_no, "<record>", "expected object");
    fn(record, file, line_no);
  }
}

QuestionInstance parse_instance(const Json& record, const std::string& file,
                                std::size_t line) {
  require_exact_fields(record, file, line,
                       {"id", "episode_id", "clip_id", "question", "candidates",
                        "gold_index", "qtype", "knowledge_text"});
  QuestionInstance inst;
  inst.id = string_field(record, file, line, "id");
  if (inst.id.empty()) malformed(file, line, "id", "empty");
  inst.episode_id = string_field(record, file, line, "episode_id");
  if (inst.episode_id.empty()) malformed(file, line, "episode_id", "empty");
  inst.clip_id = string_field(record, file, line, "clip_id");
  if (inst.clip_id.empty()) malformed(file, line, "clip_id", "empty");
  inst.question = string_field(record, file, line, "question");

  const Json& cands = require_field(record, file, line, "candidates");
  if (!cands.is_array() || cands.size() != 4) {
    malformed(file, line, "candidates", "expected array of exactly 4 answers");
  }
  for (const auto& c : cands) {
    if (!c.is_string()) malformed(file, line, "candidates", "expected string entries");
    std::string text = c.get<std::string>();
    if (trimmed(text).empty()) {
      malformed(file, line, "candidates", "empty answer text");
    }
    inst.candidates.push_back(std::move(text));
  }

  const Json& gold = require_field(record, file, line, "gold_index");
  if (!gold.is_number_integer()) malformed(file, line, "gold_index", "expected integer");
  inst.gold_index = gold.get<int>();
  if (inst.gold_index < 0 || inst.gold_index > 3) {
    malformed(file, line, "gold_index", "out of range {0,1,2,3}");
  }

  const std::string qtype = string_field(record, file, line, "qtype");
  auto parsed = parse_question_type(qtype);
  if (!parsed) malformed(file, line, "qtype", "unknown type \"" + qtype + "\"");
  inst.qtype = *parsed;

  inst.knowledge_text = string_field(record, file, line, "knowledge_text");
  return inst;
}

ClipAssets parse_clip(const Json& record, const std::string& file,
                      std::size_t line) {
  require_exact_fields(record, file, line, {"clip_id", "subtitles", "frames"});
  ClipAssets clip;
  clip.clip_id = string_field(record, file, line, "clip_id");
  if (clip.clip_id.empty()) malformed(file, line, "clip_id", "empty");

  const Json& subs = require_field(record, file, line, "subtitles");
  if (!subs.is_array()) malformed(file, line, "subtitles", "expected array");
  for (const auto& s : subs) {
    if (!s.is_string()) malformed(file, line, "subtitles", "expected string entries");
    clip.subtitles.push_back(s.get<std::string>());
  }

  const Json& frames = require_field(record, file, line, "frames");
  if (!frames.is_array()) malformed(file, line, "frames", "expected array");
  for (const auto& f : frames) {
    if (!f.is_object()) malformed(file, line, "frames", "expected object entries");
    require_exact_fields(f, file, line,
                         {"feature_vector", "concept_labels",
                          "characters_present", "caption"});
    FrameRecord frame;
    const Json& feat = require_field(f, file, line, "feature_vector");
    if (!feat.is_array()) malformed(file, line, "feature_vector", "expected array");
    for (const auto& x : feat) {
      if (!x.is_number()) malformed(file, line, "feature_vector", "expected numbers");
      frame.feature_vector.push_back(x.get<double>());
    }
    const Json& labels = require_field(f, file, line, "concept_labels");
    if (!labels.is_array()) malformed(file, line, "concept_labels", "expected array");
    for (const auto& x : labels) {
      if (!x.is_string()) malformed(file, line, "concept_labels", "expected strings");
      frame.concept_labels.push_back(x.get<std::string>());
    }
    const Json& chars = require_field(f, file, line, "characters_present");
    if (!chars.is_array()) malformed(file, line, "characters_present", "expected array");
    for (const auto& x : chars) {
      if (!x.is_string()) malformed(file, line, "characters_present", "expected strings");
      frame.characters_present.push_back(x.get<std::string>());
    }
    frame.caption = string_field(f, file, line, "caption");
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

Json instance_to_json(const QuestionInstance& inst) {
  Json record;
  record["id"] = inst.id;
  record["episode_id"] = inst.episode_id;
  record["clip_id"] = inst.clip_id;
  record["question"] = inst.question;
  record["candidates"] = inst.candidates;
  record["gold_index"] = inst.gold_index;
  record["qtype"] = to_string(inst.qtype);
  record["knowledge_text"] = inst.knowledge_text;
  return record;
}

Json clip_to_json(const ClipAssets& clip) {
  Json record;
  record["clip_id"] = clip.clip_id;
  record["subtitles"] = clip.subtitles;
  Json frames = Json::array();
  for (const auto& frame : clip.frames) {
    Json f;
    f["feature_vector"] = frame.feature_vector;
    f["concept_labels"] = frame.concept_labels;
    f["characters_present"] = frame.characters_present;
    f["caption"] = frame.caption;
    frames.push_back(std::move(f));
  }
  record["frames"] = std::move(frames);
  return record;
}

}  // namespace

const char* to_string(QuestionType type) {
  switch (type) {
    case QuestionType::visual: return "visual";
    case QuestionType::textual: return "textual";
    case QuestionType::temporal: return "temporal";
    case QuestionType::knowledge: return "knowledge";
  }
  return "unknown";
}

std::optional<QuestionType> parse_question_type(std::string_view name) {
  for (QuestionType t : kQuestionTypes) {
    if (name == to_string(t)) return t;
  }
  return std::nullopt;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

std::optional<Split> parse_split(std::string_view name) {
  for (Split s : kSplits) {
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

DanglingClipError::DanglingClipError(std::vector<std::string> ids)
    : CorpusError([&ids] {
        std::ostringstream msg;
        msg << "instances reference unknown clip_ids:";
        for (const auto& id : ids) msg << " " << id;
        return msg.str();
      }()),
      clip_ids(std::move(ids)) {}

void Corpus::rebuild_vocabs() {
  std::set<std::string> characters;
  std::set<std::string> concepts;
  for (const auto& [id, clip] : clips) {
    for (const auto& frame : clip.frames) {
      characters.insert(frame.characters_present.begin(),
                        frame.characters_present.end());
      concepts.insert(frame.concept_labels.begin(), frame.concept_labels.end());
    }
  }
  character_vocab.assign(characters.begin(), characters.end());
  concept_vocab.assign(concepts.begin(), concepts.end());
}

int Corpus::image_feature_dim() const {
  for (const auto& [id, clip] : clips) {
    if (!clip.frames.empty()) {
      return static_cast<int>(clip.frames.front().feature_vector.size());
    }
  }
  return 0;
}

std::vector<std::string> Corpus::episode_ids() const {
  std::set<std::string> ids;
  for (const auto& inst : instances) ids.insert(inst.episode_id);
  return {ids.begin(), ids.end()};
}

Split SplitAssignment::of(const std::string& episode_id) const {
  auto it = by_episode.find(episode_id);
  if (it == by_episode.end()) {
    throw CorpusError("episode not covered by split assignment: " + episode_id);
  }
  return it->second;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  std::unordered_set<std::string> seen_ids;
  for_each_record(dir / "instances.jsonl",
                  [&](const Json& record, const std::string& file,
                      std::size_t line) {
                    QuestionInstance inst = parse_instance(record, file, line);
                    if (!seen_ids.insert(inst.id).second) {
                      malformed(file, line, "id",
                                "duplicate instance id \"" + inst.id + "\"");
                    }
                    corpus.instances.push_back(std::move(inst));
                  });
  for_each_record(dir / "clips.jsonl",
                  [&](const Json& record, const std::string& file,
                      std::size_t line) {
                    ClipAssets clip = parse_clip(record, file, line);
                    if (clip.frames.empty()) {
                      malformed(file, line, "frames", "clip has no frames");
                    }
                    if (corpus.clips.contains(clip.clip_id)) {
                      malformed(file, line, "clip_id",
                                "duplicate clip id \"" + clip.clip_id + "\"");
                    }
                    corpus.clips.emplace(clip.clip_id, std::move(clip));
                  });

  std::vector<std::string> dangling;
  std::unordered_set<std::string> reported;
  for (const auto& inst : corpus.instances) {
    if (!corpus.clips.contains(inst.clip_id) && reported.insert(inst.clip_id).second) {
      dangling.push_back(inst.clip_id);
    }
  }
  if (!dangling.empty()) throw DanglingClipError(std::move(dangling));

  // Frame feature dims must agree corpus-wide.
  int d_img = -1;
  for (const auto& [id, clip] : corpus.clips) {
    for (const auto& frame : clip.frames) {
      const int d = static_cast<int>(frame.feature_vector.size());
      if (d == 0) {
        throw MalformedRecordError("clips.jsonl: clip " + id +
                                   ": empty feature_vector");
      }
      if (d_img == -1) d_img = d;
      if (d != d_img) {
        throw MalformedRecordError("clips.jsonl: clip " + id +
                                   ": feature_vector dimension " +
                                   std::to_string(d) + " differs from " +
                                   std::to_string(d_img));
      }
    }
  }

  corpus.rebuild_vocabs();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "instances.jsonl", std::ios::binary);
    if (!out) throw CorpusError("cannot write " + (dir / "instances.jsonl").string());
    for (const auto& inst : corpus.instances) {
      out << instance_to_json(inst).dump() << '\n';
    }
  }
  {
    std::ofstream out(dir / "clips.jsonl", std::ios::binary);
    if (!out) throw CorpusError("cannot write " + (dir / "clips.jsonl").string());
    for (const auto& [id, clip] : corpus.clips) {
      out << clip_to_json(clip).dump() << '\n';
    }
  }
}

SplitAssignment split_by_episode(const Corpus& corpus,
                                 const std::array<double, 3>& ratios,
                                 std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }

  std::vector<std::string> episodes = corpus.episode_ids();
  if (episodes.size() < 3) {
    throw TooFewEpisodesError("need at least 3 distinct episodes, found " +
                              std::to_string(episodes.size()));
  }

  // Largest-remainder rounding keeps every split within one episode of its
  // exact share.
  const std::size_t n = episodes.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double target = ratios[static_cast<std::size_t>(s)] * static_cast<double>(n);
    counts[static_cast<std::size_t>(s)] = static_cast<std::size_t>(std::floor(target));
    remainders[static_cast<std::size_t>(s)] = target - std::floor(target);
    assigned += counts[static_cast<std::size_t>(s)];
  }
  while (assigned < n) {
    int best = 0;
    for (int s = 1; s < 3; ++s) {
      if (remainders[static_cast<std::size_t>(s)] >
          remainders[static_cast<std::size_t>(best)]) {
        best = s;
      }
    }
    counts[static_cast<std::size_t>(best)] += 1;
    remainders[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }

  // episodes is sorted before shuffling, so the assignment is a function of
  // the episode set rather than corpus order.
  Rng rng(seed);
  rng.shuffle(episodes);

  SplitAssignment assignment;
  std::size_t cursor = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < counts[static_cast<std::size_t>(s)]; ++i) {
      assignment.by_episode.emplace(episodes[cursor++], kSplits[static_cast<std::size_t>(s)]);
    }
  }
  return assignment;
}

std::vector<Violation> validate_corpus(const Corpus& corpus) {
  std::vector<Violation> violations;
  auto add = [&violations](std::string id, std::string rule, std::string detail) {
    violations.push_back({std::move(id), std::move(rule), std::move(detail)});
  };

  std::unordered_set<std::string> seen_ids;
  for (const auto& inst : corpus.instances) {
    if (!seen_ids.insert(inst.id).second) {
      add(inst.id, "unique_id", "duplicate instance id");
    }
    if (inst.candidates.size() != 4) {
      add(inst.id, "candidates",
          "expected 4 candidates, found " + std::to_string(inst.candidates.size()));
    } else {
      for (std::size_t i = 0; i < inst.candidates.size(); ++i) {
        if (trimmed(inst.candidates[i]).empty()) {
          add(inst.id, "candidates",
              "candidate " + std::to_string(i) + " empty after trimming");
        }
      }
    }
    if (inst.gold_index < 0 || inst.gold_index > 3) {
      add(inst.id, "gold_index",
          "value " + std::to_string(inst.gold_index) + " outside {0,1,2,3}");
    }
    if (!corpus.clips.contains(inst.clip_id)) {
      add(inst.id, "clip_reference", "unknown clip_id " + inst.clip_id);
    }
  }

  int d_img = -1;
  std::string d_img_clip;
  for (const auto& [id, clip] : corpus.clips) {
    if (clip.frames.empty()) {
      add(id, "frames", "clip has no frames");
      continue;
    }
    for (const auto& frame : clip.frames) {
      const int d = static_cast<int>(frame.feature_vector.size());
      if (d == 0) {
        add(id, "feature_dim", "empty feature_vector");
        continue;
      }
      if (d_img == -1) {
        d_img = d;
        d_img_clip = id;
      } else if (d != d_img) {
        add(id, "feature_dim",
            "dimension " + std::to_string(d) + " differs from " +
                std::to_string(d_img) + " (clip " + d_img_clip + ")");
      }
    }
  }
  return violations;
}

std::vector<const QuestionInstance*> instances_in_split(
    const Corpus& corpus, const SplitAssignment& assignment, Split split) {
  std::vector<const QuestionInstance*> out;
  for (const auto& inst : corpus.instances) {
    if (assignment.of(inst.episode_id) == split) out.push_back(&inst);
  }
  return out;
}

}  // namespace kvqa
