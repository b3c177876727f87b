#include "kvqa/cli.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "kvqa/checkpoint.hpp"
#include "kvqa/corpus.hpp"
#include "kvqa/evaluation.hpp"
#include "kvqa/knowledge_base.hpp"
#include "kvqa/reasoner.hpp"
#include "kvqa/retrieval.hpp"
#include "kvqa/synthgen.hpp"

namespace kvqa {

namespace {

namespace fs = std::filesystem;

struct OptionBinding {
  std::string key;
  enum class Kind { text, integer, real, seed, boolean } kind;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw std::runtime_error("invalid integer for --" + key + ": " + value);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw std::runtime_error("invalid seed for --" + key + ": " + value);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw std::runtime_error("invalid number for --" + key + ": " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::runtime_error("invalid boolean for --" + key + ": " + value);
}

std::vector<OptionBinding> option_bindings() {
  std::vector<OptionBinding> opts;
  auto text = [&opts](const std::string& key, std::string RunConfig::* field) {
    opts.push_back({key, OptionBinding::Kind::text,
                    [field](RunConfig& c, const std::string& v) { c.*field = v; },
                    [field](const RunConfig& c) { return c.*field; }});
  };
  auto integer = [&opts](const std::string& key, int RunConfig::* field) {
    opts.push_back({key, OptionBinding::Kind::integer,
                    [field, key](RunConfig& c, const std::string& v) {
                      c.*field = parse_int(key, v);
                    },
                    [field](const RunConfig& c) { return std::to_string(c.*field); }});
  };
  auto real = [&opts](const std::string& key, double RunConfig::* field) {
    opts.push_back({key, OptionBinding::Kind::real,
                    [field, key](RunConfig& c, const std::string& v) {
                      c.*field = parse_real(key, v);
                    },
                    [field](const RunConfig& c) { return format_real(c.*field); }});
  };
  auto boolean = [&opts](const std::string& key, bool RunConfig::* field) {
    opts.push_back({key, OptionBinding::Kind::boolean,
                    [field, key](RunConfig& c, const std::string& v) {
                      c.*field = parse_bool(key, v);
                    },
                    [field](const RunConfig& c) {
                      return c.*field ? "true" : "false";
                    }});
  };

  text("data", &RunConfig::data);
  text("out", &RunConfig::out);
  opts.push_back({"seed", OptionBinding::Kind::seed,
                  [](RunConfig& c, const std::string& v) {
                    c.seed = parse_u64("seed", v);
                  },
                  [](const RunConfig& c) {
                    return c.seed ? std::to_string(*c.seed) : std::string();
                  }});
  text("ratios", &RunConfig::ratios);
  opts.push_back({"split-seed", OptionBinding::Kind::seed,
                  [](RunConfig& c, const std::string& v) {
                    c.split_seed = parse_u64("split-seed", v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.split_seed); }});

  integer("gen-episodes", &RunConfig::gen_episodes);
  integer("gen-clips-per-episode", &RunConfig::gen_clips_per_episode);
  integer("gen-questions-per-clip", &RunConfig::gen_questions_per_clip);
  integer("gen-knowledge", &RunConfig::gen_knowledge);
  integer("gen-group-size", &RunConfig::gen_group_size);
  real("gen-determinism", &RunConfig::gen_determinism);
  integer("gen-filler-vocab", &RunConfig::gen_filler_vocab);
  integer("gen-concept-vocab", &RunConfig::gen_concept_vocab);
  integer("gen-character-vocab", &RunConfig::gen_character_vocab);
  integer("gen-d-img", &RunConfig::gen_d_img);
  integer("gen-frames-per-clip", &RunConfig::gen_frames_per_clip);

  integer("scorer-epochs", &RunConfig::scorer_epochs);
  integer("scorer-batch", &RunConfig::scorer_batch);
  real("scorer-lr", &RunConfig::scorer_lr);
  real("scorer-momentum", &RunConfig::scorer_momentum);
  integer("scorer-negatives", &RunConfig::scorer_negatives);
  integer("scorer-d-emb", &RunConfig::scorer_d_emb);

  integer("reasoner-epochs", &RunConfig::reasoner_epochs);
  integer("reasoner-batch", &RunConfig::reasoner_batch);
  real("reasoner-lr", &RunConfig::reasoner_lr);
  real("reasoner-momentum", &RunConfig::reasoner_momentum);
  integer("reasoner-d-emb", &RunConfig::reasoner_d_emb);
  integer("reasoner-d-lang", &RunConfig::reasoner_d_lang);
  integer("reasoner-l-max", &RunConfig::reasoner_l_max);
  integer("reasoner-n-frames", &RunConfig::reasoner_n_frames);
  text("reasoner-visual", &RunConfig::reasoner_visual);

  integer("top-k", &RunConfig::top_k);
  boolean("gold-knowledge", &RunConfig::gold_knowledge);
  boolean("no-knowledge", &RunConfig::no_knowledge);
  text("scorer", &RunConfig::scorer_path);
  text("reasoner", &RunConfig::reasoner_path);
  text("split", &RunConfig::split);
  text("question-id", &RunConfig::question_id);
  text("method-name", &RunConfig::method_name);
  text("compare-with", &RunConfig::compare_with);
  return opts;
}

const OptionBinding& binding_for(const std::vector<OptionBinding>& opts,
                                 const std::string& key) {
  for (const auto& opt : opts) {
    if (opt.key == key) return opt;
  }
  throw std::runtime_error("unknown option --" + key);
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::map<std::string, std::string> values;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    const auto eq = line.find('=', first);
    if (eq == std::string::npos) {
      throw std::runtime_error("config line without '=': " + line);
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    values[strip(line.substr(first, eq - first))] = strip(line.substr(eq + 1));
  }
  return values;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

std::array<double, 3> parse_ratios(const std::string& text) {
  require(!text.empty(), "--ratios is required (e.g. 0.7,0.15,0.15)");
  std::array<double, 3> ratios{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    require(i < 3, "--ratios must hold exactly three fractions");
    ratios[i++] = parse_real("ratios", part);
  }
  require(i == 3, "--ratios must hold exactly three fractions");
  return ratios;
}

void write_manifest(const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& metrics) {
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  std::string name = "manifest_" + cfg.command + ".txt";
  std::replace(name.begin(), name.end(), '-', '_');
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest under " + cfg.out);
  out << "command=" << cfg.command << '\n';
  for (const auto& opt : option_bindings()) {
    const std::string value = opt.get(cfg);
    if (opt.key == "seed" && value.empty()) continue;
    out << opt.key << '=' << value << '\n';
  }
  for (const auto& [key, value] : metrics) {
    out << "metric." << key << '=' << value << '\n';
  }
}

struct LoadedBundle {
  Corpus corpus;
  SplitAssignment assignment;
};

LoadedBundle load_bundle(const RunConfig& cfg) {
  require(!cfg.data.empty(), "--data is required");
  require(fs::exists(fs::path(cfg.data) / "instances.jsonl"),
          "dataset not found under " + cfg.data);
  LoadedBundle bundle;
  bundle.corpus = load_corpus(cfg.data);
  bundle.assignment =
      split_by_episode(bundle.corpus, parse_ratios(cfg.ratios), cfg.split_seed);
  return bundle;
}

KnowledgeSource knowledge_source(const RunConfig& cfg, const ScorerModel* scorer,
                                 const KnowledgeBase* kb) {
  if (cfg.no_knowledge) return NoKnowledge{};
  if (cfg.gold_knowledge) return GoldKnowledge{};
  return RetrievedKnowledge{scorer, kb, cfg.top_k};
}

void cmd_generate(const RunConfig& cfg) {
  require(!cfg.out.empty(), "--out is required");
  require(cfg.seed.has_value(), "--seed is required for generate");

  SynthSpec spec;
  spec.n_episodes = cfg.gen_episodes;
  spec.clips_per_episode = cfg.gen_clips_per_episode;
  spec.questions_per_clip = cfg.gen_questions_per_clip;
  spec.n_knowledge = cfg.gen_knowledge;
  spec.group_size = cfg.gen_group_size;
  spec.determinism = cfg.gen_determinism;
  spec.filler_vocab = cfg.gen_filler_vocab;
  spec.concept_vocab = cfg.gen_concept_vocab;
  spec.character_vocab = cfg.gen_character_vocab;
  spec.d_img = cfg.gen_d_img;
  spec.frames_per_clip = cfg.gen_frames_per_clip;
  spec.seed = *cfg.seed;

  SynthResult result = generate(spec);
  const auto violations = validate_corpus(result.corpus);
  require(violations.empty(), "generated corpus failed validation");

  const fs::path dir(cfg.out);
  save_corpus(result.corpus, dir);
  save_ledger(result.ledger, dir / "ledger.jsonl");
  write_manifest(cfg,
                 {{"instances", std::to_string(result.corpus.instances.size())},
                  {"clips", std::to_string(result.corpus.clips.size())},
                  {"knowledge_templates",
                   std::to_string(result.ledger.templates.size())}});
  std::cout << "wrote " << result.corpus.instances.size() << " instances over "
            << result.corpus.clips.size() << " clips to " << cfg.out << '\n';
}

void cmd_train_scorer(const RunConfig& cfg) {
  require(!cfg.out.empty(), "--out is required");
  require(cfg.seed.has_value(), "--seed is required for train-scorer");

  LoadedBundle bundle = load_bundle(cfg);
  const KnowledgeBase kb =
      build_kb(bundle.corpus, bundle.assignment, {Split::train});

  RetrievalConfig rcfg;
  rcfg.top_k = cfg.top_k;
  rcfg.negatives_per_positive = cfg.scorer_negatives;
  rcfg.epochs = cfg.scorer_epochs;
  rcfg.batch_size = cfg.scorer_batch;
  rcfg.learning_rate = cfg.scorer_lr;
  rcfg.momentum = cfg.scorer_momentum;
  rcfg.d_emb = cfg.scorer_d_emb;
  rcfg.seed = *cfg.seed;

  const auto train_instances =
      instances_in_split(bundle.corpus, bundle.assignment, Split::train);
  const auto pairs = make_training_pairs(train_instances, kb, rcfg);
  ScorerTrainResult result = train_scorer(pairs, rcfg);

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  save_scorer_checkpoint(result.model, dir / "scorer.ckpt");
  write_training_log(result.epoch_loss, dir / "scorer_train_log.txt");
  save_kb(kb, dir / "kb.jsonl");

  std::vector<std::pair<std::string, std::string>> metrics;
  metrics.emplace_back("final_train_loss",
                       result.epoch_loss.empty()
                           ? "nan"
                           : format_real(result.epoch_loss.back()));
  // Validation recall is reported when every val question's knowledge exists
  // in the train-split KB.
  try {
    const auto val_instances =
        instances_in_split(bundle.corpus, bundle.assignment, Split::val);
    if (!val_instances.empty()) {
      metrics.emplace_back(
          "val_recall_at_1",
          format_real(recall_at_k(result.model, val_instances, kb, 1)));
      metrics.emplace_back(
          "val_recall_at_k",
          format_real(recall_at_k(result.model, val_instances, kb, cfg.top_k)));
    }
  } catch (const MissingKnowledgeError&) {
  }
  write_manifest(cfg, metrics);
  std::cout << "scorer checkpoint written to "
            << (dir / "scorer.ckpt").string() << '\n';
}

void cmd_train_reasoner(const RunConfig& cfg) {
  require(!cfg.out.empty(), "--out is required");
  require(cfg.seed.has_value(), "--seed is required for train-reasoner");
  require(cfg.gold_knowledge || cfg.no_knowledge || !cfg.scorer_path.empty(),
          "provide --scorer, --gold-knowledge true, or --no-knowledge true");

  LoadedBundle bundle = load_bundle(cfg);

  ReasonerConfig rcfg;
  rcfg.epochs = cfg.reasoner_epochs;
  rcfg.batch_size = cfg.reasoner_batch;
  rcfg.learning_rate = cfg.reasoner_lr;
  rcfg.momentum = cfg.reasoner_momentum;
  rcfg.d_emb = cfg.reasoner_d_emb;
  rcfg.d_lang = cfg.reasoner_d_lang;
  rcfg.l_max = cfg.reasoner_l_max;
  rcfg.n_frames = cfg.reasoner_n_frames;
  rcfg.top_k = cfg.top_k;
  rcfg.seed = *cfg.seed;
  const auto variant = parse_visual_variant(cfg.reasoner_visual);
  require(variant.has_value(), "unknown visual variant " + cfg.reasoner_visual);
  rcfg.visual = *variant;

  std::optional<ScorerModel> scorer;
  std::optional<KnowledgeBase> kb;
  if (!cfg.gold_knowledge && !cfg.no_knowledge) {
    scorer = load_scorer_checkpoint(cfg.scorer_path);
    kb = build_kb(bundle.corpus, bundle.assignment, {Split::train});
  }
  const KnowledgeSource source = knowledge_source(
      cfg, scorer ? &*scorer : nullptr, kb ? &*kb : nullptr);

  ReasonerTrainResult result =
      train_reasoner(bundle.corpus, bundle.assignment, source, rcfg);

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  save_reasoner_checkpoint(result.model, dir / "reasoner.ckpt");
  write_training_log(result.epoch_loss, dir / "reasoner_train_log.txt");
  write_manifest(cfg, {{"final_train_loss",
                        result.epoch_loss.empty()
                            ? "nan"
                            : format_real(result.epoch_loss.back())}});
  std::cout << "reasoner checkpoint written to "
            << (dir / "reasoner.ckpt").string() << '\n';
}

std::string default_method_name(const RunConfig& cfg, VisualVariant variant) {
  std::string name = to_string(variant);
  if (cfg.no_knowledge) return name + "+noknow";
  if (cfg.gold_knowledge) return name + "+gold";
  return name + "+know@" + std::to_string(cfg.top_k);
}

void cmd_evaluate(const RunConfig& cfg) {
  require(!cfg.out.empty(), "--out is required");
  require(!cfg.reasoner_path.empty(), "--reasoner is required");
  require(cfg.gold_knowledge || cfg.no_knowledge || !cfg.scorer_path.empty(),
          "provide --scorer, --gold-knowledge true, or --no-knowledge true");
  const auto split = parse_split(cfg.split);
  require(split.has_value(), "unknown split " + cfg.split);

  LoadedBundle bundle = load_bundle(cfg);
  FusionModel model = load_reasoner_checkpoint(cfg.reasoner_path);

  std::optional<ScorerModel> scorer;
  std::optional<KnowledgeBase> kb;
  if (!cfg.gold_knowledge && !cfg.no_knowledge) {
    scorer = load_scorer_checkpoint(cfg.scorer_path);
    kb = build_kb(bundle.corpus, bundle.assignment, {Split::train});
  }
  const KnowledgeSource source = knowledge_source(
      cfg, scorer ? &*scorer : nullptr, kb ? &*kb : nullptr);

  const auto predictions =
      predict_split(model, bundle.corpus, bundle.assignment, *split, source);
  const EvalReport report =
      evaluate(predictions, bundle.corpus, bundle.assignment, *split);

  const std::string method = cfg.method_name.empty()
                                 ? default_method_name(cfg, model.variant)
                                 : cfg.method_name;
  const std::vector<std::pair<std::string, EvalReport>> rows = {{method, report}};

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "predictions.jsonl", std::ios::binary);
    for (const auto& pred : predictions) {
      nlohmann::ordered_json record;
      record["instance_id"] = pred.instance_id;
      record["candidate_scores"] = pred.candidate_scores;
      record["predicted_index"] = pred.predicted_index;
      record["probabilities"] = pred.probabilities;
      out << record.dump() << '\n';
    }
  }
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    out << report_to_json(report);
  }
  {
    std::ofstream out(dir / "report.csv", std::ios::binary);
    out << emit_csv(rows);
  }

  std::cout << emit_table(rows);

  std::vector<std::pair<std::string, std::string>> metrics;
  metrics.emplace_back("overall_accuracy", format_real(report.overall_accuracy));
  for (QuestionType type : kQuestionTypes) {
    const auto acc = report.accuracy(type);
    metrics.emplace_back(std::string("accuracy_") + to_string(type),
                         acc ? format_real(*acc) : "-");
  }
  if (!cfg.compare_with.empty()) {
    std::ifstream in(cfg.compare_with);
    require(static_cast<bool>(in), "cannot open " + cfg.compare_with);
    const auto other = nlohmann::json::parse(in);
    const double gain =
        report.overall_accuracy - other.at("overall_accuracy").get<double>();
    metrics.emplace_back("knowledge_gain", format_real(gain));
    std::cout << "gain over " << cfg.compare_with << ": " << format_real(gain)
              << '\n';
  }
  write_manifest(cfg, metrics);
}

void cmd_retrieve(const RunConfig& cfg) {
  require(!cfg.scorer_path.empty(), "--scorer is required");
  require(!cfg.question_id.empty(), "--question-id is required");

  LoadedBundle bundle = load_bundle(cfg);
  const ScorerModel scorer = load_scorer_checkpoint(cfg.scorer_path);
  const KnowledgeBase kb =
      build_kb(bundle.corpus, bundle.assignment, {Split::train});

  const QuestionInstance* question = nullptr;
  for (const auto& inst : bundle.corpus.instances) {
    if (inst.id == cfg.question_id) {
      question = &inst;
      break;
    }
  }
  require(question != nullptr, "question id not found: " + cfg.question_id);

  for (const auto& hit : retrieve_topk(scorer, *question, kb, cfg.top_k)) {
    std::cout << hit.kb_id << '\t' << format_real(hit.score) << '\t'
              << kb.lookup(hit.kb_id).text << '\n';
  }
}

constexpr const char* kUsage = R"(usage: kvqa <command> [--key value ...]

commands:
  generate        write a seeded synthetic dataset bundle (+ ledger.jsonl)
  train-scorer    train the question-knowledge scorer on the train split
  train-reasoner  train the answer model (needs --scorer or a knowledge flag)
  evaluate        score a split and print/write the accuracy table
  retrieve        print the top-k knowledge entries for one question id

common flags: --data DIR --out DIR --seed N --ratios a,b,c --split-seed N
              --config FILE (flat key=value; flags override file values)
Run manifests are written as manifest_<command>.txt and can be replayed via
--config.)";

}  // namespace

RunConfig parse_args(const std::vector<std::string>& args) {
  if (args.empty()) throw std::runtime_error(kUsage);
  RunConfig cfg;
  cfg.command = args[0];
  const std::vector<std::string> commands = {
      "generate", "train-scorer", "train-reasoner", "evaluate", "retrieve"};
  if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end()) {
    throw std::runtime_error("unknown command \"" + cfg.command + "\"\n" + kUsage);
  }

  std::vector<std::pair<std::string, std::string>> flag_values;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string key = args[i];
    if (key.rfind("--", 0) != 0) {
      throw std::runtime_error("expected --key, got \"" + key + "\"");
    }
    key = key.substr(2);
    if (i + 1 >= args.size()) {
      throw std::runtime_error("missing value for --" + key);
    }
    std::string value = args[++i];
    if (key == "config") {
      config_path = value;
    } else {
      flag_values.emplace_back(std::move(key), std::move(value));
    }
  }

  const auto opts = option_bindings();
  if (!config_path.empty()) {
    for (const auto& [key, value] : read_config_file(config_path)) {
      if (key == "command" || key.rfind("metric.", 0) == 0) continue;
      binding_for(opts, key).set(cfg, value);
    }
  }
  for (const auto& [key, value] : flag_values) {
    binding_for(opts, key).set(cfg, value);
  }
  return cfg;
}

void run_command(const RunConfig& cfg) {
  if (cfg.command == "generate") {
    cmd_generate(cfg);
  } else if (cfg.command == "train-scorer") {
    cmd_train_scorer(cfg);
  } else if (cfg.command == "train-reasoner") {
    cmd_train_reasoner(cfg);
  } else if (cfg.command == "evaluate") {
    cmd_evaluate(cfg);
  } else if (cfg.command == "retrieve") {
    cmd_retrieve(cfg);
  } else {
    throw std::runtime_error("unknown command " + cfg.command);
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  if (!args.empty() && (args[0] == "--help" || args[0] == "-h" || args[0] == "help")) {
    std::cout << kUsage << '\n';
    return 0;
  }
  try {
    run_command(parse_args(args));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kvqa
