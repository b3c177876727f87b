#include "kvqa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace kvqa {

namespace {

using Json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'K', 'V', 'Q', 'A', 'C', 'K', 'P', '1'};

void write_u64(std::ostream& out, std::uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw CheckpointError("truncated checkpoint header");
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return value;
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::vector<double> read_doubles(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<double>(read_u64(in));
  }
  return values;
}

void write_container(const std::filesystem::path& path, const Json& header,
                     const std::vector<const std::vector<double>*>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string header_text = header.dump();
  write_u64(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto* tensor : tensors) write_doubles(out, *tensor);
  if (!out) throw CheckpointError("write failure on " + path.string());
}

struct Container {
  Json header;
  std::vector<std::vector<double>> tensors;
};

Container read_container(const std::filesystem::path& path,
                         const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  const std::uint64_t header_len = read_u64(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("truncated checkpoint header");

  Container container;
  try {
    container.header = Json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  if (container.header.value("kind", "") != expected_kind) {
    throw CheckpointError("checkpoint kind \"" +
                          container.header.value("kind", "") + "\", expected \"" +
                          expected_kind + "\"");
  }
  for (const auto& entry : container.header.at("tensors")) {
    container.tensors.push_back(
        read_doubles(in, entry.at("size").get<std::size_t>()));
  }
  return container;
}

Json tensor_directory(
    const std::vector<std::pair<std::string, const std::vector<double>*>>& named) {
  Json dir = Json::array();
  for (const auto& [name, tensor] : named) {
    Json entry;
    entry["name"] = name;
    entry["size"] = tensor->size();
    dir.push_back(std::move(entry));
  }
  return dir;
}

}  // namespace

void save_scorer_checkpoint(const ScorerModel& model,
                            const std::filesystem::path& path) {
  const std::vector<double> bias = {model.params.bias};
  Json header;
  header["kind"] = "scorer";
  header["vocab"] = model.vocab.words;
  header["dims"] = {{"d_emb", model.d_emb}};
  header["tensors"] = tensor_directory({{"emb", &model.params.emb},
                                        {"head", &model.params.head},
                                        {"bias", &bias}});
  write_container(path, header, {&model.params.emb, &model.params.head, &bias});
}

ScorerModel load_scorer_checkpoint(const std::filesystem::path& path) {
  Container container = read_container(path, "scorer");
  ScorerModel model;
  model.vocab.words.clear();
  model.vocab.index.clear();
  for (const auto& word : container.header.at("vocab")) {
    model.vocab.index.emplace(word.get<std::string>(),
                              static_cast<int>(model.vocab.words.size()));
    model.vocab.words.push_back(word.get<std::string>());
  }
  model.d_emb = container.header.at("dims").at("d_emb").get<int>();
  if (container.tensors.size() != 3) {
    throw CheckpointError("scorer checkpoint must hold 3 tensors");
  }
  model.params.emb = std::move(container.tensors[0]);
  model.params.head = std::move(container.tensors[1]);
  if (container.tensors[2].size() != 1) {
    throw CheckpointError("scorer bias tensor must hold one value");
  }
  model.params.bias = container.tensors[2][0];
  const std::size_t expected_emb =
      model.vocab.words.size() * static_cast<std::size_t>(model.d_emb);
  if (model.params.emb.size() != expected_emb) {
    throw CheckpointError("scorer embedding size mismatch");
  }
  return model;
}

void save_reasoner_checkpoint(const FusionModel& model,
                              const std::filesystem::path& path) {
  const std::vector<double> head_bias = {model.head_bias};
  Json header;
  header["kind"] = "reasoner";
  header["vocab"] = model.lang.vocab.words;
  header["dims"] = {{"d_emb", model.lang.d_emb},
                    {"d_lang", model.lang.d_lang},
                    {"l_max", model.lang.l_max},
                    {"d_visual", model.d_visual},
                    {"n_frames", model.n_frames},
                    {"n_reserved", model.lang.vocab.n_reserved}};
  header["visual_variant"] = to_string(model.variant);
  header["concept_vocab"] = model.concept_vocab;
  header["character_vocab"] = model.character_vocab;
  header["tensors"] = tensor_directory({{"emb", &model.lang.emb},
                                        {"w", &model.lang.w},
                                        {"b", &model.lang.b},
                                        {"head", &model.head},
                                        {"head_bias", &head_bias}});
  write_container(path, header,
                  {&model.lang.emb, &model.lang.w, &model.lang.b, &model.head,
                   &head_bias});
}

FusionModel load_reasoner_checkpoint(const std::filesystem::path& path) {
  Container container = read_container(path, "reasoner");
  FusionModel model;
  const auto variant =
      parse_visual_variant(container.header.at("visual_variant").get<std::string>());
  if (!variant) throw CheckpointError("unknown visual variant in checkpoint");
  model.variant = *variant;

  const auto& dims = container.header.at("dims");
  model.lang.d_emb = dims.at("d_emb").get<int>();
  model.lang.d_lang = dims.at("d_lang").get<int>();
  model.lang.l_max = dims.at("l_max").get<int>();
  model.d_visual = dims.at("d_visual").get<int>();
  model.n_frames = dims.at("n_frames").get<int>();

  model.lang.vocab.words.clear();
  model.lang.vocab.index.clear();
  for (const auto& word : container.header.at("vocab")) {
    model.lang.vocab.index.emplace(word.get<std::string>(),
                                   static_cast<int>(model.lang.vocab.words.size()));
    model.lang.vocab.words.push_back(word.get<std::string>());
  }
  model.lang.vocab.n_reserved = dims.at("n_reserved").get<int>();
  for (const auto& word : container.header.at("concept_vocab")) {
    model.concept_vocab.push_back(word.get<std::string>());
  }
  for (const auto& word : container.header.at("character_vocab")) {
    model.character_vocab.push_back(word.get<std::string>());
  }

  if (container.tensors.size() != 5) {
    throw CheckpointError("reasoner checkpoint must hold 5 tensors");
  }
  model.lang.emb = std::move(container.tensors[0]);
  model.lang.w = std::move(container.tensors[1]);
  model.lang.b = std::move(container.tensors[2]);
  model.head = std::move(container.tensors[3]);
  if (container.tensors[4].size() != 1) {
    throw CheckpointError("reasoner head bias tensor must hold one value");
  }
  model.head_bias = container.tensors[4][0];

  const std::size_t expected_emb = model.lang.vocab.words.size() *
                                   static_cast<std::size_t>(model.lang.d_emb);
  if (model.lang.emb.size() != expected_emb ||
      static_cast<int>(model.head.size()) != model.d_visual + model.lang.d_lang) {
    throw CheckpointError("reasoner tensor size mismatch");
  }
  return model;
}

void write_training_log(const std::vector<double>& epoch_loss,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\n", i + 1, epoch_loss[i]);
    out << buf;
  }
}

}  // namespace kvqa
