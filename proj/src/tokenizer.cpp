#include "kvqa/tokenizer.hpp"

#include <cctype>

namespace kvqa {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

}  // namespace

std::string to_lower_ascii(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c) != 0) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  words.push_back("<unk>");
  index.emplace("<unk>", 0);
}

Vocabulary Vocabulary::with_markers(const std::vector<std::string>& markers) {
  Vocabulary v;
  for (const auto& m : markers) {
    v.index.emplace(m, static_cast<int>(v.words.size()));
    v.words.push_back(m);
  }
  v.n_reserved = static_cast<int>(v.words.size());
  return v;
}

void Vocabulary::add_word(const std::string& word) {
  if (index.contains(word)) return;
  index.emplace(word, static_cast<int>(words.size()));
  words.push_back(word);
}

void Vocabulary::add_text(std::string_view text) {
  for (auto& tok : tokenize(text)) add_word(tok);
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (auto& tok : tokenize(text)) ids.push_back(id_of(tok));
  return ids;
}

}  // namespace kvqa
