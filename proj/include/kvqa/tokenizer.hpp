#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kvqa {

// ASCII lowercasing; bytes outside A-Z pass through unchanged.
std::string to_lower_ascii(std::string_view text);

// Canonical text form used for deduplication: trim, collapse internal
// whitespace runs to single spaces, lowercase.
std::string normalize_text(std::string_view text);

// Lowercased alphanumeric runs; every other byte acts as a separator.
std::vector<std::string> tokenize(std::string_view text);

// Word table with id 0 reserved for the unknown bucket. Optional reserved
// marker words occupy ids 1..n before any corpus word.
struct Vocabulary {
  std::vector<std::string> words;  // words[0] == "<unk>"
  std::unordered_map<std::string, int> index;
  int n_reserved = 1;

  Vocabulary();
  static Vocabulary with_markers(const std::vector<std::string>& markers);

  // Grows the table with first-occurrence order of the text's tokens.
  void add_text(std::string_view text);
  void add_word(const std::string& word);

  int id_of(const std::string& word) const;  // 0 when unknown
  std::vector<int> encode(std::string_view text) const;
  int size() const { return static_cast<int>(words.size()); }

  bool operator==(const Vocabulary& other) const { return words == other.words; }
};

}  // namespace kvqa
