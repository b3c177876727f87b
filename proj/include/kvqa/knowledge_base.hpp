#pragma once

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kvqa/corpus.hpp"

namespace kvqa {

// One knowledge sentence plus the instances that contributed it.
struct KnowledgeInstance {
  int kb_id = 0;     // 1-based, contiguous
  std::string text;  // normalized sentence
  std::vector<std::string> source_instance_ids;

  bool operator==(const KnowledgeInstance&) const = default;
};

struct EmptyKbError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct KbRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::vector<KnowledgeInstance> entries);

  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<KnowledgeInstance>& entries() const { return entries_; }

  // 1-based access; throws KbRangeError outside [1, size()].
  const KnowledgeInstance& lookup(int kb_id) const;

  // kb_id of an exact normalized-text match, 0 when absent.
  int find_normalized(const std::string& normalized_text) const;

  bool operator==(const KnowledgeBase& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::vector<KnowledgeInstance> entries_;
  std::unordered_map<std::string, int> by_text_;
};

// Deduplicates the knowledge annotations of the selected splits, normalized
// (trim, collapse whitespace, lowercase), in first-occurrence order. Instances
// with empty knowledge contribute nothing; throws EmptyKbError when nothing
// contributes.
KnowledgeBase build_kb(const Corpus& corpus, const SplitAssignment& assignment,
                       const std::set<Split>& from_splits);

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);

}  // namespace kvqa
