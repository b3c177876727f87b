#include "kvqa/knowledge_base.hpp"

#include <fstream>

#include "json.hpp"
#include "kvqa/tokenizer.hpp"

namespace kvqa {

KnowledgeBase::KnowledgeBase(std::vector<KnowledgeInstance> entries)
    : entries_(std::move(entries)) {
  for (const auto& entry : entries_) {
    by_text_.emplace(entry.text, entry.kb_id);
  }
}

const KnowledgeInstance& KnowledgeBase::lookup(int kb_id) const {
  if (kb_id < 1 || kb_id > size()) {
    throw KbRangeError("kb_id " + std::to_string(kb_id) +
                       " outside [1, " + std::to_string(size()) + "]");
  }
  return entries_[static_cast<std::size_t>(kb_id - 1)];
}

int KnowledgeBase::find_normalized(const std::string& normalized_text) const {
  auto it = by_text_.find(normalized_text);
  return it == by_text_.end() ? 0 : it->second;
}

KnowledgeBase build_kb(const Corpus& corpus, const SplitAssignment& assignment,
                       const std::set<Split>& from_splits) {
  std::vector<KnowledgeInstance> entries;
  std::unordered_map<std::string, std::size_t> position;
  for (const auto& inst : corpus.instances) {
    if (!from_splits.contains(assignment.of(inst.episode_id))) continue;
    const std::string text = normalize_text(inst.knowledge_text);
    if (text.empty()) continue;
    auto it = position.find(text);
    if (it == position.end()) {
      position.emplace(text, entries.size());
      entries.push_back({static_cast<int>(entries.size()) + 1, text, {inst.id}});
    } else {
      entries[it->second].source_instance_ids.push_back(inst.id);
    }
  }
  if (entries.empty()) {
    throw EmptyKbError("no instance in the selected splits carries knowledge text");
  }
  return KnowledgeBase(std::move(entries));
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& entry : kb.entries()) {
    nlohmann::ordered_json record;
    record["kb_id"] = entry.kb_id;
    record["text"] = entry.text;
    record["source_instance_ids"] = entry.source_instance_ids;
    out << record.dump() << '\n';
  }
}

}  // namespace kvqa
