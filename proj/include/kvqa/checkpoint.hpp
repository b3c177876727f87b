#pragma once

#include <filesystem>
#include <stdexcept>

#include "kvqa/reasoner.hpp"
#include "kvqa/retrieval.hpp"

namespace kvqa {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Both model kinds share one container: an 8-byte magic, a length-prefixed
// JSON header (kind, vocabulary, dimensions, tensor directory), then the
// tensors as little-endian 64-bit floats in directory order.
void save_scorer_checkpoint(const ScorerModel& model,
                            const std::filesystem::path& path);
ScorerModel load_scorer_checkpoint(const std::filesystem::path& path);

void save_reasoner_checkpoint(const FusionModel& model,
                              const std::filesystem::path& path);
FusionModel load_reasoner_checkpoint(const std::filesystem::path& path);

// One "epoch<TAB>mean_loss" line per epoch.
void write_training_log(const std::vector<double>& epoch_loss,
                        const std::filesystem::path& path);

}  // namespace kvqa
