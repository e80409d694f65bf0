#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sct/model.hpp"

namespace sct {

struct CheckpointMeta {
  ModelConfig config;
  uint64_t vocab_hash = 0;
  uint64_t node_vocab_hash = 0;
  std::vector<std::string> languages;
  long step = 0;
};

// Versioned binary container of named float64 tensors plus the model config
// and artifact hashes.
void save_checkpoint(const std::string& path, CodeModel& model,
                     const CheckpointMeta& meta);
CodeModel load_checkpoint(const std::string& path, CheckpointMeta* meta_out);

}  // namespace sct
