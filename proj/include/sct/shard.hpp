#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sct/snippet.hpp"

namespace sct {

struct ShardHeader {
  uint64_t vocab_hash = 0;
  uint64_t node_vocab_hash = 0;
  uint32_t k = 32;
  std::vector<std::string> languages;
};

// Length-prefixed binary records, one per snippet: subtoken ids (n x 5),
// token-kind ids, node-type ids, leaf flags, name position, label (ids +
// strings), OOV slot strings, per-relation bin_index (one byte per entry)
// and bin_value vectors (k x f32 per relation).
class ShardWriter {
 public:
  ShardWriter(const std::string& path, const ShardHeader& header);
  void write(const ModelSnippet& snip);
  void close();

 private:
  std::ofstream f_;
  std::string path_;
  uint32_t k_;
};

struct Shard {
  ShardHeader header;
  std::vector<ModelSnippet> snippets;
};

Shard read_shard(const std::string& path);

}  // namespace sct
