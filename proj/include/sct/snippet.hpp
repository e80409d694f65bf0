#pragma once

#include <array>
#include <string>
#include <vector>

#include "sct/ast.hpp"
#include "sct/binning.hpp"
#include "sct/token.hpp"

namespace sct {

inline constexpr int kSubtokenSlots = 5;
inline constexpr int kMaxLabelSubtokens = 6;

// Stage-1 result: normalized tokens, AST, token->node assignment and the
// located method name. Serialized as one JSONL record per snippet.
struct Stage1Snippet {
  std::string id;
  std::string language;
  std::vector<RawToken> tokens;                    // punctuation still present
  std::vector<std::vector<std::string>> subtokens; // per token, pre-truncation
  AstTree ast;
  std::vector<int> token_node;
  std::vector<int> name_tokens;  // indices into `tokens`
  int name_node = -1;
  std::vector<std::string> label;  // untruncated name subtokens
};

// Stage-2 result: everything the model consumes, one record per snippet in
// the binary shard format.
struct ModelSnippet {
  std::string id;
  int language_id = 0;
  int n = 0;  // model positions
  std::vector<std::array<int, kSubtokenSlots>> subtoken_ids;
  std::vector<int> kind_ids;
  std::vector<int> node_type_ids;
  std::vector<uint8_t> is_leaf;  // assigned AST node is a leaf
  int name_pos = 0;
  std::vector<int> label_ids;               // base-vocabulary ids (may be UNK)
  std::vector<std::string> label_strings;   // <= 6, lowercased
  // Strings for slots whose subtoken id is UNK: flat index i*5+j -> string.
  std::vector<std::pair<int, std::string>> unk_slots;
  BinnedRelations binned;
};

}  // namespace sct
