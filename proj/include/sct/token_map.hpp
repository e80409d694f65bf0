#pragma once

#include <string>
#include <vector>

#include "sct/ast.hpp"
#include "sct/token.hpp"

namespace sct {

// Assigns each token the AST node with the shortest source range that still
// contains it, descending greedily from the root; when several children of a
// node contain the token, the one with the shorter range wins (ties go to
// the first in child order). Throws SnippetReject("assignment", ...) for a
// token outside the root's range.
std::vector<int> map_tokens_to_nodes(const std::vector<RawToken>& tokens,
                                     const AstTree& tree);

struct NameInfo {
  std::vector<int> token_indices;  // tokens composing the declared name
  int name_node = -1;
  std::vector<std::string> label;  // name subtokens, in order
};

// Locates the declared method name. `name_node_hint` comes from the parser
// or the record's optional "name_node" field; when negative, the first leaf
// typed "name" (then "identifier") in DFS order is used. Throws
// SnippetReject("no-name", ...) when nothing matches.
NameInfo locate_method_name(const std::vector<RawToken>& tokens,
                            const AstTree& tree, int name_node_hint);

}  // namespace sct
