#include "sct/token_map.hpp"

#include <algorithm>
#include <cctype>

#include "sct/error.hpp"
#include "sct/subtoken.hpp"

namespace sct {

namespace {

bool contains(const AstNode& n, size_t s, size_t e) {
  return n.start <= s && e <= n.end;
}

std::string lower(const std::string& s) {
  std::string out = s;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<int> map_tokens_to_nodes(const std::vector<RawToken>& tokens,
                                     const AstTree& tree) {
  std::vector<int> assignment(tokens.size(), tree.root());
  const AstNode& root = tree.node(tree.root());
  for (size_t t = 0; t < tokens.size(); ++t) {
    const size_t s = tokens[t].start;
    const size_t e = tokens[t].end;
    if (!contains(root, s, e)) {
      throw SnippetReject("assignment",
                          "token '" + tokens[t].text + "' at [" +
                              std::to_string(s) + "," + std::to_string(e) +
                              ") lies outside the root range");
    }
    int cur = tree.root();
    while (true) {
      int best = -1;
      size_t best_len = 0;
      for (int c : tree.node(cur).children) {
        const AstNode& cn = tree.node(c);
        if (!contains(cn, s, e)) continue;
        const size_t len = cn.end - cn.start;
        if (best == -1 || len < best_len) {  // ties keep the first child
          best = c;
          best_len = len;
        }
      }
      if (best == -1) break;
      cur = best;
    }
    assignment[t] = cur;
  }
  return assignment;
}

NameInfo locate_method_name(const std::vector<RawToken>& tokens,
                            const AstTree& tree, int name_node_hint) {
  int name_node = name_node_hint;
  if (name_node < 0 || name_node >= tree.size()) {
    name_node = -1;
    for (const char* wanted : {"name", "identifier"}) {
      for (int i = 0; i < tree.size() && name_node == -1; ++i) {
        if (tree.is_leaf(i) && lower(tree.node(i).type) == wanted) {
          name_node = i;
        }
      }
      if (name_node != -1) break;
    }
  }
  if (name_node == -1) {
    throw SnippetReject("no-name", "could not locate a method-name node");
  }
  NameInfo info;
  info.name_node = name_node;
  const AstNode& nn = tree.node(name_node);
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t].kind != TokenKind::kIdentifier) continue;
    if (tokens[t].start >= nn.start && tokens[t].end <= nn.end) {
      info.token_indices.push_back(static_cast<int>(t));
      for (auto& sub : split_subtokens(tokens[t].text)) {
        info.label.push_back(std::move(sub));
      }
    }
  }
  if (info.token_indices.empty()) {
    throw SnippetReject("no-name", "name node covers no identifier token");
  }
  return info;
}

}  // namespace sct
