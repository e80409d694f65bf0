#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sct {

struct AstNode {
  int id = 0;
  std::string type;
  size_t start = 0;
  size_t end = 0;
  std::vector<int> children;
  int parent = -1;  // -1 for the root
};

// Immutable AST. `build` establishes the invariants: dense ids, a single
// root, child ranges contained in their parent (siblings may overlap),
// children ordered by source start.
class AstTree {
 public:
  static AstTree build(std::vector<AstNode> nodes, int root);

  int root() const { return root_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const AstNode& node(int id) const { return nodes_[id]; }
  bool is_leaf(int id) const { return nodes_[id].children.empty(); }
  int depth(int id) const { return depth_[id]; }

  // True when `a` is an ancestor of `b` or a == b.
  bool is_ancestor_or_self(int a, int b) const {
    return tin_[a] <= tin_[b] && tout_[b] <= tout_[a];
  }
  // Index of `id` within its parent's child list; -1 for the root.
  int child_index(int id) const { return child_index_[id]; }

  const std::vector<AstNode>& nodes() const { return nodes_; }

 private:
  std::vector<AstNode> nodes_;
  int root_ = 0;
  std::vector<int> depth_, tin_, tout_, child_index_;
};

// Parses one record of the AST interchange schema:
//   {"id", "language", "source", "nodes": [{"id","type","start","end",
//    "children":[...]}], "root": int, "name_node": int (optional)}
// Node ids must be dense 0..n-1. Throws SnippetReject("schema", ...) naming
// the offending node on any invariant violation.
AstTree ingest_ast(const std::string& json_record_text);
AstTree ingest_ast_nodes(std::vector<AstNode> nodes, int root);

}  // namespace sct
