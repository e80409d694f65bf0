#include "sct/ast.hpp"

#include <algorithm>

#include <json.hpp>

#include "sct/error.hpp"

namespace sct {

AstTree AstTree::build(std::vector<AstNode> nodes, int root) {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) throw SnippetReject("schema", "empty AST");
  if (root < 0 || root >= n) {
    throw SnippetReject("schema", "root id out of range: " + std::to_string(root));
  }
  for (int i = 0; i < n; ++i) {
    if (nodes[i].id != i) {
      throw SnippetReject("schema", "node ids must be dense 0..n-1, found " +
                                        std::to_string(nodes[i].id) +
                                        " at index " + std::to_string(i));
    }
    if (nodes[i].end < nodes[i].start) {
      throw SnippetReject("schema", "node " + std::to_string(i) +
                                        " has inverted source range");
    }
    nodes[i].parent = -1;
  }
  for (int i = 0; i < n; ++i) {
    for (int c : nodes[i].children) {
      if (c < 0 || c >= n) {
        throw SnippetReject("schema", "node " + std::to_string(i) +
                                          " references dangling child " +
                                          std::to_string(c));
      }
      if (nodes[c].parent != -1) {
        throw SnippetReject("schema", "node " + std::to_string(c) +
                                          " has multiple parents");
      }
      if (c == i) {
        throw SnippetReject("schema",
                            "node " + std::to_string(i) + " is its own child");
      }
      nodes[c].parent = i;
      if (nodes[c].start < nodes[i].start || nodes[c].end > nodes[i].end) {
        throw SnippetReject("schema",
                            "child " + std::to_string(c) +
                                " range not contained in parent " +
                                std::to_string(i));
      }
    }
    // Children ordered by source start; normalize (stable, so ties keep the
    // parser's order).
    std::stable_sort(nodes[i].children.begin(), nodes[i].children.end(),
                     [&nodes](int a, int b) {
                       return nodes[a].start < nodes[b].start;
                     });
  }
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (nodes[i].parent == -1) ++roots;
  }
  if (roots != 1) {
    throw SnippetReject("schema", roots == 0
                                      ? "cycle: no root node"
                                      : "multiple roots (" +
                                            std::to_string(roots) + ")");
  }
  if (nodes[root].parent != -1) {
    throw SnippetReject("schema", "declared root " + std::to_string(root) +
                                      " has a parent");
  }

  AstTree t;
  t.nodes_ = std::move(nodes);
  t.root_ = root;
  t.depth_.assign(n, -1);
  t.tin_.assign(n, 0);
  t.tout_.assign(n, 0);
  t.child_index_.assign(n, -1);
  // Iterative DFS for depth, Euler in/out times and child indices.
  int clock = 0;
  std::vector<std::pair<int, size_t>> stack;  // node, next-child cursor
  t.depth_[root] = 0;
  t.tin_[root] = clock++;
  stack.emplace_back(root, 0);
  int visited = 1;
  while (!stack.empty()) {
    auto& [u, cursor] = stack.back();
    const auto& ch = t.nodes_[u].children;
    if (cursor < ch.size()) {
      const int c = ch[cursor];
      t.child_index_[c] = static_cast<int>(cursor);
      ++cursor;
      if (t.depth_[c] != -1) {
        throw SnippetReject("schema", "cycle through node " + std::to_string(c));
      }
      t.depth_[c] = t.depth_[u] + 1;
      t.tin_[c] = clock++;
      ++visited;
      stack.emplace_back(c, 0);
    } else {
      t.tout_[u] = clock++;
      stack.pop_back();
    }
  }
  if (visited != n) {
    throw SnippetReject("schema", "cycle: " + std::to_string(n - visited) +
                                      " nodes unreachable from root");
  }
  return t;
}

AstTree ingest_ast_nodes(std::vector<AstNode> nodes, int root) {
  return AstTree::build(std::move(nodes), root);
}

AstTree ingest_ast(const std::string& json_record_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_record_text);
  } catch (const nlohmann::json::exception& e) {
    throw SnippetReject("schema", std::string("bad JSON: ") + e.what());
  }
  if (!j.contains("nodes") || !j["nodes"].is_array() || !j.contains("root")) {
    throw SnippetReject("schema", "record missing nodes/root");
  }
  std::vector<AstNode> nodes;
  nodes.reserve(j["nodes"].size());
  for (const auto& nj : j["nodes"]) {
    AstNode node;
    try {
      node.id = nj.at("id").get<int>();
      node.type = nj.at("type").get<std::string>();
      node.start = nj.at("start").get<size_t>();
      node.end = nj.at("end").get<size_t>();
      if (nj.contains("children")) {
        node.children = nj["children"].get<std::vector<int>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw SnippetReject("schema", std::string("bad node record: ") + e.what());
    }
    nodes.push_back(std::move(node));
  }
  // Records may list nodes in any order as long as ids are dense.
  std::sort(nodes.begin(), nodes.end(),
            [](const AstNode& a, const AstNode& b) { return a.id < b.id; });
  return AstTree::build(std::move(nodes), j["root"].get<int>());
}

}  // namespace sct
