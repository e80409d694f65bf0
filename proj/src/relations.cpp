#include "sct/relations.hpp"

#include <cmath>
#include <cstdlib>

#include "sct/error.hpp"

namespace sct {

std::vector<double> seq_distance(int n) {
  std::vector<double> m(size_t(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m[size_t(i) * n + j] = double(j - i);
  }
  return m;
}

std::vector<double> shortest_paths(const AstTree& tree) {
  const int n = tree.size();
  std::vector<double> m(size_t(n) * n, 0.0);
  // d(i, j) = depth(i) + depth(j) - 2 depth(lca). The LCA walk is O(depth)
  // per pair, which is plenty fast at snippet scale.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      int a = i, b = j;
      while (a != b) {
        if (tree.depth(a) >= tree.depth(b)) {
          a = tree.node(a).parent;
        } else {
          b = tree.node(b).parent;
        }
      }
      const double d = double(tree.depth(i) + tree.depth(j) - 2 * tree.depth(a));
      m[size_t(i) * n + j] = d;
      m[size_t(j) * n + i] = d;
    }
  }
  return m;
}

std::vector<double> ancestor_distance(const AstTree& tree) {
  const int n = tree.size();
  std::vector<double> m(size_t(n) * n, kUndefinedDistance);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        m[size_t(i) * n + j] = 0.0;
      } else if (tree.is_ancestor_or_self(i, j) ||
                 tree.is_ancestor_or_self(j, i)) {
        // Positive towards descendants, negative towards ancestors.
        m[size_t(i) * n + j] = double(tree.depth(j) - tree.depth(i));
      }
    }
  }
  return m;
}

std::vector<double> sibling_distance(const AstTree& tree) {
  const int n = tree.size();
  std::vector<double> m(size_t(n) * n, kUndefinedDistance);
  for (int i = 0; i < n; ++i) m[size_t(i) * n + i] = 0.0;
  for (const AstNode& parent : tree.nodes()) {
    const auto& ch = parent.children;
    for (size_t a = 0; a < ch.size(); ++a) {
      for (size_t b = 0; b < ch.size(); ++b) {
        if (a == b) continue;
        m[size_t(ch[a]) * n + ch[b]] = double(b) - double(a);
      }
    }
  }
  return m;
}

namespace {

// Solves A x = b for all columns of B=I via LU with partial pivoting,
// producing A^{-1} in place. n is small (snippet-scale), dense is exact and
// simple.
std::vector<double> invert(std::vector<double> a, int n) {
  std::vector<double> inv(size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) inv[size_t(i) * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    double best = std::abs(a[size_t(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::abs(a[size_t(r) * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) throw NumericError("singular matrix in PPR solve");
    if (pivot != col) {
      for (int c = 0; c < n; ++c) {
        std::swap(a[size_t(pivot) * n + c], a[size_t(col) * n + c]);
        std::swap(inv[size_t(pivot) * n + c], inv[size_t(col) * n + c]);
      }
    }
    const double diag = a[size_t(col) * n + col];
    for (int c = 0; c < n; ++c) {
      a[size_t(col) * n + c] /= diag;
      inv[size_t(col) * n + c] /= diag;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[size_t(r) * n + col];
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        a[size_t(r) * n + c] -= f * a[size_t(col) * n + c];
        inv[size_t(r) * n + c] -= f * inv[size_t(col) * n + c];
      }
    }
  }
  return inv;
}

}  // namespace

std::vector<double> ppr_distance(const AstTree& tree, double alpha,
                                 double max_dist) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("alpha out of (0,1)");
  const int n = tree.size();
  // TODO: switch to power iteration above a few thousand nodes; the cubic
  // solve dominates preprocessing for 1000-token evaluation snippets.
  // Row-normalized adjacency of the undirected tree; an isolated node
  // (single-node tree) keeps its walk in place.
  std::vector<int> degree(n, 0);
  for (const AstNode& node : tree.nodes()) {
    if (node.parent >= 0) {
      ++degree[node.id];
      ++degree[node.parent];
    }
  }
  // System matrix S = I - (1-alpha) P; PPR rows are alpha * S^{-1}.
  std::vector<double> s(size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) s[size_t(i) * n + i] = 1.0;
  for (const AstNode& node : tree.nodes()) {
    if (node.parent < 0) continue;
    const int u = node.id, p = node.parent;
    s[size_t(u) * n + p] -= (1.0 - alpha) / degree[u];
    s[size_t(p) * n + u] -= (1.0 - alpha) / degree[p];
  }
  for (int i = 0; i < n; ++i) {
    if (degree[i] == 0) s[size_t(i) * n + i] = 1.0 - (1.0 - alpha);
  }
  std::vector<double> ppr = invert(std::move(s), n);
  std::vector<double> m(size_t(n) * n);
  for (size_t i = 0; i < m.size(); ++i) {
    const double p = alpha * ppr[i];
    double d = p > 0.0 ? -std::log(p) : max_dist + 1.0;
    if (d < 0.0) d = 0.0;  // guard tiny negative round-off at p ~ 1
    m[i] = d > max_dist ? max_dist : d;
  }
  return m;
}

RelationSet token_relations(const AstTree& tree,
                            const std::vector<int>& token_node) {
  const int n = static_cast<int>(token_node.size());
  RelationSet rs;
  rs.n = n;
  rs.m[kRelSeq] = seq_distance(n);
  const std::vector<double> sp = shortest_paths(tree);
  const std::vector<double> anc = ancestor_distance(tree);
  const std::vector<double> sib = sibling_distance(tree);
  const std::vector<double> ppr = ppr_distance(tree);
  const int v = tree.size();
  for (int rel : {kRelShortestPath, kRelAncestor, kRelSibling, kRelPpr}) {
    rs.m[rel].resize(size_t(n) * n);
  }
  for (int i = 0; i < n; ++i) {
    const int a = token_node[i];
    for (int j = 0; j < n; ++j) {
      const int b = token_node[j];
      const size_t node_ix = size_t(a) * v + b;
      const size_t tok_ix = size_t(i) * n + j;
      rs.m[kRelShortestPath][tok_ix] = sp[node_ix];
      rs.m[kRelAncestor][tok_ix] = anc[node_ix];
      rs.m[kRelSibling][tok_ix] = sib[node_ix];
      rs.m[kRelPpr][tok_ix] = ppr[node_ix];
    }
  }
  return rs;
}

}  // namespace sct
