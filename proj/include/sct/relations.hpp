#pragma once

#include <array>
#include <vector>

#include "sct/ast.hpp"

namespace sct {

// Relation ids; the order is part of the shard format.
inline constexpr int kRelSeq = 0;
inline constexpr int kRelShortestPath = 1;
inline constexpr int kRelAncestor = 2;
inline constexpr int kRelSibling = 3;
inline constexpr int kRelPpr = 4;
inline constexpr int kNumRelations = 5;

// Sentinel distance for node pairs where the ancestor / sibling relation is
// undefined.
inline constexpr double kUndefinedDistance = 1000.0;
// Personalized-PageRank distances above this are treated as unreachable and
// clamped, keeping the encoding continuous.
inline constexpr double kPprMaxDistance = 5.0;
inline constexpr double kPprAlpha = 0.15;

// Row-major n x n distance matrices over model positions. `discrete` marks
// the integer-valued relations for the binning stage.
struct RelationSet {
  int n = 0;
  std::array<std::vector<double>, kNumRelations> m;
  static constexpr std::array<bool, kNumRelations> discrete = {
      true, true, true, true, false};

  double at(int rel, int i, int j) const { return m[rel][size_t(i) * n + j]; }
};

// Sequence distance: entry (i, j) = j - i.
std::vector<double> seq_distance(int n);

// Undirected hop counts between all node pairs, LCA-based (exact on trees).
std::vector<double> shortest_paths(const AstTree& tree);

// Signed depth difference when one node is an ancestor of the other
// (ancestor -> descendant positive), sentinel 1000 otherwise, 0 on the
// diagonal.
std::vector<double> ancestor_distance(const AstTree& tree);

// Signed child-index difference for nodes sharing a parent, sentinel 1000
// otherwise, 0 on the diagonal.
std::vector<double> sibling_distance(const AstTree& tree);

// -log PPR_i(j) on the undirected row-normalized adjacency, solved densely;
// values above `max_dist` clamp to it.
std::vector<double> ppr_distance(const AstTree& tree, double alpha = kPprAlpha,
                                 double max_dist = kPprMaxDistance);

// Token-level relation set: sequence distance over token indices, the four
// AST relations read off each token's assigned node.
RelationSet token_relations(const AstTree& tree,
                            const std::vector<int>& token_node);

}  // namespace sct
