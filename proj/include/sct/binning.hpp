#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sct/relations.hpp"

namespace sct {

// One binned distance matrix: every entry mapped to a bin index plus one
// representative value per bin. Representatives are strictly increasing;
// an occupied bin's representative is the mean of its members (the exact
// value when the bin holds a single distinct value), an empty bin's is its
// midpoint.
struct BinnedRelation {
  int k = 0;
  std::vector<uint8_t> bin_index;  // n x n, row-major
  std::vector<double> bin_value;   // k representatives
  std::vector<double> edges;       // k+1 monotone bin edges (diagnostic)
};

struct BinnedRelations {
  int n = 0;
  int k = 0;
  std::array<BinnedRelation, kNumRelations> rel;
};

// Area-based exponential binning. Discrete relations reserve singleton bins
// for the integers -4..4; the remaining budget is split between the negative
// and positive tails, each swept outward from zero cutting a new bin once
// (bin width x occupancy) exceeds `growth` times the previous bin's area.
// When a side's distinct values fit its budget every value gets its own bin,
// so binning is lossless whenever k is large enough.
//
// Requires 11 <= k <= 256 for discrete relations (9 reserved bins plus one
// per tail), 2 <= k <= 256 otherwise.
BinnedRelation bin_matrix(const std::vector<double>& values, int n, int k,
                          double growth, bool discrete);

BinnedRelations bin_relations(const RelationSet& rs, int k = 32,
                              double growth = 1.3);

}  // namespace sct
