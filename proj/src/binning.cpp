#include "sct/binning.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sct/error.hpp"

namespace sct {

namespace {

// Midpoint that is guaranteed to classify `a` left of `b` even for
// adjacent doubles.
double guarded_mid(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m > a ? m : b;
}

// Builds the right edges of one tail, sweeping outward from `start`.
// `dist` holds (value, count), ascending, all values >= start. Produces
// exactly `budget` edges. Values get singleton bins when they fit the
// budget; otherwise a new bin is cut once its area (width x occupancy)
// exceeds `growth` times the previous bin's area, with the last bin
// absorbing any remainder.
std::vector<double> build_side(double start,
                               const std::vector<std::pair<double, long>>& dist,
                               int budget, double growth) {
  std::vector<double> edges;
  const int m = static_cast<int>(dist.size());
  if (budget == 0) {
    if (m != 0) throw DataError("binning: side budget exhausted");
    return edges;
  }
  edges.reserve(budget);
  auto right_extent = [&](int i) {
    return i + 1 < m ? guarded_mid(dist[i].first, dist[i + 1].first)
                     : dist[m - 1].first + 1.0;
  };
  if (m <= budget) {
    for (int i = 0; i < m; ++i) edges.push_back(right_extent(i));
  } else {
    double prev_area = -1.0;
    double left = start;
    long cum = 0;
    for (int i = 0; i < m; ++i) {
      cum += dist[i].second;
      if (static_cast<int>(edges.size()) == budget - 1) continue;  // last bin
      const double ext = right_extent(i);
      const bool close =
          prev_area < 0.0 || (ext - left) * double(cum) > growth * prev_area;
      if (close) {
        edges.push_back(ext);
        prev_area = (ext - left) * double(cum);
        left = ext;
        cum = 0;
      }
    }
    if (cum > 0) edges.push_back(dist[m - 1].first + 1.0);
  }
  // Leftover budget: empty bins of exponentially growing width past the end.
  double w = 1.0;
  while (static_cast<int>(edges.size()) < budget) {
    edges.push_back((edges.empty() ? start : edges.back()) + w);
    w *= growth;
  }
  return edges;
}

}  // namespace

BinnedRelation bin_matrix(const std::vector<double>& values, int n, int k,
                          double growth, bool discrete) {
  if (k > 256) throw DataError("binning: k > 256 does not fit byte indices");
  if (discrete && k < 11) {
    throw DataError("binning: k must be >= 11 for discrete relations "
                    "(9 reserved bins plus one per tail)");
  }
  if (!discrete && k < 2) throw DataError("binning: k must be >= 2");

  std::map<double, long> hist;
  for (double v : values) ++hist[v];

  const double boundary = discrete ? 4.5 : 0.0;
  std::vector<std::pair<double, long>> pos, neg;  // neg mirrored to t = -v
  for (const auto& [v, c] : hist) {
    if (discrete && v > -4.5 && v < 4.5) continue;  // reserved singletons
    if (v >= boundary || (!discrete && v >= 0.0)) {
      pos.emplace_back(v, c);
    } else {
      neg.emplace_back(-v, c);
    }
  }
  std::sort(neg.begin(), neg.end());

  const int budget = discrete ? k - 9 : k;
  const int dn = static_cast<int>(neg.size());
  const int dp = static_cast<int>(pos.size());
  int bn;
  if (dn + dp <= budget) {
    bn = dn;
  } else {
    bn = static_cast<int>(std::llround(double(budget) * dn / (dn + dp)));
    if (dn > 0 && bn < 1) bn = 1;
    if (dp > 0 && bn > budget - 1) bn = budget - 1;
    if (dp == 0) bn = budget;
  }
  const int bp = budget - bn;

  const std::vector<double> pos_edges =
      build_side(boundary, pos, bp, growth);
  const std::vector<double> neg_edges_t =
      build_side(boundary, neg, bn, growth);

  BinnedRelation out;
  out.k = k;
  out.edges.reserve(k + 1);
  for (auto it = neg_edges_t.rbegin(); it != neg_edges_t.rend(); ++it) {
    out.edges.push_back(-*it);
  }
  if (discrete) {
    for (int i = -4; i <= 5; ++i) out.edges.push_back(i - 0.5);
  } else {
    out.edges.push_back(0.0);
  }
  for (double e : pos_edges) out.edges.push_back(e);
  if (static_cast<int>(out.edges.size()) != k + 1) {
    throw DataError("binning: internal edge count mismatch");
  }

  // Classify distinct values and collect per-bin statistics.
  struct BinStat {
    double sum = 0.0;
    long count = 0;
    int n_distinct = 0;
    double sole = 0.0;
  };
  std::vector<BinStat> stats(k);
  auto bin_of = [&](double v) {
    int idx = static_cast<int>(
        std::upper_bound(out.edges.begin(), out.edges.end(), v) -
        out.edges.begin()) - 1;
    if (idx < 0) idx = 0;
    if (idx >= k) idx = k - 1;
    return idx;
  };
  for (const auto& [v, c] : hist) {
    BinStat& s = stats[bin_of(v)];
    s.sum += v * double(c);
    s.count += c;
    s.n_distinct += 1;
    s.sole = v;
  }
  out.bin_value.resize(k);
  for (int b = 0; b < k; ++b) {
    const BinStat& s = stats[b];
    if (s.n_distinct == 1) {
      out.bin_value[b] = s.sole;  // exact when the bin is lossless
    } else if (s.count > 0) {
      out.bin_value[b] = s.sum / double(s.count);
    } else {
      out.bin_value[b] = (out.edges[b] + out.edges[b + 1]) / 2.0;
    }
  }
  for (int b = 1; b < k; ++b) {
    if (!(out.bin_value[b] > out.bin_value[b - 1])) {
      throw DataError("binning: representatives not strictly increasing");
    }
  }
  out.bin_index.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    out.bin_index[i] = static_cast<uint8_t>(bin_of(values[i]));
  }
  (void)n;
  return out;
}

BinnedRelations bin_relations(const RelationSet& rs, int k, double growth) {
  BinnedRelations out;
  out.n = rs.n;
  out.k = k;
  for (int r = 0; r < kNumRelations; ++r) {
    out.rel[r] = bin_matrix(rs.m[r], rs.n, k, growth, RelationSet::discrete[r]);
  }
  return out;
}

}  // namespace sct
