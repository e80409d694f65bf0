#include "sct/metrics.hpp"

#include <algorithm>
#include <iostream>
#include <map>

#include "sct/error.hpp"

namespace sct {

namespace {

struct Counts {
  long tp = 0, fp = 0, fn = 0;
};

Counts confusion(const std::vector<std::string>& pred,
                 const std::vector<std::string>& ref, bool multiset) {
  std::map<std::string, long> pc, rc;
  for (const auto& s : pred) ++pc[s];
  for (const auto& s : ref) ++rc[s];
  if (!multiset) {
    for (auto& [_, c] : pc) c = 1;
    for (auto& [_, c] : rc) c = 1;
  }
  Counts out;
  for (const auto& [s, c] : pc) {
    auto it = rc.find(s);
    const long matched = it == rc.end() ? 0 : std::min(c, it->second);
    out.tp += matched;
    out.fp += c - matched;
  }
  for (const auto& [s, c] : rc) {
    auto it = pc.find(s);
    const long matched = it == pc.end() ? 0 : std::min(c, it->second);
    out.fn += c - matched;
  }
  return out;
}

double safe_div(double a, double b) { return b > 0.0 ? a / b : 0.0; }

double f1_of(double p, double r) {
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

ScoreReport score(const std::vector<std::vector<std::string>>& predictions,
                  const std::vector<std::vector<std::string>>& references,
                  bool multiset) {
  if (predictions.size() != references.size()) {
    throw DataError("micro_f1: prediction/reference list length mismatch (" +
                    std::to_string(predictions.size()) + " vs " +
                    std::to_string(references.size()) + ")");
  }
  ScoreReport rep;
  rep.n_snippets = static_cast<int>(predictions.size());
  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const Counts c = confusion(predictions[i], references[i], multiset);
    rep.tp += c.tp;
    rep.fp += c.fp;
    rep.fn += c.fn;
    const double p = safe_div(double(c.tp), double(c.tp + c.fp));
    const double r = safe_div(double(c.tp), double(c.tp + c.fn));
    sp += p;
    sr += r;
    sf += f1_of(p, r);
  }
  rep.precision = safe_div(double(rep.tp), double(rep.tp + rep.fp));
  rep.recall = safe_div(double(rep.tp), double(rep.tp + rep.fn));
  rep.f1 = f1_of(rep.precision, rep.recall);
  if (rep.n_snippets > 0) {
    rep.sample_precision = sp / rep.n_snippets;
    rep.sample_recall = sr / rep.n_snippets;
    rep.sample_f1 = sf / rep.n_snippets;
  }
  return rep;
}

}  // namespace

ScoreReport micro_f1(const std::vector<std::vector<std::string>>& predictions,
                     const std::vector<std::vector<std::string>>& references,
                     bool multiset) {
  return score(predictions, references, multiset);
}

ScoreReport sample_f1(const std::vector<std::vector<std::string>>& predictions,
                      const std::vector<std::vector<std::string>>& references,
                      bool multiset) {
  return score(predictions, references, multiset);
}

double label_overlap(const std::vector<std::vector<std::string>>& labels,
                     const std::vector<std::vector<std::string>>& bodies) {
  if (labels.size() != bodies.size()) {
    throw DataError("label_overlap: list length mismatch");
  }
  long total = 0, present = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    std::map<std::string, long> body;
    for (const auto& s : bodies[i]) ++body[s];
    for (const auto& s : labels[i]) {
      ++total;
      if (body.count(s)) ++present;
    }
  }
  if (total == 0) {
    std::cerr << "label_overlap: no label subtokens, defining overlap as 0\n";
    return 0.0;
  }
  return double(present) / double(total);
}

}  // namespace sct
