#pragma once

#include <string>
#include <vector>

namespace sct {

struct ScoreReport {
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // micro (pooled counts)
  double sample_precision = 0.0, sample_recall = 0.0, sample_f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
  int n_snippets = 0;
};

// Subtoken-level F1 over predicted vs reference method names. `multiset`
// matches duplicated subtokens by count (the default); set semantics are
// available behind the flag. Micro pools TP/FP/FN over all snippets before
// computing P/R/F1; sample averages per-snippet F1. Throws DataError on a
// length mismatch between the two lists.
ScoreReport micro_f1(const std::vector<std::vector<std::string>>& predictions,
                     const std::vector<std::vector<std::string>>& references,
                     bool multiset = true);
ScoreReport sample_f1(const std::vector<std::vector<std::string>>& predictions,
                      const std::vector<std::vector<std::string>>& references,
                      bool multiset = true);

// Fraction of label subtokens that also occur in the snippet's body
// subtokens. An empty label set scores 0 (with a warning on stderr).
double label_overlap(const std::vector<std::vector<std::string>>& labels,
                     const std::vector<std::vector<std::string>>& bodies);

}  // namespace sct
