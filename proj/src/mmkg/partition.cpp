#include <algorithm>
#include <cmath>
#include <limits>

#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"

namespace desalign::mmkg {

std::vector<double> attribute_counts(const MMKG& g) {
  if (!g.attr_counts.empty()) return g.attr_counts;
  if (!g.has(Modality::t)) return {};
  const FeatureTable& t = g.table(Modality::t);
  std::vector<double> counts(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!t.present[i]) continue;
    for (double v : t.values.row(i))
      if (v != 0.0) counts[i] += 1.0;
  }
  return counts;
}

ConsistencyPartition partition_entities(const MMKG& g, double attr_count_percentile) {
  if (!(attr_count_percentile > 0.0 && attr_count_percentile < 1.0))
    throw ConfigError("attribute-count percentile must lie in (0, 1)");

  std::vector<bool> missing(g.n, false);
  for (const auto& [m, table] : g.features)
    for (std::size_t i = 0; i < g.n; ++i)
      if (!table.present[i]) missing[i] = true;

  const std::vector<double> counts = attribute_counts(g);
  double threshold = -std::numeric_limits<double>::infinity();
  if (!counts.empty() && g.n > 0) {
    std::vector<double> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t pos = std::min(ceil_count(attr_count_percentile * static_cast<double>(g.n)), g.n - 1);
    threshold = sorted[pos];
  }

  ConsistencyPartition p;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (missing[i]) {
      p.missing.push_back(i);
    } else if (!counts.empty() && counts[i] < threshold) {
      p.count_deficient.push_back(i);
    } else {
      p.consistent.push_back(i);
    }
  }
  return p;
}

}  // namespace desalign::mmkg
