#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"

namespace desalign::mmkg {

namespace {

std::mt19937_64 modality_rng(std::uint64_t seed, Modality m) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m) + 1u};
  return std::mt19937_64(seq);
}

// Fills the rows flagged in `fill` from the moments of the present rows.
void impute_rows(FeatureTable& table, const std::vector<bool>& fill, std::mt19937_64& rng, Modality m,
                 ImputationReport* report) {
  const std::size_t n = table.values.rows();
  const std::size_t d = table.values.cols();
  const std::size_t present = table.present_count();
  std::vector<double> mean(d, 0.0);
  std::vector<double> stdev(d, 0.0);
  if (present == 0) {
    if (report)
      report->warnings.push_back("modality '" + std::string(modality_name(m)) +
                                 "' has no present rows; absent rows set to zero");
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (!table.present[i]) continue;
      for (std::size_t c = 0; c < d; ++c) mean[c] += table.values(i, c);
    }
    for (double& v : mean) v /= static_cast<double>(present);
    for (std::size_t i = 0; i < n; ++i) {
      if (!table.present[i]) continue;
      for (std::size_t c = 0; c < d; ++c) {
        const double dev = table.values(i, c) - mean[c];
        stdev[c] += dev * dev;
      }
    }
    for (double& v : stdev) v = std::sqrt(v / static_cast<double>(present));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!fill[i]) continue;
    for (std::size_t c = 0; c < d; ++c) table.values(i, c) = mean[c] + stdev[c] * normal(rng);
    if (report) ++report->rows_imputed;
  }
}

}  // namespace

MMKG impute_initial(const MMKG& g, std::uint64_t seed, ImputationReport* report) {
  MMKG out = g;
  for (auto& [m, table] : out.features) {
    std::vector<bool> fill(table.present.size());
    for (std::size_t i = 0; i < fill.size(); ++i) fill[i] = !table.present[i];
    if (std::none_of(fill.begin(), fill.end(), [](bool b) { return b; })) continue;
    std::mt19937_64 rng = modality_rng(seed, m);
    impute_rows(table, fill, rng, m, report);
  }
  return out;
}

MMKG apply_modality_mask(const MMKG& g, Modality modality, double keep_ratio, std::uint64_t seed) {
  if (modality == Modality::g) throw StructuralError("structure cannot be masked; drop it from the encoder instead");
  if (!(keep_ratio >= 0.0 && keep_ratio <= 1.0)) throw ConfigError("keep ratio must lie in [0, 1]");
  const FeatureTable& source = g.table(modality);

  std::vector<std::size_t> order(g.n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng = modality_rng(seed ^ 0x6d61736bULL, modality);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t keep = std::min(ceil_count(keep_ratio * static_cast<double>(g.n)), g.n);

  std::vector<bool> kept(g.n, false);
  for (std::size_t k = 0; k < keep; ++k) kept[order[k]] = true;

  MMKG out = g;
  FeatureTable& table = out.table(modality);
  std::vector<bool> fill(g.n, false);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (source.present[i] && !kept[i]) {
      table.present[i] = false;
      fill[i] = true;
    }
  }
  if (std::any_of(fill.begin(), fill.end(), [](bool b) { return b; })) {
    std::mt19937_64 draw = modality_rng(seed, modality);
    impute_rows(table, fill, draw, modality, nullptr);
  }
  return out;
}

}  // namespace desalign::mmkg
