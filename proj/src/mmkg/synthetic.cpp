#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"

namespace desalign::mmkg {

namespace {

struct Edge {
  std::size_t u;
  std::size_t v;
  std::size_t relation;
};

DenseMatrix gaussian(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = scale * normal(rng);
  return m;
}

// Row-normalized clean features seen through a rank-limited projection of
// the latent vectors.
DenseMatrix project(const DenseMatrix& latent, std::size_t rank, std::size_t dim, std::mt19937_64& rng) {
  const std::size_t l = latent.cols();
  rank = std::max<std::size_t>(1, std::min(rank, l));
  DenseMatrix down = gaussian(l, rank, 1.0 / std::sqrt(static_cast<double>(l)), rng);
  DenseMatrix up = gaussian(rank, dim, 1.0 / std::sqrt(static_cast<double>(rank)), rng);
  return tensor::l2_normalize_rows(tensor::matmul(tensor::matmul(latent, down), up));
}

std::vector<Edge> rewire(const std::vector<Edge>& edges, std::size_t n, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution flip(std::min(rate, 1.0));
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Edge& e : edges) seen.insert(std::minmax(e.u, e.v));
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) {
    Edge kept = e;
    if (rate > 0.0 && flip(rng)) {
      for (int attempt = 0; attempt < 32; ++attempt) {
        const std::size_t w = node(rng);
        if (w == e.u || seen.count(std::minmax(e.u, w))) continue;
        seen.erase(std::minmax(e.u, e.v));
        seen.insert(std::minmax(e.u, w));
        kept.v = w;
        break;
      }
    }
    out.push_back(kept);
  }
  return out;
}

std::vector<double> draw_attr_counts(std::size_t n, double avg, std::mt19937_64& rng) {
  std::poisson_distribution<int> extra(std::max(avg - 1.0, 0.0));
  std::vector<double> counts(n);
  for (double& c : counts) c = 1.0 + extra(rng);
  return counts;
}

MMKG assemble(std::size_t n, const std::vector<Edge>& edges, const std::vector<std::size_t>& perm) {
  MMKG g;
  g.n = n;
  g.triples.reserve(edges.size());
  for (const Edge& e : edges) g.triples.push_back({perm[e.u], e.relation, perm[e.v]});
  std::sort(g.triples.begin(), g.triples.end());
  g.triples.erase(std::unique(g.triples.begin(), g.triples.end()), g.triples.end());
  return g;
}

void add_noisy_table(MMKG& g, Modality m, const DenseMatrix& clean, const std::vector<double>& row_noise,
                     const std::vector<std::size_t>& perm, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = clean.cols();
  const double per_entry = 1.0 / std::sqrt(static_cast<double>(d));
  FeatureTable table{DenseMatrix(g.n, d), std::vector<bool>(g.n, true)};
  for (std::size_t i = 0; i < g.n; ++i) {
    auto dst = table.values.row(perm[i]);
    for (std::size_t c = 0; c < d; ++c) {
      const double eps = normal(rng);
      dst[c] = clean(i, c) + row_noise[i] * per_entry * eps;
    }
  }
  g.features[m] = std::move(table);
}

}  // namespace

SyntheticPair generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 4) throw ConfigError("synthetic n must be at least 4");
  if (!(spec.noise >= 0.0)) throw ConfigError("synthetic noise must be non-negative");
  if (!(spec.overlap >= 0.0 && spec.overlap <= 1.0)) throw ConfigError("synthetic overlap must lie in [0, 1]");
  if (spec.clusters == 0 || spec.relations == 0) throw ConfigError("synthetic clusters and relations must be positive");
  auto dim_of = [&](Modality m) {
    auto it = spec.dims.find(m);
    if (it == spec.dims.end() || it->second == 0)
      throw ConfigError("synthetic dims." + std::string(modality_name(m)) + " must be positive");
    return it->second;
  };
  const std::size_t n = spec.n;
  const std::size_t latent_dim = dim_of(Modality::g);

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.clusters - 1);
  std::uniform_int_distribution<std::size_t> pick_node(0, n - 1);

  // ground-truth entities
  DenseMatrix centres = gaussian(spec.clusters, latent_dim, 1.0, rng);
  std::vector<std::size_t> cluster(n);
  for (auto& c : cluster) c = pick_cluster(rng);
  std::vector<std::vector<std::size_t>> members(spec.clusters);
  for (std::size_t i = 0; i < n; ++i) members[cluster[i]].push_back(i);
  DenseMatrix latent = gaussian(n, latent_dim, spec.specificity, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < latent_dim; ++c) latent(i, c) += centres(cluster[i], c);

  // ground-truth structure: mostly intra-cluster edges, relation ids tied to
  // the cluster pair
  const std::size_t target_edges = static_cast<std::size_t>(std::llround(spec.avg_degree * n / 2.0));
  std::bernoulli_distribution same_cluster(0.7);
  std::uniform_int_distribution<std::size_t> jitter(0, 1);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<Edge> truth;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto relation_of = [&](std::size_t u, std::size_t v) {
    return (cluster[u] * 7 + cluster[v] * 3 + jitter(rng)) % spec.relations;
  };
  // random tree over a shuffled order keeps the ground truth connected
  for (std::size_t k = 1; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> earlier(0, k - 1);
    const std::size_t u = order[k];
    const std::size_t v = order[earlier(rng)];
    seen.insert(std::minmax(u, v));
    truth.push_back({u, v, relation_of(u, v)});
  }
  std::size_t guard = 0;
  while (truth.size() < target_edges && guard++ < 50 * target_edges) {
    const std::size_t u = pick_node(rng);
    std::size_t v;
    if (same_cluster(rng) && members[cluster[u]].size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, members[cluster[u]].size() - 1);
      v = members[cluster[u]][pick(rng)];
    } else {
      v = pick_node(rng);
    }
    if (u == v || !seen.insert(std::minmax(u, v)).second) continue;
    truth.push_back({u, v, relation_of(u, v)});
  }

  // shared clean features
  std::map<Modality, DenseMatrix> clean;
  for (Modality m : {Modality::t, Modality::v})
    if (std::count(spec.modalities.begin(), spec.modalities.end(), m))
      clean.emplace(m, project(latent, spec.modality_rank, dim_of(m), rng));
  const bool want_r = std::count(spec.modalities.begin(), spec.modalities.end(), Modality::r) != 0;
  const std::size_t dim_r = want_r ? dim_of(Modality::r) : 0;

  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<std::size_t> perm = identity;
  std::shuffle(perm.begin(), perm.end(), rng);

  SyntheticPair out;
  for (int side = 0; side < 2; ++side) {
    const std::vector<std::size_t>& p = side == 0 ? identity : perm;
    std::vector<Edge> edges = rewire(truth, n, spec.noise, rng);
    MMKG g = assemble(n, edges, p);
    std::vector<double> counts = draw_attr_counts(n, spec.avg_attributes, rng);
    for (const auto& [m, base] : clean) {
      std::vector<double> row_noise(n, spec.noise);
      if (m == Modality::t)
        for (std::size_t i = 0; i < n; ++i) row_noise[i] = spec.noise * std::sqrt(spec.avg_attributes / counts[i]);
      add_noisy_table(g, m, base, row_noise, p, rng);
    }
    if (want_r) g.features[Modality::r] = FeatureTable{relation_bag_of_words(g, dim_r), std::vector<bool>(n, true)};
    if (clean.count(Modality::t)) {
      g.attr_counts.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) g.attr_counts[p[i]] = counts[i];
    }
    (side == 0 ? out.source : out.target) = std::move(g);
  }

  std::vector<AlignmentPair> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {i, perm[i]};
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const std::size_t n_train = std::min(ceil_count(spec.overlap * static_cast<double>(n)), n);
  out.seeds.train.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.seeds.test.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train), pairs.end());
  return out;
}

}  // namespace desalign::mmkg
