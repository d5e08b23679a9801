#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/sparse.hpp"

namespace desalign::mmkg {

using tensor::DenseMatrix;
using tensor::SparseMatrix;

/// Structure, relations, text attributes, vision.
enum class Modality { g, r, t, v };

inline constexpr std::array<Modality, 4> kAllModalities{Modality::g, Modality::r, Modality::t, Modality::v};
/// Modalities that carry an input feature table. Structure is learned.
inline constexpr std::array<Modality, 3> kTableModalities{Modality::r, Modality::t, Modality::v};

std::string_view modality_name(Modality m);
/// Accepts "g", "r", "t", "v"; throws StructuralError otherwise.
Modality parse_modality(std::string_view name);

struct Triple {
  std::size_t head;
  std::size_t relation;
  std::size_t tail;

  auto operator<=>(const Triple&) const = default;
};

struct FeatureTable {
  DenseMatrix values;         ///< n × d_m
  std::vector<bool> present;  ///< n flags; false rows hold imputed values

  std::size_t present_count() const;
  bool operator==(const FeatureTable&) const = default;
};

struct MMKG {
  std::size_t n = 0;
  std::vector<Triple> triples;
  std::map<Modality, FeatureTable> features;
  /// Attributes per entity. Empty when not supplied.
  std::vector<double> attr_counts;

  bool has(Modality m) const { return features.count(m) != 0; }
  const FeatureTable& table(Modality m) const;
  FeatureTable& table(Modality m);
  /// Throws StructuralError when an index, shape, or mask length is off.
  void validate() const;

  bool operator==(const MMKG&) const = default;
};

struct AlignmentPair {
  std::size_t source;
  std::size_t target;

  auto operator<=>(const AlignmentPair&) const = default;
};

struct SeedAlignments {
  std::vector<AlignmentPair> train;
  std::vector<AlignmentPair> test;

  /// One-to-one on each side across both splits and indices in range.
  void validate(std::size_t n_source, std::size_t n_target) const;
  bool operator==(const SeedAlignments&) const = default;
};

struct ConsistencyPartition {
  std::vector<std::size_t> consistent;      ///< E_c
  std::vector<std::size_t> count_deficient; ///< E_o1
  std::vector<std::size_t> missing;         ///< E_o2

  /// true for every entity in E_c
  std::vector<bool> consistent_mask(std::size_t n) const;
};

struct GraphOperators {
  SparseMatrix adjacency;        ///< A, or A + I with self-loops
  std::vector<double> degree;    ///< row sums of `adjacency`
  SparseMatrix normalized;       ///< Ã
  SparseMatrix laplacian;        ///< Δ = I − Ã
  bool self_loops = true;
};

// ---- ingestion --------------------------------------------------------------

struct MMKGPaths {
  std::string triples;
  std::map<Modality, std::string> features;
  std::map<Modality, std::string> masks;
  std::string attr_counts;  ///< optional
  /// Entity count when no feature table is given; 0 means max index + 1.
  std::size_t entity_count = 0;
};

/// Reads a graph in the text formats documented in the README. Absent rows
/// are zero-filled; call impute_initial afterwards. Throws IngestionError
/// with the offending line.
MMKG load_mmkg(const MMKGPaths& paths);
SeedAlignments load_alignments(const std::string& path);

void write_triples(const MMKG& g, const std::string& path);
void write_features(const FeatureTable& table, const std::string& values_path, const std::string& mask_path);
void write_attr_counts(const std::vector<double>& counts, const std::string& path);
void write_alignments(const SeedAlignments& seeds, const std::string& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// ---- operators and partitions ----------------------------------------------

/// Undirected, unweighted adjacency from the triples (relation and direction
/// ignored, self-triples dropped).
SparseMatrix structural_adjacency(const MMKG& g);
GraphOperators build_operators(const SparseMatrix& adjacency, bool self_loops);
GraphOperators build_operators(const MMKG& g, bool self_loops);

/// Per-entity attribute counts: the supplied vector, else the number of
/// nonzero entries in the t table, else empty.
std::vector<double> attribute_counts(const MMKG& g);

ConsistencyPartition partition_entities(const MMKG& g, double attr_count_percentile = 0.25);

/// Row-L2-normalized bag of relation ids over the `vocab` most frequent
/// relations (ties broken by smaller id). Every triple counts for both its
/// head and its tail.
DenseMatrix relation_bag_of_words(const MMKG& g, std::size_t vocab);

// ---- missing modalities -----------------------------------------------------

struct ImputationReport {
  std::vector<std::string> warnings;
  std::size_t rows_imputed = 0;
};

/// Replaces every absent row by a draw from N(mean, std²) per dimension,
/// with moments taken over the present rows. Modalities without any present
/// row are zero-filled and a warning is recorded.
MMKG impute_initial(const MMKG& g, std::uint64_t seed, ImputationReport* report = nullptr);

/// Keeps the modality for ⌈keep_ratio·n⌉ entities chosen by a seeded
/// shuffle and clears the presence flag for the rest; newly absent rows are
/// re-imputed. Throws StructuralError for g or a missing table.
MMKG apply_modality_mask(const MMKG& g, Modality modality, double keep_ratio, std::uint64_t seed);

// ---- synthetic data ---------------------------------------------------------

struct SyntheticSpec {
  std::size_t n = 500;
  std::vector<Modality> modalities{Modality::g, Modality::r, Modality::t, Modality::v};
  /// dims.g is the latent dimension of the ground-truth entities.
  std::map<Modality, std::size_t> dims{{Modality::g, 16}, {Modality::r, 64}, {Modality::t, 64}, {Modality::v, 64}};
  double noise = 0.05;
  double overlap = 0.3;
  std::uint64_t seed = 1;
  double avg_degree = 4.0;
  std::size_t relations = 24;
  std::size_t clusters = 12;
  /// Weight of the entity-specific part of a latent vector relative to its
  /// cluster centre.
  double specificity = 0.6;
  /// Rank of the latent projection each feature modality observes.
  std::size_t modality_rank = 2;
  double avg_attributes = 6.0;
};

struct SyntheticPair {
  MMKG source;
  MMKG target;
  SeedAlignments seeds;
};

/// Throws ConfigError for n < 4, noise < 0, or overlap outside [0, 1].
SyntheticPair generate_synthetic(const SyntheticSpec& spec);

/// ⌈x⌉ that ignores floating-point dust just above an integer.
std::size_t ceil_count(double x);

}  // namespace desalign::mmkg
