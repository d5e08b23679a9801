#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <string>

#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"

namespace desalign::mmkg {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::g: return "g";
    case Modality::r: return "r";
    case Modality::t: return "t";
    case Modality::v: return "v";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  for (Modality m : kAllModalities)
    if (modality_name(m) == name) return m;
  throw StructuralError("unknown modality '" + std::string(name) + "' (expected g, r, t or v)");
}

std::size_t FeatureTable::present_count() const {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
}

const FeatureTable& MMKG::table(Modality m) const {
  auto it = features.find(m);
  if (it == features.end()) throw StructuralError("graph has no '" + std::string(modality_name(m)) + "' table");
  return it->second;
}

FeatureTable& MMKG::table(Modality m) {
  auto it = features.find(m);
  if (it == features.end()) throw StructuralError("graph has no '" + std::string(modality_name(m)) + "' table");
  return it->second;
}

void MMKG::validate() const {
  for (const Triple& t : triples) {
    if (t.head >= n || t.tail >= n) {
      throw StructuralError("triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " +
                            std::to_string(t.tail) + ") references an entity >= " + std::to_string(n));
    }
  }
  for (const auto& [m, table] : features) {
    if (m == Modality::g) throw StructuralError("structure has no feature table");
    if (table.values.rows() != n || table.present.size() != n) {
      throw StructuralError("table '" + std::string(modality_name(m)) + "' does not cover " + std::to_string(n) +
                            " entities");
    }
    if (!table.values.all_finite())
      throw StructuralError("table '" + std::string(modality_name(m)) + "' holds non-finite values");
  }
  if (!attr_counts.empty() && attr_counts.size() != n)
    throw StructuralError("attribute counts cover " + std::to_string(attr_counts.size()) + " of " +
                          std::to_string(n) + " entities");
}

void SeedAlignments::validate(std::size_t n_source, std::size_t n_target) const {
  std::set<std::size_t> src;
  std::set<std::size_t> tgt;
  for (const auto* split : {&train, &test}) {
    for (const AlignmentPair& p : *split) {
      if (p.source >= n_source || p.target >= n_target)
        throw StructuralError("alignment (" + std::to_string(p.source) + ", " + std::to_string(p.target) +
                              ") out of range");
      if (!src.insert(p.source).second)
        throw StructuralError("source entity " + std::to_string(p.source) + " aligned twice");
      if (!tgt.insert(p.target).second)
        throw StructuralError("target entity " + std::to_string(p.target) + " aligned twice");
    }
  }
}

std::vector<bool> ConsistencyPartition::consistent_mask(std::size_t n) const {
  std::vector<bool> mask(n, false);
  for (std::size_t i : consistent) mask.at(i) = true;
  return mask;
}

std::size_t ceil_count(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace desalign::mmkg
