#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"

namespace desalign::mmkg {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool blank(std::string_view line) { return split_ws(line).empty(); }

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path, 0, "cannot open file");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError(path, 0, "cannot open file for writing");
  return out;
}

std::size_t parse_index(std::string_view tok, const std::string& path, std::size_t line, const char* what) {
  std::size_t v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw IngestionError(path, line, std::string("invalid ") + what + " '" + std::string(tok) + "'");
  return v;
}

double parse_double(std::string_view tok, const std::string& path, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw IngestionError(path, line, "invalid number '" + std::string(tok) + "'");
  return v;
}

struct RawTriple {
  Triple triple;
  std::size_t line;
};

std::vector<RawTriple> read_triples(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<RawTriple> out;
  std::set<Triple> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto tok = split_ws(line);
    if (tok.size() != 3) throw IngestionError(path, lineno, "expected 'head relation tail'");
    Triple t{parse_index(tok[0], path, lineno, "head id"), parse_index(tok[1], path, lineno, "relation id"),
             parse_index(tok[2], path, lineno, "tail id")};
    if (!seen.insert(t).second) throw IngestionError(path, lineno, "duplicate triple");
    out.push_back({t, lineno});
  }
  return out;
}

DenseMatrix read_feature_values(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  bool header = false;
  while (!header && std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto tok = split_ws(line);
    if (tok.size() != 2) throw IngestionError(path, lineno, "expected header 'n d'");
    n = parse_index(tok[0], path, lineno, "row count");
    d = parse_index(tok[1], path, lineno, "column count");
    header = true;
  }
  if (!header) throw IngestionError(path, lineno, "missing header");
  DenseMatrix values(n, d);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (row >= n) throw IngestionError(path, lineno, "more than " + std::to_string(n) + " rows");
    auto tok = split_ws(line);
    if (tok.size() != d)
      throw IngestionError(path, lineno, "row has " + std::to_string(tok.size()) + " values, expected " +
                                             std::to_string(d));
    for (std::size_t c = 0; c < d; ++c) values(row, c) = parse_double(tok[c], path, lineno);
    ++row;
  }
  if (row != n) throw IngestionError(path, lineno, "expected " + std::to_string(n) + " rows, found " +
                                                       std::to_string(row));
  return values;
}

std::vector<bool> read_mask(const std::string& path, std::size_t n) {
  std::ifstream in = open_in(path);
  std::vector<bool> mask;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto tok = split_ws(line);
    if (tok.size() != 1 || (tok[0] != "0" && tok[0] != "1"))
      throw IngestionError(path, lineno, "mask line must be 0 or 1");
    if (mask.size() == n) throw IngestionError(path, lineno, "more than " + std::to_string(n) + " mask lines");
    mask.push_back(tok[0] == "1");
  }
  if (mask.size() != n)
    throw IngestionError(path, lineno, "expected " + std::to_string(n) + " mask lines, found " +
                                           std::to_string(mask.size()));
  return mask;
}

std::vector<double> read_counts(const std::string& path, std::size_t n) {
  std::ifstream in = open_in(path);
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto tok = split_ws(line);
    if (tok.size() != 1) throw IngestionError(path, lineno, "expected one count per line");
    const double v = parse_double(tok[0], path, lineno);
    if (v < 0.0) throw IngestionError(path, lineno, "negative attribute count");
    out.push_back(v);
  }
  if (out.size() != n)
    throw IngestionError(path, lineno, "expected " + std::to_string(n) + " counts, found " +
                                           std::to_string(out.size()));
  return out;
}

}  // namespace

MMKG load_mmkg(const MMKGPaths& paths) {
  MMKG g;
  const std::vector<RawTriple> raw = read_triples(paths.triples);

  std::map<Modality, DenseMatrix> values;
  for (const auto& [m, path] : paths.features) {
    if (m == Modality::g) throw IngestionError(path, 0, "structure does not take a feature file");
    values.emplace(m, read_feature_values(path));
  }

  std::size_t n = paths.entity_count;
  for (const auto& [m, v] : values) {
    if (n == 0) n = v.rows();
    if (v.rows() != n)
      throw IngestionError(paths.features.at(m), 1,
                           "header declares " + std::to_string(v.rows()) + " entities, expected " + std::to_string(n));
  }
  if (n == 0)
    for (const RawTriple& r : raw) n = std::max({n, r.triple.head + 1, r.triple.tail + 1});
  g.n = n;

  for (const RawTriple& r : raw) {
    if (r.triple.head >= n || r.triple.tail >= n)
      throw IngestionError(paths.triples, r.line, "entity index out of range for " + std::to_string(n) +
                                                      " entities");
    g.triples.push_back(r.triple);
  }

  for (auto& [m, v] : values) {
    FeatureTable table;
    auto mit = paths.masks.find(m);
    table.present = mit == paths.masks.end() ? std::vector<bool>(n, true) : read_mask(mit->second, n);
    for (std::size_t i = 0; i < n; ++i)
      if (!table.present[i])
        for (double& x : v.row(i)) x = 0.0;
    table.values = std::move(v);
    g.features.emplace(m, std::move(table));
  }
  for (const auto& [m, path] : paths.masks)
    if (!values.count(m)) throw IngestionError(path, 0, "mask given without a feature file");

  if (!paths.attr_counts.empty()) g.attr_counts = read_counts(paths.attr_counts, n);
  return g;
}

SeedAlignments load_alignments(const std::string& path) {
  std::ifstream in = open_in(path);
  SeedAlignments seeds;
  std::set<std::size_t> src;
  std::set<std::size_t> tgt;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto tok = split_ws(line);
    if (tok.size() != 2 && tok.size() != 3)
      throw IngestionError(path, lineno, "expected 'source target [train|test]'");
    AlignmentPair p{parse_index(tok[0], path, lineno, "source id"), parse_index(tok[1], path, lineno, "target id")};
    if (!src.insert(p.source).second) throw IngestionError(path, lineno, "source entity aligned twice");
    if (!tgt.insert(p.target).second) throw IngestionError(path, lineno, "target entity aligned twice");
    if (tok.size() == 2 || tok[2] == "train") {
      seeds.train.push_back(p);
    } else if (tok[2] == "test") {
      seeds.test.push_back(p);
    } else {
      throw IngestionError(path, lineno, "split tag must be 'train' or 'test'");
    }
  }
  return seeds;
}

void write_triples(const MMKG& g, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const Triple& t : g.triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

void write_features(const FeatureTable& table, const std::string& values_path, const std::string& mask_path) {
  std::ofstream out = open_out(values_path);
  out << table.values.rows() << ' ' << table.values.cols() << '\n';
  for (std::size_t r = 0; r < table.values.rows(); ++r) {
    auto row = table.values.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << format_double(row[c]);
    }
    out << '\n';
  }
  std::ofstream mask = open_out(mask_path);
  for (bool p : table.present) mask << (p ? '1' : '0') << '\n';
}

void write_attr_counts(const std::vector<double>& counts, const std::string& path) {
  std::ofstream out = open_out(path);
  for (double c : counts) out << format_double(c) << '\n';
}

void write_alignments(const SeedAlignments& seeds, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const AlignmentPair& p : seeds.train) out << p.source << '\t' << p.target << "\ttrain\n";
  for (const AlignmentPair& p : seeds.test) out << p.source << '\t' << p.target << "\ttest\n";
}

}  // namespace desalign::mmkg
