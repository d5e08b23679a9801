#include "desalign/encoder/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "desalign/errors.hpp"

namespace desalign::encoder {

namespace {

class LineReader {
 public:
  LineReader(std::istream& in, std::string label) : in_(in), label_(std::move(label)) {}

  std::vector<std::string> next() {
    std::string line;
    if (!std::getline(in_, line)) throw IngestionError(label_, line_ + 1, "unexpected end of checkpoint");
    ++line_;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string t; ss >> t;) tokens.push_back(t);
    return tokens;
  }

  std::vector<std::string> expect(const std::string& key, std::size_t values) {
    auto tokens = next();
    if (tokens.empty() || tokens[0] != key || tokens.size() != values + 1)
      fail("expected '" + key + "' with " + std::to_string(values) + " value(s)");
    return tokens;
  }

  [[noreturn]] void fail(const std::string& what) const { throw IngestionError(label_, line_, what); }

  std::size_t to_size(const std::string& s) const {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("'" + s + "' is not a count");
    return v;
  }

  double to_double(const std::string& s) const {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("'" + s + "' is not a number");
    return v;
  }

 private:
  std::istream& in_;
  std::string label_;
  std::size_t line_ = 0;
};

}  // namespace

void write_checkpoint(const EncoderParams& params, std::ostream& out) {
  const EncoderConfig& c = params.config;
  out << "desalign-checkpoint " << kCheckpointVersion << '\n';
  out << "d " << c.d << '\n';
  out << "attention_heads " << c.attention_heads << '\n';
  out << "gat_layers " << c.gat_layers << '\n';
  out << "gat_heads " << c.gat_heads << '\n';
  out << "gat_slope " << mmkg::format_double(c.gat_slope) << '\n';
  out << "ffn_dim " << c.ffn_dim << '\n';
  out << "ln_eps " << mmkg::format_double(c.ln_eps) << '\n';
  out << "modalities";
  for (Modality m : c.modalities) out << ' ' << mmkg::modality_name(m);
  out << '\n';
  out << "entities " << params.entities << '\n';
  out << "input_dims " << params.input_dims.size() << '\n';
  for (const auto& [m, dim] : params.input_dims) out << mmkg::modality_name(m) << ' ' << dim << '\n';

  std::vector<std::pair<std::string, const DenseMatrix*>> named;
  visit(static_cast<const ParamSet<DenseMatrix>&>(params),
        [&](const std::string& name, const DenseMatrix& m) { named.emplace_back(name, &m); });
  out << "tensors " << named.size() << '\n';
  for (const auto& [name, m] : named) {
    out << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
    for (std::size_t r = 0; r < m->rows(); ++r) {
      auto row = m->row(r);
      for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << mmkg::format_double(row[j]);
      out << '\n';
    }
  }
}

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  write_checkpoint(params, out);
  if (!out) throw ConfigError("failed while writing checkpoint " + path);
}

EncoderParams read_checkpoint(std::istream& in, const std::string& label) {
  LineReader r(in, label);
  auto header = r.next();
  if (header.size() != 2 || header[0] != "desalign-checkpoint") r.fail("not a checkpoint file");
  if (r.to_size(header[1]) != static_cast<std::size_t>(kCheckpointVersion))
    r.fail("unsupported checkpoint version " + header[1]);

  EncoderConfig c;
  c.d = r.to_size(r.expect("d", 1)[1]);
  c.attention_heads = r.to_size(r.expect("attention_heads", 1)[1]);
  c.gat_layers = r.to_size(r.expect("gat_layers", 1)[1]);
  c.gat_heads = r.to_size(r.expect("gat_heads", 1)[1]);
  c.gat_slope = r.to_double(r.expect("gat_slope", 1)[1]);
  c.ffn_dim = r.to_size(r.expect("ffn_dim", 1)[1]);
  c.ln_eps = r.to_double(r.expect("ln_eps", 1)[1]);
  auto mods = r.next();
  if (mods.empty() || mods[0] != "modalities") r.fail("expected 'modalities'");
  c.modalities.clear();
  try {
    for (std::size_t i = 1; i < mods.size(); ++i) c.modalities.push_back(mmkg::parse_modality(mods[i]));
  } catch (const StructuralError& e) {
    r.fail(e.what());
  }
  const std::size_t entities = r.to_size(r.expect("entities", 1)[1]);
  const std::size_t n_dims = r.to_size(r.expect("input_dims", 1)[1]);
  std::map<Modality, std::size_t> dims;
  for (std::size_t i = 0; i < n_dims; ++i) {
    auto t = r.next();
    if (t.size() != 2) r.fail("expected '<modality> <width>'");
    try {
      dims[mmkg::parse_modality(t[0])] = r.to_size(t[1]);
    } catch (const StructuralError& e) {
      r.fail(e.what());
    }
  }

  EncoderParams p;
  try {
    p = init_params(c, entities, dims, 0);
  } catch (const ConfigError& e) {
    r.fail(std::string("inconsistent checkpoint header: ") + e.what());
  }
  const auto names = tensor_names(p);
  const auto slots = tensors(p);
  if (r.to_size(r.expect("tensors", 1)[1]) != slots.size()) r.fail("tensor count does not match the config");
  for (std::size_t k = 0; k < slots.size(); ++k) {
    auto t = r.next();
    if (t.size() != 3 || t[0] != names[k]) r.fail("expected tensor header for " + names[k]);
    const std::size_t rows = r.to_size(t[1]);
    const std::size_t cols = r.to_size(t[2]);
    if (rows != slots[k]->rows() || cols != slots[k]->cols())
      r.fail(names[k] + " is " + t[1] + "x" + t[2] + ", expected " + std::to_string(slots[k]->rows()) + "x" +
             std::to_string(slots[k]->cols()));
    for (std::size_t i = 0; i < rows; ++i) {
      auto vals = r.next();
      if (vals.size() != cols) r.fail(names[k] + " row has " + std::to_string(vals.size()) + " values");
      for (std::size_t j = 0; j < cols; ++j) (*slots[k])(i, j) = r.to_double(vals[j]);
    }
  }
  return p;
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path, 0, "cannot open checkpoint");
  return read_checkpoint(in, path);
}

}  // namespace desalign::encoder
