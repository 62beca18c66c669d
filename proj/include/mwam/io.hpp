#pragma once

// File formats:
//   * 8-bit binary PGM (P5) grayscale, and PPM (P6) reduced by channel average
//   * raw tensor: u32 rows, u32 cols (little-endian) then rows*cols float32 LE
//   * manifest: "key = value" text lines
//   * checkpoint / dataset directories: raw tensors plus a manifest

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/matrix.hpp"
#include "mwam/spectral.hpp"
#include "mwam/synthdata.hpp"
#include "mwam/tinynet.hpp"

namespace mwam {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form; NaN is written as an empty field.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) throw InputError("not a number: '" + s + "'");
  return v;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// ---------------------------------------------------------------------------
// PGM / PPM

namespace detail {
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}
}  // namespace detail

/// Reads P5 (grayscale) or P6 (RGB, averaged to one plane); values scaled to [0,1].
inline ImagePlane read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path.string());
  const std::string magic = detail::pnm_token(in);
  if (magic != "P5" && magic != "P6") throw InputError(path.string() + ": only binary P5/P6 images are supported");
  const int channels = magic == "P5" ? 1 : 3;
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(detail::pnm_token(in));
    h = std::stol(detail::pnm_token(in));
    maxval = std::stol(detail::pnm_token(in));
  } catch (const std::exception&) {
    throw InputError(path.string() + ": malformed header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw InputError(path.string() + ": unsupported dimensions or depth");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw InputError(path.string() + ": truncated pixel data");
  ImagePlane img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < img.size(); ++i) {
    double s = 0.0;
    for (int c = 0; c < channels; ++c) s += raw[i * channels + c];
    img.flat()[i] = s / (channels * static_cast<double>(maxval));
  }
  return img;
}

/// Writes P5, clamping to [0,1] and rounding to 8 bits.
inline void write_pgm(const fs::path& path, const ImagePlane& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(img.flat()[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// ---------------------------------------------------------------------------
// Raw float32 tensors

namespace detail {
inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw InputError("truncated tensor header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

inline void write_tensor(const fs::path& path, const Matrix& m) {
  require(m.rows() <= UINT32_MAX && m.cols() <= UINT32_MAX, "tensor too large for the u32 header");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.flat()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline Matrix read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open tensor " + path.string());
  const std::uint32_t rows = detail::get_u32(in), cols = detail::get_u32(in);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = std::bit_cast<float>(detail::get_u32(in));
  return m;
}

// ---------------------------------------------------------------------------
// Manifests

using Manifest = std::vector<std::pair<std::string, std::string>>;

inline void write_manifest(const fs::path& path, const Manifest& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
}

inline std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(path.string() + ": malformed line '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace detail {
inline const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw InputError("manifest is missing '" + key + "'");
  return it->second;
}
inline std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InputError("not a count: '" + s + "'");
  return v;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints

inline void save_checkpoint(const fs::path& dir, const ParamSet& ps, const Manifest& extra = {}) {
  fs::create_directories(dir);
  Manifest man{{"format", "mwam-checkpoint-1"},
               {"activation", ps.activation == Activation::relu ? "relu" : "linear"},
               {"modalities", std::to_string(ps.modalities())},
               {"aux_heads", ps.has_aux() ? "1" : "0"}};
  std::string layers;
  for (std::size_t m = 0; m < ps.modalities(); ++m)
    layers += (m ? "," : "") + std::to_string(ps.encoders[m].size());
  man.emplace_back("encoder_layers", layers);
  for (const auto& slot : tensors(ps)) {
    const std::string file = slot.name + ".f32";
    write_tensor(dir / file, *slot.tensor);
    man.emplace_back("tensor." + slot.name,
                     std::to_string(slot.tensor->rows()) + "x" + std::to_string(slot.tensor->cols()) + " " + file);
  }
  man.insert(man.end(), extra.begin(), extra.end());
  write_manifest(dir / "manifest.txt", man);
}

inline ParamSet load_checkpoint(const fs::path& dir) {
  const auto kv = read_manifest(dir / "manifest.txt");
  if (detail::need(kv, "format") != "mwam-checkpoint-1") throw InputError("unknown checkpoint format");
  ParamSet ps;
  ps.activation = detail::need(kv, "activation") == "linear" ? Activation::linear : Activation::relu;
  const std::size_t M = detail::to_size(detail::need(kv, "modalities"));
  std::stringstream layers(detail::need(kv, "encoder_layers"));
  std::string tok;
  while (std::getline(layers, tok, ',')) ps.encoders.emplace_back(detail::to_size(trim(tok)));
  if (ps.encoders.size() != M) throw InputError("checkpoint encoder layout does not match modality count");
  if (detail::need(kv, "aux_heads") == "1") ps.aux_heads.resize(M);
  for (auto& slot : tensors(ps)) {
    const std::string& spec = detail::need(kv, "tensor." + slot.name);
    const auto sp = spec.find(' ');
    const auto x = spec.find('x');
    if (sp == std::string::npos || x == std::string::npos || x > sp) throw InputError("malformed tensor entry " + slot.name);
    const std::size_t rows = detail::to_size(spec.substr(0, x)), cols = detail::to_size(spec.substr(x + 1, sp - x - 1));
    Matrix t = read_tensor(dir / trim(spec.substr(sp + 1)));
    if (t.rows() != rows || t.cols() != cols) throw InputError("tensor " + slot.name + " shape differs from manifest");
    *slot.tensor = std::move(t);
  }
  return ps;
}

// ---------------------------------------------------------------------------
// Datasets

inline void save_dataset(const fs::path& dir, const SynthDataset& ds) {
  fs::create_directories(dir);
  const auto& c = ds.config;
  Manifest man{{"format", "mwam-dataset-1"},
               {"seed", std::to_string(c.seed)},
               {"samples", std::to_string(ds.samples())},
               {"n_train", std::to_string(c.n_train)},
               {"n_test", std::to_string(c.n_test)},
               {"classes", std::to_string(c.classes)},
               {"height", std::to_string(c.height)},
               {"width", std::to_string(c.width)},
               {"p", std::to_string(c.p)},
               {"q", std::to_string(c.q)},
               {"modalities", std::to_string(ds.modalities())}};
  const auto flat = flatten(ds);
  for (std::size_t m = 0; m < ds.modalities(); ++m) {
    const auto& s = c.modalities[m];
    const std::string base = "m" + std::to_string(m);
    man.emplace_back(base + ".low_energy", format_double(s.low_energy));
    man.emplace_back(base + ".high_energy", format_double(s.high_energy));
    man.emplace_back(base + ".signal_band", to_string(s.signal_band));
    man.emplace_back(base + ".snr", format_double(s.snr));
    man.emplace_back(base + ".file", base + ".f32");
    write_tensor(dir / (base + ".f32"), flat[m]);
  }
  Matrix labels(ds.samples(), 1);
  for (std::size_t i = 0; i < ds.samples(); ++i) labels(i, 0) = ds.labels[i];
  write_tensor(dir / "labels.f32", labels);
  man.emplace_back("labels.file", "labels.f32");
  write_manifest(dir / "manifest.txt", man);
}

inline SynthDataset load_dataset(const fs::path& dir) {
  const auto kv = read_manifest(dir / "manifest.txt");
  using detail::need;
  using detail::to_size;
  if (need(kv, "format") != "mwam-dataset-1") throw InputError("unknown dataset format");
  SynthDataset ds;
  GenConfig& c = ds.config;
  c.seed = std::stoull(need(kv, "seed"));
  c.n_train = to_size(need(kv, "n_train"));
  c.n_test = to_size(need(kv, "n_test"));
  c.classes = to_size(need(kv, "classes"));
  c.height = to_size(need(kv, "height"));
  c.width = to_size(need(kv, "width"));
  c.p = to_size(need(kv, "p"));
  c.q = to_size(need(kv, "q"));
  const std::size_t M = to_size(need(kv, "modalities"));
  const std::size_t N = to_size(need(kv, "samples"));
  if (N != c.n_train + c.n_test) throw InputError("dataset split sizes do not add up");
  const Matrix labels = read_tensor(dir / need(kv, "labels.file"));
  if (labels.rows() != N || labels.cols() != 1) throw InputError("label tensor has the wrong shape");
  for (std::size_t i = 0; i < N; ++i) ds.labels.push_back(static_cast<int>(labels(i, 0)));
  for (std::size_t m = 0; m < M; ++m) {
    const std::string base = "m" + std::to_string(m);
    ModalitySpec s;
    s.low_energy = parse_double(need(kv, base + ".low_energy"));
    s.high_energy = parse_double(need(kv, base + ".high_energy"));
    s.signal_band = parse_band(need(kv, base + ".signal_band"));
    s.snr = parse_double(need(kv, base + ".snr"));
    c.modalities.push_back(s);
    const Matrix x = read_tensor(dir / need(kv, base + ".file"));
    if (x.rows() != N || x.cols() != c.height * c.width) throw InputError(base + " tensor has the wrong shape");
    std::vector<ImagePlane> planes;
    planes.reserve(N);
    for (std::size_t i = 0; i < N; ++i)
      planes.emplace_back(c.height, c.width, std::vector<double>(x.row(i).begin(), x.row(i).end()));
    ds.images.push_back(std::move(planes));
  }
  for (std::size_t i = 0; i < N; ++i) (i < c.n_train ? ds.train_idx : ds.test_idx).push_back(i);
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

/// Builds a CSV file in memory and writes it in one go (tmp file + rename) so
/// readers never observe a partial file.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { add_row(header); }

  void add_row(const std::vector<std::string>& fields) {
    require(fields.size() == columns_, "CSV row has the wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += fields[i];
    }
    text_ += '\n';
  }

  const std::string& text() const noexcept { return text_; }

  void save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw InputError("cannot write " + tmp.string());
      out << text_;
    }
    fs::rename(tmp, path);
  }

 private:
  std::size_t columns_;
  std::string text_;
};

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace mwam
