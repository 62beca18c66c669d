#pragma once

// Run configuration: a flat "key = value" text file, '#' starts a comment.
//
//   seed = 3
//   data.m0.low_energy = 100        # one block of data.m<i>.* per modality
//   net.hidden = 64,32
//   train.mode = hybrid
//
// Unknown keys are rejected. The canonical form lists every key in a fixed
// order; its FNV-1a hash (seed excluded) identifies a sweep cell.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/intervention.hpp"
#include "mwam/io.hpp"
#include "mwam/random.hpp"
#include "mwam/synthdata.hpp"

namespace mwam {

struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig data{imbalanced_modalities()};
  std::vector<std::size_t> hidden{64, 32};
  Activation activation = Activation::relu;
  TrainConfig train;

  /// Propagates the run seed into the generator and trainer.
  GenConfig data_config() const {
    GenConfig g = data;
    g.seed = seed;
    return g;
  }
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }
  void validate() const {
    data_config().validate();
    train_config().validate();
    require(!hidden.empty(), "net.hidden needs at least one layer");
    for (std::size_t w : hidden) require(w > 0, "net.hidden: zero-width layer");
  }
};

namespace detail {

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double to_f64(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const InputError&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<std::size_t>(to_u64(key, trim(tok))));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define MWAM_SIZE_FIELD(name, expr) \
  Field{name, [](const RunConfig& c) { return std::to_string(c.expr); }, \
        [](RunConfig& c, const std::string& v) { c.expr = static_cast<std::size_t>(to_u64(name, v)); }}
#define MWAM_REAL_FIELD(name, expr) \
  Field{name, [](const RunConfig& c) { return format_double(c.expr); }, \
        [](RunConfig& c, const std::string& v) { c.expr = to_f64(name, v); }}

inline const std::vector<Field>& scalar_fields() {
  static const std::vector<Field> fields = {
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }},
      MWAM_SIZE_FIELD("data.n_train", data.n_train),
      MWAM_SIZE_FIELD("data.n_test", data.n_test),
      MWAM_SIZE_FIELD("data.classes", data.classes),
      MWAM_SIZE_FIELD("data.height", data.height),
      MWAM_SIZE_FIELD("data.width", data.width),
      MWAM_SIZE_FIELD("data.p", data.p),
      MWAM_SIZE_FIELD("data.q", data.q),
      Field{"net.hidden", [](const RunConfig& c) { return join(c.hidden); },
            [](RunConfig& c, const std::string& v) { c.hidden = to_sizes("net.hidden", v); }},
      Field{"net.activation", [](const RunConfig& c) { return std::string(c.activation == Activation::relu ? "relu" : "linear"); },
            [](RunConfig& c, const std::string& v) {
              if (v == "relu") c.activation = Activation::relu;
              else if (v == "linear") c.activation = Activation::linear;
              else throw ConfigError("net.activation: expected relu or linear, got '" + v + "'");
            }},
      Field{"train.mode", [](const RunConfig& c) { return to_string(c.train.mode); },
            [](RunConfig& c, const std::string& v) { c.train.mode = parse_mode(v); }},
      MWAM_REAL_FIELD("train.eta", train.eta),
      MWAM_SIZE_FIELD("train.epochs", train.epochs),
      MWAM_SIZE_FIELD("train.batch_size", train.batch_size),
      MWAM_REAL_FIELD("train.warmup_fraction", train.warmup_fraction),
      MWAM_SIZE_FIELD("spectral.p", train.spectral.p),
      MWAM_SIZE_FIELD("spectral.q", train.spectral.q),
      MWAM_REAL_FIELD("spectral.sigma", train.spectral.sigma),
      MWAM_REAL_FIELD("spectral.omega_bank", train.spectral.omega_bank),
      Field{"spectral.allow_overlap", [](const RunConfig& c) { return std::string(c.train.spectral.allow_overlap ? "true" : "false"); },
            [](RunConfig& c, const std::string& v) { c.train.spectral.allow_overlap = to_bool("spectral.allow_overlap", v); }},
      MWAM_REAL_FIELD("alloc.alpha", train.alloc.alpha),
      MWAM_REAL_FIELD("alloc.beta", train.alloc.beta),
      MWAM_REAL_FIELD("alloc.lambda", train.alloc.lambda),
      MWAM_REAL_FIELD("alloc.gamma", train.alloc.gamma),
      MWAM_REAL_FIELD("alloc.sigma", train.alloc.sigma),
      Field{"metric", [](const RunConfig& c) { return to_string(c.train.metric.kind); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.train.metric.kind = parse_metric(v);
              } catch (const InputError& e) {
                throw ConfigError(e.what());
              }
            }},
      MWAM_REAL_FIELD("metric.omega_band", train.metric.omega_band),
  };
  return fields;
}

#undef MWAM_SIZE_FIELD
#undef MWAM_REAL_FIELD

/// Splits "data.m<i>.<field>" into (i, field); false for any other key.
inline bool modality_key(const std::string& key, std::size_t& index, std::string& field) {
  static const std::string prefix = "data.m";
  if (key.rfind(prefix, 0) != 0) return false;
  const auto dot = key.find('.', prefix.size());
  if (dot == std::string::npos || dot == prefix.size()) return false;
  const std::string num = key.substr(prefix.size(), dot - prefix.size());
  const auto res = std::from_chars(num.data(), num.data() + num.size(), index);
  if (res.ec != std::errc() || res.ptr != num.data() + num.size()) return false;
  field = key.substr(dot + 1);
  return true;
}

inline void set_modality_field(ModalitySpec& s, const std::string& key, const std::string& field, const std::string& v) {
  if (field == "low_energy") s.low_energy = to_f64(key, v);
  else if (field == "high_energy") s.high_energy = to_f64(key, v);
  else if (field == "snr") s.snr = to_f64(key, v);
  else if (field == "signal_band") {
    try {
      s.signal_band = parse_band(v);
    } catch (const InputError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  } else
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace detail

/// Applies one assignment. Modality keys must address an existing modality or
/// the next free index.
inline void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::scalar_fields())
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  std::size_t idx = 0;
  std::string field;
  if (detail::modality_key(key, idx, field)) {
    if (idx > cfg.data.modalities.size()) throw ConfigError(key + ": modality indices must be contiguous");
    if (idx == cfg.data.modalities.size()) cfg.data.modalities.emplace_back();
    detail::set_modality_field(cfg.data.modalities[idx], key, field, value);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(std::istream& in, const std::string& origin = "config") {
  RunConfig cfg;
  std::map<std::string, std::string> seen;
  std::vector<std::pair<std::string, std::string>> assignments;
  std::string line;
  std::size_t lineno = 0;
  bool explicit_modalities = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.emplace(key, value).second)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    std::size_t idx = 0;
    std::string field;
    if (detail::modality_key(key, idx, field)) explicit_modalities = true;
    assignments.emplace_back(key, value);
  }
  // Any data.m<i> key replaces the built-in modality set; indices may appear
  // in any order in the file.
  if (explicit_modalities) {
    std::vector<bool> present;
    for (const auto& [key, value] : assignments) {
      std::size_t idx = 0;
      std::string field;
      if (!detail::modality_key(key, idx, field)) continue;
      if (idx >= present.size()) present.resize(idx + 1, false);
      present[idx] = true;
    }
    for (std::size_t m = 0; m < present.size(); ++m)
      if (!present[m]) throw ConfigError(origin + ": no keys for modality data.m" + std::to_string(m));
    cfg.data.modalities.assign(present.size(), ModalitySpec{});
  }
  for (const auto& [key, value] : assignments) {
    try {
      set_value(cfg, key, value);
    } catch (const InputError& e) {
      throw ConfigError(origin + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const InputError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

/// Every key in canonical order, one "key = value" per line.
inline std::string canonical(const RunConfig& cfg, bool include_seed = true) {
  std::string out;
  for (const auto& f : detail::scalar_fields()) {
    if (f.key == "seed" && !include_seed) continue;
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  for (std::size_t m = 0; m < cfg.data.modalities.size(); ++m) {
    const auto& s = cfg.data.modalities[m];
    const std::string base = "data.m" + std::to_string(m) + ".";
    out += base + "low_energy = " + format_double(s.low_energy) + "\n";
    out += base + "high_energy = " + format_double(s.high_energy) + "\n";
    out += base + "signal_band = " + to_string(s.signal_band) + "\n";
    out += base + "snr = " + format_double(s.snr) + "\n";
  }
  return out;
}

/// 16 hex digits of FNV-1a over the seedless canonical form.
inline std::string config_hash(const RunConfig& cfg) {
  const std::uint64_t h = fnv1a(canonical(cfg, false));
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[i] = digits[(h >> (60 - 4 * i)) & 0xF];
  buf[16] = '\0';
  return buf;
}

}  // namespace mwam
