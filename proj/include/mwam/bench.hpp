#pragma once

// Evaluation and experiment orchestration: per-mask accuracy matrices with
// PCR, train+eval runs, resumable sweeps and the frequency filter study.
//
// Every sweep cell (one config hash, one seed) is persisted under
// <out>/cells/ as soon as it finishes; a rerun with the same out directory
// reads finished cells back instead of retraining them.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mwam/config.hpp"
#include "mwam/error.hpp"
#include "mwam/intervention.hpp"
#include "mwam/io.hpp"
#include "mwam/preference.hpp"
#include "mwam/spectral.hpp"
#include "mwam/synthdata.hpp"
#include "mwam/tinynet.hpp"

namespace mwam {

/// Percentage drop of a metric relative to the full-modality reference.
inline double pcr(double full_metric, double miss_metric) {
  require(full_metric > 0.0 && std::isfinite(full_metric), "pcr: full-modality metric must be positive");
  return 100.0 * (full_metric - miss_metric) / full_metric;
}

struct RunRecord {
  std::string mask;  // "101" marks modalities 0 and 2 present; "avg" for the average row
  double acc = 0.0;  // [0, 1]
  double pcr = 0.0;  // percent; NaN on the full-modality row
  std::string mode;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline const std::vector<std::string>& matrix_header() {
  static const std::vector<std::string> h{"mask", "acc", "pcr", "mode", "seed", "config_hash"};
  return h;
}

inline std::string mask_string(const PresenceMask& mask) {
  std::string s;
  for (bool b : mask) s += b ? '1' : '0';
  return s;
}

inline PresenceMask parse_mask(const std::string& s) {
  PresenceMask m;
  for (char c : s) {
    require(c == '0' || c == '1', "mask must consist of 0/1 characters");
    m.push_back(c == '1');
  }
  require(std::find(m.begin(), m.end(), true) != m.end(), "mask marks no modality as present");
  return m;
}

/// All 2^M - 1 non-empty masks: fewer present modalities first, then by index
/// order, so the full mask is last.
inline std::vector<PresenceMask> enumerate_masks(std::size_t modalities) {
  require(modalities >= 1 && modalities <= 20, "mask enumeration supports 1..20 modalities");
  std::vector<std::uint32_t> bits;
  for (std::uint32_t b = 1; b < (1u << modalities); ++b) bits.push_back(b);
  auto key = [&](std::uint32_t b) {
    std::uint32_t rev = 0;  // modality 0 first in lexicographic order
    for (std::size_t i = 0; i < modalities; ++i)
      if (b & (1u << i)) rev |= 1u << (modalities - 1 - i);
    return std::pair(std::popcount(b), ~rev);
  };
  std::stable_sort(bits.begin(), bits.end(), [&](auto a, auto b) { return key(a) < key(b); });
  std::vector<PresenceMask> out;
  for (std::uint32_t b : bits) {
    PresenceMask m(modalities);
    for (std::size_t i = 0; i < modalities; ++i) m[i] = (b >> i) & 1u;
    out.push_back(std::move(m));
  }
  return out;
}

/// Accuracy under every presence mask plus an average row. The average Acc is
/// the mean over all mask rows; the average PCR is the mean over the
/// incomplete-mask rows (the full row has no PCR).
inline std::vector<RunRecord> run_matrix(const ParamSet& ps, const Batch& test, const std::string& mode,
                                         std::uint64_t seed, const std::string& hash) {
  require(test.inputs.size() == ps.modalities(), "checkpoint modality count does not match the data");
  const auto masks = enumerate_masks(ps.modalities());
  const double full = evaluate(ps, test, full_mask(ps.modalities()));
  std::vector<RunRecord> rows;
  double acc_sum = 0.0, pcr_sum = 0.0;
  std::size_t pcr_n = 0;
  for (const auto& m : masks) {
    RunRecord r{mask_string(m), evaluate(ps, test, m), std::numeric_limits<double>::quiet_NaN(), mode, seed, hash};
    const bool complete = std::all_of(m.begin(), m.end(), [](bool b) { return b; });
    if (!complete) {
      r.pcr = full > 0.0 ? pcr(full, r.acc) : std::numeric_limits<double>::quiet_NaN();
      pcr_sum += r.pcr;
      ++pcr_n;
    }
    acc_sum += r.acc;
    rows.push_back(std::move(r));
  }
  rows.push_back({"avg", acc_sum / static_cast<double>(masks.size()),
                  pcr_n ? pcr_sum / static_cast<double>(pcr_n) : std::numeric_limits<double>::quiet_NaN(), mode,
                  seed, hash});
  return rows;
}

inline CsvWriter matrix_csv(const std::vector<RunRecord>& rows) {
  CsvWriter csv(matrix_header());
  for (const auto& r : rows)
    csv.add_row({r.mask, format_double(r.acc), format_double(r.pcr), r.mode, std::to_string(r.seed), r.config_hash});
  return csv;
}

inline const RunRecord& find_row(const std::vector<RunRecord>& rows, const std::string& mask) {
  for (const auto& r : rows)
    if (r.mask == mask) return r;
  throw InputError("run matrix has no row '" + mask + "'");
}

/// Modality with the lowest mean FRM over the training split.
inline std::size_t weakest_modality(const SynthDataset& ds, const SpectralConfig& spectral) {
  const auto scores = sample_scores(ds, ds.train_idx, spectral, MetricSpec{});
  std::size_t best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < scores.size(); ++m) {
    double s = 0.0;
    for (double v : scores[m]) s += v;
    if (s < best_v) best_v = s, best = m;
  }
  return best;
}

inline std::string single_mask(std::size_t modalities, std::size_t m) {
  std::string s(modalities, '0');
  s[m] = '1';
  return s;
}

// ---------------------------------------------------------------------------
// Single runs

struct Experiment {
  RunConfig config;
  SynthDataset dataset;
  TrainResult trained;
  std::vector<RunRecord> matrix;
  std::size_t weak = 0;
};

inline Experiment run_experiment(const RunConfig& cfg, const TraceSink& sink = {}) {
  cfg.validate();
  Experiment ex;
  ex.config = cfg;
  ex.dataset = generate(cfg.data_config());
  const TrainConfig tc = cfg.train_config();
  ex.trained = train(tc, net_config_for(ex.dataset, cfg.hidden, tc.mode, cfg.seed, cfg.activation), ex.dataset, sink);
  ex.matrix = run_matrix(ex.trained.params, split_batch(ex.dataset, ex.dataset.test_idx), to_string(tc.mode),
                         cfg.seed, config_hash(cfg));
  ex.weak = weakest_modality(ex.dataset, tc.spectral);
  return ex;
}

inline const std::vector<std::string>& trace_header(std::size_t modalities) {
  static thread_local std::vector<std::string> h;
  h = {"iteration", "epoch", "total_loss", "main_loss"};
  for (const char* group : {"aux_loss", "frm_raw", "frm_smoothed", "t", "k", "grad_norm"})
    for (std::size_t m = 0; m < modalities; ++m) h.push_back(std::string(group) + "_m" + std::to_string(m));
  return h;
}

inline CsvWriter trace_csv(const TrainTrace& trace, std::size_t modalities) {
  CsvWriter csv(trace_header(modalities));
  for (const auto& r : trace.rows) {
    std::vector<std::string> f{std::to_string(r.iteration), std::to_string(r.epoch), format_double(r.total_loss),
                               format_double(r.main_loss)};
    for (const auto* v : {&r.aux_loss, &r.frm_raw, &r.frm_smoothed, &r.t, &r.k, &r.grad_norm})
      for (std::size_t m = 0; m < modalities; ++m) f.push_back(m < v->size() ? format_double((*v)[m]) : "");
    csv.add_row(f);
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Sweeps

/// One summary row per finished (variant, seed) cell.
struct CellSummary {
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_hash;
  double acc_full = 0.0;
  double acc_avg = 0.0;
  double pcr_avg = 0.0;
  double acc_weak = 0.0;  // single-modality Acc of the lowest-FRM modality
  double k_min = 0.0;     // applied weights after warmup
  double k_max = 0.0;
  double k_lower = 0.0;   // analytic bounds alpha - beta, alpha
  double k_upper = 0.0;
};

inline const std::vector<std::string>& summary_header() {
  static const std::vector<std::string> h{"variant", "seed",    "config_hash", "acc_full", "acc_avg", "pcr_avg",
                                          "acc_weak", "k_min", "k_max",       "k_lower",  "k_upper"};
  return h;
}

inline std::vector<std::string> summary_fields(const CellSummary& s) {
  return {s.variant,
          std::to_string(s.seed),
          s.config_hash,
          format_double(s.acc_full),
          format_double(s.acc_avg),
          format_double(s.pcr_avg),
          format_double(s.acc_weak),
          format_double(s.k_min),
          format_double(s.k_max),
          format_double(s.k_lower),
          format_double(s.k_upper)};
}

inline CellSummary parse_summary(const std::vector<std::string>& f) {
  require(f.size() == summary_header().size(), "cell summary has the wrong number of fields");
  auto num = [](const std::string& s) { return s.empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(s); };
  return {f[0], std::stoull(f[1]), f[2], num(f[3]), num(f[4]), num(f[5]), num(f[6]), num(f[7]), num(f[8]), num(f[9]),
          num(f[10])};
}

inline CellSummary summarize(const Experiment& ex, const std::string& variant) {
  CellSummary s;
  s.variant = variant;
  s.seed = ex.config.seed;
  s.config_hash = config_hash(ex.config);
  const std::size_t M = ex.dataset.modalities();
  s.acc_full = find_row(ex.matrix, std::string(M, '1')).acc;
  s.acc_avg = find_row(ex.matrix, "avg").acc;
  s.pcr_avg = find_row(ex.matrix, "avg").pcr;
  s.acc_weak = find_row(ex.matrix, single_mask(M, ex.weak)).acc;
  s.k_min = std::numeric_limits<double>::infinity();
  s.k_max = -std::numeric_limits<double>::infinity();
  const auto& rows = ex.trained.trace.rows;
  for (std::size_t i = ex.trained.trace.warmup_iterations; i < rows.size(); ++i)
    for (double k : rows[i].k) s.k_min = std::min(s.k_min, k), s.k_max = std::max(s.k_max, k);
  if (s.k_min > s.k_max) s.k_min = s.k_max = std::numeric_limits<double>::quiet_NaN();
  s.k_lower = ex.config.train.alloc.lower_bound();
  s.k_upper = ex.config.train.alloc.upper_bound();
  return s;
}

/// Runs one cell or loads it from <out>/cells when already finished.
inline CellSummary run_cell(const std::filesystem::path& out, const RunConfig& cfg, const std::string& variant) {
  const std::string stem = config_hash(cfg) + "-s" + std::to_string(cfg.seed);
  const auto cell = out / "cells" / (stem + ".csv");
  if (std::filesystem::exists(cell)) {
    const auto rows = read_csv(cell);
    if (rows.size() == 2 && rows[0] == summary_header()) {
      CellSummary s = parse_summary(rows[1]);
      s.variant = variant;
      return s;
    }
  }
  const Experiment ex = run_experiment(cfg);
  matrix_csv(ex.matrix).save(out / "cells" / (stem + "-matrix.csv"));
  const CellSummary s = summarize(ex, variant);
  CsvWriter csv(summary_header());
  csv.add_row(summary_fields(s));
  csv.save(cell);  // written last: its presence marks the cell complete
  return s;
}

struct SweepVariant {
  std::string name;
  RunConfig config;  // seed is overwritten per cell
};

/// Runs every (variant, seed) cell and writes <out>/summary.csv with one row
/// per cell followed by one "mean" row per variant.
inline std::vector<CellSummary> run_sweep(const std::filesystem::path& out, const std::vector<SweepVariant>& variants,
                                          const std::vector<std::uint64_t>& seeds) {
  require(!variants.empty() && !seeds.empty(), "sweep needs at least one variant and one seed");
  std::vector<CellSummary> cells;
  CsvWriter csv(summary_header());
  for (const auto& v : variants) {
    std::vector<CellSummary> mine;
    for (std::uint64_t seed : seeds) {
      RunConfig c = v.config;
      c.seed = seed;
      mine.push_back(run_cell(out, c, v.name));
      csv.add_row(summary_fields(mine.back()));
    }
    CellSummary mean = mine.front();
    auto avg = [&](double CellSummary::*f) {
      double s = 0.0;
      for (const auto& c : mine) s += c.*f;
      return s / static_cast<double>(mine.size());
    };
    mean.acc_full = avg(&CellSummary::acc_full);
    mean.acc_avg = avg(&CellSummary::acc_avg);
    mean.pcr_avg = avg(&CellSummary::pcr_avg);
    mean.acc_weak = avg(&CellSummary::acc_weak);
    for (const auto& c : mine) mean.k_min = std::min(mean.k_min, c.k_min), mean.k_max = std::max(mean.k_max, c.k_max);
    auto fields = summary_fields(mean);
    fields[1] = "mean";
    csv.add_row(fields);
    cells.insert(cells.end(), mine.begin(), mine.end());
  }
  csv.save(out / "summary.csv");
  return cells;
}

/// One variant per block size q. q > p/2 needs allow_overlap.
inline std::vector<SweepVariant> window_variants(const RunConfig& base, const std::vector<std::size_t>& q_values,
                                                 bool allow_overlap) {
  std::vector<SweepVariant> out;
  for (std::size_t q : q_values) {
    RunConfig c = base;
    c.train.spectral.q = q;
    c.train.spectral.allow_overlap = base.train.spectral.allow_overlap || allow_overlap;
    try {
      c.train.spectral.validate();
    } catch (const InputError& e) {
      throw ConfigError(std::string(e.what()) + "; pass the overlap override to run it anyway");
    }
    out.push_back({"q=" + std::to_string(q), c});
  }
  return out;
}

inline std::string params_label(const AllocationParams& p) {
  return "alpha=" + format_double(p.alpha) + ";beta=" + format_double(p.beta) + ";lambda=" + format_double(p.lambda) +
         ";gamma=" + format_double(p.gamma);
}

/// One variant per allocation tuple; the default tuple is always included first.
inline std::vector<SweepVariant> param_variants(const RunConfig& base, const std::vector<AllocationParams>& tuples) {
  std::vector<AllocationParams> all{AllocationParams{}};
  for (const auto& t : tuples) {
    t.validate();
    const bool dup = std::any_of(all.begin(), all.end(), [&](const AllocationParams& a) {
      return a.alpha == t.alpha && a.beta == t.beta && a.lambda == t.lambda && a.gamma == t.gamma && a.sigma == t.sigma;
    });
    if (!dup) all.push_back(t);
  }
  std::vector<SweepVariant> out;
  for (const auto& t : all) {
    RunConfig c = base;
    c.train.alloc = t;
    out.push_back({params_label(t), c});
  }
  return out;
}

/// Parses "alpha,beta,lambda,gamma" into a tuple.
inline AllocationParams parse_params_tuple(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) v.push_back(parse_double(trim(tok)));
  if (v.size() != 4) throw ConfigError("parameter tuple needs alpha,beta,lambda,gamma: '" + s + "'");
  AllocationParams p;
  p.alpha = v[0], p.beta = v[1], p.lambda = v[2], p.gamma = v[3];
  return p;
}

inline std::vector<SweepVariant> metric_variants(const RunConfig& base) {
  std::vector<SweepVariant> out;
  for (MetricKind k : {MetricKind::frm, MetricKind::mp_low, MetricKind::mp_sum, MetricKind::mp_weighted}) {
    RunConfig c = base;
    c.train.metric.kind = k;
    out.push_back({to_string(k), c});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filter study

/// Applies the same FFT filter to every image of every modality.
inline SynthDataset filter_dataset(const SynthDataset& ds, FilterKind kind, std::size_t n) {
  SynthDataset out = ds;
  for (auto& planes : out.images)
    for (auto& img : planes) img = fft_filter(img, kind, n);
  return out;
}

struct CurvePoint {
  std::string kind;  // raw, low, high
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean main-head loss over the epoch's iterations
  double test_acc = 0.0;    // full-modality accuracy after the epoch
};

inline const std::vector<std::string>& curve_header() {
  static const std::vector<std::string> h{"kind", "n", "seed", "epoch", "train_loss", "test_acc"};
  return h;
}

/// Trains on the raw dataset and on low-pass / high-pass versions of it for
/// every window size, recording per-epoch curves.
inline std::vector<CurvePoint> filter_study(const RunConfig& base, const std::vector<std::size_t>& windows,
                                            const std::vector<std::uint64_t>& seeds) {
  require(!windows.empty() && !seeds.empty(), "filter study needs window sizes and seeds");
  std::vector<CurvePoint> points;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.validate();
    const SynthDataset raw = generate(cfg.data_config());
    for (std::size_t n : windows)
      require(n >= 1 && n <= raw.config.height && n <= raw.config.width, "filter window exceeds the image size");

    std::vector<std::pair<std::string, std::size_t>> variants{{"raw", 0}};
    for (std::size_t n : windows) variants.emplace_back("low", n), variants.emplace_back("high", n);
    for (const auto& [kind, n] : variants) {
      const SynthDataset ds =
          kind == "raw" ? raw : filter_dataset(raw, kind == "low" ? FilterKind::low_pass : FilterKind::high_pass, n);
      const Batch test = split_batch(ds, ds.test_idx);
      const TrainConfig tc = cfg.train_config();
      std::vector<double> accs;
      const auto res = train(tc, net_config_for(ds, cfg.hidden, tc.mode, seed, cfg.activation), ds, {},
                             [&](std::size_t, const ParamSet& ps) { accs.push_back(evaluate(ps, test, full_mask(ds.modalities()))); });
      std::vector<double> loss(tc.epochs, 0.0);
      std::vector<std::size_t> count(tc.epochs, 0);
      for (const auto& r : res.trace.rows) loss[r.epoch] += r.main_loss, ++count[r.epoch];
      for (std::size_t e = 0; e < tc.epochs; ++e)
        points.push_back({kind, n, seed, e, loss[e] / static_cast<double>(count[e]), accs[e]});
    }
  }
  return points;
}

inline CsvWriter curves_csv(const std::vector<CurvePoint>& pts) {
  CsvWriter csv(curve_header());
  for (const auto& p : pts)
    csv.add_row({p.kind, std::to_string(p.n), std::to_string(p.seed), std::to_string(p.epoch), format_double(p.train_loss),
                 format_double(p.test_acc)});
  return csv;
}

/// Final-epoch training loss of one curve.
inline double final_loss(const std::vector<CurvePoint>& pts, const std::string& kind, std::size_t n, std::uint64_t seed) {
  const CurvePoint* last = nullptr;
  for (const auto& p : pts)
    if (p.kind == kind && p.n == n && p.seed == seed && (!last || p.epoch > last->epoch)) last = &p;
  require(last != nullptr, "no curve for " + kind + "/" + std::to_string(n));
  return last->train_loss;
}

}  // namespace mwam
