// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "mwam/mwam.hpp"
#include "oracles.hpp"

using namespace mwam;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};

RunConfig imbalanced(Mode mode) {
  RunConfig c = load_config(fs::path(MWAM_CONFIG_DIR) / "imbalanced.cfg");
  c.train.mode = mode;
  return c;
}

// 1 -------------------------------------------------------------------------
Outcome transform_exactness() {
  std::mt19937_64 rng(101);
  const DctPlan plan(8);
  double roundtrip = 0.0, parseval = 0.0, naive = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Matrix x = oracle::random_matrix(8, 8, rng);
    const Matrix c = plan.forward(x);
    roundtrip = std::max(roundtrip, max_abs_diff(plan.inverse(c), x));
    double sx = 0.0, sc = 0.0;
    for (std::size_t k = 0; k < 64; ++k) sx += x.flat()[k] * x.flat()[k], sc += c.flat()[k] * c.flat()[k];
    parseval = std::max(parseval, std::abs(sx - sc));
    naive = std::max(naive, max_abs_diff(dct2(x), oracle::naive_dct2(x)));
  }
  const double worst = std::max({roundtrip, parseval, naive});
  return {worst < 1e-9,
          "roundtrip " + fmt(roundtrip) + ", parseval " + fmt(parseval) + ", naive " + fmt(naive) + " (tol 1e-9)"};
}

// 2 -------------------------------------------------------------------------
Outcome literal_formulas() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  double worst = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
  for (int i = 0; i < 500; ++i) {
    const std::size_t r = dim(rng), c = dim(rng);
    const FrequencyMaps maps{oracle::random_matrix(r, c, rng), oracle::random_matrix(r, c, rng)};
    const double lo = oracle::l1(maps.low), hi = oracle::l1(maps.high);
    worst = std::max(worst, rel(frm(maps, 1e-8).value, oracle::frm(maps.low, maps.high, 1e-8)));
    worst = std::max(worst, rel(mp_low(maps).value, lo));
    worst = std::max(worst, rel(mp_sum(maps).value, lo + hi));
    worst = std::max(worst, rel(mp_weighted(maps, 0.9).value, 0.9 * lo + (1.0 - 0.9) * hi));
  }
  return {worst <= 1e-12, "max relative error " + fmt(worst) + " over 500 map pairs (tol 1e-12)"};
}

// 3 -------------------------------------------------------------------------
Outcome allocation_anchors() {
  const AllocationParams d;
  const bool mid = weight(0.7, d) == 1.0;
  bool range = true, monotone = true;
  double prev = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double t = 2.0 * i / 10000.0;
    const double k = weight(t, d);
    range = range && k > 0.5 && k < 1.5;
    if (i > 0) monotone = monotone && k < prev;
    prev = k;
  }
  return {mid && range && monotone, std::string("weight(0.7)==1: ") + (mid ? "yes" : "no") +
                                        ", range (0.5,1.5): " + (range ? "yes" : "no") +
                                        ", strictly decreasing on 10001 points: " + (monotone ? "yes" : "no")};
}

// 4 -------------------------------------------------------------------------
Outcome pcr_reproduction() {
  // (full, miss, printed PCR) for every computable cell of the three
  // method columns of the missing-modality table.
  struct Cell {
    double full, miss, printed;
  };
  const std::vector<Cell> cells{
      {98.12, 80.10, 18.37}, {98.12, 95.21, 2.97}, {98.12, 90.94, 7.32}, {98.12, 96.20, 1.96},
      {98.12, 92.24, 5.99},  {98.12, 97.79, 0.34}, {98.12, 91.06, 7.20}, {98.12, 97.29, 0.85},
      {98.12, 92.46, 5.77},  {98.12, 97.03, 1.11}, {98.12, 94.68, 3.51}, {98.12, 97.46, 0.67},
      {98.82, 87.57, 11.38}, {98.82, 95.83, 3.03}, {98.82, 85.31, 13.67}, {98.82, 97.77, 1.06},
      {98.82, 95.73, 3.13},  {98.82, 96.78, 2.06}};
  double worst = 0.0;
  for (const auto& c : cells) worst = std::max(worst, std::abs(pcr(c.full, c.miss) - c.printed));
  return {worst <= 0.01 + 1e-12, std::to_string(cells.size()) + " cells, max |computed - printed| " + fmt(worst) +
                                     " (tol 0.01)"};
}

// 5 -------------------------------------------------------------------------
Outcome gradient_correctness() {
  double worst = 0.0;
  std::size_t params = 0;
  const int archs = 12;
  for (int s = 0; s < archs; ++s) {
    const auto r = gradcheck::check(gradcheck::random_case(5000 + s));
    worst = std::max(worst, r.max_rel_error);
    params += r.checked;
  }
  return {worst < 1e-4, std::to_string(archs) + " architectures, " + std::to_string(params) +
                            " parameters, max relative error " + fmt(worst) + " (tol 1e-4)"};
}

// 6 -------------------------------------------------------------------------
Outcome decay_law() {
  Rng rng = stream(606, "data");
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(32, 64);
  for (double& v : x.flat()) v = g(rng) / 8.0;
  std::vector<double> y(32);
  for (double& v : y) v = g(rng);
  const double lambda1 = eigendecompose(gram_matrix(x)).values.front();
  const SpectrumReport rep = decay_check(x, y, 0.5 / lambda1, 50);
  std::size_t checked = 0;
  for (bool c : rep.checked) checked += c;
  return {rep.worst_deviation() < 1e-6, std::to_string(checked) + " directions above 1e-8, worst relative deviation " +
                                            fmt(rep.worst_deviation()) + " over 50 steps (tol 1e-6)"};
}

// 7 -------------------------------------------------------------------------
Outcome suppression() {
  const RunConfig base = imbalanced(Mode::none);
  double sum = 0.0;
  std::string per_seed;
  bool all_reached = true;
  for (std::uint64_t seed : kSeeds) {
    RunConfig c = base;
    c.seed = seed;
    SuppressionConfig sc;
    sc.hidden = c.hidden;
    sc.eta = c.train.eta;
    sc.batch_size = c.train.batch_size;
    sc.seed = seed;
    const auto r = suppression_experiment(generate(c.data_config()), sc);
    sum += 1.0 - r.ratio;
    all_reached = all_reached && r.reached_target;
    per_seed += (per_seed.empty() ? "" : " ") + fmt(1.0 - r.ratio, 3);
  }
  const double mean = sum / static_cast<double>(kSeeds.size());
  return {mean >= 0.5 && all_reached, "mean weak-encoder gradient reduction " + fmt(mean, 3) + " (need >= 0.5); per seed " +
                                          per_seed + (all_reached ? "" : "; prefit target not reached")};
}

// 8 + 10 --------------------------------------------------------------------
struct EfficacyRuns {
  std::vector<Experiment> none, hybrid;
};

EfficacyRuns efficacy_runs() {
  EfficacyRuns runs;
  for (std::uint64_t seed : kSeeds) {
    RunConfig n = imbalanced(Mode::none), h = imbalanced(Mode::hybrid);
    n.seed = h.seed = seed;
    runs.none.push_back(run_experiment(n));
    runs.hybrid.push_back(run_experiment(h));
  }
  return runs;
}

Outcome efficacy(const EfficacyRuns& runs) {
  double weak_gain = 0.0, avg_gain = 0.0, full_delta = 0.0;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    const auto& a = runs.none[s];
    const auto& b = runs.hybrid[s];
    const std::string weak = single_mask(3, a.weak);
    weak_gain += find_row(b.matrix, weak).acc - find_row(a.matrix, weak).acc;
    avg_gain += find_row(b.matrix, "avg").acc - find_row(a.matrix, "avg").acc;
    full_delta += find_row(b.matrix, "111").acc - find_row(a.matrix, "111").acc;
  }
  const double n = static_cast<double>(kSeeds.size());
  weak_gain = 100.0 * weak_gain / n, avg_gain = 100.0 * avg_gain / n, full_delta = 100.0 * full_delta / n;
  const bool pass = weak_gain >= 5.0 && avg_gain > 0.0 && full_delta > -2.0;
  return {pass, "weakest-modality gain " + fmt(weak_gain, 3) + " pts (need >= 5), mask-average gain " +
                    fmt(avg_gain, 3) + " pts (need > 0), full-modality change " + fmt(full_delta, 3) +
                    " pts (need > -2)"};
}

Outcome stratification(const EfficacyRuns& runs) {
  std::size_t hits = 0, total = 0;
  std::string per_seed;
  for (const auto& ex : runs.hybrid) {
    const auto& rows = ex.trained.trace.rows;
    // Highest-FRM modality by mean smoothed score after warmup.
    std::vector<double> mean(3, 0.0);
    for (std::size_t i = ex.trained.trace.warmup_iterations; i < rows.size(); ++i)
      for (std::size_t m = 0; m < 3; ++m) mean[m] += rows[i].frm_smoothed[m];
    const auto top = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
    std::size_t h = 0, t = 0;
    for (std::size_t i = ex.trained.trace.warmup_iterations; i < rows.size(); ++i, ++t) {
      bool above = true;
      for (std::size_t m = 0; m < 3; ++m)
        if (m != top && !(rows[i].aux_loss[top] > rows[i].aux_loss[m])) above = false;
      h += above;
    }
    hits += h, total += t;
    per_seed += (per_seed.empty() ? "" : " ") + fmt(static_cast<double>(h) / static_cast<double>(t), 3);
  }
  const double frac = static_cast<double>(hits) / static_cast<double>(total);
  return {frac >= 0.8, "highest-FRM aux loss is the largest in " + fmt(100.0 * frac, 3) +
                           "% of post-warmup iterations (need >= 80%); per seed " + per_seed};
}

// 9 -------------------------------------------------------------------------
Outcome frm_ordering() {
  Rng rng = stream(909, "data");
  std::uniform_real_distribution<double> log_e(-1.0, 3.0);
  std::vector<double> ratio, measured;
  for (int i = 0; i < 100; ++i) {
    GenConfig g;
    const double low = std::pow(10.0, log_e(rng)), high = std::pow(10.0, log_e(rng));
    g.modalities = {{low, high, Band::low, 1.0}};
    g.n_train = 32;
    g.n_test = 0;
    g.seed = 9000 + static_cast<std::uint64_t>(i);
    const SynthDataset ds = generate(g);
    ratio.push_back(low / high);
    measured.push_back(batch_preference(ds.images[0], SpectralConfig{}, {}).value);
  }
  const double rho = oracle::spearman(ratio, measured);
  return {rho >= 0.9, "Spearman rho " + fmt(rho) + " over 100 configurations (need >= 0.9)"};
}

// 11 ------------------------------------------------------------------------
Outcome filter_directionality() {
  const RunConfig base = load_config(fs::path(MWAM_CONFIG_DIR) / "filter_study.cfg");
  const std::vector<std::size_t> windows{8, 16};
  const auto pts = filter_study(base, windows, kSeeds);
  bool pass = true;
  std::string detail;
  for (std::size_t n : windows) {
    std::size_t wins = 0;
    for (std::uint64_t s : kSeeds) wins += final_loss(pts, "low", n, s) < final_loss(pts, "high", n, s);
    pass = pass && wins >= 4;
    detail += (detail.empty() ? "" : ", ") + std::string("n=") + std::to_string(n) + ": low-pass lower on " +
              std::to_string(wins) + "/5 seeds";
  }
  return {pass, detail + " (need >= 4 each)"};
}

// 12 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mwam_acceptance_determinism";
  fs::remove_all(root);
  const std::string cli = MWAM_CLI;
  const std::string smoke = std::string(MWAM_CONFIG_DIR) + "/smoke.cfg";
  auto commands = [&](const fs::path& out) {
    return std::vector<std::string>{
        "train --config " + smoke + " --out " + (out / "train").string(),
        "eval --config " + smoke + " --checkpoint " + (out / "train" / "checkpoint").string() + " --out " +
            (out / "eval.csv").string(),
        "gen --config " + smoke + " --out " + (out / "data").string(),
        // analyze records its input path, so both runs read the first run's dataset.
        "analyze --dataset " + (root / "a" / "data").string() + " --out " + (out / "analyze.csv").string(),
        "sweep-window --config " + smoke + " --q 1,2 --seeds 1,2 --out " + (out / "sw").string(),
        "sweep-params --config " + smoke + " --tuple 1.2,0.5,4,1 --out " + (out / "sp").string(),
        "sweep-frm --config " + smoke + " --out " + (out / "sf").string(),
        "filter-study --config " + smoke + " --windows 4 --out " + (out / "fs").string(),
        "ntk-check --out " + (out / "ntk.csv").string()};
  };
  for (const char* run : {"a", "b"})
    for (const auto& cmd : commands(root / run)) {
      const int status = std::system((cli + " " + cmd + " >/dev/null 2>&1").c_str());
      if (status != 0) return {false, "command failed: " + cmd};
    }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const fs::path other = root / "b" / fs::relative(entry.path(), root / "a");
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other))
      return {false, "differs: " + fs::relative(entry.path(), root / "a").string()};
    ++compared;
  }
  fs::remove_all(root);
  return {compared >= 9, std::to_string(compared) + " CSV files byte-identical across two runs of 9 commands"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = fn();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt(secs, 3) + "s";
    if (limit_s > 0.0) {
      timing += " (limit " + fmt(limit_s, 3) + "s)";
      if (secs >= limit_s) o.pass = false;
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  };

  report(1, "transform exactness", 5.0, transform_exactness);
  report(2, "preference formulas", 0.0, literal_formulas);
  report(3, "allocation anchors", 0.0, allocation_anchors);
  report(4, "PCR reproduction", 0.0, pcr_reproduction);
  report(5, "gradient correctness", 30.0, gradient_correctness);
  report(6, "eigen-direction decay", 5.0, decay_law);
  report(7, "dominant-branch suppression", 120.0, suppression);

  EfficacyRuns runs;
  report(8, "hybrid efficacy", 600.0, [&] {
    runs = efficacy_runs();
    return efficacy(runs);
  });
  report(9, "FRM ordering fidelity", 0.0, frm_ordering);
  report(10, "aux-loss stratification", 0.0, [&] { return stratification(runs); });
  report(11, "filter directionality", 0.0, filter_directionality);
  report(12, "determinism", 0.0, determinism);

  std::printf("%d of 12 criteria failed\n", failed);
  return failed;
}
