// mwam command-line front end.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mwam/mwam.hpp"

namespace fs = std::filesystem;
using namespace mwam;

namespace {

std::vector<std::uint64_t> seed_list(const std::vector<std::uint64_t>& given, std::uint64_t fallback) {
  return given.empty() ? std::vector<std::uint64_t>{fallback} : given;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

void emit(const CsvWriter& csv, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << csv.text();
  else
    csv.save(out);
}

std::vector<std::string> score_fields(const FrequencyMaps& maps, const SpectralConfig& sc, double omega_band) {
  return {format_double(frm(maps, sc.sigma).value), format_double(mp_low(maps).value),
          format_double(mp_sum(maps).value), format_double(mp_weighted(maps, omega_band).value)};
}

// --------------------------------------------------------------------------

struct AnalyzeOpts {
  std::vector<std::string> images;
  std::string dataset, out;
  SpectralConfig spectral;
  double omega_band = 0.9;
  bool center_crop = false;
};

void cmd_analyze(const AnalyzeOpts& o) {
  o.spectral.validate();
  require(!o.images.empty() || !o.dataset.empty(), "analyze needs --image or --dataset");
  CsvWriter csv({"source", "modality", "frm", "mp_low", "mp_sum", "mp_weighted"});
  for (const auto& path : o.images) {
    ImagePlane img = read_pnm(path);
    if (o.center_crop) img = center_crop(img, o.spectral.p);
    std::vector<std::string> row{path, "0"};
    const auto s = score_fields(frequency_maps(img, o.spectral), o.spectral, o.omega_band);
    row.insert(row.end(), s.begin(), s.end());
    csv.add_row(row);
  }
  if (!o.dataset.empty()) {
    const SynthDataset ds = load_dataset(o.dataset);
    for (std::size_t m = 0; m < ds.modalities(); ++m) {
      std::vector<ImagePlane> batch;
      for (std::size_t i : ds.train_idx) batch.push_back(ds.images[m][i]);
      std::vector<std::string> row{o.dataset, std::to_string(m)};
      for (MetricKind k : {MetricKind::frm, MetricKind::mp_low, MetricKind::mp_sum, MetricKind::mp_weighted})
        row.push_back(format_double(batch_preference(batch, o.spectral, {k, o.omega_band}).value));
      csv.add_row(row);
    }
  }
  emit(csv, o.out);
}

struct FilterOpts {
  std::string input, out, kind = "low";
  std::size_t n = 8;
};

void cmd_filter(const FilterOpts& o) {
  FilterKind kind;
  if (o.kind == "low") kind = FilterKind::low_pass;
  else if (o.kind == "high") kind = FilterKind::high_pass;
  else throw ConfigError("--kind must be low or high");
  if (fs::is_directory(o.input)) {
    save_dataset(o.out, filter_dataset(load_dataset(o.input), kind, o.n));
  } else {
    write_pgm(o.out, fft_filter(read_pnm(o.input), kind, o.n));
  }
}

void cmd_gen(const std::string& config, const std::string& out) {
  const RunConfig cfg = load_config(config);
  const SynthDataset ds = generate(cfg.data_config());
  save_dataset(out, ds);
  std::cout << "wrote " << ds.samples() << " samples x " << ds.modalities() << " modalities to " << out << "\n";
}

CsvWriter frm_csv(const TrainTrace& trace, std::size_t M) {
  std::vector<std::string> header{"iteration"};
  for (const char* g : {"frm_raw", "frm_smoothed", "t", "k"})
    for (std::size_t m = 0; m < M; ++m) header.push_back(std::string(g) + "_m" + std::to_string(m));
  CsvWriter csv(header);
  for (const auto& r : trace.rows) {
    std::vector<std::string> f{std::to_string(r.iteration)};
    for (const auto* v : {&r.frm_raw, &r.frm_smoothed, &r.t, &r.k})
      for (double x : *v) f.push_back(format_double(x));
    csv.add_row(f);
  }
  return csv;
}

void cmd_train(const std::string& config, const fs::path& out) {
  const RunConfig cfg = load_config(config);
  fs::create_directories(out);
  const std::string hash = config_hash(cfg);
  write_text(out / "config.txt", canonical(cfg));
  TrainTrace partial;
  Experiment ex;
  try {
    ex = run_experiment(cfg, [&](const TraceRow& r) { partial.rows.push_back(r); });
  } catch (const NumericError&) {
    trace_csv(partial, cfg.data.modalities.size()).save(out / "trace.csv");
    throw;
  }
  const std::size_t M = ex.dataset.modalities();
  trace_csv(ex.trained.trace, M).save(out / "trace.csv");
  frm_csv(ex.trained.trace, M).save(out / "frm.csv");
  matrix_csv(ex.matrix).save(out / "matrix.csv");
  save_checkpoint(out / "checkpoint", ex.trained.params, {{"config_hash", hash}, {"seed", std::to_string(cfg.seed)}});
  write_manifest(out / "manifest.txt", {{"config_hash", hash},
                                        {"seed", std::to_string(cfg.seed)},
                                        {"mode", to_string(cfg.train.mode)},
                                        {"iterations", std::to_string(ex.trained.trace.rows.size())},
                                        {"warmup_iterations", std::to_string(ex.trained.trace.warmup_iterations)},
                                        {"weak_modality", std::to_string(ex.weak)},
                                        {"trace", "trace.csv"},
                                        {"frm", "frm.csv"},
                                        {"matrix", "matrix.csv"},
                                        {"checkpoint", "checkpoint"}});
  std::cout << matrix_csv(ex.matrix).text();
}

void cmd_eval(const std::string& config, const std::string& checkpoint, const std::string& out) {
  const RunConfig cfg = load_config(config);
  const ParamSet ps = load_checkpoint(checkpoint);
  const SynthDataset ds = generate(cfg.data_config());
  if (ps.modalities() != ds.modalities() || ps.encoders.front().front().weight.cols() != ds.images.front().front().size())
    throw ConfigError("checkpoint does not match the configured dataset");
  const auto kv = read_manifest(fs::path(checkpoint) / "manifest.txt");
  if (const auto it = kv.find("config_hash"); it != kv.end() && it->second != config_hash(cfg))
    std::cerr << "note: checkpoint was trained with config " << it->second << "\n";
  emit(matrix_csv(run_matrix(ps, split_batch(ds, ds.test_idx), to_string(cfg.train.mode), cfg.seed, config_hash(cfg))),
       out);
}

void cmd_ntk(std::size_t n, std::size_t d, std::size_t steps, double scale, std::uint64_t seed, const std::string& out) {
  Rng rng = stream(seed, "data");
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(n, d);
  for (double& v : x.flat()) v = g(rng) / std::sqrt(static_cast<double>(d));
  std::vector<double> y(n);
  for (double& v : y) v = g(rng);
  const double lambda1 = eigendecompose(gram_matrix(x)).values.front();
  const SpectrumReport rep = decay_check(x, y, scale / lambda1, steps);
  CsvWriter csv({"direction", "eigenvalue", "predicted_factor", "max_rel_deviation", "checked"});
  for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i)
    csv.add_row({std::to_string(i), format_double(rep.eigenvalues[i]), format_double(rep.predicted_factor[i]),
                 format_double(rep.max_rel_deviation[i]), rep.checked[i] ? "1" : "0"});
  emit(csv, out);
  std::cerr << "eta=" << rep.eta << " worst relative deviation=" << rep.worst_deviation() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-ratio modality preference measurement and weight allocation"};
  app.require_subcommand(1);

  AnalyzeOpts ao;
  auto* analyze = app.add_subcommand("analyze", "Preference scores of images or of a dataset's modalities");
  analyze->add_option("--image", ao.images, "PGM/PPM image(s)");
  analyze->add_option("--dataset", ao.dataset, "Dataset directory written by gen");
  analyze->add_option("--p", ao.spectral.p, "Patch size")->capture_default_str();
  analyze->add_option("--q", ao.spectral.q, "Frequency block size")->capture_default_str();
  analyze->add_option("--sigma", ao.spectral.sigma, "Ratio stabilizer")->capture_default_str();
  analyze->add_option("--omega-band", ao.omega_band, "Low-band weight of mp_weighted")->capture_default_str();
  analyze->add_flag("--allow-overlap", ao.spectral.allow_overlap, "Permit q > p/2");
  analyze->add_flag("--center-crop", ao.center_crop, "Crop images to a multiple of p instead of rejecting them");
  analyze->add_option("--out", ao.out, "Output CSV (default stdout)");

  FilterOpts fo;
  auto* filter = app.add_subcommand("filter", "Centered-window FFT low/high-pass filter of an image or dataset");
  filter->add_option("--input", fo.input, "Image file or dataset directory")->required();
  filter->add_option("--out", fo.out, "Output image or dataset directory")->required();
  filter->add_option("--kind", fo.kind, "low or high")->capture_default_str();
  filter->add_option("--n", fo.n, "Window side")->capture_default_str();

  std::string config, out, checkpoint;
  std::vector<std::uint64_t> seeds;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--config", config, "Run config")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* trainc = app.add_subcommand("train", "Train and evaluate one run");
  trainc->add_option("--config", config, "Run config")->required();
  trainc->add_option("--out", out, "Run directory")->required();

  auto* evalc = app.add_subcommand("eval", "Per-mask accuracy of a checkpoint");
  evalc->add_option("--config", config, "Run config")->required();
  evalc->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  evalc->add_option("--out", out, "Output CSV (default stdout)");

  std::vector<std::size_t> q_values{1, 2, 4};
  bool allow_overlap = false;
  auto* sw = app.add_subcommand("sweep-window", "Sweep the frequency block size q");
  sw->add_option("--config", config, "Base run config")->required();
  sw->add_option("--out", out, "Sweep directory")->required();
  sw->add_option("--q", q_values, "Block sizes")->delimiter(',')->capture_default_str();
  sw->add_option("--seeds", seeds, "Seeds (default: config seed)")->delimiter(',');
  sw->add_flag("--allow-overlap", allow_overlap, "Permit q > p/2");

  std::vector<std::string> tuples;
  auto* sp = app.add_subcommand("sweep-params", "Sweep allocation parameters (default tuple always included)");
  sp->add_option("--config", config, "Base run config")->required();
  sp->add_option("--out", out, "Sweep directory")->required();
  sp->add_option("--tuple", tuples, "alpha,beta,lambda,gamma (repeatable)");
  sp->add_option("--seeds", seeds, "Seeds (default: config seed)")->delimiter(',');

  auto* sf = app.add_subcommand("sweep-frm", "Compare frm, mp_low, mp_sum and mp_weighted");
  sf->add_option("--config", config, "Base run config")->required();
  sf->add_option("--out", out, "Sweep directory")->required();
  sf->add_option("--seeds", seeds, "Seeds (default: config seed)")->delimiter(',');

  std::vector<std::size_t> windows{8, 16};
  auto* fs_ = app.add_subcommand("filter-study", "Train on low-pass and high-pass filtered data");
  fs_->add_option("--config", config, "Base run config")->required();
  fs_->add_option("--out", out, "Output directory")->required();
  fs_->add_option("--windows", windows, "Window sides")->delimiter(',')->capture_default_str();
  fs_->add_option("--seeds", seeds, "Seeds (default: config seed)")->delimiter(',');

  std::size_t ntk_n = 32, ntk_d = 64, ntk_steps = 50;
  double ntk_scale = 0.5;
  std::uint64_t ntk_seed = 0;
  auto* ntk = app.add_subcommand("ntk-check", "Per-eigendirection residual decay of gradient descent on a linear model");
  ntk->add_option("--n", ntk_n, "Samples")->capture_default_str();
  ntk->add_option("--d", ntk_d, "Features")->capture_default_str();
  ntk->add_option("--steps", ntk_steps, "Gradient steps")->capture_default_str();
  ntk->add_option("--eta-scale", ntk_scale, "Step size as a multiple of 1/lambda_1")->capture_default_str();
  ntk->add_option("--seed", ntk_seed, "Seed")->capture_default_str();
  ntk->add_option("--out", out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) cmd_analyze(ao);
    else if (*filter) cmd_filter(fo);
    else if (*gen) cmd_gen(config, out);
    else if (*trainc) cmd_train(config, out);
    else if (*evalc) cmd_eval(config, checkpoint, out);
    else if (*sw) {
      const RunConfig base = load_config(config);
      run_sweep(out, window_variants(base, q_values, allow_overlap), seed_list(seeds, base.seed));
      std::cout << "wrote " << (fs::path(out) / "summary.csv").string() << "\n";
    } else if (*sp) {
      const RunConfig base = load_config(config);
      std::vector<AllocationParams> ts;
      for (const auto& t : tuples) ts.push_back(parse_params_tuple(t));
      run_sweep(out, param_variants(base, ts), seed_list(seeds, base.seed));
      std::cout << "wrote " << (fs::path(out) / "summary.csv").string() << "\n";
    } else if (*sf) {
      const RunConfig base = load_config(config);
      run_sweep(out, metric_variants(base), seed_list(seeds, base.seed));
      std::cout << "wrote " << (fs::path(out) / "summary.csv").string() << "\n";
    } else if (*fs_) {
      const RunConfig base = load_config(config);
      const auto pts = filter_study(base, windows, seed_list(seeds, base.seed));
      curves_csv(pts).save(fs::path(out) / "curves.csv");
      std::cout << "wrote " << (fs::path(out) / "curves.csv").string() << "\n";
    } else if (*ntk)
      cmd_ntk(ntk_n, ntk_d, ntk_steps, ntk_scale, ntk_seed, out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
