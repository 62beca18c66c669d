#pragma once

// MWAM training loop. Each iteration scores every modality's mini-batch,
// advances the smoothed banks, converts the smoothed scores into weights K and
// applies them according to the mode:
//   none      plain cross-entropy, plain SGD
//   loss      K weights the auxiliary-head losses
//   gradient  K scales each encoder's SGD step
//   hybrid    both
// The classifier step is never scaled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mwam/allocation.hpp"
#include "mwam/error.hpp"
#include "mwam/preference.hpp"
#include "mwam/random.hpp"
#include "mwam/spectral.hpp"
#include "mwam/synthdata.hpp"
#include "mwam/tinynet.hpp"

namespace mwam {

enum class Mode { none, loss, gradient, hybrid };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::none: return "none";
    case Mode::loss: return "loss";
    case Mode::gradient: return "gradient";
    case Mode::hybrid: return "hybrid";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "none") return Mode::none;
  if (s == "loss") return Mode::loss;
  if (s == "gradient") return Mode::gradient;
  if (s == "hybrid") return Mode::hybrid;
  throw ConfigError("unknown training mode '" + std::string(s) + "'");
}

inline bool weights_loss(Mode m) { return m == Mode::loss || m == Mode::hybrid; }
inline bool weights_gradient(Mode m) { return m == Mode::gradient || m == Mode::hybrid; }

struct TrainConfig {
  Mode mode = Mode::none;
  double eta = 0.05;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  SpectralConfig spectral;
  MetricSpec metric;
  AllocationParams alloc;
  double warmup_fraction = 0.05;  // leading share of iterations trained with K = 1
  std::uint64_t seed = 0;
  std::vector<double> forced_weights;  // non-empty: overrides K on every iteration

  void validate() const {
    require(eta > 0.0 && std::isfinite(eta), "learning rate must be positive");
    require(batch_size >= 1, "batch size must be at least 1");
    require(epochs >= 1, "epochs must be at least 1");
    require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "warmup fraction must lie in [0,1]");
    spectral.validate();
    alloc.validate();
  }
};

struct TraceRow {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double total_loss = 0.0;
  double main_loss = 0.0;
  std::vector<double> aux_loss;  // NaN when auxiliary heads are not trained
  std::vector<double> frm_raw;
  std::vector<double> frm_smoothed;
  std::vector<double> t;
  std::vector<double> k;          // weights actually applied this iteration
  std::vector<double> grad_norm;  // per-encoder gradient norm before scaling
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  std::size_t warmup_iterations = 0;
};

struct TrainResult {
  ParamSet params;
  TrainTrace trace;
};

/// sum_i K_i CE(y, aux_i) + CE(y, main)
inline double weighted_loss(const Matrix& main_logits, const std::vector<Matrix>& aux_logits,
                            const std::vector<int>& labels, std::span<const double> k) {
  if (aux_logits.size() != k.size())
    throw ConfigError("weighted loss needs one auxiliary output per modality weight");
  double total = cross_entropy(main_logits, labels);
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (aux_logits[i].empty()) throw ConfigError("weighted loss: missing auxiliary logits for modality " + std::to_string(i));
    total += k[i] * cross_entropy(aux_logits[i], labels);
  }
  return total;
}

/// Builds the network layout for a dataset: one encoder per modality over
/// flattened images.
inline NetConfig net_config_for(const SynthDataset& ds, const std::vector<std::size_t>& hidden, Mode mode,
                                std::uint64_t seed, Activation act = Activation::relu) {
  require(ds.modalities() > 0 && ds.samples() > 0, "empty dataset");
  NetConfig c = NetConfig::uniform(ds.modalities(), ds.images.front().front().size(), hidden, ds.config.classes,
                                   weights_loss(mode), seed);
  c.activation = act;
  return c;
}

/// Per-sample scores for the given indices, [modality][position in idx].
inline std::vector<std::vector<double>> sample_scores(const SynthDataset& ds, std::span<const std::size_t> idx,
                                                      const SpectralConfig& cfg, const MetricSpec& metric) {
  std::vector<std::vector<double>> out(ds.modalities());
  for (std::size_t m = 0; m < ds.modalities(); ++m) {
    out[m].reserve(idx.size());
    for (std::size_t i : idx) out[m].push_back(sample_preference(ds.images[m][i], cfg, metric).value);
  }
  return out;
}

using TraceSink = std::function<void(const TraceRow&)>;
using EpochHook = std::function<void(std::size_t epoch, const ParamSet&)>;

inline TrainResult train(const TrainConfig& cfg, const NetConfig& net, const SynthDataset& ds,
                         const TraceSink& sink = {}, const EpochHook& on_epoch = {}) {
  cfg.validate();
  net.validate();
  if (net.modalities() != ds.modalities())
    throw ConfigError("network modality count does not match the dataset");
  if (weights_loss(cfg.mode) && !net.use_aux_heads)
    throw ConfigError("mode '" + to_string(cfg.mode) + "' requires auxiliary heads");
  if (!cfg.forced_weights.empty() && cfg.forced_weights.size() != ds.modalities())
    throw ConfigError("forced weights need one entry per modality");
  require(!ds.train_idx.empty(), "dataset has no training samples");

  const std::size_t M = ds.modalities();
  const std::vector<Matrix> inputs = flatten(ds);
  const auto scores = sample_scores(ds, ds.train_idx, cfg.spectral, cfg.metric);

  TrainResult result;
  result.params = init_network(net);
  std::vector<FrmBank> banks(M, FrmBank(cfg.spectral.omega_bank));
  const AllocationParams& alloc = cfg.alloc;

  const std::size_t n_train = ds.train_idx.size();
  const std::size_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_iters = per_epoch * cfg.epochs;
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_iters)));
  result.trace.warmup_iterations = warmup;
  result.trace.rows.reserve(total_iters);

  Rng shuffle_rng = stream(cfg.seed, "shuffle");
  std::vector<std::size_t> order(n_train);  // positions into train_idx
  std::vector<std::size_t> batch_idx;
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size, ++iteration) {
      const std::size_t stop = std::min(n_train, start + cfg.batch_size);
      TraceRow row;
      row.iteration = iteration;
      row.epoch = epoch;

      std::vector<double> smoothed(M);
      row.frm_raw.resize(M);
      for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        for (std::size_t j = start; j < stop; ++j) s += scores[m][order[j]];
        row.frm_raw[m] = s / static_cast<double>(stop - start);
        banks[m].update({row.frm_raw[m], cfg.metric.kind});
        smoothed[m] = banks[m].value();
      }
      row.frm_smoothed = smoothed;
      const ModalWeights w = weights_from_scores(smoothed, alloc);
      row.t = w.t;
      if (!cfg.forced_weights.empty())
        row.k = cfg.forced_weights;
      else if (iteration < warmup)
        row.k.assign(M, 1.0);
      else
        row.k = w.k;

      batch_idx.clear();
      for (std::size_t j = start; j < stop; ++j) batch_idx.push_back(ds.train_idx[order[j]]);
      const Batch batch = gather(inputs, ds.labels, batch_idx);
      const std::span<const double> aux_w = weights_loss(cfg.mode) ? std::span<const double>(row.k) : std::span<const double>();
      const BackwardResult br = backward(result.params, batch, full_mask(M), aux_w);

      row.main_loss = br.main_loss;
      row.total_loss = br.total_loss;
      row.aux_loss = br.aux_losses;
      row.grad_norm.resize(M);
      for (std::size_t m = 0; m < M; ++m) row.grad_norm[m] = encoder_norm(br.grads, m);
      if (!std::isfinite(br.total_loss)) {
        if (sink) sink(row);
        result.trace.rows.push_back(row);
        throw NumericError("non-finite loss at iteration " + std::to_string(iteration));
      }
      const std::span<const double> step_w =
          weights_gradient(cfg.mode) ? std::span<const double>(row.k) : std::span<const double>();
      result.params = sgd_step(result.params, br.grads, cfg.eta, step_w);
      if (sink) sink(row);
      result.trace.rows.push_back(std::move(row));
    }
    if (on_epoch) on_epoch(epoch, result.params);
  }
  return result;
}

/// Test-split view of a dataset as a network batch.
inline Batch split_batch(const SynthDataset& ds, const std::vector<std::size_t>& idx) {
  return gather(flatten(ds), ds.labels, idx);
}

}  // namespace mwam
