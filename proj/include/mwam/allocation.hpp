#pragma once

// Turns smoothed per-modality preference values into guidance weights K.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/preference.hpp"
#include "mwam/spectral.hpp"

namespace mwam {

struct AllocationParams {
  double alpha = 1.5;
  double beta = 1.0;
  double lambda = 6.0;
  double gamma = 0.7;
  double sigma = 1e-8;

  void validate() const {
    require(std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(gamma), "allocation params must be finite");
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
    require(sigma >= 0.0, "sigma must be non-negative");
  }

  /// Open interval (alpha - beta, alpha) that every weight falls into.
  double lower_bound() const noexcept { return alpha - beta; }
  double upper_bound() const noexcept { return alpha; }
};

struct ModalWeights {
  std::vector<double> k;  // per-modality weight
  std::vector<double> t;  // per-modality relative ratio

  static ModalWeights unit(std::size_t m) { return {std::vector<double>(m, 1.0), std::vector<double>(m, 1.0)}; }
  std::size_t size() const noexcept { return k.size(); }
};

/// T_i = F_i / (mean(F) + sigma)
inline std::vector<double> relative_ratio(const std::vector<double>& scores, double sigma) {
  require(!scores.empty(), "relative_ratio: empty score set");
  require(sigma >= 0.0, "relative_ratio: sigma must be non-negative");
  double mean = 0.0;
  for (double s : scores) {
    require(s >= 0.0 && std::isfinite(s), "relative_ratio: scores must be finite and non-negative");
    mean += s;
  }
  mean /= static_cast<double>(scores.size());
  const double denom = mean + sigma;
  std::vector<double> t(scores.size(), 0.0);
  if (denom == 0.0) return t;  // every score is zero and sigma == 0
  for (std::size_t i = 0; i < scores.size(); ++i) t[i] = scores[i] / denom;
  return t;
}

/// K = alpha - beta / (1 + exp(-lambda (T - gamma))), exponent clamped to +-60.
inline double weight(double t, const AllocationParams& params) {
  const double z = std::clamp(-params.lambda * (t - params.gamma), -60.0, 60.0);
  return params.alpha - params.beta / (1.0 + std::exp(z));
}

inline ModalWeights weights_from_scores(const std::vector<double>& smoothed, const AllocationParams& params) {
  params.validate();
  ModalWeights w;
  w.t = relative_ratio(smoothed, params.sigma);
  w.k.reserve(w.t.size());
  for (double t : w.t) w.k.push_back(weight(t, params));
  return w;
}

/// One MWAM step: batch scores -> bank updates -> ratios -> weights.
/// `banks` is advanced in place; one batch and one bank per modality.
inline ModalWeights allocate(const std::vector<std::vector<ImagePlane>>& batches, std::vector<FrmBank>& banks,
                             const SpectralConfig& cfg, const MetricSpec& metric,
                             const AllocationParams& params) {
  require(!batches.empty(), "allocate: no modalities");
  require(batches.size() == banks.size(), "allocate: modality count differs from bank count");
  for (const auto& b : batches)
    require(b.size() == batches.front().size(), "allocate: batch sizes differ across modalities");
  std::vector<double> smoothed;
  smoothed.reserve(banks.size());
  for (std::size_t m = 0; m < banks.size(); ++m) {
    banks[m].update(batch_preference(batches[m], cfg, metric));
    smoothed.push_back(banks[m].value());
  }
  return weights_from_scores(smoothed, params);
}

}  // namespace mwam
