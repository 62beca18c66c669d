#pragma once

// Deterministic multimodal datasets with controllable per-band spectral mass.
//
// Every image is built in the patch-DCT domain: the top-left q x q block of
// each patch is the low band, the bottom-right block the high band, all other
// coefficients are zero. One band per modality carries a class template plus
// Gaussian perturbation; the other band carries class-independent noise. Each
// band is rescaled per sample so its L1 mass over the whole image equals the
// configured target, then the image is obtained by inverse DCT.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/random.hpp"
#include "mwam/spectral.hpp"
#include "mwam/tinynet.hpp"

namespace mwam {

enum class Band { low, high };

inline std::string to_string(Band b) { return b == Band::low ? "low" : "high"; }

inline Band parse_band(std::string_view s) {
  if (s == "low") return Band::low;
  if (s == "high") return Band::high;
  throw InputError("unknown band '" + std::string(s) + "'");
}

struct ModalitySpec {
  double low_energy = 1.0;   // target L1 mass of the low band
  double high_energy = 1.0;  // target L1 mass of the high band
  Band signal_band = Band::low;
  double snr = 1.0;          // template amplitude relative to unit per-sample noise

  void validate() const {
    require(low_energy >= 0.0 && high_energy >= 0.0, "band energies must be non-negative");
    require(low_energy + high_energy > 0.0, "infeasible energy targets: both bands are zero");
    require(snr >= 0.0 && std::isfinite(snr), "snr must be finite and non-negative");
  }
};

struct GenConfig {
  std::vector<ModalitySpec> modalities;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::size_t classes = 4;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t p = 8;
  std::size_t q = 2;
  std::uint64_t seed = 0;

  std::size_t samples() const noexcept { return n_train + n_test; }

  void validate() const {
    require(!modalities.empty(), "dataset needs at least one modality");
    for (const auto& m : modalities) m.validate();
    require(classes >= 2, "dataset needs at least two classes");
    require(samples() > 0, "dataset needs at least one sample");
    require(p >= 1 && q >= 1 && 2 * q <= p, "generator needs 1 <= q <= p/2");
    require(height > 0 && width > 0 && height % p == 0 && width % p == 0,
            "image dimensions must be divisible by the patch size");
  }
};

/// Three modalities with low-band energies 100:10:1. The dominant one carries
/// its class signal in the low band; the two weaker ones carry a fainter
/// signal in the high band under a larger high-band mass.
inline std::vector<ModalitySpec> imbalanced_modalities() {
  return {{100.0, 1.0, Band::low, 0.8}, {10.0, 60.0, Band::high, 0.6}, {1.0, 40.0, Band::high, 0.5}};
}

struct SynthDataset {
  std::vector<std::vector<ImagePlane>> images;  // [modality][sample]
  std::vector<int> labels;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  GenConfig config;

  std::size_t modalities() const noexcept { return images.size(); }
  std::size_t samples() const noexcept { return labels.size(); }
};

namespace detail {

inline void scale_to_l1(std::vector<double>& v, double target) {
  double l1 = 0.0;
  for (double x : v) l1 += std::abs(x);
  const double s = (target == 0.0 || l1 == 0.0) ? 0.0 : target / l1;
  for (double& x : v) x *= s;
}

}  // namespace detail

inline SynthDataset generate(const GenConfig& cfg) {
  cfg.validate();
  const std::size_t gr = cfg.height / cfg.p, gc = cfg.width / cfg.p, q = cfg.q, p = cfg.p;
  const std::size_t band_len = gr * gc * q * q;
  const std::size_t M = cfg.modalities.size(), N = cfg.samples();
  Rng rng = stream(cfg.seed, "data");
  std::normal_distribution<double> gauss(0.0, 1.0);

  // templates[m][c]
  std::vector<std::vector<std::vector<double>>> templates(M, std::vector<std::vector<double>>(cfg.classes));
  for (auto& per_class : templates)
    for (auto& t : per_class) {
      t.resize(band_len);
      for (double& v : t) v = gauss(rng);
    }

  SynthDataset ds;
  ds.config = cfg;
  ds.images.assign(M, {});
  for (auto& v : ds.images) v.reserve(N);
  ds.labels.resize(N);
  const DctPlan plan(p);
  std::vector<double> signal(band_len), noise(band_len);
  for (std::size_t i = 0; i < N; ++i) {
    const int label = static_cast<int>(i % cfg.classes);
    ds.labels[i] = label;
    for (std::size_t m = 0; m < M; ++m) {
      const ModalitySpec& spec = cfg.modalities[m];
      const auto& tmpl = templates[m][static_cast<std::size_t>(label)];
      for (std::size_t k = 0; k < band_len; ++k) signal[k] = spec.snr * tmpl[k] + gauss(rng);
      for (std::size_t k = 0; k < band_len; ++k) noise[k] = gauss(rng);
      const bool low_signal = spec.signal_band == Band::low;
      detail::scale_to_l1(signal, low_signal ? spec.low_energy : spec.high_energy);
      detail::scale_to_l1(noise, low_signal ? spec.high_energy : spec.low_energy);
      const std::vector<double>& low = low_signal ? signal : noise;
      const std::vector<double>& high = low_signal ? noise : signal;

      std::vector<Matrix> patches;
      patches.reserve(gr * gc);
      for (std::size_t patch = 0; patch < gr * gc; ++patch) {
        Matrix coeffs(p, p);
        for (std::size_t a = 0; a < q; ++a)
          for (std::size_t b = 0; b < q; ++b) {
            const std::size_t k = patch * q * q + a * q + b;
            coeffs(a, b) = low[k];
            coeffs(p - q + a, p - q + b) = high[k];
          }
        patches.push_back(plan.inverse(coeffs));
      }
      ds.images[m].push_back(reassemble_patches(patches, gr, gc));
    }
  }
  for (std::size_t i = 0; i < N; ++i) (i < cfg.n_train ? ds.train_idx : ds.test_idx).push_back(i);
  return ds;
}

/// Replaces absent modalities by zero planes.
inline std::vector<ImagePlane> apply_mask(const std::vector<ImagePlane>& sample, const PresenceMask& mask) {
  require(sample.size() == mask.size(), "mask length does not match the modality count");
  require(std::any_of(mask.begin(), mask.end(), [](bool v) { return v; }), "mask marks no modality as present");
  std::vector<ImagePlane> out = sample;
  for (std::size_t m = 0; m < out.size(); ++m)
    if (!mask[m]) out[m] = ImagePlane(out[m].rows(), out[m].cols());
  return out;
}

/// One N x (H*W) matrix per modality, rows in sample order.
inline std::vector<Matrix> flatten(const SynthDataset& ds) {
  std::vector<Matrix> out;
  for (const auto& planes : ds.images) {
    require(!planes.empty(), "dataset has no samples");
    const std::size_t d = planes.front().size();
    Matrix x(planes.size(), d);
    for (std::size_t i = 0; i < planes.size(); ++i) {
      require(planes[i].size() == d, "image sizes differ within a modality");
      std::copy(planes[i].flat().begin(), planes[i].flat().end(), x.row(i).begin());
    }
    out.push_back(std::move(x));
  }
  return out;
}

inline Batch gather(const std::vector<Matrix>& inputs, const std::vector<int>& labels,
                    std::span<const std::size_t> idx) {
  Batch b;
  b.labels.reserve(idx.size());
  for (std::size_t i : idx) b.labels.push_back(labels.at(i));
  for (const auto& x : inputs) {
    Matrix sub(idx.size(), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      require(idx[r] < x.rows(), "sample index out of range");
      std::copy(x.row(idx[r]).begin(), x.row(idx[r]).end(), sub.row(r).begin());
    }
    b.inputs.push_back(std::move(sub));
  }
  return b;
}

}  // namespace mwam
