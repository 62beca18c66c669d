#pragma once

// Modality-preference scores computed from frequency maps, and the
// exponentially smoothed per-modality bank.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/spectral.hpp"

namespace mwam {

enum class MetricKind { frm, mp_low, mp_sum, mp_weighted };

inline std::string to_string(MetricKind k) {
  switch (k) {
    case MetricKind::frm: return "frm";
    case MetricKind::mp_low: return "mp_low";
    case MetricKind::mp_sum: return "mp_sum";
    case MetricKind::mp_weighted: return "mp_weighted";
  }
  return "?";
}

inline MetricKind parse_metric(std::string_view s) {
  if (s == "frm") return MetricKind::frm;
  if (s == "mp_low") return MetricKind::mp_low;
  if (s == "mp_sum") return MetricKind::mp_sum;
  if (s == "mp_weighted") return MetricKind::mp_weighted;
  throw InputError("unknown metric kind '" + std::string(s) + "'");
}

struct PreferenceScore {
  double value = 0.0;
  MetricKind kind = MetricKind::frm;
};

/// Metric selection plus its free parameter (only mp_weighted uses omega_band).
struct MetricSpec {
  MetricKind kind = MetricKind::frm;
  double omega_band = 0.9;
};

namespace detail {
inline double l1(const Matrix& m) {
  double s = 0.0;
  for (double v : m.flat()) s += std::abs(v);
  return s;
}
inline PreferenceScore checked(double v, MetricKind k) {
  if (!std::isfinite(v) || v < 0.0) throw NumericError("preference score is not a finite non-negative value");
  return {v, k};
}
}  // namespace detail

/// Sum over cells of |low(a,b) / (high(h-1-a, w-1-b) + sigma)|: the high map is
/// flipped along both axes before the elementwise ratio.
inline PreferenceScore frm(const FrequencyMaps& maps, double sigma = 1e-8) {
  require(maps.low.same_shape(maps.high), "frm: low and high maps differ in shape");
  require(sigma > 0.0, "frm: sigma must be positive");
  const std::size_t R = maps.low.rows(), C = maps.low.cols();
  double s = 0.0;
  for (std::size_t a = 0; a < R; ++a)
    for (std::size_t b = 0; b < C; ++b)
      s += std::abs(maps.low(a, b) / (maps.high(R - 1 - a, C - 1 - b) + sigma));
  return detail::checked(s, MetricKind::frm);
}

inline PreferenceScore mp_low(const FrequencyMaps& maps) {
  return detail::checked(detail::l1(maps.low), MetricKind::mp_low);
}

inline PreferenceScore mp_sum(const FrequencyMaps& maps) {
  return detail::checked(detail::l1(maps.low) + detail::l1(maps.high), MetricKind::mp_sum);
}

inline PreferenceScore mp_weighted(const FrequencyMaps& maps, double omega_band) {
  require(omega_band >= 0.0 && omega_band <= 1.0, "mp_weighted: omega_band must lie in [0,1]");
  return detail::checked(omega_band * detail::l1(maps.low) + (1.0 - omega_band) * detail::l1(maps.high),
                         MetricKind::mp_weighted);
}

inline PreferenceScore score(const FrequencyMaps& maps, const MetricSpec& metric, double sigma) {
  switch (metric.kind) {
    case MetricKind::frm: return frm(maps, sigma);
    case MetricKind::mp_low: return mp_low(maps);
    case MetricKind::mp_sum: return mp_sum(maps);
    case MetricKind::mp_weighted: return mp_weighted(maps, metric.omega_band);
  }
  throw InputError("unknown metric kind");
}

inline PreferenceScore sample_preference(const ImagePlane& img, const SpectralConfig& cfg,
                                         const MetricSpec& metric) {
  return score(frequency_maps(img, cfg), metric, cfg.sigma);
}

/// Mean of per-sample scores over one modality's mini-batch.
inline PreferenceScore batch_preference(const std::vector<ImagePlane>& batch, const SpectralConfig& cfg,
                                        const MetricSpec& metric) {
  require(!batch.empty(), "batch_preference: empty batch");
  double s = 0.0;
  for (const auto& img : batch) s += sample_preference(img, cfg, metric).value;
  return detail::checked(s / static_cast<double>(batch.size()), metric.kind);
}

/// Exponential moving average of one modality's score across iterations.
/// The first observation is taken as-is.
class FrmBank {
 public:
  explicit FrmBank(double omega = 0.5) : omega_(omega) {
    require(omega >= 0.0 && omega <= 1.0, "bank weight must lie in [0,1]");
  }

  FrmBank updated(const PreferenceScore& current) const {
    if (!(current.value >= 0.0) || !std::isfinite(current.value))
      throw InputError("bank update with a negative or non-finite score");
    FrmBank next = *this;
    next.value_ = iteration_ == 0 ? current.value : omega_ * value_ + (1.0 - omega_) * current.value;
    ++next.iteration_;
    return next;
  }

  void update(const PreferenceScore& current) { *this = updated(current); }

  double value() const noexcept { return value_; }
  std::size_t iteration() const noexcept { return iteration_; }
  double omega() const noexcept { return omega_; }

 private:
  double omega_;
  double value_ = 0.0;
  std::size_t iteration_ = 0;
};

inline FrmBank bank_update(const FrmBank& bank, const PreferenceScore& current) {
  return bank.updated(current);
}

}  // namespace mwam
