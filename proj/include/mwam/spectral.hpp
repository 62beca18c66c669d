#pragma once

// Patch DCT, frequency-band maps and FFT window filtering.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/matrix.hpp"

namespace mwam {

/// Grayscale image, rows = height, cols = width.
using ImagePlane = Matrix;

struct SpectralConfig {
  std::size_t p = 8;          // patch side
  std::size_t q = 2;          // frequency block side
  double sigma = 1e-8;        // ratio stabilizer
  double omega_bank = 0.5;    // weight of the historical value in the bank
  bool allow_overlap = false; // permit q > p/2 (literal corner indexing)

  void validate() const {
    require(p >= 1, "patch size p must be positive");
    require(q >= 1 && q <= p, "block size q must be in [1, p]");
    require(allow_overlap || 2 * q <= p,
            "block size q=" + std::to_string(q) + " overlaps for p=" + std::to_string(p) +
                " (requires q <= p/2)");
    require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
    require(omega_bank >= 0.0 && omega_bank <= 1.0, "omega_bank must lie in [0,1]");
  }
};

/// Low/high coefficient maps assembled from every patch of one image.
struct FrequencyMaps {
  Matrix low;
  Matrix high;
};

struct BandBlocks {
  Matrix low;
  Matrix high;
};

inline std::vector<Matrix> partition_patches(const ImagePlane& img, std::size_t p) {
  require(p >= 1, "patch size must be positive");
  require(!img.empty(), "empty image");
  require(img.rows() % p == 0 && img.cols() % p == 0,
          "image " + std::to_string(img.rows()) + "x" + std::to_string(img.cols()) +
              " is not divisible by patch size " + std::to_string(p));
  const std::size_t gr = img.rows() / p, gc = img.cols() / p;
  std::vector<Matrix> patches;
  patches.reserve(gr * gc);
  for (std::size_t pr = 0; pr < gr; ++pr)
    for (std::size_t pc = 0; pc < gc; ++pc) {
      Matrix patch(p, p);
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < p; ++c) patch(r, c) = img(pr * p + r, pc * p + c);
      patches.push_back(std::move(patch));
    }
  return patches;
}

/// Inverse of partition_patches for a grid of grid_rows x grid_cols patches.
inline ImagePlane reassemble_patches(const std::vector<Matrix>& patches, std::size_t grid_rows,
                                     std::size_t grid_cols) {
  require(patches.size() == grid_rows * grid_cols, "patch count does not match the grid");
  require(!patches.empty(), "no patches");
  const std::size_t p = patches.front().rows();
  ImagePlane img(grid_rows * p, grid_cols * p);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    require(patches[i].rows() == p && patches[i].cols() == p, "patch sizes differ");
    const std::size_t pr = i / grid_cols, pc = i % grid_cols;
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c) img(pr * p + r, pc * p + c) = patches[i](r, c);
  }
  return img;
}

/// Orthonormal DCT-II basis for one patch size. dct2(X) = C X C^T.
class DctPlan {
 public:
  explicit DctPlan(std::size_t p) : basis_(p, p) {
    require(p >= 1, "DCT size must be positive");
    const double n = static_cast<double>(p);
    for (std::size_t k = 0; k < p; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (std::size_t j = 0; j < p; ++j)
        basis_(k, j) = scale * std::cos(std::numbers::pi * (2.0 * j + 1.0) * k / (2.0 * n));
    }
  }

  std::size_t size() const noexcept { return basis_.rows(); }

  Matrix forward(const Matrix& patch) const {
    check(patch);
    return matmul_bt(matmul(basis_, patch), basis_);
  }

  Matrix inverse(const Matrix& coeffs) const {
    check(coeffs);
    return matmul(matmul_at(basis_, coeffs), basis_);
  }

 private:
  void check(const Matrix& m) const {
    require(m.rows() == m.cols(), "DCT input must be square");
    require(m.rows() == basis_.rows(), "DCT input size does not match plan");
  }
  Matrix basis_;
};

inline Matrix dct2(const Matrix& patch) {
  require(patch.rows() == patch.cols(), "DCT input must be square");
  return DctPlan(patch.rows()).forward(patch);
}

inline Matrix idct2(const Matrix& coeffs) {
  require(coeffs.rows() == coeffs.cols(), "DCT input must be square");
  return DctPlan(coeffs.rows()).inverse(coeffs);
}

/// Top-left q x q block (low) and bottom-right q x q block (high).
inline BandBlocks extract_bands(const Matrix& coeffs, std::size_t q, bool allow_overlap = false) {
  require(coeffs.rows() == coeffs.cols(), "coefficient block must be square");
  const std::size_t p = coeffs.rows();
  require(q >= 1 && q <= p, "block size q out of range");
  require(allow_overlap || 2 * q <= p, "low and high blocks overlap (q > p/2)");
  BandBlocks b{Matrix(q, q), Matrix(q, q)};
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t c = 0; c < q; ++c) {
      b.low(a, c) = coeffs(a, c);
      b.high(a, c) = coeffs(p - q + a, p - q + c);
    }
  return b;
}

/// Places the block pair of patch (r, c) at map region [r*q, r*q+q) x [c*q, c*q+q).
inline FrequencyMaps assemble_maps(const std::vector<BandBlocks>& blocks, std::size_t grid_rows,
                                   std::size_t grid_cols) {
  if (blocks.size() != grid_rows * grid_cols || blocks.empty())
    throw InputError("incomplete block grid: expected " + std::to_string(grid_rows * grid_cols) +
                     " block pairs, got " + std::to_string(blocks.size()));
  const std::size_t q = blocks.front().low.rows();
  FrequencyMaps maps{Matrix(grid_rows * q, grid_cols * q), Matrix(grid_rows * q, grid_cols * q)};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    require(b.low.rows() == q && b.low.cols() == q && b.high.rows() == q && b.high.cols() == q,
            "block sizes differ across patches");
    const std::size_t r0 = (i / grid_cols) * q, c0 = (i % grid_cols) * q;
    for (std::size_t a = 0; a < q; ++a)
      for (std::size_t c = 0; c < q; ++c) {
        maps.low(r0 + a, c0 + c) = b.low(a, c);
        maps.high(r0 + a, c0 + c) = b.high(a, c);
      }
  }
  return maps;
}

/// Full pipeline: patches -> DCT -> bands -> maps.
inline FrequencyMaps frequency_maps(const ImagePlane& img, const SpectralConfig& cfg) {
  cfg.validate();
  require(all_finite(img), "image contains non-finite values");
  const auto patches = partition_patches(img, cfg.p);
  const DctPlan plan(cfg.p);
  std::vector<BandBlocks> blocks;
  blocks.reserve(patches.size());
  for (const auto& patch : patches) blocks.push_back(extract_bands(plan.forward(patch), cfg.q, cfg.allow_overlap));
  return assemble_maps(blocks, img.rows() / cfg.p, img.cols() / cfg.p);
}

// ---------------------------------------------------------------------------
// FFT

using Complex = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place transform; radix-2 for powers of two, direct DFT otherwise.
inline void fft1d(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  const double sign = inverse ? 1.0 : -1.0;
  if (!is_pow2(n)) {
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      Complex s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / n;
        s += a[j] * Complex(std::cos(ang), std::sin(ang));
      }
      out[k] = s;
    }
    a.swap(out);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const Complex wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      Complex w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const Complex u = a[i + j], v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

/// Row-major 2D complex spectrum.
struct Spectrum {
  std::size_t rows = 0, cols = 0;
  std::vector<Complex> data;
  Complex& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline void fft2_inplace(Spectrum& s, bool inverse) {
  std::vector<Complex> line(s.cols);
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) line[c] = s(r, c);
    detail::fft1d(line, inverse);
    for (std::size_t c = 0; c < s.cols; ++c) s(r, c) = line[c];
  }
  line.assign(s.rows, Complex{});
  for (std::size_t c = 0; c < s.cols; ++c) {
    for (std::size_t r = 0; r < s.rows; ++r) line[r] = s(r, c);
    detail::fft1d(line, inverse);
    for (std::size_t r = 0; r < s.rows; ++r) s(r, c) = line[r];
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(s.rows * s.cols);
    for (auto& v : s.data) v *= scale;
  }
}

/// Unnormalized forward 2D DFT.
inline Spectrum fft2(const ImagePlane& img) {
  Spectrum s{img.rows(), img.cols(), std::vector<Complex>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) s.data[i] = img.flat()[i];
  fft2_inplace(s, false);
  return s;
}

enum class FilterKind { low_pass, high_pass };

inline std::string to_string(FilterKind k) { return k == FilterKind::low_pass ? "low" : "high"; }

/// Keeps (low_pass) or removes (high_pass) the n x n window around the DC
/// term of the fftshift-ed spectrum. DC sits at (floor(H/2), floor(W/2)) after
/// the shift and the window spans [center - floor(n/2), center - floor(n/2) + n).
inline ImagePlane fft_filter(const ImagePlane& img, FilterKind kind, std::size_t n) {
  require(!img.empty(), "empty image");
  require(n <= std::min(img.rows(), img.cols()),
          "filter window " + std::to_string(n) + " exceeds image size");
  require(all_finite(img), "image contains non-finite values");
  Spectrum s = fft2(img);
  const std::size_t H = img.rows(), W = img.cols();
  // Shifted index i' = (i + floor(H/2)) mod H holds unshifted bin i.
  const std::size_t r0 = H / 2 - n / 2, c0 = W / 2 - n / 2;
  for (std::size_t r = 0; r < H; ++r) {
    const std::size_t rs = (r + H / 2) % H;
    const bool row_in = rs >= r0 && rs < r0 + n;
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t cs = (c + W / 2) % W;
      const bool inside = row_in && cs >= c0 && cs < c0 + n;
      const bool keep = kind == FilterKind::low_pass ? inside : !inside;
      if (!keep) s(r, c) = 0.0;
    }
  }
  fft2_inplace(s, true);
  ImagePlane out(H, W);
  for (std::size_t i = 0; i < out.size(); ++i) out.flat()[i] = s.data[i].real();
  return out;
}

/// Sum of squared spectral magnitudes divided by the pixel count.
inline double spectral_energy(const ImagePlane& img) {
  if (img.empty()) return 0.0;
  const Spectrum s = fft2(img);
  double e = 0.0;
  for (const auto& v : s.data) e += std::norm(v);
  return e / static_cast<double>(img.size());
}

/// Channel-average reduction for multi-channel inputs.
inline ImagePlane average_channels(const std::vector<ImagePlane>& channels) {
  require(!channels.empty(), "no channels");
  ImagePlane out(channels.front().rows(), channels.front().cols());
  for (const auto& ch : channels) out += ch;
  out *= 1.0 / static_cast<double>(channels.size());
  return out;
}

/// Largest centered crop whose sides are multiples of p.
inline ImagePlane center_crop(const ImagePlane& img, std::size_t p) {
  require(p >= 1, "patch size must be positive");
  const std::size_t H = img.rows() / p * p, W = img.cols() / p * p;
  require(H > 0 && W > 0, "image smaller than one patch");
  const std::size_t r0 = (img.rows() - H) / 2, c0 = (img.cols() - W) / 2;
  ImagePlane out(H, W);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) out(r, c) = img(r0 + r, c0 + c);
  return out;
}

}  // namespace mwam
