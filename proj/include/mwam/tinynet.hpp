#pragma once

// Small multimodal classifier: one MLP encoder per modality, concatenation
// fusion into a linear classifier, optional per-modality linear auxiliary
// heads. Forward and backward passes are written out by hand so every
// gradient can be inspected and edited.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/matrix.hpp"
#include "mwam/random.hpp"

namespace mwam {

enum class Activation { relu, linear };

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // output width of each layer; last is the feature width
};

struct NetConfig {
  std::vector<EncoderConfig> encoders;
  std::size_t classes = 4;
  Activation activation = Activation::relu;
  bool use_aux_heads = false;
  std::uint64_t seed = 0;

  static NetConfig uniform(std::size_t modalities, std::size_t input_dim, std::vector<std::size_t> hidden,
                           std::size_t classes, bool aux = false, std::uint64_t seed = 0) {
    NetConfig c;
    c.encoders.assign(modalities, EncoderConfig{input_dim, std::move(hidden)});
    c.classes = classes;
    c.use_aux_heads = aux;
    c.seed = seed;
    return c;
  }

  std::size_t modalities() const noexcept { return encoders.size(); }

  void validate() const {
    require(!encoders.empty(), "network needs at least one modality");
    require(classes >= 2, "network needs at least two classes");
    for (const auto& e : encoders) {
      require(e.input_dim > 0, "encoder input width must be positive");
      require(!e.hidden.empty(), "encoder needs at least one layer");
      for (std::size_t w : e.hidden) require(w > 0, "zero-width layer");
    }
  }
};

/// Weight is out x in, bias is 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;
  bool operator==(const Dense&) const = default;
};

struct ParamSet {
  std::vector<std::vector<Dense>> encoders;
  Dense classifier;
  std::vector<Dense> aux_heads;  // empty when the net has no auxiliary heads
  Activation activation = Activation::relu;

  std::size_t modalities() const noexcept { return encoders.size(); }
  std::size_t classes() const noexcept { return classifier.weight.rows(); }
  bool has_aux() const noexcept { return !aux_heads.empty(); }
  std::size_t feature_width(std::size_t m) const { return encoders[m].back().weight.rows(); }
  bool operator==(const ParamSet&) const = default;
};

/// Same layout as ParamSet.
using GradientSet = ParamSet;

enum class Owner { encoder, classifier, aux };

template <typename M>
struct TensorSlot {
  std::string name;
  Owner owner;
  std::size_t modality;  // meaningful for encoder and aux tensors
  M* tensor;
};

/// Flat listing of every tensor in a fixed order: encoders, classifier, aux heads.
template <typename PS>
auto tensors(PS& ps) {
  using M = std::conditional_t<std::is_const_v<PS>, const Matrix, Matrix>;
  std::vector<TensorSlot<M>> out;
  for (std::size_t m = 0; m < ps.encoders.size(); ++m)
    for (std::size_t l = 0; l < ps.encoders[m].size(); ++l) {
      const std::string base = "enc" + std::to_string(m) + ".l" + std::to_string(l);
      out.push_back({base + ".weight", Owner::encoder, m, &ps.encoders[m][l].weight});
      out.push_back({base + ".bias", Owner::encoder, m, &ps.encoders[m][l].bias});
    }
  out.push_back({"cls.weight", Owner::classifier, 0, &ps.classifier.weight});
  out.push_back({"cls.bias", Owner::classifier, 0, &ps.classifier.bias});
  for (std::size_t m = 0; m < ps.aux_heads.size(); ++m) {
    const std::string base = "aux" + std::to_string(m);
    out.push_back({base + ".weight", Owner::aux, m, &ps.aux_heads[m].weight});
    out.push_back({base + ".bias", Owner::aux, m, &ps.aux_heads[m].bias});
  }
  return out;
}

inline ParamSet zeros_like(const ParamSet& ps) {
  ParamSet z = ps;
  for (auto& slot : tensors(z)) *slot.tensor = Matrix(slot.tensor->rows(), slot.tensor->cols());
  return z;
}

/// L2 norm over all tensors owned by encoder m.
inline double encoder_norm(const ParamSet& g, std::size_t m) {
  double s = 0.0;
  for (const auto& layer : g.encoders.at(m))
    for (const Matrix* t : {&layer.weight, &layer.bias})
      for (double v : t->flat()) s += v * v;
  return std::sqrt(s);
}

inline double classifier_norm(const ParamSet& g) {
  double s = 0.0;
  for (const Matrix* t : {&g.classifier.weight, &g.classifier.bias})
    for (double v : t->flat()) s += v * v;
  return std::sqrt(s);
}

namespace detail {
inline Dense glorot_dense(std::size_t in, std::size_t out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-s, s);
  Dense d{Matrix(out, in), Matrix(1, out)};
  for (double& v : d.weight.flat()) v = dist(rng);
  return d;
}
}  // namespace detail

/// Glorot-uniform weights, zero biases, drawn from the "init" stream of cfg.seed.
inline ParamSet init_network(const NetConfig& cfg) {
  cfg.validate();
  Rng rng = stream(cfg.seed, "init");
  ParamSet ps;
  ps.activation = cfg.activation;
  std::size_t total = 0;
  for (const auto& e : cfg.encoders) {
    std::vector<Dense> layers;
    std::size_t in = e.input_dim;
    for (std::size_t w : e.hidden) {
      layers.push_back(detail::glorot_dense(in, w, rng));
      in = w;
    }
    total += in;
    ps.encoders.push_back(std::move(layers));
  }
  ps.classifier = detail::glorot_dense(total, cfg.classes, rng);
  if (cfg.use_aux_heads)
    for (std::size_t m = 0; m < cfg.modalities(); ++m)
      ps.aux_heads.push_back(detail::glorot_dense(cfg.encoders[m].hidden.back(), cfg.classes, rng));
  return ps;
}

using PresenceMask = std::vector<bool>;

inline PresenceMask full_mask(std::size_t m) { return PresenceMask(m, true); }

/// Per-modality inputs (N x input_dim each) with shared labels.
struct Batch {
  std::vector<Matrix> inputs;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t modalities() const noexcept { return inputs.size(); }
};

struct ForwardPass {
  std::vector<std::vector<Matrix>> hidden;  // per modality, per layer output (empty if absent)
  Matrix fused;                             // N x sum(feature widths); zero blocks for absent modalities
  Matrix logits;                            // N x classes
  std::vector<Matrix> aux_logits;           // per modality; empty matrix when absent or no aux heads
};

namespace detail {

inline void check_batch(const ParamSet& ps, const Batch& b, const PresenceMask& mask) {
  require(b.modalities() == ps.modalities(), "batch modality count does not match the network");
  require(mask.size() == ps.modalities(), "mask length does not match the network");
  require(std::any_of(mask.begin(), mask.end(), [](bool v) { return v; }), "mask marks no modality as present");
  const std::size_t n = b.size();
  for (std::size_t m = 0; m < b.modalities(); ++m) {
    require(b.inputs[m].rows() == n, "modality sample count differs from label count");
    require(b.inputs[m].cols() == ps.encoders[m].front().weight.cols(), "modality input width does not match encoder");
  }
  for (int y : b.labels)
    require(y >= 0 && static_cast<std::size_t>(y) < ps.classes(), "label out of range");
}

inline Matrix affine(const Matrix& x, const Dense& d) {
  Matrix out = matmul_bt(x, d.weight);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += d.bias(0, c);
  return out;
}

inline Matrix column_sums(const Matrix& m) {
  Matrix s(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) s(0, c) += m(r, c);
  return s;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) z += (p(r, c) = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < row.size(); ++c) p(r, c) /= z;
  }
  return p;
}

}  // namespace detail

/// Absent modalities contribute zero feature vectors.
inline ForwardPass forward(const ParamSet& ps, const Batch& batch, const PresenceMask& mask) {
  detail::check_batch(ps, batch, mask);
  const std::size_t n = batch.size();
  std::size_t total = 0;
  for (std::size_t m = 0; m < ps.modalities(); ++m) total += ps.feature_width(m);

  ForwardPass fp;
  fp.hidden.resize(ps.modalities());
  fp.aux_logits.resize(ps.modalities());
  fp.fused = Matrix(n, total);
  std::size_t offset = 0;
  for (std::size_t m = 0; m < ps.modalities(); ++m) {
    const std::size_t width = ps.feature_width(m);
    if (mask[m]) {
      const Matrix* x = &batch.inputs[m];
      for (const auto& layer : ps.encoders[m]) {
        Matrix h = detail::affine(*x, layer);
        if (ps.activation == Activation::relu)
          for (double& v : h.flat()) v = v > 0.0 ? v : 0.0;
        fp.hidden[m].push_back(std::move(h));
        x = &fp.hidden[m].back();
      }
      const Matrix& feat = fp.hidden[m].back();
      for (std::size_t r = 0; r < n; ++r)
        std::copy(feat.row(r).begin(), feat.row(r).end(), fp.fused.row(r).begin() + offset);
      if (ps.has_aux()) fp.aux_logits[m] = detail::affine(feat, ps.aux_heads[m]);
    }
    offset += width;
  }
  fp.logits = detail::affine(fp.fused, ps.classifier);
  return fp;
}

/// Mean cross-entropy -1/N sum log softmax(logits)[y].
inline double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  require(logits.rows() == labels.size(), "cross_entropy: row count differs from label count");
  require(logits.rows() > 0, "cross_entropy: empty batch");
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < row.size(), "cross_entropy: label out of range");
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    loss += std::log(z) + mx - row[labels[r]];
  }
  return loss / static_cast<double>(logits.rows());
}

/// softmax(logits) - onehot(labels), one row per sample.
inline Matrix shared_error(const Matrix& logits, const std::vector<int>& labels) {
  Matrix e = detail::softmax_rows(logits);
  for (std::size_t r = 0; r < e.rows(); ++r) e(r, static_cast<std::size_t>(labels[r])) -= 1.0;
  return e;
}

/// Backpropagates loss derivatives with respect to the main logits
/// (`main_delta`) and each auxiliary head's logits (`aux_delta`, may be empty
/// or contain empty matrices) through a recorded forward pass.
inline GradientSet backprop(const ParamSet& ps, const Batch& batch, const PresenceMask& mask, const ForwardPass& fp,
                            const Matrix& main_delta, const std::vector<Matrix>& aux_delta = {}) {
  require(main_delta.rows() == batch.size() && main_delta.cols() == ps.classes(), "backprop: error signal shape");
  GradientSet g = zeros_like(ps);
  g.classifier.weight = matmul_at(main_delta, fp.fused);
  g.classifier.bias = detail::column_sums(main_delta);

  std::size_t offset = 0;
  for (std::size_t m = 0; m < ps.modalities(); ++m) {
    const std::size_t width = ps.feature_width(m);
    if (!mask[m]) {
      offset += width;
      continue;
    }
    const Matrix& feat = fp.hidden[m].back();
    // dL/dfeatures = main_delta * W_cls[:, slice] (+ aux contribution)
    Matrix dh(batch.size(), width);
    for (std::size_t r = 0; r < batch.size(); ++r)
      for (std::size_t k = 0; k < ps.classes(); ++k) {
        const double d = main_delta(r, k);
        if (d == 0.0) continue;
        const double* w = ps.classifier.weight.row(k).data() + offset;
        double* out = dh.row(r).data();
        for (std::size_t j = 0; j < width; ++j) out[j] += d * w[j];
      }
    if (m < aux_delta.size() && !aux_delta[m].empty()) {
      require(ps.has_aux(), "backprop: auxiliary error given but the net has no auxiliary heads");
      const Matrix& ad = aux_delta[m];
      g.aux_heads[m].weight = matmul_at(ad, feat);
      g.aux_heads[m].bias = detail::column_sums(ad);
      dh += matmul(ad, ps.aux_heads[m].weight);
    }
    for (std::size_t l = ps.encoders[m].size(); l-- > 0;) {
      const Matrix& out = fp.hidden[m][l];
      if (ps.activation == Activation::relu)
        for (std::size_t i = 0; i < dh.size(); ++i)
          if (out.flat()[i] <= 0.0) dh.flat()[i] = 0.0;
      const Matrix& in = l == 0 ? batch.inputs[m] : fp.hidden[m][l - 1];
      g.encoders[m][l].weight = matmul_at(dh, in);
      g.encoders[m][l].bias = detail::column_sums(dh);
      if (l > 0) dh = matmul(dh, ps.encoders[m][l].weight);
    }
    offset += width;
  }
  return g;
}

struct BackwardResult {
  GradientSet grads;
  Matrix error;                    // softmax - onehot of the main head
  double main_loss = 0.0;
  std::vector<double> aux_losses;  // per modality; NaN where not computed
  double total_loss = 0.0;
};

/// Gradients of  CE(main) + sum_i aux_weights[i] * CE(aux_i).
/// Pass an empty `aux_weights` for the plain main-head loss.
inline BackwardResult backward(const ParamSet& ps, const Batch& batch, const PresenceMask& mask,
                               std::span<const double> aux_weights = {}) {
  const ForwardPass fp = forward(ps, batch, mask);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  BackwardResult r;
  r.main_loss = cross_entropy(fp.logits, batch.labels);
  r.total_loss = r.main_loss;
  r.error = shared_error(fp.logits, batch.labels);
  r.aux_losses.assign(ps.modalities(), std::numeric_limits<double>::quiet_NaN());
  std::vector<Matrix> aux_delta;
  if (!aux_weights.empty()) {
    if (!ps.has_aux()) throw ConfigError("auxiliary loss weights given but the net has no auxiliary heads");
    require(aux_weights.size() == ps.modalities(), "one auxiliary weight per modality required");
    aux_delta.resize(ps.modalities());
    for (std::size_t m = 0; m < ps.modalities(); ++m) {
      if (!mask[m]) continue;
      r.aux_losses[m] = cross_entropy(fp.aux_logits[m], batch.labels);
      r.total_loss += aux_weights[m] * r.aux_losses[m];
      aux_delta[m] = shared_error(fp.aux_logits[m], batch.labels) * (aux_weights[m] * inv_n);
    }
  }
  r.grads = backprop(ps, batch, mask, fp, r.error * inv_n, aux_delta);
  return r;
}

/// Encoder m (and its auxiliary head) moves by -weights[m] * eta * g; the
/// classifier always moves by -eta * g. Empty `weights` means plain SGD.
inline ParamSet sgd_step(const ParamSet& ps, const GradientSet& g, double eta, std::span<const double> weights = {}) {
  require(eta > 0.0, "learning rate must be positive");
  require(weights.empty() || weights.size() == ps.modalities(), "one weight per modality required");
  ParamSet next = ps;
  auto dst = tensors(next);
  const auto src = tensors(g);
  require(dst.size() == src.size(), "gradient layout does not match parameters");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require(dst[i].tensor->same_shape(*src[i].tensor), "gradient shape mismatch for " + dst[i].name);
    const double k = (dst[i].owner == Owner::classifier || weights.empty()) ? 1.0 : weights[dst[i].modality];
    const double step = k * eta;
    auto d = dst[i].tensor->flat();
    const auto s = src[i].tensor->flat();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] -= step * s[j];
  }
  return next;
}

inline std::vector<int> predict(const ParamSet& ps, const Batch& data, const PresenceMask& mask) {
  const Matrix logits = forward(ps, data, mask).logits;
  std::vector<int> pred(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    pred[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return pred;
}

/// Top-1 accuracy under a presence mask.
inline double evaluate(const ParamSet& ps, const Batch& data, const PresenceMask& mask) {
  require(data.size() > 0, "evaluate: empty dataset");
  const auto pred = predict(ps, data, mask);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace mwam
