#pragma once

// Numerical checks of the training-dynamics claims:
//  * residuals of gradient descent on a linear model decay along each
//    eigenvector of the Gram matrix by exactly (1 - eta * lambda_i) per step;
//  * encoder gradients are coupled only through the shared error signal, and
//    a pre-fitted dominant branch starves the weak branch of gradient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/intervention.hpp"
#include "mwam/matrix.hpp"
#include "mwam/random.hpp"
#include "mwam/scalar.hpp"
#include "mwam/synthdata.hpp"
#include "mwam/tinynet.hpp"

namespace mwam {


template <typename T>
BasicMatrix<T> convert(const Matrix& m) {
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = static_cast<T>(m.flat()[i]);
  return out;
}

/// H = X X^T for rows x_i of X.
template <typename T>
BasicMatrix<T> gram_matrix(const BasicMatrix<T>& x) {
  return matmul_bt(x, x);
}

template <typename T>
struct SymmetricEigen {
  std::vector<T> values;   // descending
  BasicMatrix<T> vectors;  // column i pairs with values[i]
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// tol * ||H||_F.
template <typename T>
SymmetricEigen<T> eigendecompose(const BasicMatrix<T>& h, T tol = T(1e-12), std::size_t max_sweeps = 100) {
  require(h.rows() == h.cols(), "eigendecompose: matrix must be square");
  const std::size_t n = h.rows();
  T scale = T(0);
  for (const T& v : h.flat()) scale = std::max(scale, num::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (num::abs(h(i, j) - h(j, i)) > T(1e-12) * std::max(scale, T(1)))
        throw InputError("eigendecompose: matrix is not symmetric");

  BasicMatrix<T> a = h;
  BasicMatrix<T> v = BasicMatrix<T>::identity(n);
  const T target = tol * frobenius_norm(h);
  SymmetricEigen<T> out;
  for (; out.sweeps < max_sweeps; ++out.sweeps) {
    T off = T(0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (num::sqrt(T(2) * off) <= target) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const T apq = a(p, q);
        if (apq == T(0)) continue;
        const T theta = (a(q, q) - a(p, p)) / (T(2) * apq);
        const T t = (theta >= T(0) ? T(1) : T(-1)) / (num::abs(theta) + num::sqrt(theta * theta + T(1)));
        const T c = T(1) / num::sqrt(t * t + T(1));
        const T s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const T akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const T apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const T vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  if (out.sweeps == max_sweeps) throw NumericError("eigendecompose: Jacobi iteration did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  out.values.resize(n);
  out.vectors = BasicMatrix<T>(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

/// sum_i lambda_i u_i u_i^T
template <typename T>
BasicMatrix<T> reconstruct(const SymmetricEigen<T>& e) {
  const std::size_t n = e.values.size();
  BasicMatrix<T> h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) h(r, c) += e.values[i] * e.vectors(r, i) * e.vectors(c, i);
  return h;
}

struct SpectrumReport {
  std::vector<double> eigenvalues;               // descending
  Matrix eigenvectors;                           // orthonormal columns
  std::vector<std::vector<double>> projections;  // [step][direction] <q_t - y, u_i>
  std::vector<double> predicted_factor;          // 1 - eta * lambda_i
  std::vector<double> max_rel_deviation;         // per direction, over all steps
  std::vector<bool> checked;                     // lambda_i above the threshold
  double eta = 0.0;
  std::size_t steps = 0;

  double worst_deviation() const {
    double w = 0.0;
    for (std::size_t i = 0; i < max_rel_deviation.size(); ++i)
      if (checked[i]) w = std::max(w, max_rel_deviation[i]);
    return w;
  }
};

/// Largest stable step size 2 / lambda_1 of full-batch gradient descent on
/// 0.5 * ||X theta - y||^2.
inline double stable_eta_bound(const Matrix& x) {
  const auto e = eigendecompose(gram_matrix(x));
  require(!e.values.empty() && e.values.front() > 0.0, "feature matrix has zero Gram spectrum");
  return 2.0 / e.values.front();
}

/// Runs gradient descent from theta = 0 on the linear model f = theta^T x and
/// compares every eigen-direction's residual projection with the geometric
/// law. Computed in quad precision so directions that shrink below double
/// resolution are still measured exactly.
inline SpectrumReport decay_check(const Matrix& x, const std::vector<double>& y, double eta, std::size_t steps,
                                  double lambda_floor = 1e-8) {
  require(x.rows() == y.size(), "decay_check: one target per sample required");
  require(x.rows() > 0 && x.cols() > 0, "decay_check: empty feature matrix");
  require(eta > 0.0, "decay_check: eta must be positive");
  const std::size_t n = x.rows(), d = x.cols();
  const BasicMatrix<quad> xq = convert<quad>(x);
  const auto eig = eigendecompose<quad>(gram_matrix(xq), quad(1e-30));
  const double lambda1 = static_cast<double>(eig.values.front());
  if (!(eta < 2.0 / lambda1))
    throw InputError("decay_check: eta " + std::to_string(eta) + " is unstable; requires eta < 2/lambda_1 = " +
                     std::to_string(2.0 / lambda1));

  SpectrumReport rep;
  rep.eta = eta;
  rep.steps = steps;
  rep.eigenvalues.resize(n);
  rep.eigenvectors = Matrix(n, n);
  rep.predicted_factor.resize(n);
  rep.checked.resize(n);
  rep.max_rel_deviation.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rep.eigenvalues[i] = static_cast<double>(eig.values[i]);
    for (std::size_t r = 0; r < n; ++r) rep.eigenvectors(r, i) = static_cast<double>(eig.vectors(r, i));
    rep.checked[i] = rep.eigenvalues[i] > lambda_floor;
  }
  std::vector<quad> factor(n);
  const quad eta_q = eta;
  for (std::size_t i = 0; i < n; ++i) {
    factor[i] = quad(1) - eta_q * eig.values[i];
    rep.predicted_factor[i] = static_cast<double>(factor[i]);
  }

  std::vector<quad> theta(d, quad(0)), resid(n), initial(n), predicted(n);
  auto residual = [&] {
    for (std::size_t j = 0; j < n; ++j) {
      quad s = 0;
      for (std::size_t k = 0; k < d; ++k) s += xq(j, k) * theta[k];
      resid[j] = s - quad(y[j]);
    }
  };
  auto project = [&](std::size_t i) {
    quad s = 0;
    for (std::size_t j = 0; j < n; ++j) s += resid[j] * eig.vectors(j, i);
    return s;
  };

  residual();
  for (std::size_t i = 0; i < n; ++i) predicted[i] = initial[i] = project(i);
  for (std::size_t t = 0; t <= steps; ++t) {
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      const quad measured = project(i);
      row[i] = static_cast<double>(measured);
      const quad err = num::abs(measured - predicted[i]);
      const quad denom = predicted[i] != 0 ? num::abs(predicted[i]) : num::abs(initial[i]);
      const double dev = denom > 0 ? static_cast<double>(err / denom) : static_cast<double>(err);
      rep.max_rel_deviation[i] = std::max(rep.max_rel_deviation[i], dev);
    }
    rep.projections.push_back(std::move(row));
    if (t == steps) break;
    // theta <- theta - eta X^T (X theta - y)
    for (std::size_t k = 0; k < d; ++k) {
      quad g = 0;
      for (std::size_t j = 0; j < n; ++j) g += xq(j, k) * resid[j];
      theta[k] -= eta_q * g;
    }
    residual();
    for (std::size_t i = 0; i < n; ++i) predicted[i] *= factor[i];
  }
  return rep;
}

/// Features phi_k(x) = exp(-(x - c_k)^2 / (2 width^2)) on a uniform 1-D grid
/// of n points with `centers` evenly spaced centers; X X^T is a smooth kernel.
inline Matrix smooth_kernel_features(std::size_t n, std::size_t centers, double width) {
  require(n >= 2 && centers >= 1 && width > 0.0, "smooth_kernel_features: invalid arguments");
  Matrix x(n, centers);
  for (std::size_t j = 0; j < n; ++j) {
    const double pos = static_cast<double>(j) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < centers; ++k) {
      const double c = centers == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(centers - 1);
      x(j, k) = std::exp(-(pos - c) * (pos - c) / (2.0 * width * width));
    }
  }
  return x;
}

/// Sign changes along a vector, ignoring entries below rel_floor * max|v|.
inline std::size_t zero_crossings(std::span<const double> v, double rel_floor = 1e-9) {
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, std::abs(x));
  std::size_t count = 0;
  int last = 0;
  for (double x : v) {
    if (std::abs(x) <= rel_floor * mx) continue;
    const int s = x > 0 ? 1 : -1;
    if (last != 0 && s != last) ++count;
    last = s;
  }
  return count;
}

inline std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient coupling

struct CouplingReport {
  double shared_error_norm = 0.0;          // ||softmax - onehot||_F over the batch
  std::vector<double> encoder_grad_norm;   // per modality
  double classifier_grad_norm = 0.0;
};

inline CouplingReport coupling_probe(const ParamSet& ps, const Batch& batch,
                                     const PresenceMask& mask = {}) {
  const PresenceMask m = mask.empty() ? full_mask(ps.modalities()) : mask;
  const BackwardResult br = backward(ps, batch, m);
  CouplingReport rep;
  rep.shared_error_norm = frobenius_norm(br.error);
  for (std::size_t i = 0; i < ps.modalities(); ++i) rep.encoder_grad_norm.push_back(encoder_norm(br.grads, i));
  rep.classifier_grad_norm = classifier_norm(br.grads);
  return rep;
}

/// Gradients produced by an arbitrary shared error signal (rows are
/// dL/dlogits per sample before the 1/N average) with features held fixed.
inline GradientSet gradients_for_error(const ParamSet& ps, const Batch& batch, const PresenceMask& mask,
                                       const Matrix& error) {
  const ForwardPass fp = forward(ps, batch, mask);
  return backprop(ps, batch, mask, fp, error * (1.0 / static_cast<double>(batch.size())));
}

struct SuppressionConfig {
  std::vector<std::size_t> hidden = {64, 32};
  double eta = 0.05;
  std::size_t batch_size = 32;
  std::size_t dominant = 0;
  std::size_t weak = 2;
  double target_loss = 0.05;
  std::size_t max_prefit_epochs = 50;
  std::size_t probe_iterations = 63;  // one pass over 2000 samples at batch 32
  std::uint64_t seed = 0;
};

struct SuppressionResult {
  double control_mean_norm = 0.0;  // weak-encoder gradient norm, fresh joint start
  double prefit_mean_norm = 0.0;   // same after pre-fitting the dominant branch
  double ratio = 0.0;              // prefit / control
  std::size_t prefit_epochs = 0;
  double prefit_loss = 0.0;        // training loss when pre-fitting stopped
  bool reached_target = false;
};

/// Mean main-head cross-entropy over a whole batch.
inline double dataset_loss(const ParamSet& ps, const Batch& data, const PresenceMask& mask) {
  return cross_entropy(forward(ps, data, mask).logits, data.labels);
}

/// Trains only the dominant encoder (plus the classifier) until the training
/// loss falls below the target, then measures the weak encoder's mean gradient
/// norm over a fixed sequence of joint SGD iterations, against the same
/// iterations started from the untouched initialization.
inline SuppressionResult suppression_experiment(const SynthDataset& ds, const SuppressionConfig& cfg) {
  require(cfg.dominant < ds.modalities() && cfg.weak < ds.modalities() && cfg.dominant != cfg.weak,
          "suppression: invalid modality indices");
  const std::size_t M = ds.modalities();
  const NetConfig net = net_config_for(ds, cfg.hidden, Mode::none, cfg.seed);
  const ParamSet init = init_network(net);
  const std::vector<Matrix> inputs = flatten(ds);
  const Batch train_set = gather(inputs, ds.labels, ds.train_idx);
  const PresenceMask all = full_mask(M);

  auto batches_from = [&](Rng& rng) {
    std::vector<std::size_t> order = ds.train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  };

  SuppressionResult res;
  ParamSet prefit = init;
  std::vector<double> only_dominant(M, 0.0);
  only_dominant[cfg.dominant] = 1.0;
  Rng prefit_rng = stream(cfg.seed, "prefit");
  res.prefit_loss = dataset_loss(prefit, train_set, all);
  while (res.prefit_loss >= cfg.target_loss && res.prefit_epochs < cfg.max_prefit_epochs) {
    const auto order = batches_from(prefit_rng);
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      const Batch b = gather(inputs, ds.labels, std::span(order).subspan(s, e - s));
      prefit = sgd_step(prefit, backward(prefit, b, all).grads, cfg.eta, only_dominant);
    }
    ++res.prefit_epochs;
    res.prefit_loss = dataset_loss(prefit, train_set, all);
  }
  res.reached_target = res.prefit_loss < cfg.target_loss;

  auto probe = [&](ParamSet ps) {
    Rng rng = stream(cfg.seed, "probe");
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    double sum = 0.0;
    for (std::size_t it = 0; it < cfg.probe_iterations; ++it) {
      if (pos >= order.size()) {
        order = batches_from(rng);
        pos = 0;
      }
      const std::size_t e = std::min(order.size(), pos + cfg.batch_size);
      const Batch b = gather(inputs, ds.labels, std::span(order).subspan(pos, e - pos));
      pos = e;
      const BackwardResult br = backward(ps, b, all);
      sum += encoder_norm(br.grads, cfg.weak);
      ps = sgd_step(ps, br.grads, cfg.eta);
    }
    return sum / static_cast<double>(cfg.probe_iterations);
  };
  res.control_mean_norm = probe(init);
  res.prefit_mean_norm = probe(prefit);
  res.ratio = res.control_mean_norm > 0.0 ? res.prefit_mean_norm / res.control_mean_norm : 0.0;
  return res;
}

}  // namespace mwam
