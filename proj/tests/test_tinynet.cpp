#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "mwam/tinynet.hpp"
#include "oracles.hpp"

using namespace mwam;

namespace {

NetConfig small_net(std::size_t M, bool aux = false, std::uint64_t seed = 1) {
  return NetConfig::uniform(M, 6, {5, 4}, 3, aux, seed);
}

Batch random_batch(const ParamSet& ps, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Batch b;
  for (std::size_t m = 0; m < ps.modalities(); ++m)
    b.inputs.push_back(oracle::random_matrix(n, ps.encoders[m].front().weight.cols(), rng));
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % ps.classes()));
  return b;
}

/// Straightforward forward pass: loops over samples, no shared helpers.
Matrix naive_logits(const ParamSet& ps, const Batch& b, const PresenceMask& mask) {
  Matrix out(b.size(), ps.classes());
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::vector<double> fused;
    for (std::size_t m = 0; m < ps.modalities(); ++m) {
      std::vector<double> x(b.inputs[m].row(i).begin(), b.inputs[m].row(i).end());
      for (const auto& layer : ps.encoders[m]) {
        std::vector<double> y(layer.weight.rows());
        for (std::size_t o = 0; o < y.size(); ++o) {
          double s = layer.bias(0, o);
          for (std::size_t k = 0; k < x.size(); ++k) s += layer.weight(o, k) * x[k];
          y[o] = s > 0.0 ? s : 0.0;
        }
        x = y;
      }
      for (double v : x) fused.push_back(mask[m] ? v : 0.0);
    }
    for (std::size_t c = 0; c < ps.classes(); ++c) {
      double s = ps.classifier.bias(0, c);
      for (std::size_t k = 0; k < fused.size(); ++k) s += ps.classifier.weight(c, k) * fused[k];
      out(i, c) = s;
    }
  }
  return out;
}

}  // namespace

TEST(Init, DeterministicAndBounded) {
  const auto a = init_network(small_net(2, true, 9));
  EXPECT_EQ(a, init_network(small_net(2, true, 9)));
  EXPECT_NE(a, init_network(small_net(2, true, 10)));
  for (const auto& slot : tensors(a)) {
    if (slot.name.ends_with(".bias")) {
      for (double v : slot.tensor->flat()) EXPECT_EQ(v, 0.0);
      continue;
    }
    const double s = std::sqrt(6.0 / static_cast<double>(slot.tensor->rows() + slot.tensor->cols()));
    for (double v : slot.tensor->flat()) EXPECT_LE(std::abs(v), s);
  }
  NetConfig bad = small_net(1);
  bad.encoders[0].hidden = {4, 0};
  EXPECT_THROW(init_network(bad), InputError);
}

TEST(Forward, IdentityEncoderGivesLinearModel) {
  ParamSet ps;
  ps.activation = Activation::linear;
  ps.encoders = {{Dense{Matrix::identity(3), Matrix(1, 3)}}};
  ps.classifier = Dense{Matrix(2, 3, {1, 2, 3, -1, 0, 4}), Matrix(1, 2, {0.5, -0.5})};
  const Batch b{{Matrix(1, 3, {0.1, 0.2, 0.3})}, {0}};
  const Matrix logits = forward(ps, b, full_mask(1)).logits;
  EXPECT_DOUBLE_EQ(logits(0, 0), 0.1 + 0.4 + 0.9 + 0.5);
  EXPECT_DOUBLE_EQ(logits(0, 1), -0.1 + 1.2 - 0.5);
}

TEST(Forward, MaskedModalityWithZeroedPartitionIsInvisible) {
  ParamSet ps = init_network(small_net(2));
  for (std::size_t c = 0; c < ps.classes(); ++c)
    for (std::size_t k = ps.feature_width(0); k < ps.classifier.weight.cols(); ++k) ps.classifier.weight(c, k) = 0.0;
  const Batch b = random_batch(ps, 7, 2);
  EXPECT_EQ(forward(ps, b, {true, false}).logits, forward(ps, b, {true, true}).logits);
}

TEST(Forward, MatchesNaiveReimplementation) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ParamSet ps = init_network(small_net(3, false, seed));
    const Batch b = random_batch(ps, 6, seed + 100);
    for (const PresenceMask& mask : {PresenceMask{true, true, true}, PresenceMask{false, true, false}}) {
      const ForwardPass fp = forward(ps, b, mask);
      EXPECT_LT(max_abs_diff(fp.logits, naive_logits(ps, b, mask)), 1e-9);
      for (std::size_t m = 0; m < 3; ++m)
        if (!mask[m])
          for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(fp.fused(r, m * 4 + k), 0.0);
    }
  }
}

TEST(Forward, AllAbsentRejected) {
  const ParamSet ps = init_network(small_net(2));
  EXPECT_THROW(forward(ps, random_batch(ps, 3, 1), {false, false}), InputError);
}

TEST(CrossEntropy, Cases) {
  EXPECT_NEAR(cross_entropy(Matrix(3, 2, 0.7), {0, 1, 1}), std::log(2.0), 1e-15);
  EXPECT_LT(cross_entropy(Matrix(1, 3, {800.0, 0.0, 0.0}), {0}), 1e-300);
  // Long-double oracle on a random case.
  std::mt19937_64 rng(3);
  const Matrix z = oracle::random_matrix(4, 5, rng, -20, 20);
  const std::vector<int> y{0, 4, 2, 2};
  long double ref = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    long double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += std::exp(static_cast<long double>(z(r, c)));
    ref += std::log(s) - z(r, static_cast<std::size_t>(y[r]));
  }
  EXPECT_NEAR(cross_entropy(z, y), static_cast<double>(ref / 4), 1e-12);
  EXPECT_THROW(cross_entropy(Matrix(1, 3), {3}), InputError);
  EXPECT_THROW(cross_entropy(Matrix(1, 3), {-1}), InputError);
}

TEST(Backward, SharedErrorIsSoftmaxMinusOnehot) {
  const ParamSet ps = init_network(small_net(2));
  const Batch b = random_batch(ps, 5, 4);
  const auto br = backward(ps, b, full_mask(2));
  const Matrix logits = forward(ps, b, full_mask(2)).logits;
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits(r, c));
    for (std::size_t c = 0; c < 3; ++c) {
      const double expect = std::exp(logits(r, c)) / z - (static_cast<int>(c) == b.labels[r] ? 1.0 : 0.0);
      EXPECT_NEAR(br.error(r, c), expect, 1e-12);
    }
  }
}

TEST(Backward, PerfectFitGivesZeroGradients) {
  ParamSet ps = init_network(small_net(1));
  const Batch b = random_batch(ps, 4, 5);
  ps.classifier.weight *= 0.0;
  for (std::size_t c = 0; c < 3; ++c) ps.classifier.bias(0, c) = c == 0 ? 1e3 : 0.0;
  Batch same = b;
  same.labels.assign(4, 0);
  const auto br = backward(ps, same, full_mask(1));
  EXPECT_LT(br.main_loss, 1e-12);
  for (const auto& slot : tensors(br.grads))
    for (double v : slot.tensor->flat()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearLayerClosedForm) {
  ParamSet ps;
  ps.activation = Activation::linear;
  ps.encoders = {{Dense{Matrix::identity(4), Matrix(1, 4)}}};
  std::mt19937_64 rng(6);
  ps.classifier = Dense{oracle::random_matrix(3, 4, rng), oracle::random_matrix(1, 3, rng)};
  const Batch b{{oracle::random_matrix(8, 4, rng)}, {0, 1, 2, 0, 1, 2, 0, 1}};
  const auto br = backward(ps, b, full_mask(1));
  // dW = (softmax - onehot)^T X / N
  const Matrix expect = matmul_at(br.error, b.inputs[0]) * (1.0 / 8.0);
  EXPECT_LT(max_abs_diff(br.grads.classifier.weight, expect), 1e-14);
}

TEST(Backward, FiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto c = gradcheck::random_case(seed);
    const auto r = gradcheck::check(c);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Backward, AuxWeightsNeedAuxHeads) {
  const ParamSet ps = init_network(small_net(2));
  const std::vector<double> k{1.0, 1.0};
  EXPECT_THROW(backward(ps, random_batch(ps, 3, 1), full_mask(2), k), ConfigError);
}

TEST(Sgd, UnitWeightsEqualPlainStep) {
  const ParamSet ps = init_network(small_net(2, true));
  const auto g = backward(ps, random_batch(ps, 5, 7), full_mask(2), std::vector<double>{1.0, 1.0}).grads;
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_EQ(sgd_step(ps, g, 0.1, ones), sgd_step(ps, g, 0.1));
}

TEST(Sgd, ZeroWeightFreezesEncoder) {
  const ParamSet ps = init_network(small_net(2, true));
  const auto g = backward(ps, random_batch(ps, 5, 8), full_mask(2), std::vector<double>{1.0, 1.0}).grads;
  const std::vector<double> k{0.0, 1.0};
  const ParamSet next = sgd_step(ps, g, 0.1, k);
  EXPECT_EQ(next.encoders[0], ps.encoders[0]);
  EXPECT_EQ(next.aux_heads[0], ps.aux_heads[0]);
  EXPECT_NE(next.encoders[1], ps.encoders[1]);
  EXPECT_NE(next.classifier, ps.classifier);
}

TEST(Sgd, ManualWeightedUpdate) {
  const ParamSet ps = init_network(small_net(2, true));
  const auto g = backward(ps, random_batch(ps, 5, 9), full_mask(2), std::vector<double>{1.0, 1.0}).grads;
  const std::vector<double> k{1.4, 0.6};
  const double eta = 0.05;
  const ParamSet next = sgd_step(ps, g, eta, k);
  const auto before = tensors(ps), after = tensors(next), grad = tensors(g);
  for (std::size_t s = 0; s < before.size(); ++s) {
    const double scale = before[s].owner == Owner::classifier ? 1.0 : k[before[s].modality];
    for (std::size_t i = 0; i < before[s].tensor->size(); ++i)
      EXPECT_EQ(after[s].tensor->flat()[i], before[s].tensor->flat()[i] - scale * eta * grad[s].tensor->flat()[i])
          << before[s].name;
  }
  EXPECT_THROW(sgd_step(ps, g, 0.0), InputError);
}

TEST(Evaluate, ConstantPredictionOnBalancedBinary) {
  ParamSet ps = init_network(NetConfig::uniform(1, 3, {2}, 2, false, 1));
  ps.classifier.weight *= 0.0;
  ps.classifier.bias(0, 1) = 1.0;
  std::mt19937_64 rng(1);
  const Batch b{{oracle::random_matrix(10, 3, rng)}, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}};
  EXPECT_EQ(evaluate(ps, b, full_mask(1)), 0.5);
}

TEST(Evaluate, HandCountedOracle) {
  const ParamSet ps = init_network(small_net(2, false, 4));
  Batch b = random_batch(ps, 10, 11);
  const Matrix logits = naive_logits(ps, b, full_mask(2));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < 10; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    correct += static_cast<int>(best) == b.labels[r];
  }
  EXPECT_DOUBLE_EQ(evaluate(ps, b, full_mask(2)), correct / 10.0);
}

TEST(Evaluate, SeparableToyReachesPerfectAccuracy) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 0.1);
  Batch b;
  Matrix x(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    const int y = static_cast<int>(i % 2);
    x(i, 0) = (y ? 1.0 : -1.0) + g(rng);
    x(i, 1) = g(rng);
    b.labels.push_back(y);
  }
  b.inputs = {x};
  ParamSet ps = init_network(NetConfig::uniform(1, 2, {4}, 2, false, 3));
  for (int it = 0; it < 300; ++it) ps = sgd_step(ps, backward(ps, b, full_mask(1)).grads, 0.5);
  EXPECT_EQ(evaluate(ps, b, full_mask(1)), 1.0);
}
