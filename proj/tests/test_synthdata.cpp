#include <gtest/gtest.h>

#include <random>

#include "mwam/preference.hpp"
#include "mwam/synthdata.hpp"
#include "oracles.hpp"

using namespace mwam;

namespace {

GenConfig small(std::vector<ModalitySpec> specs, std::uint64_t seed = 1) {
  GenConfig g;
  g.modalities = std::move(specs);
  g.n_train = 40;
  g.n_test = 12;
  g.seed = seed;
  return g;
}

double band_l1(const ImagePlane& img, bool low) {
  const auto maps = frequency_maps(img, SpectralConfig{});
  return oracle::l1(low ? maps.low : maps.high);
}

}  // namespace

TEST(Generate, BandEnergiesHitTargets) {
  const std::vector<ModalitySpec> specs{{100.0, 1.0, Band::low, 1.0}, {10.0, 60.0, Band::high, 0.5},
                                        {3.0, 0.0, Band::low, 2.0}};
  const SynthDataset ds = generate(small(specs));
  for (std::size_t m = 0; m < specs.size(); ++m)
    for (std::size_t i = 0; i < ds.samples(); ++i) {
      EXPECT_NEAR(band_l1(ds.images[m][i], true), specs[m].low_energy, 0.05 * specs[m].low_energy + 1e-9);
      EXPECT_NEAR(band_l1(ds.images[m][i], false), specs[m].high_energy, 0.05 * specs[m].high_energy + 1e-9);
    }
}

TEST(Generate, ZeroHighEnergyMeansNoHighBand) {
  const SynthDataset ds = generate(small({{5.0, 0.0, Band::low, 1.0}}));
  for (const auto& img : ds.images[0]) EXPECT_LT(band_l1(img, false), 1e-6);
}

TEST(Generate, Deterministic) {
  const auto specs = imbalanced_modalities();
  const SynthDataset a = generate(small(specs, 5)), b = generate(small(specs, 5)), c = generate(small(specs, 6));
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, c.images);
}

TEST(Generate, SplitsAndLabels) {
  const SynthDataset ds = generate(small(imbalanced_modalities()));
  EXPECT_EQ(ds.train_idx.size(), 40u);
  EXPECT_EQ(ds.test_idx.size(), 12u);
  for (std::size_t i : ds.train_idx)
    EXPECT_EQ(std::find(ds.test_idx.begin(), ds.test_idx.end(), i), ds.test_idx.end());
  for (std::size_t m = 0; m < ds.modalities(); ++m) EXPECT_EQ(ds.images[m].size(), ds.samples());
  for (int y : ds.labels) EXPECT_TRUE(y >= 0 && y < 4);
}

TEST(Generate, RejectsInfeasibleTargets) {
  EXPECT_THROW(generate(small({{0.0, 0.0, Band::low, 1.0}})), InputError);
  GenConfig g = small({{1.0, 1.0, Band::low, 1.0}});
  g.height = 20;
  EXPECT_THROW(generate(g), InputError);
}

TEST(Generate, LowEnergyRatioGivesFrmOrdering) {
  const SynthDataset ds = generate(small({{100.0, 10.0, Band::low, 1.0}, {1.0, 10.0, Band::low, 1.0}}));
  const double f0 = batch_preference(ds.images[0], SpectralConfig{}, {}).value;
  const double f1 = batch_preference(ds.images[1], SpectralConfig{}, {}).value;
  EXPECT_GT(f0 / f1, 10.0);
}

TEST(Mask, Cases) {
  const SynthDataset ds = generate(small(imbalanced_modalities()));
  const std::vector<ImagePlane> sample{ds.images[0][0], ds.images[1][0], ds.images[2][0]};
  EXPECT_EQ(apply_mask(sample, {true, true, true}), sample);
  const auto masked = apply_mask(sample, {true, true, false});
  EXPECT_EQ(masked[0], sample[0]);
  EXPECT_EQ(masked[1], sample[1]);
  for (double v : masked[2].flat()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(apply_mask(sample, {false, false, false}), InputError);
  EXPECT_THROW(apply_mask(sample, {true, false}), InputError);
}

TEST(Mask, RandomSequenceMatchesElementwiseOracle) {
  const SynthDataset ds = generate(small(imbalanced_modalities()));
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t i = rng() % ds.samples();
    PresenceMask mask(3);
    do
      for (std::size_t m = 0; m < 3; ++m) mask[m] = rng() & 1;
    while (!(mask[0] || mask[1] || mask[2]));
    const std::vector<ImagePlane> sample{ds.images[0][i], ds.images[1][i], ds.images[2][i]};
    const auto out = apply_mask(sample, mask);
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t k = 0; k < sample[m].size(); ++k)
        EXPECT_EQ(out[m].flat()[k], mask[m] ? sample[m].flat()[k] : 0.0);
  }
}

TEST(Flatten, RowsFollowSampleOrder) {
  const SynthDataset ds = generate(small(imbalanced_modalities()));
  const auto flat = flatten(ds);
  ASSERT_EQ(flat.size(), 3u);
  EXPECT_EQ(flat[1].rows(), ds.samples());
  EXPECT_EQ(flat[1](7, 33), ds.images[1][7].flat()[33]);
  const std::vector<std::size_t> idx{5, 2};
  const Batch b = gather(flat, ds.labels, idx);
  EXPECT_EQ(b.labels, (std::vector<int>{ds.labels[5], ds.labels[2]}));
  EXPECT_EQ(b.inputs[2](1, 0), flat[2](2, 0));
}
