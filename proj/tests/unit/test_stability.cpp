#include <gtest/gtest.h>

#include <cmath>

#include "nlx/experiments.hpp"
#include "nlx/stability.hpp"
#include "support.hpp"

using namespace nlx;
using testsupport::random_image;

TEST(Perturb, ZeroIntensityIsExactCopy) {
  const auto img = random_image(1, 20, 20);
  EXPECT_EQ(perturb(img, {0.0, 42}).pixels(), img.pixels());
}

TEST(Perturb, OutputsStayInUnitRange) {
  for (double i : {0.05, 0.2, 1.0, 5.0}) {
    const auto out = perturb(random_image(2, 16, 16), {i, 7});
    for (float v : out.pixels()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Perturb, ClipCases) {
  EXPECT_EQ(clip_unit(-0.3), 0.0);
  EXPECT_EQ(clip_unit(1.7), 1.0);
  EXPECT_EQ(clip_unit(0.25), 0.25);
  EXPECT_EQ(clip_unit(0.0), 0.0);
  EXPECT_EQ(clip_unit(1.0), 1.0);
}

TEST(Perturb, SeededAndNegativeRejected) {
  const auto img = random_image(3, 12, 12);
  EXPECT_EQ(perturb(img, {0.1, 5}).pixels(), perturb(img, {0.1, 5}).pixels());
  EXPECT_NE(perturb(img, {0.1, 5}).pixels(), perturb(img, {0.1, 6}).pixels());
  EXPECT_THROW(perturb(img, {-0.1, 5}), InputError);
}

TEST(Perturb, NoiseStatisticsAwayFromBounds) {
  Image mid(60, 60, 3, 0.5f);
  const double i = 0.01;
  const auto out = perturb(mid, {i, 99});
  double s = 0, s2 = 0;
  for (float v : out.pixels()) {
    const double d = v - 0.5;
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(out.size());
  EXPECT_NEAR(s / n, 0.0, 4 * i / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(s2 / n), i, 0.05 * i);
}

namespace {
// Text and prediction are a deterministic function of the image's mean value.
PipelineOutput fake_pipeline(const Image& img) {
  double m = 0;
  for (float v : img.pixels()) m += v;
  m /= static_cast<double>(img.size());
  PipelineOutput o;
  o.prediction.probabilities = {m, 1 - m};
  o.prediction.predicted_index = m > 0.5 ? 0 : 1;
  o.prediction.predicted_class = m > 0.5 ? "bright" : "dark";
  o.text = "The image is " + o.prediction.predicted_class + " with " + std::to_string(std::lround(m * 100)) + " percent";
  return o;
}
}  // namespace

TEST(IntraSet, ZeroNoiseGivesIdentity) {
  std::vector<Image> imgs;
  for (std::uint64_t s = 0; s < 8; ++s) imgs.push_back(random_image(s, 10, 10));
  const auto r = intra_set_stability(fake_pipeline, imgs, {0.0, 1}, 2);
  EXPECT_DOUBLE_EQ(r.bleu, 100.0);
  EXPECT_DOUBLE_EQ(r.meteor, 1.0);
  ASSERT_TRUE(r.cf_rate && r.mean_delta_p);
  EXPECT_EQ(*r.cf_rate, 0.0);
  EXPECT_EQ(*r.mean_delta_p, 0.0);
  EXPECT_EQ(r.n, 8u);
}

TEST(IntraSet, DeterministicAcrossWorkerCounts) {
  std::vector<Image> imgs;
  for (std::uint64_t s = 0; s < 8; ++s) imgs.push_back(random_image(s, 10, 10));
  const auto a = intra_set_stability(fake_pipeline, imgs, {0.3, 4}, 1);
  const auto b = intra_set_stability(fake_pipeline, imgs, {0.3, 4}, 3);
  EXPECT_EQ(a.bleu, b.bleu);
  EXPECT_EQ(a.meteor, b.meteor);
  EXPECT_EQ(*a.mean_delta_p, *b.mean_delta_p);
  EXPECT_THROW(intra_set_stability(fake_pipeline, {}, {0.1, 1}), InputError);
}

TEST(InterSet, PairsAcrossClassesOnly) {
  std::vector<LabeledExplanation> ex = {{"a", "alpha one"}, {"a", "alpha two"}, {"b", "beta one"}, {"c", "gamma one"}};
  const auto r = inter_set_stability(ex, 3);
  EXPECT_EQ(r.n, 4u);
  EXPECT_FALSE(r.cf_rate.has_value());
  EXPECT_FALSE(r.mean_delta_p.has_value());
  EXPECT_LT(r.meteor, 1.0);
  // identical text inside a class never pairs with itself
  std::vector<LabeledExplanation> same = {{"a", "x y z"}, {"a", "x y z"}, {"b", "p q r"}};
  EXPECT_DOUBLE_EQ(inter_set_stability(same, 1).meteor, 0.0);
  EXPECT_EQ(inter_set_stability(ex, 3).bleu, r.bleu);
}

TEST(InterSet, NeedsTwoClasses) {
  EXPECT_THROW(inter_set_stability({{"a", "x"}, {"a", "y"}}, 1), InputError);
  EXPECT_THROW(inter_set_stability({}, 1), InputError);
}

TEST(Cohort, StratifiedAndSeeded) {
  testsupport::TempDir dir("cohort");
  const auto ds = write_synthetic_dataset(dir.path(), 3, 6, 1);
  const auto a = stratified_cohort(ds, 4, 10);
  EXPECT_EQ(a.size(), 12u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  std::map<std::string, int> per;
  for (auto i : a) ++per[ds.entries()[i].label];
  for (const auto& [_, n] : per) EXPECT_EQ(n, 4);
  EXPECT_EQ(a, stratified_cohort(ds, 4, 10));
  EXPECT_EQ(stratified_cohort(ds, 6, 10).size(), 18u);
  EXPECT_THROW(stratified_cohort(ds, 7, 10), InputError);
  EXPECT_THROW(stratified_cohort(ds, 0, 10), InputError);
}
