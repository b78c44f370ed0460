#include <gtest/gtest.h>

#include "mr_gen.hpp"
#include "nlx/experiments.hpp"
#include "nlx/interventions.hpp"
#include "support.hpp"

using namespace nlx;
using testsupport::random_image;
using testsupport::small_net;

TEST(RectMasks, CoverAndHighlightAreComplementary) {
  const auto img = random_image(1, 12, 12);
  const std::vector<RectMask> rects = {{0, 0, 4, 4}, {6, 6, 3, 5}};
  const auto cov = apply_rect_masks(img, rects, RectMode::Cover);
  const auto hi = apply_rect_masks(img, rects, RectMode::Highlight);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 12; ++x) {
      const bool inside = (x < 4 && y < 4) || (x >= 6 && x < 9 && y >= 6 && y < 11);
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(cov.at(y, x, c), inside ? 1.0f : img.at(y, x, c));
        EXPECT_EQ(hi.at(y, x, c), inside ? img.at(y, x, c) : 1.0f);
      }
    }
}

TEST(RectMasks, CoverLimitUsesUnionArea) {
  const auto img = random_image(2, 10, 10);
  // two overlapping 6x7 rectangles: 84 px summed, 48 px union
  const std::vector<RectMask> overlap = {{0, 0, 6, 7}, {0, 1, 6, 7}};
  EXPECT_NEAR(union_fraction(overlap, 10, 10), 0.48, 1e-12);
  EXPECT_NO_THROW(apply_rect_masks(img, overlap, RectMode::Cover));
  // 60% cover
  EXPECT_THROW(apply_rect_masks(img, {{0, 0, 10, 6}}, RectMode::Cover), ConstraintError);
  // highlight mode has no area limit
  EXPECT_NO_THROW(apply_rect_masks(img, {{0, 0, 10, 6}}, RectMode::Highlight));
  // exactly half is allowed
  EXPECT_NO_THROW(apply_rect_masks(img, {{0, 0, 10, 5}}, RectMode::Cover));
}

TEST(RectMasks, RejectsBadRectangles) {
  const auto img = random_image(3, 10, 10);
  EXPECT_THROW(apply_rect_masks(img, {{8, 0, 3, 1}}, RectMode::Cover), InputError);
  EXPECT_THROW(apply_rect_masks(img, {{0, 0, 0, 1}}, RectMode::Highlight), InputError);
}

TEST(Interventions, DeltaPMatchesTwoForwardPasses) {
  const auto net = small_net(4, true);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto img = random_image(100 + s);
    const auto mod = apply_rect_masks(img, {{2, 2, 5, 5}}, RectMode::Cover);
    const auto a = forward(net, img).prediction;
    const auto b = forward(net, mod).prediction;
    const auto o = run_intervention(net, a, mod);
    EXPECT_DOUBLE_EQ(o.delta_p, a.probabilities[a.predicted_index] - b.probabilities[a.predicted_index]);
    EXPECT_EQ(o.class_flip, a.predicted_index != b.predicted_index);
  }
}

TEST(Interventions, Aggregate) {
  const auto r = aggregate({{true, 0.5}, {false, 0.1}, {false, -0.2}, {true, 0.4}});
  EXPECT_DOUBLE_EQ(r.cf_rate, 0.5);
  EXPECT_NEAR(r.mean_delta_p, 0.2, 1e-12);
  EXPECT_EQ(r.n, 4u);
  EXPECT_EQ(aggregate({}).n, 0u);
}

TEST(Masking, SweepPrefixesMatchDirectMasks) {
  const auto net = small_net(5, true);
  const auto img = random_image(6);
  const std::vector<NeuronId> picks = {{"conv3", 2}, {"conv3", 5}, {"conv2", 1}};
  const auto sweep = neuron_masking_sweep(net, img, picks);
  ASSERT_EQ(sweep.size(), 3u);
  const auto orig = forward(net, img).prediction;
  NeuronMask m;
  for (std::size_t j = 0; j < picks.size(); ++j) {
    m.masked.insert(picks[j]);
    EXPECT_DOUBLE_EQ(sweep[j].delta_p, run_neuron_intervention(net, orig, img, m).delta_p);
  }
}

TEST(Masking, SweepValidation) {
  const auto net = small_net(5);
  const auto img = random_image(6);
  EXPECT_THROW(neuron_masking_sweep(net, img, {}), InputError);
  EXPECT_THROW(neuron_masking_sweep(net, img, {{"conv3", 1}, {"conv3", 1}}), InputError);
  std::vector<NeuronId> six;
  for (std::size_t i = 0; i < 6; ++i) six.push_back({"conv3", i});
  EXPECT_THROW(neuron_masking_sweep(net, img, six), InputError);
  EXPECT_THROW(neuron_masking_sweep(net, img, {{"conv3", 8}}), Error);
  EXPECT_THROW(neuron_masking_sweep(net, img, {{"nope", 0}}), Error);
}

TEST(Masking, AggregateSweepsHandlesRaggedLengths) {
  const auto rep = aggregate_sweeps({{{false, 0.1}, {true, 0.3}}, {{false, 0.2}}});
  ASSERT_EQ(rep.series.size(), 2u);
  EXPECT_EQ(rep.series[0].n, 2u);
  EXPECT_NEAR(rep.series[0].mean_delta_p, 0.15, 1e-12);
  EXPECT_EQ(rep.series[1].n, 1u);
  EXPECT_DOUBLE_EQ(rep.series[1].cf_rate, 1.0);
  EXPECT_NEAR(rep.all_picks.mean_delta_p, 0.25, 1e-12);
}

TEST(Masking, RandomComparisonIsSeeded) {
  const auto net = small_net(7, true);
  std::vector<Image> imgs;
  for (std::uint64_t s = 0; s < 6; ++s) imgs.push_back(random_image(200 + s));
  const auto a = top1_vs_random_masking(net, imgs, "conv3", 5, 9, 1);
  const auto b = top1_vs_random_masking(net, imgs, "conv3", 5, 9, 3);
  EXPECT_DOUBLE_EQ(a.lrp_top1_delta_p, b.lrp_top1_delta_p);
  EXPECT_DOUBLE_EQ(a.random_delta_p, b.random_delta_p);
  EXPECT_EQ(a.n, 6u);
  EXPECT_THROW(top1_vs_random_masking(net, {}, "conv3", 5, 9), InputError);
}

namespace {
MeaningRepresentation mr_of(std::vector<std::size_t> filters) {
  MeaningRepresentation mr{"x", {}};
  for (auto f : filters) mr.neurons.push_back({{"conv3", f}, "thing", {}});
  return mr;
}
}  // namespace

TEST(Divergence, DocumentedExamples) {
  EXPECT_DOUBLE_EQ(pipeline_divergence(mr_of({1, 2, 3}), mr_of({3, 2, 1})), 0.0);
  EXPECT_DOUBLE_EQ(pipeline_divergence(mr_of({1, 2, 3}), mr_of({4, 5, 6})), 1.0);
  EXPECT_DOUBLE_EQ(pipeline_divergence(mr_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), mr_of({0, 1, 2, 10, 11, 12, 13, 14, 15, 16})),
                   0.7);
  // asymmetric: measured against the first MR's neurons
  EXPECT_DOUBLE_EQ(pipeline_divergence(mr_of({1}), mr_of({1, 2, 3, 4})), 0.0);
  EXPECT_DOUBLE_EQ(pipeline_divergence(mr_of({1, 2, 3, 4}), mr_of({1})), 0.75);
  // same filter index in a different layer is a different neuron
  auto other = mr_of({1});
  other.neurons[0].neuron.layer = "conv2";
  EXPECT_DOUBLE_EQ(pipeline_divergence(mr_of({1}), other), 1.0);
}

TEST(Divergence, Summary) {
  const auto d = summarize_divergence({0.1, 0.7, 0.0, 0.4});
  EXPECT_NEAR(d.mean, 0.3, 1e-12);
  EXPECT_NEAR(d.median, 0.25, 1e-12);
  EXPECT_DOUBLE_EQ(summarize_divergence({0.2, 0.9, 0.5}).median, 0.5);
  EXPECT_THROW(summarize_divergence({}), InputError);
}

TEST(RectsFromMr, StayWithinCoverLimit) {
  Rng rng(15);
  for (int i = 0; i < 300; ++i) {
    const auto mr = testsupport::random_mr(rng);
    const std::size_t h = 9 + rng.below(40), w = 9 + rng.below(40);
    const auto rects = rects_from_mr(mr, h, w);
    EXPECT_LE(union_fraction(rects, h, w), kMaxCoverFraction);
    for (const auto& r : rects) EXPECT_NO_THROW(validate_rect(r, h, w));
  }
}

TEST(RectsFromMr, TakesPositionCellsInRankOrder) {
  MeaningRepresentation mr{"x", {{{"conv3", 0}, "a", {Position::TopLeftCorner}}, {{"conv3", 1}, "b", {Position::Center}}}};
  const auto rects = rects_from_mr(mr, 36, 36);
  ASSERT_EQ(rects.size(), 2u);
  EXPECT_EQ(rects[0], (RectMask{0, 0, 12, 12}));
  EXPECT_EQ(rects[1], (RectMask{12, 12, 12, 12}));
  // an entire image label only gets cells while they fit
  MeaningRepresentation big{"x", {{{"conv3", 0}, "a", {Position::EntireImage}}}};
  const auto some = rects_from_mr(big, 36, 36);
  EXPECT_EQ(some.size(), 4u);
}
