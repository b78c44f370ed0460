#pragma once

// Faithfulness interventions: covering / highlighting image regions, masking
// neurons, and comparing the neuron sets of two MRs.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "nlx/error.hpp"
#include "nlx/meaning.hpp"
#include "nlx/network.hpp"

namespace nlx {

struct RectMask {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 1;
  std::size_t h = 1;

  friend bool operator==(const RectMask&, const RectMask&) = default;
};

enum class RectMode { Cover, Highlight };

inline constexpr double kMaxCoverFraction = 0.5;

struct InterventionOutcome {
  bool class_flip = false;
  double delta_p = 0.0;  // p_before(original class) - p_after(original class)
};

struct AggregateResult {
  double cf_rate = 0.0;
  double mean_delta_p = 0.0;
  std::size_t n = 0;
};

inline AggregateResult aggregate(const std::vector<InterventionOutcome>& outcomes) {
  AggregateResult r;
  r.n = outcomes.size();
  if (r.n == 0) return r;
  std::size_t flips = 0;
  double dp = 0.0;
  for (const auto& o : outcomes) {
    flips += o.class_flip ? 1 : 0;
    dp += o.delta_p;
  }
  r.cf_rate = static_cast<double>(flips) / static_cast<double>(r.n);
  r.mean_delta_p = dp / static_cast<double>(r.n);
  return r;
}

inline void validate_rect(const RectMask& r, std::size_t height, std::size_t width) {
  if (r.w == 0 || r.h == 0) throw InputError("rectangle extent must be at least 1x1");
  if (r.x + r.w > width || r.y + r.h > height)
    throw InputError("rectangle (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," + std::to_string(r.w) + "," +
                     std::to_string(r.h) + ") exceeds the " + std::to_string(width) + "x" + std::to_string(height) +
                     " image");
}

// Per-pixel coverage by the union of the rectangles.
inline std::vector<std::uint8_t> rect_union(const std::vector<RectMask>& masks, std::size_t height, std::size_t width) {
  std::vector<std::uint8_t> inside(height * width, 0);
  for (const auto& r : masks) {
    validate_rect(r, height, width);
    for (std::size_t y = r.y; y < r.y + r.h; ++y)
      for (std::size_t x = r.x; x < r.x + r.w; ++x) inside[y * width + x] = 1;
  }
  return inside;
}

inline double union_fraction(const std::vector<RectMask>& masks, std::size_t height, std::size_t width) {
  const auto inside = rect_union(masks, height, width);
  const auto n = std::count(inside.begin(), inside.end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(inside.size());
}

// Cover: pixels inside any rectangle become white. Highlight: pixels
// outside every rectangle become white. Cover mode rejects a union area
// above half the image.
inline Image apply_rect_masks(const Image& img, const std::vector<RectMask>& masks, RectMode mode) {
  const auto inside = rect_union(masks, img.height(), img.width());
  if (mode == RectMode::Cover) {
    const auto covered = std::count(inside.begin(), inside.end(), std::uint8_t{1});
    const double frac = static_cast<double>(covered) / static_cast<double>(inside.size());
    if (frac > kMaxCoverFraction)
      throw ConstraintError("covered area is " + std::to_string(frac * 100.0) + "% of the image (limit 50%)");
  }
  Image out = img;
  const std::uint8_t whiten = mode == RectMode::Cover ? 1 : 0;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      if (inside[y * img.width() + x] == whiten)
        for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, x, c) = 1.0f;
  return out;
}

inline InterventionOutcome compare_predictions(const Prediction& original, const Prediction& after) {
  if (after.probabilities.size() != original.probabilities.size())
    throw InputError("predictions come from networks with different class counts");
  const auto k = original.predicted_index;
  return {after.predicted_index != k, original.probabilities[k] - after.probabilities[k]};
}

inline InterventionOutcome run_intervention(const Network& net, const Prediction& original, const Image& modified) {
  return compare_predictions(original, forward(net, modified).prediction);
}

inline InterventionOutcome run_neuron_intervention(const Network& net, const Prediction& original, const Image& img,
                                                   const NeuronMask& mask) {
  return compare_predictions(original, forward(net, img, mask).prediction);
}

// outcome[j] masks the first j+1 picks together.
inline std::vector<InterventionOutcome> neuron_masking_sweep(const Network& net, const Image& img,
                                                             const std::vector<NeuronId>& picks) {
  if (picks.empty()) throw InputError("neuron masking sweep needs at least one pick");
  if (picks.size() > 5) throw InputError("neuron masking sweep accepts at most five picks");
  std::set<NeuronId> seen;
  for (const auto& p : picks) {
    net.validate_neuron(p);
    if (!seen.insert(p).second) throw InputError("duplicate pick " + to_string(p));
  }
  const auto original = forward(net, img).prediction;
  std::vector<InterventionOutcome> out;
  NeuronMask mask;
  for (const auto& p : picks) {
    mask.masked.insert(p);
    out.push_back(run_neuron_intervention(net, original, img, mask));
  }
  return out;
}

// Fraction of mr_a's neurons that do not appear in mr_b.
inline double pipeline_divergence(const MeaningRepresentation& a, const MeaningRepresentation& b) {
  if (a.neurons.empty()) throw InputError("divergence needs a non-empty first MR");
  std::set<NeuronId> sa, sb;
  for (const auto& e : a.neurons) sa.insert(e.neuron);
  for (const auto& e : b.neurons) sb.insert(e.neuron);
  std::size_t missing = 0;
  for (const auto& id : sa) missing += sb.count(id) ? 0 : 1;
  return static_cast<double>(missing) / static_cast<double>(sa.size());
}

}  // namespace nlx
