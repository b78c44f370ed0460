#pragma once

// Noise perturbation and explanation-stability experiments.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlx/error.hpp"
#include "nlx/image.hpp"
#include "nlx/interventions.hpp"
#include "nlx/parallel.hpp"
#include "nlx/rng.hpp"
#include "nlx/text_metrics.hpp"

namespace nlx {

struct NoiseSpec {
  double intensity = 0.0;
  std::uint64_t seed = 0;
};

inline double clip_unit(double x) {
  if (x < 0.0) return 0.0;
  if (x > 1.0) return 1.0;
  return x;
}

// clip(N(0,1) * i + x) per pixel, one independent draw per pixel/channel.
inline Image perturb(const Image& img, const NoiseSpec& spec) {
  if (spec.intensity < 0.0) throw InputError("noise intensity must be non-negative");
  Image out = img;
  if (spec.intensity == 0.0) return out;
  Rng rng(spec.seed);
  for (auto& v : out.pixels()) v = static_cast<float>(clip_unit(rng.normal() * spec.intensity + v));
  return out;
}

struct StabilityReport {
  std::string setting;
  double bleu = 0.0;    // corpus BLEU, [0, 100]
  double meteor = 0.0;  // mean METEOR, [0, 1]
  std::optional<double> cf_rate;
  std::optional<double> mean_delta_p;
  std::size_t n = 0;
};

// Runs the explanation pipeline on one image: prediction + realized text.
struct PipelineOutput {
  Prediction prediction;
  std::string text;
};
using StabilityPipeline = std::function<PipelineOutput(const Image&)>;

// Explanations of each image vs. explanations of its noisy copy (seed
// derived per image index). The pipeline must be deterministic.
inline StabilityReport intra_set_stability(const StabilityPipeline& pipeline, const std::vector<Image>& images,
                                           const NoiseSpec& spec, std::size_t workers = 1) {
  if (images.empty()) throw InputError("stability experiment needs at least one image");
  std::vector<PipelineOutput> clean(images.size()), noisy(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    clean[i] = pipeline(images[i]);
    noisy[i] = pipeline(perturb(images[i], {spec.intensity, derive_seed(spec.seed, i)}));
  });
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  std::vector<InterventionOutcome> outcomes;
  double met = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    cands.push_back(noisy[i].text);
    refs.push_back({clean[i].text});
    met += meteor(noisy[i].text, {clean[i].text});
    outcomes.push_back(compare_predictions(clean[i].prediction, noisy[i].prediction));
  }
  const auto agg = aggregate(outcomes);
  StabilityReport r;
  r.setting = "intra-set (" + std::to_string(static_cast<int>(std::lround(spec.intensity * 100))) + "% noise)";
  r.bleu = corpus_bleu(cands, refs);
  r.meteor = met / static_cast<double>(images.size());
  r.cf_rate = agg.cf_rate;
  r.mean_delta_p = agg.mean_delta_p;
  r.n = images.size();
  return r;
}

struct LabeledExplanation {
  std::string label;
  std::string text;
};

// Each explanation is scored against one explanation drawn from a uniformly
// random other class (then uniformly within that class).
inline StabilityReport inter_set_stability(const std::vector<LabeledExplanation>& explanations, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < explanations.size(); ++i) by_class[explanations[i].label].push_back(i);
  if (by_class.size() < 2) throw InputError("inter-set stability needs explanations from at least two classes");
  std::vector<std::string> labels;
  for (const auto& [l, _] : by_class) labels.push_back(l);

  Rng rng(seed);
  std::vector<std::string> cands;
  std::vector<std::vector<std::string>> refs;
  double met = 0.0;
  for (const auto& e : explanations) {
    std::vector<const std::string*> others;
    for (const auto& l : labels)
      if (l != e.label) others.push_back(&l);
    const auto& pool = by_class[*others[rng.below(others.size())]];
    const auto& ref = explanations[pool[rng.below(pool.size())]].text;
    cands.push_back(e.text);
    refs.push_back({ref});
    met += meteor(e.text, {ref});
  }
  StabilityReport r;
  r.setting = "inter-set";
  r.bleu = corpus_bleu(cands, refs);
  r.meteor = met / static_cast<double>(explanations.size());
  r.n = explanations.size();
  return r;
}

}  // namespace nlx
