#pragma once

// Experiment runners over a cohort: interventions driven by replay records,
// LRP-driven masking trends, pipeline divergence and stability.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nlx/dataset.hpp"
#include "nlx/interventions.hpp"
#include "nlx/parallel.hpp"
#include "nlx/pipeline.hpp"
#include "nlx/replay.hpp"
#include "nlx/rng.hpp"
#include "nlx/stability.hpp"
#include "nlx/verbalize.hpp"

namespace nlx {

struct RecordOutcome {
  std::size_t record = 0;
  std::string image;
  std::string original_class;
  std::string new_class;
  InterventionOutcome outcome;
};

struct InterventionReport {
  std::string experiment;
  AggregateResult summary;
  std::vector<RecordOutcome> records;
};

inline InterventionReport rect_experiment(const Network& net, const DatasetIndex& dataset,
                                          const std::vector<ReplayRecord>& records, RectMode mode,
                                          std::size_t workers = 1) {
  InterventionReport rep;
  rep.experiment = mode == RectMode::Cover ? "covering" : "highlighting";
  rep.records.resize(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& r = records[i];
    const auto img = dataset.load(dataset.find(r.image));
    const auto& rects = mode == RectMode::Cover ? r.cover : r.highlight;
    const auto before = forward(net, img).prediction;
    const auto after = forward(net, apply_rect_masks(img, rects, mode)).prediction;
    rep.records[i] = {r.record, r.image, before.predicted_class, after.predicted_class, compare_predictions(before, after)};
  });
  std::vector<InterventionOutcome> outs;
  for (const auto& o : rep.records) outs.push_back(o.outcome);
  rep.summary = aggregate(outs);
  return rep;
}

// series[j] aggregates the cumulative masking of the first j+1 picks over the
// records that have at least j+1 picks.
struct MaskingReport {
  std::vector<AggregateResult> series;
  AggregateResult all_picks;  // every record with all of its picks masked
};

inline MaskingReport aggregate_sweeps(const std::vector<std::vector<InterventionOutcome>>& sweeps) {
  MaskingReport rep;
  std::size_t longest = 0;
  for (const auto& s : sweeps) longest = std::max(longest, s.size());
  for (std::size_t j = 0; j < longest; ++j) {
    std::vector<InterventionOutcome> at;
    for (const auto& s : sweeps)
      if (s.size() > j) at.push_back(s[j]);
    rep.series.push_back(aggregate(at));
  }
  std::vector<InterventionOutcome> last;
  for (const auto& s : sweeps)
    if (!s.empty()) last.push_back(s.back());
  rep.all_picks = aggregate(last);
  return rep;
}

inline MaskingReport masking_experiment(const Network& net, const DatasetIndex& dataset,
                                        const std::vector<ReplayRecord>& records, std::size_t workers = 1) {
  std::vector<std::vector<InterventionOutcome>> sweeps(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& r = records[i];
    try {
      sweeps[i] = neuron_masking_sweep(net, dataset.load(dataset.find(r.image)), r.picks);
    } catch (const Error& e) {
      throw ValidationError("record " + std::to_string(r.record) + ": " + e.what());
    }
  });
  return aggregate_sweeps(sweeps);
}

// Top-j LRP neurons (j = 1..depth) masked cumulatively, per image.
inline MaskingReport lrp_masking_trend(const Network& net, const std::vector<Image>& images, const std::string& layer,
                                       std::size_t depth = 5, std::size_t workers = 1) {
  std::vector<std::vector<InterventionOutcome>> sweeps(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    const auto fw = forward(net, images[i]);
    const auto rel = lrp_backward(net, fw.activations, fw.prediction.predicted_index);
    const auto top = top_k_neurons(filter_relevance(rel, layer), depth);
    sweeps[i] = neuron_masking_sweep(net, images[i], top);
  });
  return aggregate_sweeps(sweeps);
}

struct RandomMaskingReport {
  double lrp_top1_delta_p = 0.0;
  double random_delta_p = 0.0;
  std::size_t repetitions = 0;
  std::size_t n = 0;
};

// Mean delta p of masking the top-1 LRP neuron vs. a uniformly random neuron
// of the same layer, each repetition drawing a fresh neuron per image.
inline RandomMaskingReport top1_vs_random_masking(const Network& net, const std::vector<Image>& images,
                                                  const std::string& layer, std::size_t repetitions,
                                                  std::uint64_t seed, std::size_t workers = 1) {
  if (images.empty()) throw InputError("masking comparison needs at least one image");
  if (repetitions == 0) throw InputError("random masking needs at least one repetition");
  const std::size_t filters = net.conv(layer).out_channels;
  std::vector<double> top(images.size()), rnd(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    const auto fw = forward(net, images[i]);
    const auto& orig = fw.prediction;
    const auto rel = lrp_backward(net, fw.activations, orig.predicted_index);
    const auto best = top_k_neurons(filter_relevance(rel, layer), 1).front();
    top[i] = run_neuron_intervention(net, orig, images[i], NeuronMask{{best}}).delta_p;
    Rng rng(derive_seed(seed, i));
    double acc = 0.0;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const NeuronId id{layer, static_cast<std::size_t>(rng.below(filters))};
      acc += run_neuron_intervention(net, orig, images[i], NeuronMask{{id}}).delta_p;
    }
    rnd[i] = acc / static_cast<double>(repetitions);
  });
  RandomMaskingReport rep;
  for (std::size_t i = 0; i < images.size(); ++i) {
    rep.lrp_top1_delta_p += top[i];
    rep.random_delta_p += rnd[i];
  }
  rep.lrp_top1_delta_p /= static_cast<double>(images.size());
  rep.random_delta_p /= static_cast<double>(images.size());
  rep.repetitions = repetitions;
  rep.n = images.size();
  return rep;
}

struct DivergenceReport {
  std::vector<double> fractions;
  double mean = 0.0;
  double median = 0.0;
};

inline DivergenceReport summarize_divergence(std::vector<double> fractions) {
  if (fractions.empty()) throw InputError("divergence summary needs at least one pair");
  DivergenceReport rep;
  rep.fractions = fractions;
  double s = 0.0;
  for (double f : fractions) s += f;
  rep.mean = s / static_cast<double>(fractions.size());
  std::sort(fractions.begin(), fractions.end());
  const auto n = fractions.size();
  rep.median = n % 2 ? fractions[n / 2] : 0.5 * (fractions[n / 2 - 1] + fractions[n / 2]);
  return rep;
}

// MR of each original image vs. MR of its covered copy.
inline DivergenceReport divergence_experiment(const Explainer& explainer, const DatasetIndex& dataset,
                                              const std::vector<ReplayRecord>& records, std::size_t workers = 1) {
  std::vector<double> fr(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto img = dataset.load(dataset.find(records[i].image));
    const auto a = explainer.explain_mr(img);
    const auto b = explainer.explain_mr(apply_rect_masks(img, records[i].cover, RectMode::Cover));
    fr[i] = pipeline_divergence(a, b);
  });
  return summarize_divergence(std::move(fr));
}

// Stratified cohort: per_class entries drawn without replacement from each
// class, seeded; returned in dataset order.
inline std::vector<std::size_t> stratified_cohort(const DatasetIndex& dataset, std::size_t per_class,
                                                  std::uint64_t seed) {
  if (per_class == 0) throw InputError("cohort needs at least one image per class");
  std::vector<std::size_t> out;
  const auto& classes = dataset.classes();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset.entries()[i].label == classes[c]) pool.push_back(i);
    if (pool.size() < per_class)
      throw InputError("class '" + classes[c] + "' has " + std::to_string(pool.size()) + " images, " +
                       std::to_string(per_class) + " requested");
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline StabilityPipeline template_pipeline(const Explainer& explainer) {
  return [&explainer](const Image& img) {
    auto t = explainer.trace(img);
    return PipelineOutput{t.forward.prediction, generate_template(t.mr).text};
  };
}

// Explanations of the cohort labelled by predicted class.
inline std::vector<LabeledExplanation> labeled_explanations(const Explainer& explainer, const std::vector<Image>& images,
                                                            std::size_t workers = 1) {
  std::vector<LabeledExplanation> out(images.size());
  const auto pipe = template_pipeline(explainer);
  parallel_for(images.size(), workers, [&](std::size_t i) {
    auto o = pipe(images[i]);
    out[i] = {o.prediction.predicted_class, std::move(o.text)};
  });
  return out;
}

// Rectangles for an image derived from its MR: grid cells of the neurons'
// positions in rank order; a position that would push the union past the
// cover limit contributes only the cells that still fit. One rectangle per cell.
inline std::vector<RectMask> rects_from_mr(const MeaningRepresentation& mr, std::size_t height, std::size_t width) {
  CellSet chosen;
  auto area = [&](CellSet cs) {
    std::vector<RectMask> rs;
    for (int c : cs.cells()) {
      const std::size_t by = static_cast<std::size_t>(c / 3), bx = static_cast<std::size_t>(c % 3);
      const std::size_t bh = height / 3, bw = width / 3;
      rs.push_back({bx * bw, by * bh, bx == 2 ? width - 2 * bw : bw, by == 2 ? height - 2 * bh : bh});
    }
    return rs;
  };
  for (const auto& e : mr.neurons) {
    for (auto p : e.positions) {
      const auto next = chosen | info(p).cells;
      if (union_fraction(area(next), height, width) <= kMaxCoverFraction) {
        chosen = next;
        continue;
      }
      for (int c : info(p).cells.cells()) {
        auto one = chosen;
        one.insert(c);
        if (union_fraction(area(one), height, width) <= kMaxCoverFraction) chosen = one;
      }
    }
  }
  return area(chosen);
}

}  // namespace nlx
