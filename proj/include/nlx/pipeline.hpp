#pragma once

// Image -> meaning representation: forward pass, LRP on the predicted class,
// top-k filters of the target layer, descriptions, positions.

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "nlx/annotate.hpp"
#include "nlx/meaning.hpp"
#include "nlx/network.hpp"
#include "nlx/relevance.hpp"
#include "nlx/spatial.hpp"

namespace nlx {

struct ExplainOptions {
  std::string layer;  // empty = last conv layer
  std::size_t k = 10;
  std::size_t m = 15;
  FilterScoreMode score_mode = FilterScoreMode::Signed;
  ExemplarScore exemplar_score = ExemplarScore::MaxOverPositions;
  std::size_t workers = 1;
};

struct ExplainTrace {
  ForwardResult forward;
  RelevanceStore relevance;
  std::vector<NeuronScore> scores;
  std::vector<NeuronId> top;
  std::vector<Grid> maps;  // activation map per top neuron
  std::vector<Description> descriptions;
  MeaningRepresentation mr;
};

// Re-throws an error with the failing stage prefixed, keeping its kind.
template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage '") + stage + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error("internal", std::string("stage '") + stage + "': " + e.what());
  }
}

class Explainer {
 public:
  Explainer(const Network& net, AnnotationProvider& provider, const DatasetIndex* exemplar_dataset, ExplainOptions opts)
      : net_(net), provider_(provider), dataset_(exemplar_dataset), opts_(std::move(opts)) {
    if (opts_.layer.empty()) opts_.layer = net_.last_conv_layer();
    net_.conv(opts_.layer);
    if (opts_.k == 0) throw ConfigError("k must be at least 1");
    if (opts_.m == 0) throw ConfigError("exemplar count m must be at least 1");
  }

  const ExplainOptions& options() const noexcept { return opts_; }
  const Network& network() const noexcept { return net_; }

  ExplainTrace trace(const Image& img, const NeuronMask& mask = {}) const {
    ExplainTrace t;
    t.forward = run_stage("forward", [&] { return forward(net_, img, mask); });
    t.relevance = run_stage("lrp", [&] { return lrp_backward(net_, t.forward.activations, t.forward.prediction.predicted_index); });
    t.scores = run_stage("filter-relevance", [&] { return filter_relevance(t.relevance, opts_.layer, opts_.score_mode); });
    t.top = run_stage("top-k", [&] { return top_k_neurons(t.scores, opts_.k); });
    std::vector<NeuronEntry> entries;
    for (const auto& id : t.top) {
      auto d = run_stage("describe", [&] {
        const bool need = provider_needs_exemplars(id);
        return provider_.describe(id, need ? exemplars(id) : ExemplarSet{id, opts_.m, {}});
      });
      auto map = run_stage("activation-map", [&] { return activation_map(net_, t.forward.activations, id); });
      auto positions = run_stage("spatial", [&] { return locate(map); });
      entries.push_back({id, d.text, std::move(positions)});
      t.descriptions.push_back(std::move(d));
      t.maps.push_back(std::move(map));
    }
    t.mr = run_stage("build-mr", [&] { return build_mr(t.forward.prediction, std::move(entries)); });
    return t;
  }

  MeaningRepresentation explain_mr(const Image& img) const { return trace(img).mr; }

  // Exemplars of a neuron of the target layer; the score table over the
  // exemplar dataset is computed once.
  ExemplarSet exemplars(const NeuronId& id) const {
    if (!dataset_) throw AnnotationError("no exemplar dataset configured for neuron " + to_string(id));
    if (id.layer != opts_.layer) return build_exemplars(net_, *dataset_, id, opts_.m, opts_.exemplar_score, opts_.workers);
    std::call_once(scores_once_, [&] {
      scores_ = exemplar_scores(net_, *dataset_, opts_.layer, opts_.exemplar_score, opts_.workers);
    });
    return select_exemplars(*dataset_, scores_, id, opts_.m);
  }

 private:
  bool provider_needs_exemplars(const NeuronId& id) const {
    if (const auto* table = dynamic_cast<const AnnotationTable*>(&provider_)) return !table->lookup(id).has_value();
    return true;
  }

  const Network& net_;
  AnnotationProvider& provider_;
  const DatasetIndex* dataset_;
  ExplainOptions opts_;
  mutable std::once_flag scores_once_;
  mutable std::vector<std::vector<double>> scores_;
};

}  // namespace nlx
