#pragma once

// Layer-wise relevance propagation with the basic z-rule:
//
//   R_i = sum_j  z_ij / (z_j + eps_j) * R_j,   z_ij = a_i * w_ij,
//   z_j = sum_i z_ij + b_j,                     eps_j = 1e-9 * sign(z_j)
//
// The bias share b_j / z_j * R_j is dropped, so relevance is conserved
// exactly only for bias-free layers. Relevance is accumulated in double.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "nlx/archive.hpp"
#include "nlx/error.hpp"
#include "nlx/network.hpp"

namespace nlx {

inline constexpr double kLrpEpsilon = 1e-9;

struct RelevanceMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  RelevanceMap() = default;
  RelevanceMap(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), values(c * h * w) {}
  explicit RelevanceMap(const Tensor& like) : RelevanceMap(like.channels, like.height, like.width) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
  double sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }
};

// Relevance at the network input and at the output of every layer.
struct RelevanceStore {
  std::size_t target_class = 0;
  double seed = 0.0;  // target logit
  RelevanceMap input;
  std::vector<std::string> layer_names;
  std::vector<RelevanceMap> outputs;

  const RelevanceMap& at_layer(const std::string& layer) const {
    for (std::size_t i = 0; i < layer_names.size(); ++i)
      if (layer_names[i] == layer) return outputs[i];
    throw LookupError("no relevance recorded for layer '" + layer + "'");
  }
};

struct NeuronScore {
  NeuronId neuron;
  double score = 0.0;
};

enum class FilterScoreMode { Signed, PositiveOnly };

namespace detail {

inline double stabilized(double z) { return z + (z >= 0.0 ? kLrpEpsilon : -kLrpEpsilon); }

inline RelevanceMap lrp_conv(const Conv2d& c, const Tensor& a, const RelevanceMap& rout) {
  RelevanceMap rin(a);
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);
  const auto ih = static_cast<std::ptrdiff_t>(a.height), iw = static_cast<std::ptrdiff_t>(a.width);
  for (std::size_t o = 0; o < rout.channels; ++o) {
    const double bias = c.bias.empty() ? 0.0 : c.bias[o];
    for (std::size_t oy = 0; oy < rout.height; ++oy) {
      for (std::size_t ox = 0; ox < rout.width; ++ox) {
        const double r = rout.at(o, oy, ox);
        if (r == 0.0) continue;
        auto visit = [&](auto&& fn) {
          for (std::size_t i = 0; i < c.in_channels; ++i)
            for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
              const auto y = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - pad;
              if (y < 0 || y >= ih) continue;
              for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
                const auto x = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - pad;
                if (x < 0 || x >= iw) continue;
                const auto uy = static_cast<std::size_t>(y), ux = static_cast<std::size_t>(x);
                fn(i, uy, ux, static_cast<double>(a.at(i, uy, ux)) * c.weight(o, i, ky, kx));
              }
            }
        };
        double z = bias;
        visit([&](std::size_t, std::size_t, std::size_t, double zij) { z += zij; });
        const double scale = r / stabilized(z);
        visit([&](std::size_t i, std::size_t y, std::size_t x, double zij) { rin.at(i, y, x) += zij * scale; });
      }
    }
  }
  return rin;
}

inline RelevanceMap lrp_dense(const Dense& d, const Tensor& a, const RelevanceMap& rout) {
  RelevanceMap rin(a);
  for (std::size_t o = 0; o < d.out_features; ++o) {
    const double r = rout.values[o];
    if (r == 0.0) continue;
    double z = d.bias.empty() ? 0.0 : d.bias[o];
    for (std::size_t i = 0; i < d.in_features; ++i) z += static_cast<double>(a.data[i]) * d.weight(o, i);
    const double scale = r / stabilized(z);
    for (std::size_t i = 0; i < d.in_features; ++i)
      rin.values[i] += static_cast<double>(a.data[i]) * d.weight(o, i) * scale;
  }
  return rin;
}

// Winner-takes-all: the first maximal position (row-major) in each window.
inline RelevanceMap lrp_maxpool(const MaxPool& p, const Tensor& a, const RelevanceMap& rout) {
  RelevanceMap rin(a);
  for (std::size_t c = 0; c < rout.channels; ++c)
    for (std::size_t oy = 0; oy < rout.height; ++oy)
      for (std::size_t ox = 0; ox < rout.width; ++ox) {
        const std::size_t y0 = oy * p.stride, x0 = ox * p.stride;
        std::size_t by = y0, bx = x0;
        for (std::size_t dy = 0; dy < p.kernel; ++dy)
          for (std::size_t dx = 0; dx < p.kernel; ++dx)
            if (a.at(c, y0 + dy, x0 + dx) > a.at(c, by, bx)) {
              by = y0 + dy;
              bx = x0 + dx;
            }
        rin.at(c, by, bx) += rout.at(c, oy, ox);
      }
  return rin;
}

// Proportional to each input's contribution a_i / k^2 to the window mean.
inline RelevanceMap lrp_avgpool(const AvgPool& p, const Tensor& a, const RelevanceMap& rout) {
  RelevanceMap rin(a);
  const double inv = 1.0 / static_cast<double>(p.kernel * p.kernel);
  for (std::size_t c = 0; c < rout.channels; ++c)
    for (std::size_t oy = 0; oy < rout.height; ++oy)
      for (std::size_t ox = 0; ox < rout.width; ++ox) {
        const double r = rout.at(c, oy, ox);
        if (r == 0.0) continue;
        const std::size_t y0 = oy * p.stride, x0 = ox * p.stride;
        double z = 0.0;
        for (std::size_t dy = 0; dy < p.kernel; ++dy)
          for (std::size_t dx = 0; dx < p.kernel; ++dx) z += a.at(c, y0 + dy, x0 + dx) * inv;
        const double scale = r / stabilized(z);
        for (std::size_t dy = 0; dy < p.kernel; ++dy)
          for (std::size_t dx = 0; dx < p.kernel; ++dx)
            rin.at(c, y0 + dy, x0 + dx) += a.at(c, y0 + dy, x0 + dx) * inv * scale;
      }
  return rin;
}

inline void check_finite(const RelevanceMap& m, const std::string& layer) {
  for (double v : m.values)
    if (!std::isfinite(v)) throw NumericError("non-finite relevance produced at layer '" + layer + "'");
}

}  // namespace detail

inline RelevanceStore lrp_backward(const Network& net, const ActivationStore& acts, std::size_t target_class) {
  if (target_class >= net.class_count())
    throw InputError("target class " + std::to_string(target_class) + " out of range");
  const auto& layers = net.layers();
  if (acts.outputs.size() != layers.size()) throw InputError("activation store does not match the network");

  RelevanceStore store;
  store.target_class = target_class;
  store.layer_names = acts.layer_names;
  store.outputs.resize(layers.size());

  RelevanceMap cur(acts.outputs.back());
  store.seed = acts.outputs.back().data[target_class];
  if (!std::isfinite(store.seed)) throw NumericError("non-finite target logit at layer '" + layer_name(layers.back()) + "'");
  cur.values[target_class] = store.seed;

  for (std::size_t li = layers.size(); li-- > 0;) {
    store.outputs[li] = cur;
    const auto& a = acts.layer_input(li);
    const auto& layer = layers[li];
    RelevanceMap next;
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      next = detail::lrp_conv(*c, a, cur);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      next = detail::lrp_dense(*d, a, cur);
    } else if (const auto* mp = std::get_if<MaxPool>(&layer)) {
      next = detail::lrp_maxpool(*mp, a, cur);
    } else if (const auto* ap = std::get_if<AvgPool>(&layer)) {
      next = detail::lrp_avgpool(*ap, a, cur);
    } else {
      // relu and flatten: identity on relevance, reshaped to the input
      next = RelevanceMap(a);
      next.values = cur.values;
    }
    detail::check_finite(next, layer_name(layer));
    cur = std::move(next);
  }
  store.input = std::move(cur);
  return store;
}

inline std::vector<NeuronScore> filter_relevance(const RelevanceStore& rel, const std::string& layer,
                                                 FilterScoreMode mode = FilterScoreMode::Signed) {
  const auto& m = rel.at_layer(layer);
  std::vector<NeuronScore> out;
  out.reserve(m.channels);
  const std::size_t plane = m.height * m.width;
  for (std::size_t c = 0; c < m.channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = m.values[c * plane + i];
      s += (mode == FilterScoreMode::Signed || v > 0.0) ? v : 0.0;
    }
    out.push_back({{layer, c}, s});
  }
  return out;
}

// k highest scores, descending; ties go to the lower filter index.
inline std::vector<NeuronId> top_k_neurons(const std::vector<NeuronScore>& scores, std::size_t k) {
  if (k == 0) throw InputError("k must be at least 1");
  if (scores.empty()) throw InputError("cannot select neurons from an empty score list");
  for (const auto& s : scores)
    if (!std::isfinite(s.score)) throw NumericError("non-finite score for neuron " + to_string(s.neuron));
  std::vector<NeuronScore> sorted = scores;
  std::stable_sort(sorted.begin(), sorted.end(), [](const NeuronScore& a, const NeuronScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.neuron.filter_index < b.neuron.filter_index;
  });
  sorted.resize(std::min(k, sorted.size()));
  std::vector<NeuronId> ids;
  ids.reserve(sorted.size());
  for (auto& s : sorted) ids.push_back(std::move(s.neuron));
  return ids;
}

// Debug dump in the tensor-archive format: one float32 tensor per layer,
// named "relevance/<layer>", plus "relevance/input".
inline TensorArchive relevance_to_archive(const RelevanceStore& rel) {
  TensorArchive ar;
  ar.manifest["format"] = "nlx-relevance";
  ar.manifest["version"] = 1;
  ar.manifest["target_class"] = rel.target_class;
  ar.manifest["seed"] = rel.seed;
  ar.manifest["layers"] = rel.layer_names;
  auto put = [&](const std::string& name, const RelevanceMap& m) {
    NamedTensor t{{m.channels, m.height, m.width}, {}};
    t.values.assign(m.values.begin(), m.values.end());
    ar.tensors["relevance/" + name] = std::move(t);
  };
  put("input", rel.input);
  for (std::size_t i = 0; i < rel.layer_names.size(); ++i) put(rel.layer_names[i], rel.outputs[i]);
  return ar;
}

}  // namespace nlx
