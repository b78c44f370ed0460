#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "nlx/error.hpp"
#include "nlx/image.hpp"
#include "nlx/tensor.hpp"

namespace nlx {

// ---------------------------------------------------------------------------
// Layer specifications. Parameter tensors are row-major float32:
//   conv weights  [out_channels][in_channels][kernel_h][kernel_w]
//   dense weights [out_features][in_features]
// ---------------------------------------------------------------------------

struct Conv2d {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  float weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weights[((o * in_channels + i) * kernel_h + ky) * kernel_w + kx];
  }
};

struct Relu {
  std::string name;
};

struct MaxPool {
  std::string name;
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct AvgPool {
  std::string name;
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct Flatten {
  std::string name;
};

struct Dense {
  std::string name;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  float weight(std::size_t o, std::size_t i) const { return weights[o * in_features + i]; }
};

using Layer = std::variant<Conv2d, Relu, MaxPool, AvgPool, Flatten, Dense>;

inline const std::string& layer_name(const Layer& layer) {
  return std::visit([](const auto& l) -> const std::string& { return l.name; }, layer);
}

inline std::string layer_type(const Layer& layer) {
  struct V {
    std::string operator()(const Conv2d&) const { return "conv2d"; }
    std::string operator()(const Relu&) const { return "relu"; }
    std::string operator()(const MaxPool&) const { return "maxpool"; }
    std::string operator()(const AvgPool&) const { return "avgpool"; }
    std::string operator()(const Flatten&) const { return "flatten"; }
    std::string operator()(const Dense&) const { return "dense"; }
  };
  return std::visit(V{}, layer);
}

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

// A convolutional filter in a named layer.
struct NeuronId {
  std::string layer;
  std::size_t filter_index = 0;

  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
  friend bool operator==(const NeuronId&, const NeuronId&) = default;
};

inline std::string to_string(const NeuronId& id) {
  return id.layer + "#" + std::to_string(id.filter_index);
}

struct NeuronMask {
  std::set<NeuronId> masked;

  bool empty() const noexcept { return masked.empty(); }
  bool contains(const NeuronId& id) const { return masked.count(id) > 0; }
};

namespace detail {

inline std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 const std::string& name) {
  if (kernel == 0 || stride == 0) throw CompositionError("layer '" + name + "': zero pool kernel or stride");
  if (in < kernel) throw CompositionError("layer '" + name + "': input smaller than pool kernel");
  return (in - kernel) / stride + 1;
}

}  // namespace detail

// Immutable CNN classifier. Construction validates that consecutive layer
// shapes compose; afterwards the object is safe to share between threads.
class Network {
 public:
  Network(Shape input, std::vector<Layer> layers, std::vector<std::string> class_names)
      : input_(input), layers_(std::move(layers)), class_names_(std::move(class_names)) {
    validate();
  }

  const Shape& input_shape() const noexcept { return input_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t class_count() const noexcept { return class_names_.size(); }

  // Output shape of layer `i`.
  const Shape& output_shape(std::size_t i) const { return shapes_.at(i); }

  std::optional<std::size_t> find_layer(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layer_name(layers_[i]) == name) return i;
    return std::nullopt;
  }

  std::size_t layer_index(const std::string& name) const {
    auto i = find_layer(name);
    if (!i) throw LookupError("unknown layer '" + name + "'");
    return *i;
  }

  const Conv2d& conv(const std::string& name) const {
    const auto i = layer_index(name);
    const auto* c = std::get_if<Conv2d>(&layers_[i]);
    if (!c) throw LookupError("layer '" + name + "' is not convolutional");
    return *c;
  }

  std::vector<std::string> conv_layer_names() const {
    std::vector<std::string> out;
    for (const auto& l : layers_)
      if (std::holds_alternative<Conv2d>(l)) out.push_back(layer_name(l));
    return out;
  }

  std::string last_conv_layer() const { return conv_layer_names().back(); }

  // Index of the layer whose output is the neuron's activation map: the
  // ReLU directly after the conv layer if there is one, else the conv itself.
  std::size_t activation_layer_index(const std::string& conv_name) const {
    const auto i = layer_index(conv_name);
    conv(conv_name);
    if (i + 1 < layers_.size() && std::holds_alternative<Relu>(layers_[i + 1])) return i + 1;
    return i;
  }

  void validate_neuron(const NeuronId& id) const {
    const auto& c = conv(id.layer);
    if (id.filter_index >= c.out_channels)
      throw LookupError("filter index " + std::to_string(id.filter_index) + " out of range for layer '" +
                        id.layer + "' (" + std::to_string(c.out_channels) + " filters)");
  }

  void validate_mask(const NeuronMask& mask) const {
    for (const auto& id : mask.masked) validate_neuron(id);
  }

 private:
  void validate() {
    if (input_.size() == 0) throw CompositionError("input shape must be non-empty");
    std::set<std::string> names;
    Shape cur = input_;
    bool has_conv = false;
    for (const auto& layer : layers_) {
      const auto& name = layer_name(layer);
      if (name.empty()) throw CompositionError("layer without a name");
      if (!names.insert(name).second) throw CompositionError("duplicate layer name '" + name + "'");
      cur = std::visit([&](const auto& l) { return infer(l, cur); }, layer);
      shapes_.push_back(cur);
      has_conv = has_conv || std::holds_alternative<Conv2d>(layer);
    }
    if (!has_conv) throw CompositionError("network has no convolutional layer");
    if (layers_.empty() || cur.height != 1 || cur.width != 1)
      throw CompositionError("network output must be a flat vector");
    if (cur.channels != class_names_.size())
      throw CompositionError("class name count " + std::to_string(class_names_.size()) +
                             " does not match output dimension " + std::to_string(cur.channels));
  }

  static Shape infer(const Conv2d& c, const Shape& in) {
    if (in.channels != c.in_channels)
      throw CompositionError("layer '" + c.name + "' expects " + std::to_string(c.in_channels) +
                             " input channels, got " + std::to_string(in.channels));
    if (c.kernel_h == 0 || c.kernel_w == 0 || c.stride == 0 || c.out_channels == 0)
      throw CompositionError("layer '" + c.name + "': degenerate convolution");
    if (c.weights.size() != c.out_channels * c.in_channels * c.kernel_h * c.kernel_w)
      throw CompositionError("layer '" + c.name + "': weight count does not match shape");
    if (!c.bias.empty() && c.bias.size() != c.out_channels)
      throw CompositionError("layer '" + c.name + "': bias count does not match filter count");
    const auto ph = in.height + 2 * c.padding;
    const auto pw = in.width + 2 * c.padding;
    if (ph < c.kernel_h || pw < c.kernel_w) throw CompositionError("layer '" + c.name + "': kernel larger than input");
    return {c.out_channels, (ph - c.kernel_h) / c.stride + 1, (pw - c.kernel_w) / c.stride + 1};
  }
  static Shape infer(const Relu&, const Shape& in) { return in; }
  static Shape infer(const MaxPool& p, const Shape& in) {
    return {in.channels, detail::pooled_extent(in.height, p.kernel, p.stride, p.name),
            detail::pooled_extent(in.width, p.kernel, p.stride, p.name)};
  }
  static Shape infer(const AvgPool& p, const Shape& in) {
    return {in.channels, detail::pooled_extent(in.height, p.kernel, p.stride, p.name),
            detail::pooled_extent(in.width, p.kernel, p.stride, p.name)};
  }
  static Shape infer(const Flatten&, const Shape& in) { return {in.size(), 1, 1}; }
  static Shape infer(const Dense& d, const Shape& in) {
    if (in.height != 1 || in.width != 1)
      throw CompositionError("layer '" + d.name + "' needs a flat input (insert a flatten layer)");
    if (in.channels != d.in_features)
      throw CompositionError("layer '" + d.name + "' expects " + std::to_string(d.in_features) +
                             " inputs, got " + std::to_string(in.channels));
    if (d.weights.size() != d.in_features * d.out_features)
      throw CompositionError("layer '" + d.name + "': weight count does not match shape");
    if (!d.bias.empty() && d.bias.size() != d.out_features)
      throw CompositionError("layer '" + d.name + "': bias count does not match output count");
    return {d.out_features, 1, 1};
  }

  Shape input_;
  std::vector<Layer> layers_;
  std::vector<std::string> class_names_;
  std::vector<Shape> shapes_;
};

// Every intermediate tensor of one forward pass. `outputs[i]` is the output
// of layer i; `input` is the network input.
struct ActivationStore {
  Tensor input;
  std::vector<std::string> layer_names;
  std::vector<Tensor> outputs;

  const Tensor& output(const std::string& layer) const {
    for (std::size_t i = 0; i < layer_names.size(); ++i)
      if (layer_names[i] == layer) return outputs[i];
    throw LookupError("no activations recorded for layer '" + layer + "'");
  }

  // Input of layer i.
  const Tensor& layer_input(std::size_t i) const { return i == 0 ? input : outputs.at(i - 1); }
};

struct Prediction {
  std::vector<float> logits;
  std::vector<double> probabilities;
  std::size_t predicted_index = 0;
  std::string predicted_class;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct ForwardResult {
  Prediction prediction;
  ActivationStore activations;
};

inline std::vector<double> softmax(const std::vector<float>& logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

namespace kernels {

inline Tensor conv2d(const Conv2d& c, const Tensor& in, const Shape& out_shape) {
  Tensor out(out_shape.channels, out_shape.height, out_shape.width);
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);
  const auto ih = static_cast<std::ptrdiff_t>(in.height);
  const auto iw = static_cast<std::ptrdiff_t>(in.width);
  for (std::size_t o = 0; o < c.out_channels; ++o) {
    const float b = c.bias.empty() ? 0.0f : c.bias[o];
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox) {
        float acc = b;
        for (std::size_t i = 0; i < c.in_channels; ++i) {
          for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
            const auto y = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - pad;
            if (y < 0 || y >= ih) continue;
            for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
              const auto x = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - pad;
              if (x < 0 || x >= iw) continue;
              acc += in.at(i, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) * c.weight(o, i, ky, kx);
            }
          }
        }
        out.at(o, oy, ox) = acc;
      }
    }
  }
  return out;
}

inline Tensor relu(const Tensor& in) {
  Tensor out = in;
  for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
  return out;
}

template <typename Reduce>
Tensor pool(const Tensor& in, std::size_t kernel, std::size_t stride, const Shape& out_shape, Reduce reduce) {
  Tensor out(out_shape.channels, out_shape.height, out_shape.width);
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t oy = 0; oy < out.height; ++oy)
      for (std::size_t ox = 0; ox < out.width; ++ox)
        out.at(c, oy, ox) = reduce(in, c, oy * stride, ox * stride, kernel);
  return out;
}

inline Tensor maxpool(const MaxPool& p, const Tensor& in, const Shape& out_shape) {
  return pool(in, p.kernel, p.stride, out_shape,
              [](const Tensor& t, std::size_t c, std::size_t y0, std::size_t x0, std::size_t k) {
                float best = t.at(c, y0, x0);
                for (std::size_t dy = 0; dy < k; ++dy)
                  for (std::size_t dx = 0; dx < k; ++dx) best = std::max(best, t.at(c, y0 + dy, x0 + dx));
                return best;
              });
}

inline Tensor avgpool(const AvgPool& p, const Tensor& in, const Shape& out_shape) {
  return pool(in, p.kernel, p.stride, out_shape,
              [](const Tensor& t, std::size_t c, std::size_t y0, std::size_t x0, std::size_t k) {
                float acc = 0.0f;
                for (std::size_t dy = 0; dy < k; ++dy)
                  for (std::size_t dx = 0; dx < k; ++dx) acc += t.at(c, y0 + dy, x0 + dx);
                return acc / static_cast<float>(k * k);
              });
}

inline Tensor flatten(const Tensor& in) {
  Tensor out(in.size(), 1, 1);
  out.data = in.data;
  return out;
}

inline Tensor dense(const Dense& d, const Tensor& in) {
  Tensor out(d.out_features, 1, 1);
  for (std::size_t o = 0; o < d.out_features; ++o) {
    float acc = d.bias.empty() ? 0.0f : d.bias[o];
    for (std::size_t i = 0; i < d.in_features; ++i) acc += in.data[i] * d.weight(o, i);
    out.data[o] = acc;
  }
  return out;
}

}  // namespace kernels

// Runs the network on `input` (channel-major), recording every layer output.
// Filters listed in `mask` have their whole output map zeroed before the
// next layer sees it.
inline ForwardResult forward(const Network& net, const Tensor& input, const NeuronMask& mask = {}) {
  const auto& is = net.input_shape();
  if (input.channels != is.channels || input.height != is.height || input.width != is.width)
    throw InputError("input shape " + input.shape_string() + " does not match network input " + to_string(is));
  net.validate_mask(mask);

  ForwardResult result;
  auto& acts = result.activations;
  acts.input = input;
  acts.outputs.reserve(net.layers().size());
  const Tensor* cur = &acts.input;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    const auto& layer = net.layers()[li];
    const auto& shape = net.output_shape(li);
    Tensor out;
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      out = kernels::conv2d(*c, *cur, shape);
      for (const auto& id : mask.masked)
        if (id.layer == c->name) std::fill_n(out.channel(id.filter_index).begin(), out.plane(), 0.0f);
    } else if (std::holds_alternative<Relu>(layer)) {
      out = kernels::relu(*cur);
    } else if (const auto* mp = std::get_if<MaxPool>(&layer)) {
      out = kernels::maxpool(*mp, *cur, shape);
    } else if (const auto* ap = std::get_if<AvgPool>(&layer)) {
      out = kernels::avgpool(*ap, *cur, shape);
    } else if (std::holds_alternative<Flatten>(layer)) {
      out = kernels::flatten(*cur);
    } else {
      out = kernels::dense(std::get<Dense>(layer), *cur);
    }
    acts.layer_names.push_back(layer_name(layer));
    acts.outputs.push_back(std::move(out));
    cur = &acts.outputs.back();
  }

  auto& pred = result.prediction;
  pred.logits = acts.outputs.back().data;
  pred.probabilities = softmax(pred.logits);
  pred.predicted_index = static_cast<std::size_t>(
      std::distance(pred.logits.begin(), std::max_element(pred.logits.begin(), pred.logits.end())));
  pred.predicted_class = net.class_names()[pred.predicted_index];
  return result;
}

inline ForwardResult forward(const Network& net, const Image& img, const NeuronMask& mask = {}) {
  const auto& is = net.input_shape();
  if (img.channels() != is.channels || img.height() != is.height || img.width() != is.width)
    throw InputError("image shape " + std::to_string(img.height()) + "x" + std::to_string(img.width()) + "x" +
                     std::to_string(img.channels()) + " does not match network input (HxWxC) " +
                     std::to_string(is.height) + "x" + std::to_string(is.width) + "x" +
                     std::to_string(is.channels));
  return forward(net, img.to_tensor(), mask);
}

inline std::vector<NeuronId> list_neurons(const Network& net, const std::string& layer) {
  const auto& c = net.conv(layer);
  std::vector<NeuronId> ids;
  ids.reserve(c.out_channels);
  for (std::size_t i = 0; i < c.out_channels; ++i) ids.push_back({layer, i});
  return ids;
}

// 2D activation map of one filter (post-ReLU when the conv is followed by one).
inline Grid activation_map(const Network& net, const ActivationStore& acts, const NeuronId& id) {
  net.validate_neuron(id);
  const auto li = net.activation_layer_index(id.layer);
  const auto& t = acts.outputs.at(li);
  Grid g(t.height, t.width);
  const auto ch = t.channel(id.filter_index);
  for (std::size_t i = 0; i < ch.size(); ++i) g.values[i] = ch[i];
  return g;
}

}  // namespace nlx
