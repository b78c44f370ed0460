#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/archive.hpp"
#include "nlx/digest.hpp"
#include "nlx/error.hpp"
#include "nlx/network.hpp"

namespace nlx {

// Network + the free-form metadata stored alongside it (training provenance,
// recorded test accuracy) + the SHA-256 of the container bytes.
struct ModelBundle {
  Network network;
  nlohmann::json metadata;
  std::string digest;
};

namespace detail {

template <typename T>
T layer_field(const nlohmann::json& layer, const char* key, const std::string& lname) {
  try {
    return layer.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("layer '" + lname + "': missing or malformed field '" + key + "'");
  }
}

inline std::vector<float> take_tensor(const TensorArchive& ar, const std::string& lname, const std::string& param,
                                      std::vector<std::size_t> shape, bool required) {
  const auto key = lname + "." + param;
  auto it = ar.tensors.find(key);
  if (it == ar.tensors.end()) {
    if (required) throw CompositionError("layer '" + lname + "': missing parameter tensor '" + key + "'");
    return {};
  }
  if (it->second.shape != shape) throw CompositionError("layer '" + lname + "': tensor '" + key + "' has wrong shape");
  return it->second.values;
}

}  // namespace detail

inline Network network_from_archive(const TensorArchive& ar) {
  const auto& m = ar.manifest;
  if (m.value("format", "") != "nlx-cnn") throw FormatError("archive is not a network container (format != nlx-cnn)");
  Shape input;
  std::vector<std::string> classes;
  try {
    input = {m.at("input").at("channels").get<std::size_t>(), m.at("input").at("height").get<std::size_t>(),
             m.at("input").at("width").get<std::size_t>()};
    classes = m.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network manifest: bad 'input' or 'class_names': ") + e.what());
  }
  if (!m.contains("layers") || !m["layers"].is_array()) throw FormatError("network manifest: missing 'layers' list");

  std::vector<Layer> layers;
  for (const auto& l : m["layers"]) {
    const auto name = l.value("name", std::string{});
    if (name.empty()) throw FormatError("network manifest: layer without a name");
    const auto type = detail::layer_field<std::string>(l, "type", name);
    if (type == "conv2d") {
      Conv2d c;
      c.name = name;
      c.in_channels = detail::layer_field<std::size_t>(l, "in_channels", name);
      c.out_channels = detail::layer_field<std::size_t>(l, "out_channels", name);
      const auto k = detail::layer_field<std::vector<std::size_t>>(l, "kernel", name);
      if (k.size() != 2) throw FormatError("layer '" + name + "': kernel must be [h, w]");
      c.kernel_h = k[0];
      c.kernel_w = k[1];
      c.stride = detail::layer_field<std::size_t>(l, "stride", name);
      c.padding = detail::layer_field<std::size_t>(l, "padding", name);
      c.weights = detail::take_tensor(ar, name, "weight", {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w}, true);
      c.bias = detail::take_tensor(ar, name, "bias", {c.out_channels}, false);
      layers.emplace_back(std::move(c));
    } else if (type == "relu") {
      layers.emplace_back(Relu{name});
    } else if (type == "maxpool") {
      layers.emplace_back(MaxPool{name, detail::layer_field<std::size_t>(l, "kernel", name),
                                  detail::layer_field<std::size_t>(l, "stride", name)});
    } else if (type == "avgpool") {
      layers.emplace_back(AvgPool{name, detail::layer_field<std::size_t>(l, "kernel", name),
                                  detail::layer_field<std::size_t>(l, "stride", name)});
    } else if (type == "flatten") {
      layers.emplace_back(Flatten{name});
    } else if (type == "dense") {
      Dense d;
      d.name = name;
      d.in_features = detail::layer_field<std::size_t>(l, "in_features", name);
      d.out_features = detail::layer_field<std::size_t>(l, "out_features", name);
      d.weights = detail::take_tensor(ar, name, "weight", {d.out_features, d.in_features}, true);
      d.bias = detail::take_tensor(ar, name, "bias", {d.out_features}, false);
      layers.emplace_back(std::move(d));
    } else {
      throw FormatError("layer '" + name + "': unknown type '" + type + "'");
    }
  }
  return Network(input, std::move(layers), std::move(classes));
}

inline TensorArchive network_to_archive(const Network& net, const nlohmann::json& metadata = nlohmann::json::object()) {
  TensorArchive ar;
  auto& m = ar.manifest;
  m["format"] = "nlx-cnn";
  m["version"] = 1;
  m["input"] = {{"channels", net.input_shape().channels},
                {"height", net.input_shape().height},
                {"width", net.input_shape().width}};
  m["class_names"] = net.class_names();
  m["metadata"] = metadata;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    nlohmann::json l = {{"name", layer_name(layer)}, {"type", layer_type(layer)}};
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      l["in_channels"] = c->in_channels;
      l["out_channels"] = c->out_channels;
      l["kernel"] = {c->kernel_h, c->kernel_w};
      l["stride"] = c->stride;
      l["padding"] = c->padding;
      ar.tensors[c->name + ".weight"] = {{c->out_channels, c->in_channels, c->kernel_h, c->kernel_w}, c->weights};
      if (!c->bias.empty()) ar.tensors[c->name + ".bias"] = {{c->out_channels}, c->bias};
    } else if (const auto* p = std::get_if<MaxPool>(&layer)) {
      l["kernel"] = p->kernel;
      l["stride"] = p->stride;
    } else if (const auto* a = std::get_if<AvgPool>(&layer)) {
      l["kernel"] = a->kernel;
      l["stride"] = a->stride;
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      l["in_features"] = d->in_features;
      l["out_features"] = d->out_features;
      ar.tensors[d->name + ".weight"] = {{d->out_features, d->in_features}, d->weights};
      if (!d->bias.empty()) ar.tensors[d->name + ".bias"] = {{d->out_features}, d->bias};
    }
    layers.push_back(std::move(l));
  }
  m["layers"] = std::move(layers);
  return ar;
}

inline ModelBundle load_model(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  auto ar = decode_archive(bytes, path.string());
  auto meta = ar.manifest.value("metadata", nlohmann::json::object());
  return {network_from_archive(ar), std::move(meta), sha256_hex(std::span<const std::uint8_t>(bytes))};
}

inline Network load_network(const std::filesystem::path& path) { return load_model(path).network; }

inline void save_network(const Network& net, const std::filesystem::path& path,
                         const nlohmann::json& metadata = nlohmann::json::object()) {
  write_archive(network_to_archive(net, metadata), path);
}

}  // namespace nlx
