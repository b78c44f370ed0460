#pragma once

// The meaning representation (MR): predicted class plus, per selected neuron,
// its description and coarse positions. Serialized as canonical JSON (sorted
// keys, two-space indent, trailing LF).

#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/annotate.hpp"
#include "nlx/digest.hpp"
#include "nlx/error.hpp"
#include "nlx/network.hpp"
#include "nlx/spatial.hpp"

namespace nlx {

struct NeuronEntry {
  NeuronId neuron;
  std::string description;
  std::vector<Position> positions;

  friend bool operator==(const NeuronEntry&, const NeuronEntry&) = default;
};

struct MeaningRepresentation {
  std::string predicted_class;
  std::vector<NeuronEntry> neurons;  // descending relevance

  friend bool operator==(const MeaningRepresentation&, const MeaningRepresentation&) = default;
};

inline void validate_mr(const MeaningRepresentation& mr) {
  if (mr.predicted_class.empty()) throw ConstructionError("MR needs a predicted class");
  if (mr.neurons.empty()) throw ConstructionError("MR needs at least one neuron entry");
  std::set<NeuronId> seen;
  for (const auto& e : mr.neurons) {
    if (!seen.insert(e.neuron).second) throw ConstructionError("duplicate neuron " + to_string(e.neuron) + " in MR");
    try {
      Description(e.description, DescriptionSource::Table);
    } catch (const AnnotationError& err) {
      throw ConstructionError(std::string("invalid description in MR: ") + err.what());
    }
  }
}

// `entries` must already be in ranking order; they are kept verbatim
// (including empty position lists).
inline MeaningRepresentation build_mr(const Prediction& pred, std::vector<NeuronEntry> entries) {
  MeaningRepresentation mr{pred.predicted_class, std::move(entries)};
  validate_mr(mr);
  return mr;
}

inline nlohmann::json mr_to_json(const MeaningRepresentation& mr) {
  nlohmann::json neurons = nlohmann::json::array();
  for (const auto& e : mr.neurons) {
    nlohmann::json positions = nlohmann::json::array();
    for (auto p : e.positions) positions.push_back(to_string(p));
    neurons.push_back({{"description", e.description},
                       {"filter_index", e.neuron.filter_index},
                       {"layer", e.neuron.layer},
                       {"positions", std::move(positions)}});
  }
  return {{"predicted_class", mr.predicted_class}, {"neurons", std::move(neurons)}};
}

inline std::string serialize_mr(const MeaningRepresentation& mr) {
  validate_mr(mr);
  return mr_to_json(mr).dump(2, ' ', false) + "\n";
}

inline std::string mr_digest(const MeaningRepresentation& mr) { return sha256_hex(serialize_mr(mr)); }

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ParseError(path + "." + k + ": unknown field");
  }
  for (const char* key : keys)
    if (!obj.contains(key)) throw ParseError(path + "." + key + ": missing field");
}

}  // namespace detail

inline MeaningRepresentation mr_from_json(const nlohmann::json& doc) {
  detail::require_keys(doc, "$", {"predicted_class", "neurons"});
  MeaningRepresentation mr;
  if (!doc["predicted_class"].is_string() || doc["predicted_class"].get<std::string>().empty())
    throw ParseError("$.predicted_class: expected a non-empty string");
  mr.predicted_class = doc["predicted_class"].get<std::string>();
  const auto& neurons = doc["neurons"];
  if (!neurons.is_array() || neurons.empty()) throw ParseError("$.neurons: expected a non-empty array");
  std::set<NeuronId> seen;
  for (std::size_t i = 0; i < neurons.size(); ++i) {
    const auto path = "$.neurons[" + std::to_string(i) + "]";
    const auto& n = neurons[i];
    detail::require_keys(n, path, {"description", "filter_index", "layer", "positions"});
    NeuronEntry e;
    if (!n["description"].is_string()) throw ParseError(path + ".description: expected a string");
    e.description = n["description"].get<std::string>();
    try {
      Description(e.description, DescriptionSource::Table);
    } catch (const AnnotationError& err) {
      throw ParseError(path + ".description: " + err.what());
    }
    if (!n["filter_index"].is_number_unsigned()) throw ParseError(path + ".filter_index: expected a non-negative integer");
    if (!n["layer"].is_string() || n["layer"].get<std::string>().empty())
      throw ParseError(path + ".layer: expected a non-empty string");
    e.neuron = {n["layer"].get<std::string>(), n["filter_index"].get<std::size_t>()};
    if (!seen.insert(e.neuron).second) throw ParseError(path + ": duplicate neuron " + to_string(e.neuron));
    const auto& pos = n["positions"];
    if (!pos.is_array()) throw ParseError(path + ".positions: expected an array");
    for (std::size_t j = 0; j < pos.size(); ++j) {
      const auto ppath = path + ".positions[" + std::to_string(j) + "]";
      if (!pos[j].is_string()) throw ParseError(ppath + ": expected a string");
      const auto p = parse_position(pos[j].get<std::string>());
      if (!p) throw ParseError(ppath + ": '" + pos[j].get<std::string>() + "' is not a known position label");
      e.positions.push_back(*p);
    }
    mr.neurons.push_back(std::move(e));
  }
  return mr;
}

inline MeaningRepresentation parse_mr(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("$: not valid JSON: ") + e.what());
  }
  return mr_from_json(doc);
}

}  // namespace nlx
