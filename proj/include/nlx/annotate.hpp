#pragma once

// Neuron annotation: exemplar images per filter plus a pluggable provider
// that turns a neuron (and its exemplars) into a short phrase.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/dataset.hpp"
#include "nlx/error.hpp"
#include "nlx/http.hpp"
#include "nlx/network.hpp"
#include "nlx/parallel.hpp"

namespace nlx {

enum class ExemplarScore { MaxOverPositions, MeanOverPositions };

struct Exemplar {
  std::size_t dataset_index = 0;
  std::string image;  // path relative to the dataset root
  std::string label;
  double peak = 0.0;
};

struct ExemplarSet {
  NeuronId neuron;
  std::size_t m = 0;
  std::vector<Exemplar> exemplars;  // descending by peak, ties by dataset index
};

enum class DescriptionSource { Table, External, ExemplarFallback };

inline std::string to_string(DescriptionSource s) {
  switch (s) {
    case DescriptionSource::Table: return "table";
    case DescriptionSource::External: return "external";
    case DescriptionSource::ExemplarFallback: return "exemplar-fallback";
  }
  return "?";
}

inline constexpr std::size_t kMaxDescriptionWords = 10;

inline std::size_t word_count(const std::string& text) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

struct Description {
  std::string text;
  DescriptionSource source = DescriptionSource::Table;

  Description() = default;
  Description(std::string t, DescriptionSource s) : text(std::move(t)), source(s) { validate(); }

  void validate() const {
    if (word_count(text) == 0) throw AnnotationError("description is empty");
    if (word_count(text) > kMaxDescriptionWords)
      throw AnnotationError("description longer than " + std::to_string(kMaxDescriptionWords) + " words: '" + text + "'");
    if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos)
      throw AnnotationError("description contains a line break: '" + text + "'");
  }

  friend bool operator==(const Description&, const Description&) = default;
};

// Peak activation of every filter of `layer` for every dataset image:
// result[image][filter]. Images are processed in parallel.
inline std::vector<std::vector<double>> exemplar_scores(const Network& net, const DatasetIndex& dataset,
                                                        const std::string& layer,
                                                        ExemplarScore mode = ExemplarScore::MaxOverPositions,
                                                        std::size_t workers = 1) {
  if (dataset.empty()) throw InputError("exemplar search needs a non-empty dataset");
  const auto filters = net.conv(layer).out_channels;
  std::vector<std::vector<double>> scores(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    const auto fr = forward(net, dataset.load(i));
    auto& row = scores[i];
    row.resize(filters);
    for (std::size_t f = 0; f < filters; ++f) {
      const auto map = activation_map(net, fr.activations, {layer, f});
      double s = mode == ExemplarScore::MaxOverPositions ? map.values.front() : 0.0;
      for (double v : map.values) s = mode == ExemplarScore::MaxOverPositions ? std::max(s, v) : s + v;
      if (mode == ExemplarScore::MeanOverPositions) s /= static_cast<double>(map.values.size());
      row[f] = s;
    }
  });
  return scores;
}

// Top-m exemplars of one filter from a precomputed score table.
inline ExemplarSet select_exemplars(const DatasetIndex& dataset, const std::vector<std::vector<double>>& scores,
                                    const NeuronId& neuron, std::size_t m) {
  if (m == 0) throw InputError("exemplar count m must be positive");
  if (dataset.empty()) throw InputError("exemplar search needs a non-empty dataset");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto f = neuron.filter_index;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].at(f) > scores[b].at(f); });
  order.resize(std::min(m, order.size()));
  ExemplarSet set{neuron, m, {}};
  for (auto i : order)
    set.exemplars.push_back({i, dataset.entries()[i].path.generic_string(), dataset.entries()[i].label, scores[i][f]});
  return set;
}

inline ExemplarSet build_exemplars(const Network& net, const DatasetIndex& dataset, const NeuronId& neuron,
                                   std::size_t m, ExemplarScore mode = ExemplarScore::MaxOverPositions,
                                   std::size_t workers = 1) {
  net.validate_neuron(neuron);
  if (m == 0) throw InputError("exemplar count m must be positive");
  return select_exemplars(dataset, exemplar_scores(net, dataset, neuron.layer, mode, workers), neuron, m);
}

// Most frequent exemplar label; ties go to the label ranked highest.
inline std::string majority_label(const ExemplarSet& set) {
  if (set.exemplars.empty()) throw AnnotationError("no exemplars for neuron " + to_string(set.neuron));
  std::map<std::string, std::size_t> counts;
  for (const auto& e : set.exemplars) ++counts[e.label];
  std::string best;
  std::size_t best_count = 0;
  for (const auto& e : set.exemplars) {
    const auto c = counts[e.label];
    if (c > best_count) {
      best = e.label;
      best_count = c;
    }
  }
  return best;
}

inline Description fallback_description(const ExemplarSet& set) {
  return {"patterns like in class '" + majority_label(set) + "'", DescriptionSource::ExemplarFallback};
}

class AnnotationProvider {
 public:
  virtual ~AnnotationProvider() = default;
  virtual Description describe(const NeuronId& neuron, const ExemplarSet& exemplars) = 0;
};

// Phrases from the exemplar-label majority only.
class ExemplarFallbackProvider final : public AnnotationProvider {
 public:
  Description describe(const NeuronId&, const ExemplarSet& exemplars) override {
    return fallback_description(exemplars);
  }
};

// Static (layer, filter) -> phrase table, optionally falling back to the
// exemplar-label phrase on a miss.
class AnnotationTable final : public AnnotationProvider {
 public:
  AnnotationTable() = default;
  explicit AnnotationTable(std::map<NeuronId, std::string> rows, bool fallback = false)
      : rows_(std::move(rows)), fallback_(fallback) {}

  void set_fallback(bool enabled) { fallback_ = enabled; }
  bool fallback() const noexcept { return fallback_; }
  const std::map<NeuronId, std::string>& rows() const noexcept { return rows_; }

  std::optional<std::string> lookup(const NeuronId& id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) return std::nullopt;
    return it->second;
  }

  Description describe(const NeuronId& neuron, const ExemplarSet& exemplars) override {
    if (auto phrase = lookup(neuron)) return {*phrase, DescriptionSource::Table};
    if (!fallback_) throw AnnotationError("annotation table has no entry for neuron " + to_string(neuron));
    return fallback_description(exemplars);
  }

 private:
  std::map<NeuronId, std::string> rows_;
  bool fallback_ = false;
};

// Parses "layer<TAB>filter_index<TAB>phrase" lines. Blank lines and lines
// starting with '#' are skipped.
inline AnnotationTable parse_annotation_table(std::istream& in, const std::string& name = "<stream>") {
  std::map<NeuronId, std::string> rows;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    const auto where = name + ":" + std::to_string(lineno);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw FormatError(where + ": expected three tab-separated fields");
    const auto layer = line.substr(0, t1);
    const auto index_text = line.substr(t1 + 1, t2 - t1 - 1);
    const auto phrase = line.substr(t2 + 1);
    if (layer.empty()) throw FormatError(where + ": empty layer name");
    if (index_text.empty() || index_text.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError(where + ": filter index '" + index_text + "' is not a non-negative integer");
    if (word_count(phrase) == 0) throw FormatError(where + ": empty phrase");
    if (word_count(phrase) > kMaxDescriptionWords)
      throw FormatError(where + ": phrase longer than " + std::to_string(kMaxDescriptionWords) + " words");
    NeuronId id{layer, std::stoul(index_text)};
    if (!rows.emplace(id, phrase).second) throw FormatError(where + ": duplicate entry for " + to_string(id));
  }
  return AnnotationTable(std::move(rows));
}

inline AnnotationTable load_annotation_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotation table " + path.string());
  return parse_annotation_table(in, path.string());
}

inline void write_annotation_table(const AnnotationTable& table, std::ostream& out) {
  for (const auto& [id, phrase] : table.rows()) out << id.layer << '\t' << id.filter_index << '\t' << phrase << '\n';
}

// Remote captioning service. Request body:
//   {"layer": str, "filter_index": int,
//    "exemplars": [{"image": str, "label": str, "peak": float,
//                   "height": int, "width": int, "channels": int,
//                   "pixels": [float, ...]  (row-major H x W x C)}]}
// Reply: {"description": str}. Replies are cached per neuron.
class ExternalAnnotationProvider final : public AnnotationProvider {
 public:
  ExternalAnnotationProvider(HttpEndpoint endpoint, const DatasetIndex* dataset, HttpTransport transport = httplib_transport)
      : endpoint_(std::move(endpoint)), dataset_(dataset), transport_(std::move(transport)) {}

  Description describe(const NeuronId& neuron, const ExemplarSet& exemplars) override {
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(neuron); it != cache_.end()) return it->second;
    }
    nlohmann::json req = {{"layer", neuron.layer}, {"filter_index", neuron.filter_index}};
    auto& ex = req["exemplars"] = nlohmann::json::array();
    for (const auto& e : exemplars.exemplars) {
      nlohmann::json item = {{"image", e.image}, {"label", e.label}, {"peak", e.peak}};
      if (dataset_) {
        const auto img = dataset_->load(e.dataset_index);
        item["height"] = img.height();
        item["width"] = img.width();
        item["channels"] = img.channels();
        item["pixels"] = img.pixels();
      }
      ex.push_back(std::move(item));
    }
    const auto reply = post_json(endpoint_, req, transport_);
    if (!reply.is_object() || !reply.contains("description") || !reply["description"].is_string())
      throw ProviderError("annotation service reply lacks a 'description' string");
    Description d;
    try {
      d = Description(reply["description"].get<std::string>(), DescriptionSource::External);
    } catch (const AnnotationError& e) {
      throw ProviderError(std::string("annotation service returned an unusable phrase: ") + e.what());
    }
    std::lock_guard lock(mu_);
    // first writer wins so concurrent callers all see the same text
    return cache_.emplace(neuron, std::move(d)).first->second;
  }

  std::size_t cache_size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  HttpEndpoint endpoint_;
  const DatasetIndex* dataset_;
  HttpTransport transport_;
  mutable std::mutex mu_;
  std::map<NeuronId, Description> cache_;
};

inline Description describe(AnnotationProvider& provider, const NeuronId& neuron, const ExemplarSet& exemplars) {
  return provider.describe(neuron, exemplars);
}

}  // namespace nlx
