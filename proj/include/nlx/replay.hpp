#pragma once

// Replay files: recorded annotator choices, one JSON object per line.
//
//   {"image": "basset/0003.ppm",
//    "cover": [[x, y, w, h], ...], "highlight": [[x, y, w, h], ...],
//    "picks": [{"layer": "conv3", "filter_index": 7}, ...]}
//
// Blank lines and lines starting with '#' are ignored.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/dataset.hpp"
#include "nlx/error.hpp"
#include "nlx/interventions.hpp"
#include "nlx/network.hpp"

namespace nlx {

struct ReplayRecord {
  std::size_t record = 0;  // 1-based
  std::size_t line = 0;
  std::string image;
  std::vector<RectMask> cover;
  std::vector<RectMask> highlight;
  std::vector<NeuronId> picks;
};

namespace detail {

inline std::vector<RectMask> parse_rects(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError("'" + field + "' must be an array of [x, y, w, h]");
  std::vector<RectMask> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    if (!r.is_array() || r.size() != 4)
      throw ValidationError("'" + field + "[" + std::to_string(i) + "]' must be [x, y, w, h]");
    for (const auto& v : r)
      if (!v.is_number_unsigned())
        throw ValidationError("'" + field + "[" + std::to_string(i) + "]' must hold non-negative integers");
    out.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>(), r[2].get<std::size_t>(), r[3].get<std::size_t>()});
  }
  return out;
}

inline ReplayRecord parse_replay_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (k != "image" && k != "cover" && k != "highlight" && k != "picks")
      throw ValidationError("unknown field '" + k + "'");
  ReplayRecord r;
  if (!j.contains("image") || !j["image"].is_string() || j["image"].get<std::string>().empty())
    throw ValidationError("'image' must be a non-empty string");
  r.image = j["image"].get<std::string>();
  if (j.contains("cover")) r.cover = parse_rects(j["cover"], "cover");
  if (j.contains("highlight")) r.highlight = parse_rects(j["highlight"], "highlight");
  if (j.contains("picks")) {
    const auto& p = j["picks"];
    if (!p.is_array()) throw ValidationError("'picks' must be an array");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& e = p[i];
      const std::string at = "'picks[" + std::to_string(i) + "]'";
      if (!e.is_object() || e.size() != 2 || !e.contains("layer") || !e.contains("filter_index"))
        throw ValidationError(at + " must be {\"layer\", \"filter_index\"}");
      if (!e["layer"].is_string()) throw ValidationError(at + ".layer must be a string");
      if (!e["filter_index"].is_number_unsigned()) throw ValidationError(at + ".filter_index must be a non-negative integer");
      r.picks.push_back({e["layer"].get<std::string>(), e["filter_index"].get<std::size_t>()});
    }
  }
  return r;
}

}  // namespace detail

inline std::vector<ReplayRecord> parse_replay(std::istream& in) {
  std::vector<ReplayRecord> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      auto r = detail::parse_replay_line(line);
      r.record = out.size() + 1;
      r.line = lineno;
      out.push_back(std::move(r));
    } catch (const ValidationError& e) {
      throw ValidationError("record " + std::to_string(out.size() + 1) + " (line " + std::to_string(lineno) + "): " + e.what());
    }
  }
  if (out.empty()) throw ValidationError("replay file holds no records");
  return out;
}

inline std::vector<ReplayRecord> load_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open replay file " + path.string());
  try {
    return parse_replay(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string serialize_replay_record(const ReplayRecord& r) {
  auto rects = [](const std::vector<RectMask>& v) {
    auto a = nlohmann::json::array();
    for (const auto& m : v) a.push_back({m.x, m.y, m.w, m.h});
    return a;
  };
  nlohmann::json j;
  j["image"] = r.image;
  j["cover"] = rects(r.cover);
  j["highlight"] = rects(r.highlight);
  auto picks = nlohmann::json::array();
  for (const auto& p : r.picks) picks.push_back({{"layer", p.layer}, {"filter_index", p.filter_index}});
  j["picks"] = picks;
  return j.dump();
}

struct ReplayRequirements {
  bool cover = false;
  bool highlight = false;
  bool picks = false;
};

// Checks every record against the dataset and network. Errors name the record.
inline void validate_replay(const std::vector<ReplayRecord>& records, const DatasetIndex* dataset, const Network* net,
                            ReplayRequirements req = {}) {
  for (const auto& r : records) {
    auto fail = [&](const std::string& msg) {
      throw ValidationError("record " + std::to_string(r.record) + " (line " + std::to_string(r.line) + "): " + msg);
    };
    std::size_t h = 0, w = 0;
    if (dataset) {
      try {
        const auto idx = dataset->find(r.image);
        const auto img = dataset->load(idx);
        h = img.height();
        w = img.width();
      } catch (const Error& e) {
        fail(e.what());
      }
    }
    if (req.cover && r.cover.empty()) fail("no cover rectangles");
    if (req.highlight && r.highlight.empty()) fail("no highlight rectangles");
    if (req.picks && r.picks.empty()) fail("no neuron picks");
    if (r.picks.size() > 5) fail("more than five neuron picks");
    std::set<NeuronId> seen;
    for (const auto& p : r.picks)
      if (!seen.insert(p).second) fail("duplicate pick " + to_string(p));
    if (net) {
      for (const auto& p : r.picks) {
        try {
          net->validate_neuron(p);
        } catch (const Error& e) {
          fail(e.what());
        }
      }
    }
    if (dataset) {
      for (const auto* set : {&r.cover, &r.highlight}) {
        for (const auto& m : *set) {
          try {
            validate_rect(m, h, w);
          } catch (const Error& e) {
            fail(e.what());
          }
        }
      }
      const double frac = union_fraction(r.cover, h, w);
      if (frac > kMaxCoverFraction)
        fail("cover rectangles cover " + std::to_string(static_cast<int>(std::lround(frac * 100))) +
             "% of the image; at most 50% is allowed");
    }
  }
}

}  // namespace nlx
