#pragma once

// Aggregation of the five yes/no review questions asked per
// (MR, explanation) pair.
//
// Answers file: TAB-separated, header line first:
//   id  hallucination  omission  fluency  spatial_compression  overall
// Fields take yes/no (case-insensitive). '#' lines and blank lines are skipped.

#include <array>
#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nlx/error.hpp"

namespace nlx {

inline constexpr std::array<const char*, 5> kReliabilityQuestions = {"hallucination", "omission", "fluency",
                                                                      "spatial_compression", "overall"};
inline constexpr std::array<const char*, 5> kReliabilityRowNames = {"hallucinations", "omissions", "fluency",
                                                                     "spatial compression", "overall"};

struct ReliabilityRecord {
  std::string id;
  std::array<bool, 5> yes{};
};

struct ReliabilityRow {
  std::string question;
  double yes_rate = 0.0;
  std::size_t yes = 0;
  std::size_t n = 0;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, '\t')) out.push_back(cur);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace detail

inline std::vector<ReliabilityRecord> parse_answers(std::istream& in, const std::string& name = "<stream>") {
  std::vector<ReliabilityRecord> out;
  std::string line;
  bool header = false;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto where = [&] { return name + " line " + std::to_string(lineno) + ": "; };
    auto fields = detail::split_tabs(line);
    if (!header) {
      if (fields.size() != 6 || fields[0] != "id") throw ValidationError(where() + "expected header 'id' + five question columns");
      for (std::size_t q = 0; q < 5; ++q)
        if (fields[q + 1] != kReliabilityQuestions[q])
          throw ValidationError(where() + "column " + std::to_string(q + 2) + " must be '" + kReliabilityQuestions[q] + "'");
      header = true;
      continue;
    }
    if (fields.size() != 6)
      throw ValidationError(where() + "expected 6 fields, found " + std::to_string(fields.size()));
    ReliabilityRecord r;
    r.id = fields[0];
    for (std::size_t q = 0; q < 5; ++q) {
      const auto v = detail::lower(fields[q + 1]);
      if (v == "yes") r.yes[q] = true;
      else if (v == "no") r.yes[q] = false;
      else
        throw ValidationError(where() + "field '" + kReliabilityQuestions[q] + "' must be yes or no, got '" +
                              fields[q + 1] + "'");
    }
    out.push_back(std::move(r));
  }
  if (!header) throw ValidationError(name + ": missing header line");
  if (out.empty()) throw ValidationError(name + ": no answer records");
  return out;
}

inline std::vector<ReliabilityRecord> load_answers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open answers file " + path.string());
  return parse_answers(in, path.string());
}

inline std::vector<ReliabilityRow> reliability_summary(const std::vector<ReliabilityRecord>& records) {
  if (records.empty()) throw InputError("reliability summary needs at least one record");
  std::vector<ReliabilityRow> rows;
  for (std::size_t q = 0; q < 5; ++q) {
    ReliabilityRow row{kReliabilityRowNames[q], 0.0, 0, records.size()};
    for (const auto& r : records) row.yes += r.yes[q] ? 1 : 0;
    row.yes_rate = static_cast<double>(row.yes) / static_cast<double>(row.n);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nlx
