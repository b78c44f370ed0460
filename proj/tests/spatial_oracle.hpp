#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Rules restated with plain string sets.
inline std::vector<std::string> positions(const std::set<int>& s) {
  if (s.empty()) return {};
  if (s.size() >= 7) return {"entire image"};
  const std::vector<std::pair<std::string, std::set<int>>> compounds = {
      {"entire top", {0, 1, 2}},           {"entire bottom", {6, 7, 8}},     {"entire left", {0, 3, 6}},
      {"entire right", {2, 5, 8}},         {"perimeter", {0, 1, 2, 3, 5, 6, 7, 8}},
      {"center cross", {1, 3, 4, 5, 7}},   {"upper half", {0, 1, 2, 3, 4, 5}}, {"lower half", {3, 4, 5, 6, 7, 8}},
      {"left half", {0, 1, 3, 4, 6, 7}},   {"right half", {1, 2, 4, 5, 7, 8}},
  };
  const std::vector<std::string> basics = {"top-left corner", "top",    "top-right corner",
                                           "left",            "center", "right",
                                           "bottom-left corner", "bottom", "bottom-right corner"};
  std::set<std::string> found;
  for (const auto& [name, cells] : compounds)
    if (std::includes(s.begin(), s.end(), cells.begin(), cells.end())) found.insert(name);
  const std::map<std::string, std::string> subsumed = {
      {"entire top", "upper half"}, {"entire bottom", "lower half"}, {"entire left", "left half"}, {"entire right", "right half"}};
  for (const auto& [entire, half] : subsumed)
    if (found.count(entire) && found.count(half)) found.erase(entire);
  std::vector<std::string> out;
  std::set<int> covered;
  for (const auto& [name, cells] : compounds)
    if (found.count(name)) {
      out.push_back(name);
      covered.insert(cells.begin(), cells.end());
    }
  for (int c : s)
    if (!covered.count(c)) out.push_back(basics[c]);
  return out;
}

}  // namespace oracle
