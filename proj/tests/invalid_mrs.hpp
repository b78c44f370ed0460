#pragma once

#include <string>
#include <utility>
#include <vector>

namespace testsupport {

// Hand-built invalid MR documents with the path their rejection must name.
inline const std::vector<std::pair<std::string, std::string>>& invalid_mr_documents() {
  static const std::vector<std::pair<std::string, std::string>> docs = {
      {R"({"neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": []}]})", "$.predicted_class"},
      {R"({"predicted_class": "x"})", "$.neurons"},
      {R"({"predicted_class": "x", "neurons": []})", "$.neurons"},
      {R"({"predicted_class": "", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": []}]})", "$.predicted_class"},
      {R"({"predicted_class": 3, "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": []}]})", "$.predicted_class"},
      {R"({"predicted_class": "x", "neurons": {}})", "$.neurons"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": []}], "extra": 1})", "$.extra"},
      {R"({"predicted_class": "x", "neurons": [{"filter_index": 1, "layer": "c", "positions": []}]})", "$.neurons[0].description"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "layer": "c", "positions": []}]})", "$.neurons[0].filter_index"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "positions": []}]})", "$.neurons[0].layer"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c"}]})", "$.neurons[0].positions"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": -1, "layer": "c", "positions": []}]})", "$.neurons[0].filter_index"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1.5, "layer": "c", "positions": []}]})", "$.neurons[0].filter_index"},
      {R"({"predicted_class": "x", "neurons": [{"description": "", "filter_index": 1, "layer": "c", "positions": []}]})", "$.neurons[0].description"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a b c d e f g h i j k", "filter_index": 1, "layer": "c", "positions": []}]})", "$.neurons[0].description"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": ["middle"]}]})", "$.neurons[0].positions[0]"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": [4]}]})", "$.neurons[0].positions[0]"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": []}, {"description": "b", "filter_index": 1, "layer": "c", "positions": []}]})", "$.neurons[1]"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": [], "score": 2}]})", "$.neurons[0].score"},
      {R"({"predicted_class": "x", "neurons": [{"description": "a", "filter_index": 1, "layer": "c", "positions": "top"}]})", "$.neurons[0].positions"},
      {R"([1, 2, 3])", "$"},
      {R"({"predicted_class": "x", "neurons": [)", "$"},
  };
  return docs;
}

}  // namespace testsupport
