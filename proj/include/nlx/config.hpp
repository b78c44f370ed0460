#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/error.hpp"

namespace nlx {

inline constexpr const char* kLlmTokenEnv = "NLX_LLM_API_KEY";
inline constexpr const char* kAnnotationTokenEnv = "NLX_ANNOTATION_API_KEY";

// Everything a run needs. Secrets come only from the environment.
struct RunConfig {
  std::string model;
  std::string dataset;  // class-per-directory root; exemplars + experiment cohorts
  std::string layer;    // empty = last conv layer
  std::size_t k = 10;
  std::size_t m = 15;
  std::string score_mode = "signed";  // signed | positive
  std::string provider = "table";     // table | external | fallback
  std::string annotation_table;
  bool annotation_fallback = false;
  std::string annotation_endpoint;
  std::string realizer = "template";  // template | llm
  std::string llm_endpoint;
  std::string llm_model;
  std::string prompt;
  double timeout_seconds = 30.0;
  int retries = 3;
  std::vector<double> noise = {0.05, 0.2};
  std::uint64_t seed = 20240601;
  std::size_t per_class = 50;  // stability cohort size per class
  std::string cache_dir;
  std::string output_dir = "out";
  std::size_t workers = 1;

  std::string llm_token() const {
    const char* v = std::getenv(kLlmTokenEnv);
    return v ? v : "";
  }
  std::string annotation_token() const {
    const char* v = std::getenv(kAnnotationTokenEnv);
    return v ? v : "";
  }
};

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  static const char* kKnown[] = {"model", "dataset", "layer", "k", "m", "score_mode", "provider", "annotation_table",
                                 "annotation_fallback", "annotation_endpoint", "realizer", "llm_endpoint",
                                 "llm_model", "prompt", "timeout_seconds", "retries", "noise", "seed", "per_class",
                                 "cache_dir", "output_dir", "workers"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : kKnown) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config field '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
      }
    }
  };
  get("model", c.model);
  get("dataset", c.dataset);
  get("layer", c.layer);
  get("k", c.k);
  get("m", c.m);
  get("score_mode", c.score_mode);
  get("provider", c.provider);
  get("annotation_table", c.annotation_table);
  get("annotation_fallback", c.annotation_fallback);
  get("annotation_endpoint", c.annotation_endpoint);
  get("realizer", c.realizer);
  get("llm_endpoint", c.llm_endpoint);
  get("llm_model", c.llm_model);
  get("prompt", c.prompt);
  get("timeout_seconds", c.timeout_seconds);
  get("retries", c.retries);
  get("noise", c.noise);
  get("seed", c.seed);
  get("per_class", c.per_class);
  get("cache_dir", c.cache_dir);
  get("output_dir", c.output_dir);
  get("workers", c.workers);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<RunConfig>();
}

struct ConfigNeeds {
  bool dataset = false;  // experiments need a cohort
};

// Rejects bad values, unresolved paths and missing credentials before any
// computation starts.
inline void validate_config(const RunConfig& c, ConfigNeeds needs = {}) {
  namespace fs = std::filesystem;
  auto need_file = [](const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
    if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " '" + p + "' does not exist");
  };
  if (c.k == 0) throw ConfigError("k must be at least 1");
  if (c.m == 0) throw ConfigError("m must be at least 1");
  if (c.workers == 0) throw ConfigError("workers must be at least 1");
  if (c.retries < 0) throw ConfigError("retries must be non-negative");
  if (c.timeout_seconds <= 0) throw ConfigError("timeout must be positive");
  if (c.score_mode != "signed" && c.score_mode != "positive") throw ConfigError("score_mode must be signed or positive");
  for (double i : c.noise)
    if (i < 0) throw ConfigError("noise intensities must be non-negative");
  need_file(c.model, "model");

  const bool uses_exemplars = c.provider != "table" || c.annotation_fallback;
  if (needs.dataset || uses_exemplars) {
    if (c.dataset.empty()) throw ConfigError("dataset root is not set");
    if (!fs::is_directory(c.dataset)) throw ConfigError("dataset root '" + c.dataset + "' is not a directory");
  }
  if (c.provider == "table") {
    need_file(c.annotation_table, "annotation table");
  } else if (c.provider == "external") {
    if (c.annotation_endpoint.empty()) throw ConfigError("external annotation provider needs an endpoint");
  } else if (c.provider != "fallback") {
    throw ConfigError("provider must be table, external or fallback");
  }
  if (c.realizer == "llm") {
    if (c.llm_endpoint.empty()) throw ConfigError("LLM realizer needs an endpoint");
    if (c.llm_model.empty()) throw ConfigError("LLM realizer needs a model id");
    if (c.llm_token().empty()) throw ConfigError(std::string("LLM realizer needs the ") + kLlmTokenEnv + " environment variable");
    need_file(c.prompt, "prompt template");
  } else if (c.realizer != "template") {
    throw ConfigError("realizer must be template or llm");
  }
  if (c.output_dir.empty()) throw ConfigError("output directory is not set");
}

}  // namespace nlx
