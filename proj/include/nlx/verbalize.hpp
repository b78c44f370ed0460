#pragma once

// MR -> text. Two realizers: an external chat-completion LLM driven by the
// versioned prompt asset, and a deterministic template realizer that never
// adds or drops a description.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <thread>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlx/digest.hpp"
#include "nlx/error.hpp"
#include "nlx/http.hpp"
#include "nlx/meaning.hpp"

namespace nlx {

enum class ExplanationSource { Llm, Template };

inline std::string to_string(ExplanationSource s) { return s == ExplanationSource::Llm ? "llm" : "template"; }

struct Explanation {
  std::string text;
  ExplanationSource source = ExplanationSource::Template;
  std::string mr_digest;
  std::string model_id;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

// ---------------------------------------------------------------------------
// Prompt
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMrPlaceholder = "{{MR}}";

struct PromptTemplate {
  std::string version;  // asset file stem, e.g. "mr_to_text_v1"
  std::string text;     // contains kMrPlaceholder exactly once

  static PromptTemplate from_text(std::string version, std::string text) {
    const auto first = text.find(kMrPlaceholder);
    if (first == std::string::npos || text.find(kMrPlaceholder, first + 1) != std::string::npos)
      throw FormatError("prompt template '" + version + "' must contain the MR placeholder exactly once");
    return {std::move(version), std::move(text)};
  }

  static PromptTemplate load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(path.stem().string(), ss.str());
  }

  std::string digest() const { return sha256_hex(text); }
};

inline std::string build_prompt(const PromptTemplate& tmpl, const MeaningRepresentation& mr) {
  std::string out = tmpl.text;
  std::string doc = serialize_mr(mr);
  if (!doc.empty() && doc.back() == '\n') doc.pop_back();
  out.replace(out.find(kMrPlaceholder), kMrPlaceholder.size(), doc);
  return out;
}

// ---------------------------------------------------------------------------
// Template realizer
// ---------------------------------------------------------------------------

namespace detail {

inline std::string join_positions(const std::vector<Position>& ps) {
  std::string out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (i > 0) out += (i + 1 == ps.size()) ? " and " : ", ";
    out += to_string(ps[i]);
  }
  return out;
}

}  // namespace detail

// "The model classified this image as '<class>' because it detected
//  <d1> at the <p, p and p>; <d2>; ... ."
// Entries sharing a description are merged into one clause so each phrase is
// emitted exactly once.
inline Explanation generate_template(const MeaningRepresentation& mr) {
  validate_mr(mr);
  struct Clause {
    std::string description;
    std::vector<Position> positions;
  };
  std::vector<Clause> clauses;
  for (const auto& e : mr.neurons) {
    auto it = std::find_if(clauses.begin(), clauses.end(), [&](const Clause& c) { return c.description == e.description; });
    if (it == clauses.end()) {
      clauses.push_back({e.description, {}});
      it = std::prev(clauses.end());
    }
    for (auto p : e.positions)
      if (std::find(it->positions.begin(), it->positions.end(), p) == it->positions.end()) it->positions.push_back(p);
  }
  std::string text = "The model classified this image as '" + mr.predicted_class + "' because it detected ";
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) text += "; ";
    text += clauses[i].description;
    if (!clauses[i].positions.empty()) text += " at the " + detail::join_positions(clauses[i].positions);
  }
  text += ".";
  return {std::move(text), ExplanationSource::Template, mr_digest(mr), ""};
}

// ---------------------------------------------------------------------------
// LLM realizer
// ---------------------------------------------------------------------------

// Chat-completion client (OpenAI-compatible request shape) with a
// content-addressed response cache keyed by (model id, MR digest, prompt
// digest). Cache entries are written to a temp file and renamed into place.
class LlmClient {
 public:
  LlmClient(HttpEndpoint endpoint, std::string model_id, PromptTemplate prompt, std::filesystem::path cache_dir = {},
            HttpTransport transport = httplib_transport)
      : endpoint_(std::move(endpoint)),
        model_id_(std::move(model_id)),
        prompt_(std::move(prompt)),
        cache_dir_(std::move(cache_dir)),
        transport_(std::move(transport)) {
    if (model_id_.empty()) throw ConfigError("LLM model id must be set");
  }

  const std::string& model_id() const noexcept { return model_id_; }
  const PromptTemplate& prompt() const noexcept { return prompt_; }
  std::size_t network_calls() const noexcept { return calls_; }

  std::string cache_key(const std::string& digest) const {
    return sha256_hex(model_id_ + "\n" + digest + "\n" + prompt_.digest());
  }

  Explanation generate(const MeaningRepresentation& mr) {
    const auto digest = mr_digest(mr);
    const auto key = cache_key(digest);
    if (auto hit = read_cache(key, digest)) return *hit;

    const nlohmann::json req = {
        {"model", model_id_},
        {"temperature", 0},
        {"n", 1},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", build_prompt(prompt_, mr)}}})},
    };
    ++calls_;
    const auto reply = post_json(endpoint_, req, transport_);
    std::string text;
    try {
      text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw GenerationError(std::string("LLM reply has no completion text: ") + e.what());
    }
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw GenerationError("LLM returned an empty completion");
    Explanation ex{text, ExplanationSource::Llm, digest, model_id_};
    write_cache(key, ex);
    return ex;
  }

 private:
  std::optional<Explanation> read_cache(const std::string& key, const std::string& digest) {
    {
      std::lock_guard lock(mu_);
      if (auto it = memory_.find(key); it != memory_.end()) return it->second;
    }
    if (cache_dir_.empty()) return std::nullopt;
    std::ifstream in(cache_dir_ / (key + ".json"));
    if (!in) return std::nullopt;
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // torn or foreign file; regenerate
    }
    if (doc.value("mr_digest", "") != digest || doc.value("model_id", "") != model_id_) return std::nullopt;
    Explanation ex{doc.value("text", ""), ExplanationSource::Llm, digest, model_id_};
    if (ex.text.empty()) return std::nullopt;
    std::lock_guard lock(mu_);
    return memory_.emplace(key, ex).first->second;
  }

  void write_cache(const std::string& key, const Explanation& ex) {
    {
      std::lock_guard lock(mu_);
      memory_.emplace(key, ex);
    }
    if (cache_dir_.empty()) return;
    std::filesystem::create_directories(cache_dir_);
    const nlohmann::json doc = {{"model_id", ex.model_id}, {"mr_digest", ex.mr_digest}, {"text", ex.text},
                                {"prompt_version", prompt_.version}};
    const auto final_path = cache_dir_ / (key + ".json");
    const auto tmp = cache_dir_ / (key + ".json.tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    {
      std::ofstream out(tmp);
      out << doc.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, final_path);
  }

  HttpEndpoint endpoint_;
  std::string model_id_;
  PromptTemplate prompt_;
  std::filesystem::path cache_dir_;
  HttpTransport transport_;
  std::mutex mu_;
  std::map<std::string, Explanation> memory_;
  std::atomic<std::size_t> calls_{0};
};

inline Explanation generate_llm(LlmClient& client, const MeaningRepresentation& mr) { return client.generate(mr); }

}  // namespace nlx
