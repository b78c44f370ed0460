#pragma once

// Command implementations behind the nlx tool.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nlx/annotate.hpp"
#include "nlx/config.hpp"
#include "nlx/container.hpp"
#include "nlx/dataset.hpp"
#include "nlx/digest.hpp"
#include "nlx/experiments.hpp"
#include "nlx/pipeline.hpp"
#include "nlx/reliability.hpp"
#include "nlx/replay.hpp"
#include "nlx/stability.hpp"
#include "nlx/verbalize.hpp"

namespace nlx {

namespace fs = std::filesystem;

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp" << std::this_thread::get_id() << '.' << std::chrono::steady_clock::now().time_since_epoch().count();
  const fs::path tmp = path.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << text;
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

// Everything loaded once per invocation.
class Session {
 public:
  explicit Session(RunConfig cfg, ConfigNeeds needs = {})
      : cfg_(validated(std::move(cfg), needs)), model_(load_model(cfg_.model)) {
    if (!cfg_.dataset.empty()) dataset_ = DatasetIndex::scan(cfg_.dataset);
    if (cfg_.provider == "table") {
      auto t = std::make_unique<AnnotationTable>(load_annotation_table(cfg_.annotation_table));
      t->set_fallback(cfg_.annotation_fallback);
      provider_id_ = "table:" + sha256_hex(read_text(cfg_.annotation_table)) + (cfg_.annotation_fallback ? "+fallback" : "");
      provider_ = std::move(t);
    } else if (cfg_.provider == "external") {
      HttpEndpoint ep{cfg_.annotation_endpoint, cfg_.annotation_token(), cfg_.timeout_seconds, cfg_.retries};
      provider_ = std::make_unique<ExternalAnnotationProvider>(ep, dataset_ ? &*dataset_ : nullptr);
      provider_id_ = "external:" + cfg_.annotation_endpoint;
    } else {
      provider_ = std::make_unique<ExemplarFallbackProvider>();
      provider_id_ = "fallback";
    }
    // exemplar-based descriptions depend on the exemplar pool
    if (cfg_.provider != "table" || cfg_.annotation_fallback) provider_id_ += ":" + dataset_digest();
    ExplainOptions opts;
    opts.layer = cfg_.layer;
    opts.k = cfg_.k;
    opts.m = cfg_.m;
    opts.score_mode = cfg_.score_mode == "positive" ? FilterScoreMode::PositiveOnly : FilterScoreMode::Signed;
    opts.workers = cfg_.workers;
    explainer_ = std::make_unique<Explainer>(model_.network, *provider_, dataset_ ? &*dataset_ : nullptr, opts);
    if (cfg_.realizer == "llm") {
      HttpEndpoint ep{cfg_.llm_endpoint, cfg_.llm_token(), cfg_.timeout_seconds, cfg_.retries};
      llm_ = std::make_unique<LlmClient>(ep, cfg_.llm_model, PromptTemplate::load(cfg_.prompt),
                                         cfg_.cache_dir.empty() ? fs::path{} : fs::path(cfg_.cache_dir) / "llm");
    }
  }

  const RunConfig& config() const noexcept { return cfg_; }
  const Network& network() const noexcept { return model_.network; }
  const ModelBundle& model() const noexcept { return model_; }
  const Explainer& explainer() const noexcept { return *explainer_; }
  const DatasetIndex& dataset() const {
    if (!dataset_) throw ConfigError("dataset root is not set");
    return *dataset_;
  }

  Explanation realize(const MeaningRepresentation& mr) {
    if (llm_) return run_stage("realize", [&] { return generate_llm(*llm_, mr); });
    return run_stage("realize", [&] { return generate_template(mr); });
  }

  // Identity of everything besides the image that shapes explain artifacts.
  std::string explain_key(const std::string& image_digest) const {
    std::ostringstream ss;
    ss << "model=" << model_.digest << "\nimage=" << image_digest << "\nk=" << cfg_.k
       << "\nlayer=" << explainer_->options().layer << "\nm=" << cfg_.m << "\nscore=" << cfg_.score_mode
       << "\nprovider=" << provider_id_ << "\nrealizer=" << cfg_.realizer;
    if (llm_) ss << "\nllm=" << cfg_.llm_model << "\nprompt=" << llm_->prompt().version << ':' << llm_->prompt().digest();
    return sha256_hex(ss.str());
  }

 private:
  static RunConfig validated(RunConfig c, ConfigNeeds needs) {
    validate_config(c, needs);
    return c;
  }

  std::string dataset_digest() const {
    if (!dataset_) return "none";
    std::string listing;
    for (const auto& e : dataset_->entries()) listing += e.path.generic_string() + "\n";
    return sha256_hex(listing);
  }

  RunConfig cfg_;
  ModelBundle model_;
  std::optional<DatasetIndex> dataset_;
  std::unique_ptr<AnnotationProvider> provider_;
  std::string provider_id_;
  std::unique_ptr<Explainer> explainer_;
  std::unique_ptr<LlmClient> llm_;
};

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

inline constexpr const char* kExplainArtifacts[] = {"mr.json", "explanation.txt", "explanation.json", "activations.json"};

struct ExplainResult {
  fs::path output_dir;
  bool cache_hit = false;
  MeaningRepresentation mr;
  std::string text;
};

inline nlohmann::json activation_dump(const ExplainTrace& t, const std::string& layer) {
  nlohmann::json neurons = nlohmann::json::array();
  for (std::size_t r = 0; r < t.top.size(); ++r) {
    const auto& id = t.top[r];
    const auto& map = t.maps[r];
    const auto bmap = binarize(map);
    double score = 0.0;
    for (const auto& s : t.scores)
      if (s.neuron == id) score = s.score;
    nlohmann::json values = nlohmann::json::array(), bits = nlohmann::json::array();
    for (std::size_t y = 0; y < map.height; ++y) {
      nlohmann::json row = nlohmann::json::array();
      std::string brow;
      for (std::size_t x = 0; x < map.width; ++x) {
        row.push_back(map.values[y * map.width + x]);
        brow += bmap.at(y, x) ? '1' : '0';
      }
      values.push_back(std::move(row));
      bits.push_back(brow);
    }
    nlohmann::json positions = nlohmann::json::array();
    for (auto p : t.mr.neurons[r].positions) positions.push_back(to_string(p));
    neurons.push_back({{"rank", r + 1},
                       {"filter_index", id.filter_index},
                       {"relevance", score},
                       {"description", t.descriptions[r].text},
                       {"description_source", to_string(t.descriptions[r].source)},
                       {"height", map.height},
                       {"width", map.width},
                       {"activation", values},
                       {"binary", bits},
                       {"cells", grid_cells(bmap).cells()},
                       {"positions", positions}});
  }
  return {{"layer", layer},
          {"predicted_class", t.forward.prediction.predicted_class},
          {"probability", t.forward.prediction.probabilities[t.forward.prediction.predicted_index]},
          {"neurons", neurons}};
}

inline ExplainResult cmd_explain(Session& s, const fs::path& image_path, bool dump_relevance = false) {
  const auto& cfg = s.config();
  const Image img = run_stage("load-image", [&] { return load_ppm(image_path); });
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  const auto key = s.explain_key(image_digest(img));
  const fs::path cache = cfg.cache_dir.empty() ? fs::path{} : fs::path(cfg.cache_dir) / "explain" / key;

  ExplainResult res;
  res.output_dir = out;
  if (!cache.empty() && fs::is_directory(cache) && !dump_relevance) {
    bool complete = true;
    for (const char* f : kExplainArtifacts) complete = complete && fs::is_regular_file(cache / f);
    if (complete) {
      for (const char* f : kExplainArtifacts) write_text_atomic(out / f, read_text(cache / f));
      res.cache_hit = true;
      res.mr = parse_mr(read_text(out / "mr.json"));
      res.text = read_text(out / "explanation.txt");
      return res;
    }
  }

  const auto t = s.explainer().trace(img);
  const auto ex = s.realize(t.mr);
  std::vector<std::pair<std::string, std::string>> files = {
      {"mr.json", serialize_mr(t.mr)},
      {"explanation.txt", ex.text},
      {"explanation.json", nlohmann::json{{"text", ex.text},
                                          {"source", to_string(ex.source)},
                                          {"mr_digest", ex.mr_digest},
                                          {"model_id", ex.model_id}}
                               .dump(2) + "\n"},
      {"activations.json", activation_dump(t, s.explainer().options().layer).dump(2) + "\n"},
  };
  for (const auto& [name, text] : files) write_text_atomic(out / name, text);
  if (dump_relevance) write_archive(relevance_to_archive(t.relevance), out / "relevance.nlxa");

  if (!cache.empty()) {
    // staged next to the final entry, then renamed; a concurrent writer that
    // got there first wins and this copy is dropped
    fs::create_directories(cache.parent_path());
    std::ostringstream tag;
    tag << ".tmp" << std::this_thread::get_id() << '.' << std::chrono::steady_clock::now().time_since_epoch().count();
    const fs::path staging = cache.string() + tag.str();
    fs::create_directories(staging);
    for (const auto& [name, text] : files) write_text_atomic(staging / name, text);
    std::error_code ec;
    fs::rename(staging, cache, ec);
    if (ec) fs::remove_all(staging);
  }
  res.mr = t.mr;
  res.text = ex.text;
  return res;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct Report {
  std::string name;
  std::string table;    // TSV
  nlohmann::json json;  // structured form
  std::vector<std::pair<std::string, std::string>> extra_files;
};

inline std::vector<fs::path> write_report(const Report& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> out = {dir / (r.name + ".tsv"), dir / (r.name + ".json")};
  write_text_atomic(out[0], r.table);
  write_text_atomic(out[1], r.json.dump(2) + "\n");
  for (const auto& [name, text] : r.extra_files) {
    out.push_back(dir / name);
    write_text_atomic(out.back(), text);
  }
  return out;
}

inline Report tab2_report(const std::string& experiment, const std::string& method, const AggregateResult& a) {
  Report r;
  r.name = experiment;
  r.table = "experiment\tmethod\tcf\tdelta_p\tn\n" + experiment + "\t" + method + "\t" + fmt(a.cf_rate) + "\t" +
            fmt(a.mean_delta_p) + "\t" + std::to_string(a.n) + "\n";
  r.json = {{"experiment", experiment},
            {"rows", {{{"method", method}, {"cf", a.cf_rate}, {"delta_p", a.mean_delta_p}, {"n", a.n}}}}};
  return r;
}

inline Report tab3_report(const std::vector<StabilityReport>& rows, const std::string& name) {
  Report r;
  r.name = name;
  r.table = "setting\tbleu\tmeteor\tcf\tdelta_p\tn\n";
  r.json = {{"experiment", name}, {"rows", nlohmann::json::array()}};
  for (const auto& s : rows) {
    r.table += s.setting + "\t" + fmt(s.bleu, 2) + "\t" + fmt(s.meteor) + "\t" +
               (s.cf_rate ? fmt(*s.cf_rate) : "n/a") + "\t" + (s.mean_delta_p ? fmt(*s.mean_delta_p) : "n/a") + "\t" +
               std::to_string(s.n) + "\n";
    nlohmann::json row = {{"setting", s.setting}, {"bleu", s.bleu}, {"meteor", s.meteor}, {"n", s.n}};
    row["cf"] = s.cf_rate ? nlohmann::json(*s.cf_rate) : nlohmann::json("n/a");
    row["delta_p"] = s.mean_delta_p ? nlohmann::json(*s.mean_delta_p) : nlohmann::json("n/a");
    r.json["rows"].push_back(row);
  }
  return r;
}

inline Report masking_report(const MaskingReport& m) {
  Report r = tab2_report("masking", "ours", m.all_picks);
  std::string series = "masked_neurons\tcf\tdelta_p\tn\n";
  nlohmann::json js = nlohmann::json::array();
  for (std::size_t j = 0; j < m.series.size(); ++j) {
    const auto& a = m.series[j];
    series += std::to_string(j + 1) + "\t" + fmt(a.cf_rate) + "\t" + fmt(a.mean_delta_p) + "\t" + std::to_string(a.n) + "\n";
    js.push_back({{"masked_neurons", j + 1}, {"cf", a.cf_rate}, {"delta_p", a.mean_delta_p}, {"n", a.n}});
  }
  r.json["series"] = js;
  r.extra_files.push_back({"masking_series.tsv", series});
  return r;
}

inline Report divergence_report(const DivergenceReport& d, const std::vector<ReplayRecord>& records) {
  Report r;
  r.name = "divergence";
  r.table = "statistic\tvalue\tn\nmean\t" + fmt(d.mean) + "\t" + std::to_string(d.fractions.size()) + "\nmedian\t" +
            fmt(d.median) + "\t" + std::to_string(d.fractions.size()) + "\n";
  nlohmann::json per = nlohmann::json::array();
  std::string per_tsv = "record\timage\tfraction\n";
  for (std::size_t i = 0; i < d.fractions.size(); ++i) {
    per.push_back({{"record", records[i].record}, {"image", records[i].image}, {"fraction", d.fractions[i]}});
    per_tsv += std::to_string(records[i].record) + "\t" + records[i].image + "\t" + fmt(d.fractions[i]) + "\n";
  }
  r.json = {{"experiment", "divergence"}, {"mean", d.mean}, {"median", d.median}, {"n", d.fractions.size()}, {"records", per}};
  r.extra_files.push_back({"divergence_records.tsv", per_tsv});
  return r;
}

inline Report reliability_report(const std::vector<ReliabilityRow>& rows) {
  Report r;
  r.name = "reliability";
  r.table = "question\tyes_rate\tyes\tn\n";
  r.json = {{"rows", nlohmann::json::array()}};
  for (const auto& row : rows) {
    r.table += row.question + "\t" + fmt(row.yes_rate, 2) + "\t" + std::to_string(row.yes) + "\t" + std::to_string(row.n) + "\n";
    r.json["rows"].push_back({{"question", row.question}, {"yes_rate", row.yes_rate}, {"yes", row.yes}, {"n", row.n}});
  }
  return r;
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"covering", "highlighting", "masking", "divergence", "stability-intra",
                                                 "stability-inter"};
  return names;
}

inline ReplayRequirements replay_requirements(const std::string& which) {
  if (which == "covering" || which == "divergence") return {true, false, false};
  if (which == "highlighting") return {false, true, false};
  if (which == "masking") return {false, false, true};
  return {};
}

inline std::vector<Image> load_images(const DatasetIndex& ds, const std::vector<std::size_t>& idx) {
  std::vector<Image> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.load(i));
  return out;
}

inline std::vector<fs::path> cmd_experiment(Session& s, const std::string& which, const fs::path& replay_path = {}) {
  const auto& cfg = s.config();
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), which) == names.end()) throw ConfigError("unknown experiment '" + which + "'");
  const auto& ds = s.dataset();
  const fs::path out = cfg.output_dir;

  std::vector<ReplayRecord> records;
  const bool needs_replay = which == "covering" || which == "highlighting" || which == "masking" || which == "divergence";
  if (needs_replay) {
    if (replay_path.empty()) throw ConfigError("experiment '" + which + "' needs a replay file");
    records = load_replay(replay_path);
    validate_replay(records, &ds, &s.network(), replay_requirements(which));
  }

  if (which == "covering" || which == "highlighting") {
    const auto mode = which == "covering" ? RectMode::Cover : RectMode::Highlight;
    const auto rep = rect_experiment(s.network(), ds, records, mode, cfg.workers);
    auto r = tab2_report(which, "ours", rep.summary);
    std::string per = "record\timage\toriginal\tafter\tclass_flip\tdelta_p\n";
    for (const auto& o : rep.records)
      per += std::to_string(o.record) + "\t" + o.image + "\t" + o.original_class + "\t" + o.new_class + "\t" +
             (o.outcome.class_flip ? "1" : "0") + "\t" + fmt(o.outcome.delta_p, 6) + "\n";
    r.extra_files.push_back({which + "_records.tsv", per});
    return write_report(r, out);
  }
  if (which == "masking") return write_report(masking_report(masking_experiment(s.network(), ds, records, cfg.workers)), out);
  if (which == "divergence")
    return write_report(divergence_report(divergence_experiment(s.explainer(), ds, records, cfg.workers), records), out);

  if (cfg.realizer != "template") throw ConfigError("stability experiments require the template realizer");
  const auto images = load_images(ds, stratified_cohort(ds, cfg.per_class, cfg.seed));
  if (which == "stability-intra") {
    if (cfg.noise.empty()) throw ConfigError("no noise intensities configured");
    std::vector<StabilityReport> rows;
    const auto pipe = template_pipeline(s.explainer());
    for (std::size_t n = 0; n < cfg.noise.size(); ++n)
      rows.push_back(intra_set_stability(pipe, images, {cfg.noise[n], derive_seed(cfg.seed, 1000 + n)}, cfg.workers));
    return write_report(tab3_report(rows, "stability_intra"), out);
  }
  const auto ex = labeled_explanations(s.explainer(), images, cfg.workers);
  return write_report(tab3_report({inter_set_stability(ex, derive_seed(cfg.seed, 2000))}, "stability_inter"), out);
}

// ---------------------------------------------------------------------------
// replay generation (automated stand-in for recorded annotator choices)
// ---------------------------------------------------------------------------

inline std::size_t cmd_make_replay(Session& s, const fs::path& out_path, std::size_t per_class) {
  const auto& ds = s.dataset();
  const auto idx = stratified_cohort(ds, per_class, s.config().seed);
  std::vector<std::string> lines(idx.size());
  parallel_for(idx.size(), s.config().workers, [&](std::size_t i) {
    const auto img = ds.load(idx[i]);
    const auto mr = s.explainer().explain_mr(img);
    ReplayRecord r;
    r.image = ds.entries()[idx[i]].path.generic_string();
    r.cover = rects_from_mr(mr, img.height(), img.width());
    r.highlight = r.cover;
    for (std::size_t j = 0; j < mr.neurons.size() && j < 5; ++j) r.picks.push_back(mr.neurons[j].neuron);
    lines[i] = serialize_replay_record(r);
  });
  std::string text = "# image, cover/highlight rectangles [x, y, w, h], ordered neuron picks\n";
  for (const auto& l : lines) text += l + "\n";
  write_text_atomic(out_path, text);
  return lines.size();
}

// ---------------------------------------------------------------------------
// export-model
// ---------------------------------------------------------------------------

// Directory form: manifest.json (the archive manifest without offsets) plus
// one raw little-endian float32 file per tensor under tensors/.
inline void unpack_container(const fs::path& container, const fs::path& dir) {
  const auto ar = read_archive(container);
  network_from_archive(ar);
  fs::create_directories(dir / "tensors");
  nlohmann::json manifest = ar.manifest;
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& [name, t] : ar.tensors) {
    std::string bytes;
    bytes.reserve(t.values.size() * 4);
    for (float v : t.values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
    }
    write_text_atomic(dir / "tensors" / (name + ".f32"), bytes);
    listing.push_back({{"name", name}, {"shape", t.shape}, {"file", "tensors/" + name + ".f32"}});
  }
  manifest.erase("tensors");
  manifest["tensor_files"] = listing;
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline void pack_container(const fs::path& dir, const fs::path& container) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  if (!manifest.contains("tensor_files") || !manifest["tensor_files"].is_array())
    throw FormatError("manifest.json: missing 'tensor_files' list");
  TensorArchive ar;
  for (const auto& f : manifest["tensor_files"]) {
    NamedTensor t;
    const auto name = f.at("name").get<std::string>();
    t.shape = f.at("shape").get<std::vector<std::size_t>>();
    const auto bytes = read_text(dir / f.at("file").get<std::string>());
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    if (bytes.size() != count * 4)
      throw FormatError("tensor '" + name + "': file holds " + std::to_string(bytes.size()) + " bytes, shape needs " +
                        std::to_string(count * 4));
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
      std::memcpy(&t.values[i], &u, 4);
    }
    ar.tensors.emplace(name, std::move(t));
  }
  manifest.erase("tensor_files");
  ar.manifest = manifest;
  network_from_archive(ar);  // refuse to write a container that would not load
  write_archive(ar, container);
}

}  // namespace nlx
