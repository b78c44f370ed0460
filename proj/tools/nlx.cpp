#include <functional>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "nlx/commands.hpp"
#include "nlx/synthetic.hpp"

namespace {

using nlx::RunConfig;

// Binds every RunConfig field to a flag; flags given on the command line
// override the config file.
class ConfigFlags {
 public:
  void attach(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON run configuration")->check(CLI::ExistingFile);
    bind(app, "--model", &RunConfig::model, "model container");
    bind(app, "--dataset", &RunConfig::dataset, "dataset root (one directory per class)");
    bind(app, "--layer", &RunConfig::layer, "target conv layer (default: last)");
    bind(app, "-k,--k", &RunConfig::k, "neurons per explanation");
    bind(app, "-m,--m", &RunConfig::m, "exemplars per neuron");
    bind(app, "--score-mode", &RunConfig::score_mode, "signed | positive");
    bind(app, "--provider", &RunConfig::provider, "table | external | fallback");
    bind(app, "--annotations", &RunConfig::annotation_table, "annotation table (TSV)");
    bind_flag(app, "--annotation-fallback", &RunConfig::annotation_fallback, "fall back to exemplar labels on table misses");
    bind(app, "--annotation-endpoint", &RunConfig::annotation_endpoint, "external annotation service URL");
    bind(app, "--realizer", &RunConfig::realizer, "template | llm");
    bind(app, "--llm-endpoint", &RunConfig::llm_endpoint, "chat completions URL");
    bind(app, "--llm-model", &RunConfig::llm_model, "LLM model id");
    bind(app, "--prompt", &RunConfig::prompt, "prompt template file");
    bind(app, "--timeout", &RunConfig::timeout_seconds, "HTTP timeout in seconds");
    bind(app, "--retries", &RunConfig::retries, "HTTP retries");
    bind(app, "--noise", &RunConfig::noise, "noise intensities");
    bind(app, "--seed", &RunConfig::seed, "base seed");
    bind(app, "--per-class", &RunConfig::per_class, "cohort images per class");
    bind(app, "--cache-dir", &RunConfig::cache_dir, "cache directory");
    bind(app, "-o,--out", &RunConfig::output_dir, "output directory");
    bind(app, "-j,--workers", &RunConfig::workers, "worker threads");
  }

  RunConfig resolve() const {
    RunConfig c = config_path_.empty() ? RunConfig{} : nlx::load_config(config_path_);
    for (const auto& apply : appliers_) apply(c);
    return c;
  }

 private:
  template <typename T>
  void bind(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& help) {
    auto* opt = app->add_option(name, flags_.*field, help);
    appliers_.push_back([this, opt, field](RunConfig& c) {
      if (opt->count() > 0) c.*field = flags_.*field;
    });
  }
  void bind_flag(CLI::App* app, const std::string& name, bool RunConfig::*field, const std::string& help) {
    auto* opt = app->add_flag(name, flags_.*field, help);
    appliers_.push_back([this, opt, field](RunConfig& c) {
      if (opt->count() > 0) c.*field = flags_.*field;
    });
  }

  std::string config_path_;
  RunConfig flags_;
  std::vector<std::function<void(RunConfig&)>> appliers_;
};

void print_paths(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nlx: natural-language explanations for CNN classifiers"};
  app.require_subcommand(1);

  // explain
  auto* explain = app.add_subcommand("explain", "explain one image: MR, text and activation grids");
  ConfigFlags explain_cfg;
  explain_cfg.attach(explain);
  std::string image;
  bool dump_relevance = false;
  explain->add_option("image", image, "PPM image")->required();
  explain->add_flag("--dump-relevance", dump_relevance, "also write relevance.nlxa");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run an experiment over a cohort");
  ConfigFlags experiment_cfg;
  experiment_cfg.attach(experiment);
  std::string which, replay;
  experiment->add_option("which", which, "experiment name")->required()->check(CLI::IsMember(nlx::experiment_names()));
  experiment->add_option("--replay", replay, "replay file (covering, highlighting, masking, divergence)");

  // reliability-report
  auto* reliability = app.add_subcommand("reliability-report", "aggregate yes/no review answers");
  std::string answers, reliability_out = "out";
  reliability->add_option("answers", answers, "answers TSV")->required();
  reliability->add_option("-o,--out", reliability_out, "output directory");

  // validate-replay
  auto* validate = app.add_subcommand("validate-replay", "check a replay file");
  std::string validate_path, validate_model, validate_dataset;
  std::string validate_for;
  validate->add_option("replay", validate_path, "replay file")->required();
  validate->add_option("--model", validate_model, "check picks against this model");
  validate->add_option("--dataset", validate_dataset, "check images and rectangles against this dataset");
  validate->add_option("--for", validate_for, "require the fields of this experiment")
      ->check(CLI::IsMember(nlx::experiment_names()));

  // export-model
  auto* exporter = app.add_subcommand("export-model", "pack a tensor directory into a container, or unpack one");
  std::string export_from, export_to;
  bool unpack = false;
  exporter->add_option("source", export_from, "tensor directory (or container with --unpack)")->required();
  exporter->add_option("dest", export_to, "container path (or directory with --unpack)")->required();
  exporter->add_flag("--unpack", unpack, "container -> directory");

  // make-dataset
  auto* mkdata = app.add_subcommand("make-dataset", "write a synthetic stratified dataset");
  std::string data_out;
  std::size_t data_per_class = 20, data_classes = 10;
  std::uint64_t data_seed = 1;
  mkdata->add_option("--out", data_out)->required();
  mkdata->add_option("--per-class", data_per_class);
  mkdata->add_option("--classes", data_classes)->check(CLI::Range(2, 10));
  mkdata->add_option("--seed", data_seed);

  // make-replay
  auto* mkreplay = app.add_subcommand("make-replay", "derive a replay file from the pipeline's own MRs");
  ConfigFlags mkreplay_cfg;
  mkreplay_cfg.attach(mkreplay);
  std::string replay_out;
  mkreplay->add_option("replay", replay_out, "replay file to write")->required();

  // draft-annotations
  auto* draft = app.add_subcommand("draft-annotations", "draft an annotation table from exemplar majority labels");
  ConfigFlags draft_cfg;
  draft_cfg.attach(draft);
  std::string draft_out;
  draft->add_option("table", draft_out, "table to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*explain) {
      nlx::Session s(explain_cfg.resolve());
      const auto r = nlx::cmd_explain(s, image, dump_relevance);
      std::cout << r.text << '\n';
      std::cerr << (r.cache_hit ? "cache hit; " : "") << "artifacts in " << r.output_dir.string() << '\n';
    } else if (*experiment) {
      nlx::Session s(experiment_cfg.resolve(), {true});
      print_paths(nlx::cmd_experiment(s, which, replay));
    } else if (*reliability) {
      const auto rows = nlx::reliability_summary(nlx::load_answers(answers));
      const auto report = nlx::reliability_report(rows);
      std::cout << report.table;
      print_paths(nlx::write_report(report, reliability_out));
    } else if (*validate) {
      const auto records = nlx::load_replay(validate_path);
      std::optional<nlx::Network> net;
      std::optional<nlx::DatasetIndex> ds;
      if (!validate_model.empty()) net = nlx::load_network(validate_model);
      if (!validate_dataset.empty()) ds = nlx::DatasetIndex::scan(validate_dataset);
      nlx::validate_replay(records, ds ? &*ds : nullptr, net ? &*net : nullptr,
                           validate_for.empty() ? nlx::ReplayRequirements{} : nlx::replay_requirements(validate_for));
      std::cout << validate_path << ": " << records.size() << " records ok\n";
    } else if (*exporter) {
      if (unpack) nlx::unpack_container(export_from, export_to);
      else nlx::pack_container(export_from, export_to);
      std::cout << export_to << '\n';
    } else if (*mkdata) {
      const auto idx = nlx::write_synthetic_dataset(data_out, data_classes, data_per_class, data_seed);
      std::cout << idx.size() << " images in " << data_out << '\n';
    } else if (*mkreplay) {
      auto cfg = mkreplay_cfg.resolve();
      nlx::Session s(cfg, {true});
      std::cout << nlx::cmd_make_replay(s, replay_out, cfg.per_class) << " records in " << replay_out << '\n';
    } else if (*draft) {
      auto cfg = draft_cfg.resolve();
      cfg.provider = "fallback";
      nlx::Session s(cfg, {true});
      const auto layer = s.explainer().options().layer;
      std::map<std::string, std::size_t> used;
      std::map<nlx::NeuronId, std::string> rows;
      for (const auto& id : nlx::list_neurons(s.network(), layer)) {
        const auto label = nlx::majority_label(s.explainer().exemplars(id));
        const auto& info = nlx::synthetic::classes()[nlx::synthetic::class_index(label)];
        rows[id] = info.motifs[used[label]++ % info.motifs.size()];
      }
      std::ofstream out(draft_out);
      out << "# layer\tfilter_index\tphrase\n";
      nlx::write_annotation_table(nlx::AnnotationTable(rows), out);
      std::cout << rows.size() << " rows in " << draft_out << '\n';
    }
  } catch (const nlx::Error& e) {
    std::cerr << "nlx: " << e.kind() << " error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "nlx: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
