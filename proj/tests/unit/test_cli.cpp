#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "nlx/commands.hpp"
#include "support.hpp"

using namespace nlx;
namespace fs = std::filesystem;
using testsupport::TempDir;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

RunConfig table_config(const fs::path& out) {
  RunConfig c;
  c.model = testsupport::reference_model().string();
  c.annotation_table = testsupport::reference_table().string();
  c.output_dir = out.string();
  return c;
}

// 10 classes x 4 images, shared by the tests below.
const fs::path& small_dataset() {
  static TempDir dir("cli-ds");
  static const bool made = [] {
    write_synthetic_dataset(dir.path(), 10, 4, 77);
    return true;
  }();
  (void)made;
  return dir.path();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + NLX_CLI_PATH + "' " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Config, Defaults) {
  RunConfig c;
  EXPECT_EQ(c.k, 10u);
  EXPECT_EQ(c.m, 15u);
  EXPECT_EQ(c.provider, "table");
  EXPECT_EQ(c.realizer, "template");
  EXPECT_EQ(c.noise, (std::vector<double>{0.05, 0.2}));
}

TEST(Config, RejectsBadValuesAndPaths) {
  TempDir d("cfg");
  auto c = table_config(d.path());
  EXPECT_NO_THROW(validate_config(c));
  auto bad = c;
  bad.model = (d / "missing.nlxc").string();
  EXPECT_THROW(validate_config(bad), ConfigError);
  bad = c;
  bad.annotation_table = "";
  EXPECT_THROW(validate_config(bad), ConfigError);
  bad = c;
  bad.k = 0;
  EXPECT_THROW(validate_config(bad), ConfigError);
  bad = c;
  bad.noise = {-0.1};
  EXPECT_THROW(validate_config(bad), ConfigError);
  bad = c;
  bad.provider = "oracle";
  EXPECT_THROW(validate_config(bad), ConfigError);
  bad = c;
  bad.provider = "external";
  EXPECT_THROW(validate_config(bad), ConfigError);
  // experiments need a dataset
  EXPECT_THROW(validate_config(c, {true}), ConfigError);
  bad = c;
  bad.annotation_fallback = true;
  EXPECT_THROW(validate_config(bad), ConfigError);
}

TEST(Config, LlmRealizerNeedsTokenFromEnvironment) {
  TempDir d("cfg-llm");
  auto c = table_config(d.path());
  c.realizer = "llm";
  c.llm_endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.llm_model = "m";
  c.prompt = (testsupport::source_dir() / "assets" / "prompts" / "mr_to_text_v1.txt").string();
  ::unsetenv(kLlmTokenEnv);
  try {
    validate_config(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(kLlmTokenEnv), std::string::npos);
  }
  ::setenv(kLlmTokenEnv, "secret", 1);
  EXPECT_NO_THROW(validate_config(c));
  ::unsetenv(kLlmTokenEnv);
}

TEST(Config, JsonRejectsUnknownFields) {
  TempDir d("cfg-json");
  write_file(d / "a.json", R"({"k": 3, "m": 7, "layer": "conv2", "noise": [0.1]})");
  const auto c = load_config(d / "a.json");
  EXPECT_EQ(c.k, 3u);
  EXPECT_EQ(c.m, 7u);
  EXPECT_EQ(c.layer, "conv2");
  EXPECT_EQ(c.noise, (std::vector<double>{0.1}));
  write_file(d / "b.json", R"({"k": 3, "api_key": "x"})");
  EXPECT_THROW(load_config(d / "b.json"), ConfigError);
  write_file(d / "c.json", R"({"k": "three"})");
  EXPECT_THROW(load_config(d / "c.json"), ConfigError);
  write_file(d / "d.json", "{");
  EXPECT_THROW(load_config(d / "d.json"), ConfigError);
}

TEST(Replay, ParseErrorsNameTheRecord) {
  std::istringstream ok("# comment\n\n{\"image\": \"a/1.ppm\", \"cover\": [[0,0,2,2]], \"picks\": [{\"layer\": \"conv3\", \"filter_index\": 4}]}\n"
                        "{\"image\": \"b/2.ppm\"}\n");
  const auto recs = parse_replay(ok);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].line, 3u);
  EXPECT_EQ(recs[0].cover[0], (RectMask{0, 0, 2, 2}));
  EXPECT_EQ(recs[0].picks[0], (NeuronId{"conv3", 4}));
  EXPECT_EQ(serialize_replay_record(recs[0]).find('\n'), std::string::npos);

  const std::vector<std::string> bad = {
      "{\"image\": \"a\", \"cover\": [[0,0,2]]}", "{\"image\": \"\"}", "{\"img\": \"a\"}", "{\"image\": \"a\", \"picks\": [{\"layer\": 1, \"filter_index\": 0}]}",
      "[1]", "{\"image\": \"a\", \"cover\": [[0,-1,2,2]]}"};
  for (const auto& b : bad) {
    std::istringstream in("{\"image\": \"x\"}\n" + b + "\n");
    try {
      parse_replay(in);
      ADD_FAILURE() << b;
    } catch (const ValidationError& e) {
      EXPECT_EQ(std::string(e.what()).rfind("record 2 (line 2)", 0), 0u) << e.what();
    }
  }
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(parse_replay(empty), ValidationError);
}

TEST(Replay, ValidationAgainstDatasetAndModel) {
  const auto ds = DatasetIndex::scan(small_dataset());
  const auto& net = testsupport::reference().network;
  auto check = [&](const std::string& line, ReplayRequirements req = {}) {
    std::istringstream in(
        "{\"image\": \"basset/0000.ppm\", \"cover\": [[0,0,4,4]], \"picks\": [{\"layer\": \"conv3\", \"filter_index\": 0}]}\n" +
        line + "\n");
    validate_replay(parse_replay(in), &ds, &net, req);
  };
  EXPECT_NO_THROW(check("{\"image\": \"prison/0001.ppm\", \"cover\": [[0,0,36,18]]}"));
  const std::vector<std::pair<std::string, ReplayRequirements>> bad = {
      {"{\"image\": \"prison/0099.ppm\"}", {}},
      {"{\"image\": \"prison/0001.ppm\", \"cover\": [[0,0,36,19]]}", {}},
      {"{\"image\": \"prison/0001.ppm\", \"highlight\": [[30,0,7,1]]}", {}},
      {"{\"image\": \"prison/0001.ppm\"}", {true, false, false}},
      {"{\"image\": \"prison/0001.ppm\"}", {false, false, true}},
      {"{\"image\": \"prison/0001.ppm\", \"picks\": [{\"layer\": \"conv3\", \"filter_index\": 999}]}", {}},
      {"{\"image\": \"prison/0001.ppm\", \"picks\": [{\"layer\": \"conv3\", \"filter_index\": 1}, {\"layer\": \"conv3\", \"filter_index\": 1}]}", {}},
  };
  for (const auto& [line, req] : bad) {
    try {
      check(line, req);
      ADD_FAILURE() << line;
    } catch (const ValidationError& e) {
      EXPECT_EQ(std::string(e.what()).rfind("record 2", 0), 0u) << e.what();
    }
  }
  try {
    check("{\"image\": \"prison/0001.ppm\", \"cover\": [[0,0,36,36]]}");
    ADD_FAILURE() << "full cover accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("100%"), std::string::npos) << e.what();
  }
}

TEST(Reliability, RatesAndErrors) {
  std::string text = "id\thallucination\tomission\tfluency\tspatial_compression\toverall\n";
  for (int i = 0; i < 50; ++i) text += "r" + std::to_string(i) + "\t" + (i < 4 ? "YES" : "no") + "\tno\tyes\tno\tyes\n";
  std::istringstream in(text);
  const auto rows = reliability_summary(parse_answers(in));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].question, "hallucinations");
  EXPECT_DOUBLE_EQ(rows[0].yes_rate, 0.08);
  EXPECT_EQ(rows[0].yes, 4u);
  EXPECT_DOUBLE_EQ(rows[1].yes_rate, 0.0);
  EXPECT_DOUBLE_EQ(rows[2].yes_rate, 1.0);
  EXPECT_EQ(rows[3].question, "spatial compression");
  const auto report = reliability_report(rows);
  EXPECT_NE(report.table.find("hallucinations\t0.08\t4\t50"), std::string::npos);
  EXPECT_NE(report.table.find("omissions\t0.00\t0\t50"), std::string::npos);

  std::istringstream bad("id\thallucination\tomission\tfluency\tspatial_compression\toverall\nx\tyes\tno\tmaybe\tno\tno\n");
  try {
    parse_answers(bad, "answers.tsv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("answers.tsv line 2:", 0), 0u) << e.what();
  }
  std::istringstream short_line("id\thallucination\tomission\tfluency\tspatial_compression\toverall\n# c\nx\tyes\n");
  EXPECT_THROW(parse_answers(short_line), ValidationError);
  std::istringstream no_header("x\tyes\tno\tno\tno\tno\n");
  EXPECT_THROW(parse_answers(no_header), ValidationError);
}

TEST(Explain, GoldenMrAndCacheIdentity) {
  TempDir d("explain");
  for (const std::string name : {"lakeside_0003", "wall_clock_0007"}) {
    auto c = table_config(d / ("out-" + name));
    c.cache_dir = (d / "cache").string();
    Session s(c);
    const auto img = testsupport::fixtures() / "images" / (name + ".ppm");
    const auto first = cmd_explain(s, img);
    EXPECT_FALSE(first.cache_hit);
    const auto golden = read_text(testsupport::fixtures() / "golden" / (name + ".mr.json"));
    EXPECT_EQ(read_text(fs::path(c.output_dir) / "mr.json"), golden);
    std::map<std::string, std::string> before;
    for (const char* f : kExplainArtifacts) before[f] = read_text(fs::path(c.output_dir) / f);

    auto c2 = c;
    c2.output_dir = (d / ("again-" + name)).string();
    Session s2(c2);
    const auto second = cmd_explain(s2, img);
    EXPECT_TRUE(second.cache_hit);
    for (const char* f : kExplainArtifacts) EXPECT_EQ(read_text(fs::path(c2.output_dir) / f), before[f]) << f;
    EXPECT_EQ(second.mr, first.mr);
    EXPECT_EQ(second.text, first.text);
  }
}

TEST(Explain, CacheKeyTracksParameters) {
  TempDir d("explain-key");
  auto c = table_config(d / "o");
  c.cache_dir = (d / "cache").string();
  const auto img = testsupport::fixtures() / "images" / "lakeside_0003.ppm";
  Session a(c);
  cmd_explain(a, img);
  c.k = 1;
  Session b(c);
  const auto r = cmd_explain(b, img);
  EXPECT_FALSE(r.cache_hit);
  ASSERT_EQ(r.mr.neurons.size(), 1u);
  const auto acts = nlohmann::json::parse(read_text(d / "o" / "activations.json"));
  EXPECT_EQ(acts["neurons"].size(), 1u);
}

TEST(Explain, ArtifactsAreConsistent) {
  TempDir d("explain-art");
  auto c = table_config(d / "o");
  Session s(c);
  const auto r = cmd_explain(s, testsupport::fixtures() / "images" / "lakeside_0003.ppm", true);
  EXPECT_TRUE(fs::exists(d / "o" / "relevance.nlxa"));
  const auto ex = nlohmann::json::parse(read_text(d / "o" / "explanation.json"));
  EXPECT_EQ(ex["text"], r.text);
  EXPECT_EQ(ex["source"], "template");
  EXPECT_EQ(ex["mr_digest"], mr_digest(r.mr));
  EXPECT_EQ(parse_mr(read_text(d / "o" / "mr.json")), r.mr);
  const auto acts = nlohmann::json::parse(read_text(d / "o" / "activations.json"));
  ASSERT_EQ(acts["neurons"].size(), r.mr.neurons.size());
  EXPECT_EQ(acts["neurons"][0]["filter_index"], r.mr.neurons[0].neuron.filter_index);
}

TEST(Explain, StageErrorsNameTheStage) {
  TempDir d("explain-err");
  write_file(d / "broken.ppm", "P6\n36 36\n255\nshort");
  Session s(table_config(d / "o"));
  try {
    cmd_explain(s, d / "broken.ppm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'load-image'"), std::string::npos) << e.what();
  }
  // an image of the wrong size fails in the forward pass
  save_ppm(Image(20, 20, 3, 0.5f), d / "small.ppm");
  try {
    cmd_explain(s, d / "small.ppm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'forward'"), std::string::npos) << e.what();
  }
  // a table without the selected neurons and no fallback fails in describe
  write_file(d / "empty.tsv", "# layer\tfilter_index\tphrase\nconv1\t0\tsomething\n");
  auto c = table_config(d / "o");
  c.annotation_table = (d / "empty.tsv").string();
  Session t(c);
  try {
    cmd_explain(t, testsupport::fixtures() / "images" / "lakeside_0003.ppm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'describe'"), std::string::npos) << e.what();
  }
}

TEST(Experiments, WriteTheirReports) {
  TempDir d("exp");
  auto c = table_config(d / "o");
  c.dataset = small_dataset().string();
  c.per_class = 2;
  c.workers = 2;
  Session s(c, {true});
  EXPECT_EQ(cmd_make_replay(s, d / "replay.jsonl", 2), 20u);
  const auto records = load_replay(d / "replay.jsonl");
  EXPECT_NO_THROW(validate_replay(records, &s.dataset(), &s.network(), {true, true, true}));

  for (const auto& which : experiment_names()) {
    const auto files = cmd_experiment(s, which, d / "replay.jsonl");
    ASSERT_GE(files.size(), 2u) << which;
    for (const auto& f : files) EXPECT_TRUE(fs::is_regular_file(f)) << f;
  }
  EXPECT_NE(read_text(d / "o" / "covering.tsv").find("experiment\tmethod\tcf\tdelta_p\tn\ncovering\tours\t"),
            std::string::npos);
  EXPECT_EQ(read_text(d / "o" / "masking_series.tsv").rfind("masked_neurons\tcf\tdelta_p\tn\n1\t", 0), 0u);
  const auto intra = read_text(d / "o" / "stability_intra.tsv");
  EXPECT_NE(intra.find("intra-set (5% noise)"), std::string::npos);
  EXPECT_NE(intra.find("intra-set (20% noise)"), std::string::npos);
  EXPECT_NE(read_text(d / "o" / "stability_inter.tsv").find("inter-set\t"), std::string::npos);
  EXPECT_NE(read_text(d / "o" / "stability_inter.tsv").find("\tn/a\tn/a\t20"), std::string::npos);
  const auto div = nlohmann::json::parse(read_text(d / "o" / "divergence.json"));
  EXPECT_TRUE(div.contains("mean") && div.contains("median"));

  EXPECT_THROW(cmd_experiment(s, "covering"), ConfigError);
  EXPECT_THROW(cmd_experiment(s, "nonsense"), ConfigError);
}

TEST(Cli, ExitCodes) {
  TempDir d("cli");
  const auto model = quoted(testsupport::reference_model());
  const auto table = quoted(testsupport::reference_table());
  const auto img = quoted(testsupport::fixtures() / "images" / "lakeside_0003.ppm");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_NE(run_cli("frobnicate"), 0);
  EXPECT_EQ(run_cli("explain " + img + " --model " + model + " --annotations " + table + " -o " + quoted(d / "o")), 0);
  EXPECT_TRUE(fs::exists(d / "o" / "mr.json"));
  EXPECT_EQ(run_cli("explain " + img + " --model " + quoted(d / "nope.nlxc") + " --annotations " + table), 2);
  EXPECT_EQ(run_cli("explain " + img + " --model " + model + " --annotations " + table +
                    " --realizer llm --llm-endpoint http://127.0.0.1:1 --llm-model m --prompt " +
                    quoted(testsupport::source_dir() / "assets" / "prompts" / "mr_to_text_v1.txt") + " -o " + quoted(d / "o2")),
            2);
  EXPECT_FALSE(fs::exists(d / "o2" / "mr.json"));

  write_file(d / "answers.tsv", "id\thallucination\tomission\tfluency\tspatial_compression\toverall\na\tyes\tno\tno\tno\tno\n");
  EXPECT_EQ(run_cli("reliability-report " + quoted(d / "answers.tsv") + " -o " + quoted(d / "rel")), 0);
  EXPECT_TRUE(fs::exists(d / "rel" / "reliability.tsv"));
  write_file(d / "bad.tsv", "id\thallucination\n");
  EXPECT_EQ(run_cli("reliability-report " + quoted(d / "bad.tsv")), 2);

  write_file(d / "replay.jsonl", "{\"image\": \"basset/0000.ppm\", \"cover\": [[0,0,36,30]]}\n");
  EXPECT_EQ(run_cli("validate-replay " + quoted(d / "replay.jsonl")), 0);
  EXPECT_EQ(run_cli("validate-replay " + quoted(d / "replay.jsonl") + " --dataset " + quoted(small_dataset())), 2);

  EXPECT_EQ(run_cli("export-model " + model + " " + quoted(d / "unpacked") + " --unpack"), 0);
  EXPECT_EQ(run_cli("export-model " + quoted(d / "unpacked") + " " + quoted(d / "repacked.nlxc")), 0);
  EXPECT_EQ(read_text(d / "repacked.nlxc"), read_text(testsupport::reference_model()));
}
