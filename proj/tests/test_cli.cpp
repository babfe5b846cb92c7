#include <gtest/gtest.h>

#include <json.hpp>

#include "cli_runner.hpp"
#include "fixtures.hpp"
#include "table_fixture.hpp"
#include "xvd/annotation_io.hpp"
#include "xvd/distill.hpp"
#include "xvd/tagseq.hpp"

namespace xvd {
namespace {

namespace fs = std::filesystem;
using testing::slurp;
using testing::spit;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("xvd-cli-" + std::to_string(::getpid()) + "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  testing::CliResult run(const std::vector<std::string>& args) { return testing::run_cli(XVD_CLI_PATH, args, dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::string detections_jsonl(const std::vector<eval::DetectionRecord>& records) {
  std::string out;
  for (const auto& r : records)
    out += nlohmann::json{{"model", r.model},
                          {"video_id", r.video_id},
                          {"source", r.source},
                          {"truth", std::string(to_string(r.truth))},
                          {"prediction", std::string(to_string(r.prediction))}}
               .dump() +
           "\n";
  return out;
}

TEST_F(Cli, VersionAndUsage) {
  EXPECT_EQ(run({"--version"}).exit_code, 0);
  EXPECT_EQ(run({}).exit_code, 2);
  EXPECT_EQ(run({"train-toy"}).exit_code, 2);
  EXPECT_EQ(run({"score", "--detections", path("missing.jsonl")}).exit_code, 2);
  EXPECT_EQ(run({"bogus"}).exit_code, 2);
}

TEST_F(Cli, ValidateCleanAndDirty) {
  fs::create_directories(dir_ / "ann");
  spit(dir_ / "ann" / "a.json", serialize_annotation(testing::make_ai_annotation()));
  spit(dir_ / "ann" / "b.json", serialize_annotation(testing::make_real_annotation()));
  auto r = run({"validate", path("ann")});
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(r.out.empty()) << r.out;
  EXPECT_NE(r.err.find("manifest: "), std::string::npos);

  auto bad = testing::make_ai_annotation("bad");
  bad.defects[1].points[0].label = PointLabel::Negative;
  spit(dir_ / "ann" / "c.json", serialize_annotation(bad));
  r = run({"validate", path("ann"), "--out", path("violations.tsv")});
  EXPECT_EQ(r.exit_code, 1);
  const std::string report = slurp(dir_ / "violations.tsv");
  EXPECT_NE(report.find("c.json\tdefects[1]"), std::string::npos) << report;
  EXPECT_TRUE(fs::exists(path("violations.tsv.manifest.json")));

  spit(dir_ / "broken.json", "{");
  EXPECT_EQ(run({"validate", path("broken.json")}).exit_code, 1);
  EXPECT_EQ(run({"validate", path("nothing-here.json")}).exit_code, 3);
}

TEST_F(Cli, ParseStrictAndLenient) {
  const std::string good = serialize_trace(ground_truth_trace(testing::make_ai_annotation()));
  spit(dir_ / "good.txt", good);
  spit(dir_ / "loose.txt", "<think>hm</think>\n<evidence><defect_cate>Texture Jitter</defect_cate><timestamp>0.50s-1.00s"
                           "</timestamp><explanation>x</explanation><located_frame>3</located_frame>"
                           "<point_2d>(1, 2)</point_2d></evidence>\n<answer>AI generated video");

  auto r = run({"parse", "--strict", path("good.txt")});
  EXPECT_EQ(r.exit_code, 0) << r.err;
  const auto rec = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
  EXPECT_TRUE(rec.at("ok").get<bool>());
  EXPECT_EQ(rec.at("trace").at("answer"), "AI generated video");

  r = run({"parse", "--strict", path("loose.txt")});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("loose.txt"), std::string::npos) << r.err;

  r = run({"parse", "--lenient", path("loose.txt"), "--out", path("parsed.jsonl")});
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "parsed.jsonl")).at("ok").get<bool>());

  EXPECT_EQ(run({"parse", "--strict", "--lenient", path("good.txt")}).exit_code, 2);
}

TEST_F(Cli, ScoreReproducesTableRow) {
  auto records = testing::table_rows("model-a", testing::kRowA);
  const auto b = testing::table_rows("model-b", testing::kRowB);
  records.insert(records.end(), b.begin(), b.end());
  spit(dir_ / "det.jsonl", detections_jsonl(records));
  std::string judged = "model,video_id,cue_index,valid\n";
  for (int i = 0; i < 150; ++i) judged += "model-a,v" + std::to_string(i / 2) + "," + std::to_string(i % 2) + "," + (i < 82 ? "1" : "0") + "\n";
  spit(dir_ / "judged.csv", judged);

  auto r = run({"score", "--detections", path("det.jsonl"), "--judged", path("judged.csv"), "--out", path("report.txt"),
                "--json", path("report.json")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string text = slurp(dir_ / "report.txt");
  EXPECT_NE(text.find("model-a | 80.0 86.7 46.7 80.0 93.3 73.3 | 76.7 | 54.7"), std::string::npos) << text;
  EXPECT_NE(text.find("model-b | 60.0 80.0 53.3 66.7 100.0 80.0 | 73.3 | n/a"), std::string::npos) << text;
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "report.json")).is_object());

  const auto manifest = nlohmann::json::parse(slurp(dir_ / "report.txt.manifest.json"));
  EXPECT_EQ(manifest.at("command"), "score");
  EXPECT_EQ(manifest.at("inputs").size(), 2u);
  EXPECT_EQ(manifest.at("outputs").size(), 2u);
}

TEST_F(Cli, TrainToyIsReproducible) {
  const std::vector<std::string> args = {"train-toy", "--steps", "40", "--seed", "7", "--train-size", "60",
                                         "--heldout-size", "30", "--curve", path("curve.csv"), "--params", path("model.bin")};
  auto r = run(args);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string curve = slurp(dir_ / "curve.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 42);
  const std::string first = slurp(dir_ / "curve.csv.manifest.json");
  const auto m = nlohmann::json::parse(first);
  EXPECT_EQ(m.at("seed"), 7);
  EXPECT_EQ(m.at("outputs").size(), 2u);
  EXPECT_EQ(m.at("outputs")[0].at("sha256").get<std::string>().size(), 64u);

  r = run(args);
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(slurp(dir_ / "curve.csv.manifest.json"), first);

  EXPECT_EQ(run({"train-toy", "--seed", "1", "--alpha", "0", "--beta", "0"}).exit_code, 2);
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  spit(dir_ / "run.ini", "[train-toy]\nsteps=5\nseed=3\ntrain-size=20\nheldout-size=10\n");
  auto r = run({"--config", path("run.ini"), "train-toy", "--curve", path("c.csv")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::string curve = slurp(dir_ / "c.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 7);
  r = run({"--config", path("run.ini"), "train-toy", "--steps", "2", "--curve", path("c.csv")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  curve = slurp(dir_ / "c.csv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 4);
}

TEST_F(Cli, StatsChunkFilterAndDistill) {
  fs::create_directories(dir_ / "ann");
  spit(dir_ / "ann" / "a.json", serialize_annotation(testing::make_ai_annotation()));
  spit(dir_ / "ann" / "b.json", serialize_annotation(testing::make_real_annotation()));

  auto r = run({"stats", path("ann")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("GenA\t1"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Real\t1"), std::string::npos);

  spit(dir_ / "dur.tsv", "clip-1\t65\nclip-2\t4\n");
  spit(dir_ / "sim.csv", "0.3,0.1\n0.22,0\n0.219,0.1\n-0.5,0.9\n");
  r = run({"chunk-filter", "--durations", path("dur.tsv"), "--similarity", path("sim.csv"), "--out", path("kept.tsv")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string kept = slurp(dir_ / "kept.tsv");
  EXPECT_NE(kept.find("clip-1\t0"), std::string::npos) << kept;
  EXPECT_EQ(std::count(kept.begin(), kept.end(), '\n') - (kept.rfind("video_id", 0) == 0 ? 1 : 0), 3);

  spit(dir_ / "short.csv", "0.3\n");
  EXPECT_NE(run({"chunk-filter", "--durations", path("dur.tsv"), "--similarity", path("short.csv")}).exit_code, 0);

  r = run({"distill-prep", path("ann"), "--out-dir", path("distill")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string sft = slurp(dir_ / "distill" / "sft.jsonl");
  EXPECT_EQ(std::count(sft.begin(), sft.end(), '\n'), 2);
  const std::string requests = slurp(dir_ / "distill" / "requests.jsonl");
  EXPECT_EQ(std::count(requests.begin(), requests.end(), '\n'), 2);
}

TEST_F(Cli, PromptPipelineCommands) {
  // 12 embeddings in three tight groups of four, 5 dims.
  std::string csv;
  for (int g = 0; g < 3; ++g)
    for (int i = 0; i < 4; ++i) {
      for (int d = 0; d < 5; ++d) csv += (d ? "," : "") + std::to_string((d == g ? 10.0 : 0.0) + 0.01 * i * (d + 1));
      csv += "\n";
    }
  spit(dir_ / "emb.csv", csv);
  auto r = run({"cluster", "--embeddings", path("emb.csv"), "--k", "3", "--top-m", "2", "--seed", "1", "--out",
                path("assign.tsv"), "--report", path("top.json")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto top = nlohmann::json::parse(slurp(dir_ / "top.json"));
  EXPECT_NEAR(top.at("coverage").get<double>(), 8.0 / 12.0, 1e-12);

  std::string prompts = "id\ttext\torigin\tcluster_id\n";
  const char* texts[] = {"red dog runs fast", "dog chases dog toy", "blue car runs fast", "blue car parks",
                         "green tree grows tall", "tall tree sways"};
  for (int i = 0; i < 6; ++i)
    prompts += "p" + std::to_string(i) + "\t" + texts[i] + "\tsampled\t" + std::to_string(i / 2) + "\n";
  spit(dir_ / "prompts.tsv", prompts);
  r = run({"keywords", "--prompts", path("prompts.tsv"), "--per-cluster", "2", "--min-keywords", "1", "--out", path("kw.json")});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string kw = slurp(dir_ / "kw.json");
  EXPECT_NE(kw.find("\"chases\""), std::string::npos) << kw;

  std::string cands = "id\ttext\torigin\tcluster_id\tlabels\n";
  for (int i = 0; i < 30; ++i)
    cands += "c" + std::to_string(i) + "\ta person walks a dog\t" + (i % 2 ? "generated" : "sampled") + "\t" +
             std::to_string(i % 3) + "\t\n";
  spit(dir_ / "cands.tsv", cands);
  const std::vector<std::string> sample = {"sample-prompts", "--candidates", path("cands.tsv"), "--n", "10", "--trials",
                                           "200", "--seed", "5", "--out", path("sel.tsv"), "--report", path("dev.json")};
  r = run(sample);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string sel = slurp(dir_ / "sel.tsv");
  const std::string manifest = slurp(dir_ / "sel.tsv.manifest.json");
  ASSERT_EQ(run(sample).exit_code, 0);
  EXPECT_EQ(slurp(dir_ / "sel.tsv"), sel);
  EXPECT_EQ(slurp(dir_ / "sel.tsv.manifest.json"), manifest);
  EXPECT_NE(sel.find("people"), std::string::npos) << sel;

  r = run({"sample-prompts", "--candidates", path("cands.tsv"), "--n", "100", "--seed", "5"});
  EXPECT_EQ(r.exit_code, 2);
}

}  // namespace
}  // namespace xvd
