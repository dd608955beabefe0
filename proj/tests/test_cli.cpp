#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "lrf/acoustics.hpp"
#include "lrf/architectures.hpp"

using namespace lrf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path work_dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / ("lrf_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Run run_lrf(const std::string& args) {
  const auto out = work_dir() / "stdout.txt";
  const std::string cmd = std::string(LRF_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                          (work_dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

json lrf_json(const std::string& args) {
  const auto r = run_lrf(args);
  EXPECT_EQ(r.code, 0) << args << "\n" << slurp(work_dir() / "stderr.txt");
  return json::parse(r.out);
}

std::string small_corpus_flags() { return "--classes 4 --train-utts 8 --dev-utts 2 --eval-utts 2 --frames 100"; }

// Corpus shared by the train/eval tests.
std::string corpus() {
  static const std::string dir = [] {
    const auto d = (work_dir() / "corpus").string();
    run_lrf("data synth --out " + d + " " + small_corpus_flags());
    return d;
  }();
  return dir;
}

}  // namespace

TEST(CliRf, StandardPreset) {
  const auto j = lrf_json("rf --arch standard");
  EXPECT_EQ(j["rf_general"], 41);
  EXPECT_EQ(j["rf_paper"], 41);
  EXPECT_EQ(j["structural_probe"], 41);
  EXPECT_EQ(j["gradient_probe"], 41);
  EXPECT_EQ(j["consistent"], true);
}

TEST(CliRf, HourglassCarriesClosedForms) {
  const auto j = lrf_json("rf --arch hgnet");
  EXPECT_EQ(j["encoder"]["exact"], 36);
  EXPECT_EQ(j["encoder"]["paper"], 17);
  EXPECT_EQ(j["stacked"]["paper"], 680);
  EXPECT_EQ(j["stacked"]["exact"], j["rf_general"]);
}

TEST(CliRf, SpecFileRoundTripAndErrors) {
  const auto spec = (work_dir() / "tdnn.json").string();
  const auto a = lrf_json("rf --arch tdnn --emit-spec " + spec);
  const auto b = lrf_json("rf " + spec);
  EXPECT_EQ(a["rf_general"], b["rf_general"]);
  std::ofstream(work_dir() / "bad.json") << "{\"family\": \"standard\", \"layers\": [";
  EXPECT_EQ(run_lrf("rf " + (work_dir() / "bad.json").string()).code, 2);
  EXPECT_EQ(run_lrf("rf --arch resnet").code, 2);
  EXPECT_EQ(run_lrf("rf --arch standard --spec " + spec).code, 2);
  EXPECT_EQ(run_lrf("frobnicate").code, 2);
  const auto d = lrf_json("rf --discrepancy");
  EXPECT_GE(d["discrepancies"].size(), 10u);
}

TEST(CliConfig, JsonConfigFile) {
  const auto cfg = work_dir() / "cfg.json";
  std::ofstream(cfg) << R"({"seed": 5, "data": {"synth": {"classes": 3, "train-utts": 2, "dev-utts": 1, "eval-utts": 1, "frames": 40}}})";
  const auto out = (work_dir() / "cfg_corpus").string();
  const auto j = lrf_json("--config " + cfg.string() + " data synth --out " + out);
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["K"], 3);
  EXPECT_EQ(j["utterances"], 4);
  std::ofstream(work_dir() / "cfg_bad.json") << R"({"sed": 5})";
  EXPECT_EQ(run_lrf("--config " + (work_dir() / "cfg_bad.json").string() + " rf --arch standard").code, 2);
}

TEST(CliMeasure, IdenticalFiles) {
  Waveform w;
  for (int i = 0; i < 4000; ++i) w.samples.push_back(0.1 * std::sin(0.05 * i) + 0.01 * std::cos(1.3 * i));
  const auto a = (work_dir() / "a.wav").string(), b = (work_dir() / "b.wav").string();
  write_wav(a, w);
  write_wav(b, w);
  const auto j = lrf_json("measure --ref " + a + " --deg " + b);
  EXPECT_EQ(j["snr_db"], "inf");
  EXPECT_EQ(j["is"], 0.0);
  EXPECT_EQ(j["cd"], 0.0);
  EXPECT_EQ(run_lrf("measure --ref " + a + " --deg " + (work_dir() / "nope.wav").string()).code, 2);
}

TEST(CliFeatures, ShapeAndCmvn) {
  Waveform w;
  for (int i = 0; i < 8000; ++i) w.samples.push_back(0.1 * std::sin(0.3 * i) * std::sin(0.001 * i));
  const auto wav = (work_dir() / "tone.wav").string();
  write_wav(wav, w);
  const auto out = (work_dir() / "feats.json").string();
  const auto j = lrf_json("features --wav " + wav + " --out " + out);
  EXPECT_EQ(j["frames"], 98);
  EXPECT_EQ(j["dims"], 40);
  const auto f = json::parse(slurp(out));
  EXPECT_EQ(f["cmvn"], true);
  EXPECT_EQ(f["data"].size(), 98u);
}

TEST(CliData, SynthIsByteDeterministic) {
  const auto a = (work_dir() / "syn_a").string(), b = (work_dir() / "syn_b").string();
  lrf_json("data synth --out " + a + " " + small_corpus_flags());
  lrf_json("data synth --out " + b + " " + small_corpus_flags());
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(b) / e.path().filename())) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 13u);
  const auto c = (work_dir() / "syn_c").string();
  lrf_json("--seed 2 data synth --out " + c + " " + small_corpus_flags());
  EXPECT_NE(slurp(fs::path(a) / "train0000.bin"), slurp(fs::path(c) / "train0000.bin"));
  EXPECT_EQ(run_lrf("data synth --out " + c + " --classes 30").code, 2);
}

TEST(CliData, ReverbSnrFallsWithT60) {
  const auto r3 = lrf_json("data reverb --in " + corpus() + " --out " + (work_dir() / "rev3").string() + " --t60 0.3");
  const auto r6 = lrf_json("data reverb --in " + corpus() + " --out " + (work_dir() / "rev6").string() + " --t60 0.6");
  EXPECT_LT(r6["mean_snr_db"].get<double>(), r3["mean_snr_db"].get<double>());
  EXPECT_EQ(run_lrf("data reverb --in " + corpus() + " --t60 5").code, 2);
}

TEST(CliTrain, DeterministicOutputsAndEval) {
  const std::string common = "train --arch standard --width 8 --classes 4 --epochs 2 --crop-frames 64 --corpus " + corpus();
  const auto d1 = (work_dir() / "run1").string(), d2 = (work_dir() / "run2").string();
  const auto a = lrf_json("--out-dir " + d1 + " " + common);
  lrf_json("--out-dir " + d2 + " " + common);
  for (const char* f : {"metrics.csv", "metrics.jsonl", "checkpoint.lrf"})
    EXPECT_EQ(slurp(fs::path(d1) / f), slurp(fs::path(d2) / f)) << f;
  const auto csv = slurp(fs::path(d1) / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,split,ce,acc,seconds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);

  const auto ev = lrf_json("--out-dir " + d1 + " eval --checkpoint " + d1 + "/checkpoint.lrf --corpus " + corpus() +
                           " --split dev");
  EXPECT_EQ(ev["acc"].get<double>(), a["best_dev_acc"].get<double>());
  EXPECT_EQ(json::parse(slurp(fs::path(d1) / "eval_dev.json")), ev);
  EXPECT_EQ(run_lrf("eval --checkpoint " + d1 + "/metrics.csv --corpus " + corpus()).code, 2);
}

TEST(CliTrain, OverfitSmokeRun) {
  const auto j = lrf_json("train --arch standard --classes 4 --overfit 100 --steps 200 --alpha 0.01 --corpus " + corpus());
  EXPECT_EQ(j["frames"], 100);
  EXPECT_LT(j["final_ce"].get<double>(), 0.05);
  EXPECT_GE(j["final_acc"].get<double>(), 0.99);
}

TEST(CliTrain, WrongFeatureDimensionOrClasses) {
  auto spec = build_standard(3, 2, 8, 4, 20);
  const auto path = (work_dir() / "dim20.json").string();
  std::ofstream(path) << serialize_spec(spec);
  EXPECT_EQ(run_lrf("train --spec " + path + " --epochs 1 --corpus " + corpus()).code, 2);
  EXPECT_EQ(run_lrf("train --arch standard --classes 8 --epochs 1 --corpus " + corpus()).code, 2);
  EXPECT_EQ(run_lrf("train --arch standard --classes 4 --epochs 1 --crop-frames 0 --corpus " + corpus()).code, 2);
}

TEST(CliGradCheck, PassAndFault) {
  const auto ok = lrf_json("gradcheck --arch recnet");
  EXPECT_EQ(ok["passed"], true);
  EXPECT_LT(ok["max_rel_error"].get<double>(), 1e-5);
  const auto bad = run_lrf("gradcheck --arch standard --fault conv7");
  EXPECT_EQ(bad.code, 3);
  EXPECT_EQ(json::parse(bad.out)["failing_layers"], json::array({"conv7"}));
}

TEST(CliExperiments, SweepAndCompareBookkeeping) {
  const std::string data = " --classes 4 --train-utts 8 --dev-utts 2 --eval-utts 2 --frames 100 --epochs 1 --crop-frames 64";
  const auto d = (work_dir() / "exp").string();
  const auto s = run_lrf("--out-dir " + d + " sweep --kernels 3,5 --seeds 1,2 --width 8 --clean" + data);
  ASSERT_EQ(s.code, 0);
  EXPECT_EQ(s.out, slurp(fs::path(d) / "sweep.csv"));
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 5);
  EXPECT_NE(s.out.find("5,clean,"), std::string::npos);
  EXPECT_NE(s.out.find(",2\n"), std::string::npos);
  const auto c = run_lrf("--out-dir " + d + " compare --archs tdnn,standard --seeds 1" + data);
  ASSERT_EQ(c.code, 0);
  EXPECT_EQ(c.out.substr(0, c.out.find('\n')), "arch,condition,mean_acc,std_acc,params");
  EXPECT_EQ(std::count(c.out.begin(), c.out.end(), '\n'), 5);
  EXPECT_NE(c.out.find("standard,reverb,"), std::string::npos);
  EXPECT_EQ(run_lrf("--out-dir " + d + " compare --budget 100 --archs standard" + data).code, 2);
  EXPECT_EQ(run_lrf("--out-dir " + d + " sweep --kernels 4" + data).code, 2);
}
