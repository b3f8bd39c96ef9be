#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = std::string("\"") + SDPM_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("sdpm_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run("synth --out \"" + (root_ / "data").string() + "\" --rows 200 --features 3 --seed 5", root_).code, 0);
    auto cfg = nlohmann::json::parse(slurp(root_ / "data" / "columns.json"));
    cfg["network"] = {{"hidden_layers", 2}, {"hidden_dim", 64}};
    cfg["training"] = {{"epochs", 5}, {"batch_size", 32}};
    std::ofstream(root_ / "small.json") << cfg.dump(2);
    const auto r = run("train --config \"" + (root_ / "small.json").string() + "\" --out \"" + model().string() + "\"", root_);
    ASSERT_EQ(r.code, 0) << r.output;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path model() { return root_ / "model"; }
  static fs::path ckpt() { return model() / "checkpoint.sdpm"; }
  static std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, DefaultConfigTrainsAndEvaluates) {
  const fs::path out = root_ / "default";
  const auto r = run("train --config " + q(root_ / "data" / "columns.json") + " --out " + q(out), root_);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "checkpoint.sdpm"));
  const auto report = nlohmann::json::parse(slurp(out / "train_report.json"));
  EXPECT_TRUE(report.contains("best_epoch"));
  EXPECT_TRUE(report.contains("grid_size"));
  EXPECT_TRUE(report.contains("train_event_rate"));
  const auto e = run("evaluate --checkpoint " + q(out / "checkpoint.sdpm") + " --input " + q(out / "test.csv") +
                         " --out " + q(root_ / "default_eval") + " --samples 64",
                     root_);
  ASSERT_EQ(e.code, 0) << e.output;
  const auto ev = nlohmann::json::parse(slurp(root_ / "default_eval" / "report.json"));
  for (const char* key : {"c_index", "integrated_auc", "ibs", "diagnostics"}) EXPECT_TRUE(ev.contains(key)) << key;
}

TEST_F(Cli, MalformedKeyIsValidationError) {
  std::ofstream(root_ / "bad.json") << R"({"training": {"epochz": 3}})";
  const auto r = run("train --config " + q(root_ / "bad.json") + " --out " + q(root_ / "bad"), root_);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("training.epochz"), std::string::npos) << r.output;
}

TEST_F(Cli, MissingRequiredFlagIsValidationError) {
  EXPECT_EQ(run("train", root_).code, 1);
  EXPECT_EQ(run("no-such-command", root_).code, 1);
}

TEST_F(Cli, SampleCountsAndRescaling) {
  const fs::path features = model() / "test.csv";
  const auto zero = run("sample --checkpoint " + q(ckpt()) + " --input " + q(features) + " --out " +
                            q(root_ / "s0.csv") + " --samples 0",
                        root_);
  EXPECT_EQ(zero.code, 1) << zero.output;
  const auto r = run("sample --checkpoint " + q(ckpt()) + " --input " + q(features) + " --out " +
                         q(root_ / "s4.csv") + " --samples 128 --inference-steps 4",
                     root_);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto text = slurp(root_ / "s4.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "subject_id,sample_id,t,delta");
  std::size_t subjects = 0;
  {
    const auto test = slurp(features);
    subjects = static_cast<std::size_t>(std::count(test.begin(), test.end(), '\n')) - 1;
  }
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 1 + 128 * subjects);
}

TEST_F(Cli, EvaluateIsDeterministic) {
  const std::string base = "evaluate --checkpoint " + q(ckpt()) + " --input " + q(model() / "test.csv") +
                           " --samples 100 --seed 3 --out ";
  ASSERT_EQ(run(base + q(root_ / "e1"), root_).code, 0);
  ASSERT_EQ(run(base + q(root_ / "e2") + " --threads 2", root_).code, 0);
  EXPECT_EQ(slurp(root_ / "e1" / "report.json"), slurp(root_ / "e2" / "report.json"));
  EXPECT_TRUE(fs::exists(root_ / "e1" / "timing.json"));
  EXPECT_TRUE(fs::exists(root_ / "e1" / "brier_series.csv"));
}

TEST_F(Cli, ClippingOptions) {
  const std::string base = "evaluate --checkpoint " + q(ckpt()) + " --input " + q(model() / "test.csv") +
                           " --samples 50 --seed 3 --out ";
  ASSERT_EQ(run(base + q(root_ / "c_off") + " --no-clip", root_).code, 0);
  ASSERT_EQ(run(base + q(root_ / "c_two") + " --clip-margin 2", root_).code, 0);
  const auto off = nlohmann::json::parse(slurp(root_ / "c_off" / "report.json"));
  const auto two = nlohmann::json::parse(slurp(root_ / "c_two" / "report.json"));
  EXPECT_TRUE(off["clip_margin"].is_null());
  EXPECT_EQ(two["clip_margin"].get<double>(), 2.0);
  EXPECT_EQ(run(base + q(root_ / "c_bad") + " --no-clip --clip-margin 2", root_).code, 1);
  EXPECT_EQ(run(base + q(root_ / "c_neg") + " --clip-margin -1", root_).code, 1);
}

TEST_F(Cli, SchemaMismatchIsRejected) {
  ASSERT_EQ(run("synth --out " + q(root_ / "other") + " --rows 50 --features 2 --seed 1", root_).code, 0);
  const auto r = run("evaluate --checkpoint " + q(ckpt()) + " --input " + q(root_ / "other" / "data.csv") +
                         " --out " + q(root_ / "mismatch"),
                     root_);
  EXPECT_EQ(r.code, 1) << r.output;
}

TEST_F(Cli, DescribePrintsCheckpointAndConfig) {
  const auto c = run("describe --checkpoint " + q(ckpt()), root_);
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(c.output.find("output.weight"), std::string::npos);
  const auto d = run("describe", root_);
  ASSERT_EQ(d.code, 0);
  EXPECT_TRUE(nlohmann::json::accept(d.output)) << d.output;
  const auto cfg = run("describe --config " + q(root_ / "small.json"), root_);
  ASSERT_EQ(cfg.code, 0);
  EXPECT_NE(cfg.output.find("\"hidden_dim\": 64"), std::string::npos);
}

TEST_F(Cli, CorruptCheckpointIsValidationError) {
  std::ofstream(root_ / "junk.sdpm") << "not a checkpoint";
  EXPECT_EQ(run("describe --checkpoint " + q(root_ / "junk.sdpm"), root_).code, 1);
}

TEST_F(Cli, UnwritableOutputIsRuntimeFailure) {
  std::ofstream(root_ / "blocker") << "file";
  const auto r = run("sample --checkpoint " + q(ckpt()) + " --input " + q(model() / "test.csv") + " --out " +
                         q(root_ / "blocker" / "x" / "s.csv") + " --samples 2",
                     root_);
  EXPECT_EQ(r.code, 2) << r.output;
}
