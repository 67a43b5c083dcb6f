#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ftc/checkpoint.hpp"
#include "ftc/digest.hpp"
#include "ftc/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const auto err = fs::temp_directory_path() / ("ftc_cli_err_" + std::to_string(::getpid()));
  const std::string cmd = std::string(FTC_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Result r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  fs::remove(err);
  return r;
}

// A small trained workspace shared by the tests; each test copies it.
class CliTest : public ::testing::Test {
 protected:
  static constexpr const char* kSmall =
      "--seed 3 --set simulate.pixels=12 --set simulate.years=4 --set train.epochs=3 --set run.threads=2";

  static void SetUpTestSuite() {
    base_ = fs::temp_directory_path() / ("ftc_cli_base_" + std::to_string(::getpid()));
    fs::remove_all(base_);
    for (const char* cmd : {"simulate", "train", "retrieve"})
      ASSERT_EQ(run(std::string(cmd) + " " + kSmall + " --out " + base_.string()).code, 0) << cmd;
  }
  static void TearDownTestSuite() { fs::remove_all(base_); }

  void SetUp() override {
    work_ = fs::temp_directory_path() /
            ("ftc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
             std::to_string(::getpid()));
    fs::remove_all(work_);
    fs::copy(base_, work_, fs::copy_options::recursive);
  }
  void TearDown() override { fs::remove_all(work_); }

  Result cmd(const std::string& name, const std::string& extra = "") {
    return run(name + " " + kSmall + " --out " + work_.string() + " " + extra);
  }

  static nlohmann::json error_json(const Result& r) {
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
    return nlohmann::json::parse(r.err);
  }

  static inline fs::path base_;
  fs::path work_;
};

}  // namespace

TEST_F(CliTest, EvaluateWritesAccuracy) {
  ASSERT_EQ(cmd("evaluate").code, 0);
  const auto text = slurp(work_ / "report.txt");
  EXPECT_NE(text.find("accuracy"), std::string::npos);
  EXPECT_NE(slurp(work_ / "report.csv").find("ALL,ftc.accuracy,"), std::string::npos);
  EXPECT_TRUE(fs::exists(work_ / "frozen_fraction.csv"));
}

TEST_F(CliTest, BaselineAndReportRun) {
  ASSERT_EQ(cmd("baseline").code, 0);
  EXPECT_TRUE(fs::exists(work_ / "baseline.csv"));
  ASSERT_EQ(cmd("report").code, 0);
  EXPECT_EQ(slurp(work_ / "panels.csv").rfind("pixel_id,stratum,date,tb_v_k,tb_h_k,npr,p_frozen,", 0), 0u);
  const auto r = cmd("report", "--pixel NOPE");
  EXPECT_EQ(r.code, 3);
}

TEST_F(CliTest, ManifestRecordsDigests) {
  ASSERT_EQ(cmd("retrieve").code, 0);
  const auto m = nlohmann::json::parse(slurp(work_ / "manifest_retrieve.json"));
  EXPECT_EQ(m["command"], "retrieve");
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 64u);
  ASSERT_FALSE(m["inputs"].empty());
  ASSERT_FALSE(m["artifacts"].empty());
  for (const auto& group : {m["inputs"], m["artifacts"]})
    for (const auto& e : group)
      EXPECT_EQ(e["sha256"], ftc::sha256_file(e["path"].get<std::string>())) << e["path"];
}

TEST_F(CliTest, RetrainIsByteIdentical) {
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(work_ / "models")) before[e.path().filename()] = slurp(e.path());
  ASSERT_EQ(cmd("train").code, 0);
  for (const auto& [name, bytes] : before) EXPECT_EQ(slurp(work_ / "models" / name), bytes) << name;
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(cmd("train", "--bogus").code, 2);
  const auto r = cmd("retrieve", "--window 8");
  EXPECT_EQ(r.code, 2);
  const auto j = error_json(r);
  EXPECT_EQ(j["status"], "error");
  EXPECT_EQ(j["code"], 2);
  EXPECT_EQ(j["kind"], "usage");
  EXPECT_EQ(cmd("evaluate", "--threshold 1.5").code, 2);
  EXPECT_EQ(cmd("train", "--set train.nope=1").code, 2);
}

TEST_F(CliTest, MalformedInputNamesFileAndLine) {
  {
    std::ofstream f(work_ / "tb.csv", std::ios::app);
    f << "P0000,2030-01-01,nan,200\n";
  }
  const auto r = cmd("retrieve");
  EXPECT_EQ(r.code, 3);
  const auto msg = error_json(r)["message"].get<std::string>();
  EXPECT_NE(msg.find("tb.csv:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
}

TEST_F(CliTest, MissingCheckpointListsAvailableStrata) {
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(work_ / "models"))
    if (e.path().extension() == ".ftcm") ckpts.push_back(e.path());
  std::sort(ckpts.begin(), ckpts.end());
  ASSERT_GE(ckpts.size(), 2u);
  fs::remove(ckpts[0]);
  const auto r = cmd("retrieve");
  EXPECT_EQ(r.code, 3);
  const auto msg = error_json(r)["message"].get<std::string>();
  EXPECT_NE(msg.find("available:"), std::string::npos) << msg;
  const auto kept = ftc::try_parse_stratum(ckpts[1].stem().string());
  ASSERT_TRUE(kept.has_value());
  EXPECT_NE(msg.find(kept->str()), std::string::npos) << msg;
}

TEST_F(CliTest, NoOverlapNamesBothRanges) {
  ftc::io::write_truth((work_ / "truth.csv").string(),
                       {{"P0000", {ftc::parse_date("2001-03-01"), ftc::parse_date("2001-03-02")},
                         {ftc::FtState::frozen, ftc::FtState::frozen}}});
  const auto r = cmd("evaluate");
  EXPECT_EQ(r.code, 3);
  const auto msg = error_json(r)["message"].get<std::string>();
  EXPECT_NE(msg.find("2001-03-01"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2018-01-01"), std::string::npos) << msg;
}

TEST_F(CliTest, DivergentCheckpointExitsFour) {
  for (const auto& e : fs::directory_iterator(work_ / "models")) {
    if (e.path().extension() != ".ftcm") continue;
    auto m = ftc::load_checkpoint(e.path().string());
    for (double& w : m.params.encoder[0].weights) w = 1e300;
    ftc::save_checkpoint(e.path().string(), m);
  }
  const auto r = cmd("retrieve");
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(error_json(r)["kind"], "numerical");
}

TEST_F(CliTest, InputsAreNotModified) {
  const auto before = ftc::sha256_file((work_ / "tb.csv").string());
  ASSERT_EQ(cmd("baseline").code, 0);
  ASSERT_EQ(cmd("evaluate").code, 0);
  EXPECT_EQ(ftc::sha256_file((work_ / "tb.csv").string()), before);
}
