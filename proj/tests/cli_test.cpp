#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "apn/dataset.hpp"
#include "commands.hpp"

namespace apn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result apn(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

// One small dataset and a one-epoch run shared by the tests below.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("apn_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(apn({"gen-data", "--classes", "20", "--per-class", "3", "--seed", "5", "-o", p("data")}).code, 0);
    ASSERT_EQ(apn({"train", "--data", p("data"), "--epochs", "2", "--checkpoint-every", "1", "-q", "-o",
                   p("run")})
                  .code,
              0);
  }
  static std::string p(const std::string& rel) { return (root_ / rel).string(); }
  static fs::path root_;
};
fs::path CliTest::root_;

TEST_F(CliTest, GenDataWritesManifestAndConfig) {
  EXPECT_TRUE(fs::exists(root_ / "data" / "manifest.json"));
  const json cfg = read_json(root_ / "data" / "run_config.json");
  EXPECT_EQ(cfg["command"], "gen-data");
  EXPECT_EQ(cfg["options"]["classes"], 20);
  EXPECT_EQ(load_manifest(root_ / "data").samples.size(), 60u);
}

TEST_F(CliTest, TrainWritesCheckpointsAndLog) {
  EXPECT_TRUE(fs::exists(root_ / "run" / "epoch_001" / "metadata.json"));
  EXPECT_FALSE(fs::exists(root_ / "run" / "epoch_002"));
  const json meta = read_json(root_ / "run" / "final" / "metadata.json");
  EXPECT_TRUE(meta["final"].get<bool>());
  EXPECT_EQ(meta["epoch"], 2);
  std::ifstream log(root_ / "run" / "train_log.csv");
  std::string header, line;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch,lr,L_CLS,L_Reg,L_AD,L_CPT,total");
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 2);
  EXPECT_EQ(read_json(root_ / "run" / "run_config.json")["options"]["l3"], 0.2);
}

TEST_F(CliTest, EvalModes) {
  ASSERT_EQ(apn({"eval", "--data", p("data"), "--checkpoint", p("run/final"), "-o", p("ev_zsl")}).code, 0);
  EXPECT_TRUE(read_json(root_ / "ev_zsl" / "report.json").contains("zsl"));

  ASSERT_EQ(apn({"eval", "--data", p("data"), "--checkpoint", p("run/final"), "--mode", "gzsl", "--gamma-grid",
                 "0:1:0.02", "-o", p("ev_sweep")})
                .code,
            0);
  std::ifstream csv(root_ / "ev_sweep" / "sweep.csv");
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 51);
  EXPECT_TRUE(fs::exists(root_ / "ev_sweep" / "best_gamma.json"));

  ASSERT_EQ(apn({"eval", "--data", p("data"), "--checkpoint", p("run/final"), "--mode", "gzsl", "--gamma", "0.7",
                 "-o", p("ev_single")})
                .code,
            0);
  EXPECT_DOUBLE_EQ(read_json(root_ / "ev_single" / "report.json")["gzsl"]["gamma"].get<double>(), 0.7);
  EXPECT_TRUE(fs::exists(root_ / "ev_single" / "run_config.json"));
}

TEST_F(CliTest, LocalizeWithBaselineAndHeatmaps) {
  ASSERT_EQ(apn({"localize", "--data", p("data"), "--checkpoint", p("run/final"), "--heatmaps", "2", "-o",
                 p("loc")})
                .code,
            0);
  const json summary = read_json(root_ / "loc" / "pcp.json");
  EXPECT_EQ(summary["maps"], "prototype");
  EXPECT_EQ(summary["per_part"].size(), 4u);
  std::size_t pgm = 0, svg = 0;
  for (const auto& e : fs::directory_iterator(root_ / "loc" / "heatmaps")) {
    pgm += e.path().extension() == ".pgm";
    svg += e.path().extension() == ".svg";
  }
  EXPECT_EQ(svg, 2u);
  EXPECT_EQ(pgm, 8u);

  ASSERT_EQ(apn({"localize", "--data", p("data"), "--checkpoint", p("run/final"), "--baseline", "cam",
                 "--fraction", "0.7071", "-o", p("loc_cam")})
                .code,
            0);
  EXPECT_EQ(read_json(root_ / "loc_cam" / "pcp.json")["maps"], "cam");
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(apn({"gen-data", "--classes", "100000", "-o", p("big")}).code, cli::kContractFailure);
  EXPECT_EQ(apn({"train", "--data", p("data"), "--bogus", "-o", p("x")}).code, cli::kContractFailure);
  EXPECT_EQ(apn({"train", "--data", p("missing"), "-o", p("x")}).code, cli::kIoFailure);
  EXPECT_EQ(apn({"eval", "--data", p("data"), "--checkpoint", p("nothing"), "-o", p("x")}).code, cli::kIoFailure);
  EXPECT_EQ(apn({"eval", "--data", p("data"), "--checkpoint", p("run/final"), "--mode", "zsl", "--gamma", "1",
                 "-o", p("x")})
                .code,
            cli::kContractFailure);
  EXPECT_EQ(apn({"train", "--data", p("data"), "--lr", "0", "-o", p("x")}).code, cli::kContractFailure);
  EXPECT_EQ(apn({}).code, cli::kContractFailure);
  EXPECT_EQ(apn({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, AttributeCountMismatchIsRejected) {
  ASSERT_EQ(apn({"gen-data", "--classes", "10", "--per-class", "2", "--colors", "3", "--unseen", "0.2", "-o",
                 p("data_k12")})
                .code,
            0);
  const Result r = apn({"eval", "--data", p("data_k12"), "--checkpoint", p("run/final"), "-o", p("x")});
  EXPECT_EQ(r.code, cli::kContractFailure);
  EXPECT_NE(r.err.find("K=16"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigFiles) {
  {
    std::ofstream os(root_ / "bad.json");
    os << R"({"lr": 0.01, "learning_rate": 3})";
  }
  const Result bad = apn({"train", "--config", p("bad.json"), "--data", p("data"), "-o", p("x")});
  EXPECT_EQ(bad.code, cli::kContractFailure);
  EXPECT_NE(bad.err.find("learning_rate"), std::string::npos);

  // A resolved run config replays, with explicit flags taking precedence.
  ASSERT_EQ(apn({"train", "--config", p("run/run_config.json"), "--epochs", "1", "-q", "-o", p("replay")}).code, 0);
  const json cfg = read_json(root_ / "replay" / "run_config.json")["options"];
  EXPECT_EQ(cfg["epochs"], 1);
  EXPECT_EQ(cfg["checkpoint-every"], 1);
  EXPECT_EQ(cfg["data"], p("data"));

  EXPECT_EQ(apn({"eval", "--config", p("run/run_config.json"), "-o", p("x")}).code, cli::kContractFailure);
}

TEST_F(CliTest, Gradcheck) {
  EXPECT_EQ(apn({"gradcheck", "--loss", "cls"}).code, cli::kOk);
  const Result strict = apn({"gradcheck", "--tolerance", "1e-12", "-o", p("gc")});
  EXPECT_EQ(strict.code, cli::kContractFailure);
  EXPECT_NE(strict.out.find("FAIL"), std::string::npos);
  EXPECT_FALSE(read_json(root_ / "gc" / "gradcheck.json")["passed"].get<bool>());
}

TEST_F(CliTest, FeatureManifestWithoutPartsCannotBeLocalized) {
  Dataset d;
  d.mode = DataMode::kFeature;
  d.input_shape = Shape{7, 7, 8};
  d.attrs.phi = Tensor(Shape{3, 4}, {1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0});
  d.attrs.seen_ids = {0, 1};
  d.attrs.unseen_ids = {2};
  d.attrs.groups = {{0, 1}, {2, 3}};
  for (std::size_t i = 0; i < 6; ++i) {
    Sample s;
    s.id = "f" + std::to_string(i);
    s.class_id = i % 3;
    s.input = Tensor(Shape{7, 7, 8}, 0.1 * double(i + 1));
    s.split = i < 3 && s.class_id != 2 ? Split::kTrain : Split::kTest;
    d.samples.push_back(std::move(s));
  }
  save_dataset(d, root_ / "features");
  ASSERT_EQ(apn({"train", "--data", p("features"), "--epochs", "1", "--batch", "2", "-q", "-o", p("frun")}).code,
            0);
  EXPECT_EQ(apn({"eval", "--data", p("features"), "--checkpoint", p("frun/final"), "-o", p("fev")}).code, 0);
  const Result r = apn({"localize", "--data", p("features"), "--checkpoint", p("frun/final"), "-o", p("floc")});
  EXPECT_EQ(r.code, cli::kContractFailure);
  EXPECT_NE(r.err.find("part"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace apn
