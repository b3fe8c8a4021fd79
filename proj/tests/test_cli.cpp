#include "support.hpp"

#include "volrig/skeleton.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>

namespace fs = std::filesystem;
using namespace volrig;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(VOLRIG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, test::read_bytes(log)};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(test::scratch_dir("cli"));
    const auto r = cli("--seed 3 synth --kind star --out " + (*dir_ / "data").string() + " --step 0.04", *dir_);
    ASSERT_EQ(r.code, 0) << r.out;
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static fs::path* dir_;
  const fs::path& dir() const { return *dir_; }
  std::string mesh() const { return (dir() / "data" / "star_3.obj").string(); }
};

fs::path* Cli::dir_ = nullptr;

TEST_F(Cli, MissingInputExitsTwoAndNamesPath) {
  const auto r = cli("featurize /nonexistent/thing.obj --out " + (dir() / "x").string(), dir());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("/nonexistent/thing.obj"), std::string::npos) << r.out;
  EXPECT_EQ(cli("predict /nonexistent/a.obj --checkpoint c --out o.rig", dir()).code, 2);
}

TEST_F(Cli, SynthWritesLoadableRig) {
  const auto ch = load_rig(dir() / "data" / "star_3.rig");
  EXPECT_EQ(ch.skeleton.joints.size(), 11u);
}

TEST_F(Cli, FeaturizeIsByteIdenticalAcrossRunsAndThreads) {
  const auto a = dir() / "feat_a", b = dir() / "feat_b";
  ASSERT_EQ(cli("--resolution 16 featurize " + mesh() + " --samples 2000 --out " + a.string(), dir()).code, 0);
  ASSERT_EQ(cli("--threads 3 --resolution 16 featurize " + mesh() + " --samples 2000 --out " + b.string(), dir()).code, 0);
  int raws = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;
    raws += e.path().extension() == ".raw";
    EXPECT_EQ(test::read_bytes(e.path()), test::read_bytes(b / name)) << name;
  }
  EXPECT_EQ(raws, 6);
  EXPECT_TRUE(fs::exists(a / "header.json"));
  const auto manifest = nlohmann::json::parse(test::read_bytes(a / "manifest.json"));
  EXPECT_EQ(manifest["command"], "featurize");
  EXPECT_TRUE(manifest.contains("inputs"));
}

TEST_F(Cli, TrainPredictEval) {
  const auto run = dir() / "run";
  const std::string train = "--resolution 16 train --data " + (dir() / "data").string() +
                            " --iterations 2 --modules 1 --samples 2000 --lr 1e-3 --out ";
  ASSERT_EQ(cli(train + run.string(), dir()).code, 0);
  ASSERT_EQ(cli(train + (dir() / "run2").string(), dir()).code, 0);
  EXPECT_EQ(test::read_bytes(run / "checkpoint.bin"), test::read_bytes(dir() / "run2" / "checkpoint.bin"));
  EXPECT_EQ(test::read_bytes(run / "loss.jsonl"), test::read_bytes(dir() / "run2" / "loss.jsonl"));

  const auto pred_dir = dir() / "pred";
  fs::create_directories(pred_dir);
  const auto out = pred_dir / "star_3.rig";
  const auto r = cli("predict " + mesh() + " --checkpoint " + (run / "checkpoint").string() + " --out " + out.string(),
                     dir());
  ASSERT_TRUE(r.code == 0 || r.code == 3) << r.out;
  const auto manifest = nlohmann::json::parse(test::read_bytes(out.string() + ".manifest.json"));
  EXPECT_EQ(manifest["config"]["granularity"], 0.02);
  if (r.code == 0) EXPECT_NO_THROW(load_rig(out));

  const auto mismatch = cli("--resolution 32 predict " + mesh() + " --checkpoint " + (run / "checkpoint").string() +
                                " --out " + (dir() / "m.rig").string(),
                            dir());
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.out.find("resolution"), std::string::npos);

  // Reference against itself.
  const auto same = dir() / "same";
  fs::create_directories(same);
  fs::copy_file(dir() / "data" / "star_3.rig", same / "star_3.rig");
  const auto e = cli("eval --pred " + same.string() + " --ref " + (dir() / "data").string() + " --mesh " +
                         (dir() / "data").string() + " --json " + (dir() / "eval.json").string(),
                     dir());
  ASSERT_EQ(e.code, 0) << e.out;
  const auto report = nlohmann::json::parse(test::read_bytes(dir() / "eval.json"));
  EXPECT_EQ(report["mean"]["cd_joint"], 0.0);
  EXPECT_EQ(report["mean"]["cd_joint2bone"], 0.0);
  EXPECT_EQ(report["mean"]["mr_pred"], 100.0);
  EXPECT_EQ(report["mean"]["mr_ref"], 100.0);
}

TEST_F(Cli, InvalidRigAbortsTraining) {
  const auto bad = dir() / "bad";
  fs::create_directories(bad);
  std::ofstream(bad / "loop.rig") << "mesh x.obj\njoint a 0 0 0\njoint b 1 0 0\nroot a\nbone a b\nbone b a\n";
  const auto r = cli("train --data " + bad.string() + " --out " + (dir() / "badrun").string(), dir());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("loop.rig"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir() / "badrun" / "checkpoint.bin"));
}

TEST_F(Cli, InspectWritesPgm) {
  const auto a = dir() / "feat_i";
  ASSERT_EQ(cli("--resolution 16 featurize " + mesh() + " --samples 1000 --out " + a.string(), dir()).code, 0);
  const auto pgm = dir() / "slice.pgm";
  ASSERT_EQ(cli("inspect " + a.string() + " --channel sdf --out " + pgm.string(), dir()).code, 0);
  EXPECT_EQ(test::read_bytes(pgm).substr(0, 2), "P5");
}

}  // namespace
