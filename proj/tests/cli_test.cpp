/*
 * Copyright 2026 The loft Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "loft/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "loft/digest.hpp"
#include "loft/embedstore.hpp"
#include "loft/trainer.hpp"

namespace loft {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result Loft(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = RunCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json ReadJson(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("loft_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string P(const std::string& name) const { return (dir_ / name).string(); }

  // Small three-class bundle, prototypes and a split with test records.
  void MakeSplit(std::vector<std::string> extra = {}) {
    ASSERT_EQ(Loft({"synth", "--classes", "3", "--dim", "8", "--per-class", "300", "--separation",
                   "6", "--seed", "4", "-o", P("data.lftb"), "--prototypes", P("protos.lftb")})
                  .code,
              0);
    std::vector<std::string> args = {"split", "--data", P("data.lftb"), "--n1", "20",
                                     "--gamma-l", "10", "--m1", "100", "--test-per-class",
                                     "100", "--out", P("split")};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = Loft(args);
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

TEST_F(CliTest, SynthIsDeterministic) {
  for (const char* name : {"a.lftb", "b.lftb"}) {
    ASSERT_EQ(Loft({"synth", "--classes", "4", "--dim", "6", "--per-class", "20", "--seed", "9",
                   "-o", P(name)})
                  .code,
              0);
  }
  EXPECT_EQ(Sha256FileHex(P("a.lftb")), Sha256FileHex(P("b.lftb")));
  const auto m = ReadJson(P("a.lftb.manifest.json"));
  EXPECT_EQ(m["outputs"]["bundle"]["sha256"], Sha256FileHex(P("a.lftb")));
  EXPECT_EQ(m["config"]["per_class"], 20);
  EXPECT_EQ(ReadBundle(P("a.lftb")).records.size(), 80u);
}

TEST_F(CliTest, SynthRejectsZeroPerClass) {
  const auto r = Loft({"synth", "--per-class", "0", "-o", P("x.lftb")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--per-class"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(P("x.lftb")));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(Loft({}).code, kExitUsage);
  EXPECT_EQ(Loft({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(Loft({"--version"}).code, kExitOk);
  EXPECT_EQ(Loft({"split", "--help"}).code, kExitOk);
}

TEST_F(CliTest, SplitWritesFilesAndManifest) {
  MakeSplit({"--gamma-u", "reversed"});
  for (const char* f : {"pool.lftb", "labeled.json", "unlabeled.json", "test.json",
                        "truth.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "split" / f)) << f;
  }
  const auto m = ReadJson(dir_ / "split" / "manifest.json");
  EXPECT_DOUBLE_EQ(m["config"]["gamma_u"].get<double>(), 0.1);
  EXPECT_EQ(m["labeled_counts"], json::array({20, 6, 2}));
  EXPECT_EQ(m["unlabeled_counts"], json::array({10, 32, 100}));
  EXPECT_EQ(m["sizes"]["labeled"], 28);
  EXPECT_EQ(m["sizes"]["unlabeled"], 142);
  EXPECT_EQ(m["sizes"]["test"], 300);
  for (const auto& [role, entry] : m["outputs"].items()) {
    EXPECT_EQ(entry["sha256"], Sha256FileHex(dir_ / "split" / entry["path"].get<std::string>()))
        << role;
  }
  EXPECT_EQ(m["inputs"]["data"]["sha256"], Sha256FileHex(P("data.lftb")));
}

TEST_F(CliTest, SplitErrors) {
  ASSERT_EQ(Loft({"synth", "--classes", "3", "--dim", "4", "--per-class", "30", "-o",
                 P("d.lftb")})
                .code,
            0);
  EXPECT_EQ(Loft({"split", "--data", P("d.lftb"), "--ood-ratio", "0.3", "--out", P("s")}).code,
            kExitUsage);
  const auto cap = Loft({"split", "--data", P("d.lftb"), "--n1", "50", "--out", P("s")});
  EXPECT_EQ(cap.code, kExitUsage);
  EXPECT_NE(cap.err.find("class"), std::string::npos);
  EXPECT_EQ(Loft({"split", "--data", P("d.lftb"), "--gamma-u", "steep", "--out", P("s")}).code,
            kExitUsage);

  std::ofstream(P("junk.lftb")) << "not a bundle";
  EXPECT_EQ(Loft({"split", "--data", P("junk.lftb"), "--out", P("s")}).code, kExitIo);
}

TEST_F(CliTest, SplitWithOodPool) {
  MakeSplit();
  ASSERT_EQ(Loft({"synth", "--orthogonal-to", P("data.lftb"), "--classes", "3", "--per-class",
                 "200", "--seed", "99", "-o", P("ood.lftb")})
                .code,
            0);
  ASSERT_EQ(Loft({"split", "--data", P("data.lftb"), "--n1", "20", "--gamma-l", "10", "--m1",
                 "100", "--test-per-class", "100", "--ood-pool", P("ood.lftb"), "--ood-ratio",
                 "0.5", "--out", P("mixed")})
                .code,
            0);
  const auto m = ReadJson(dir_ / "mixed" / "manifest.json");
  const auto clean = ReadJson(dir_ / "split" / "manifest.json");
  const auto n_u = clean["sizes"]["unlabeled"].get<std::size_t>();
  EXPECT_EQ(m["sizes"]["ood_injected"].get<std::size_t>(), n_u);
  EXPECT_EQ(m["sizes"]["unlabeled"].get<std::size_t>(), 2 * n_u);
  EXPECT_EQ(ReadBundle(dir_ / "mixed" / "pool.lftb").dim, 8u);
}

TEST_F(CliTest, TrainEvalRoundTrip) {
  MakeSplit();
  const auto t = Loft({"train", "--split", P("split"), "--iters", "120", "--eval-every", "40",
                      "--out", P("run")});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"checkpoint.bin", "trainlog.jsonl", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  std::ifstream log(dir_ / "run" / "trainlog.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    EXPECT_NO_THROW(json::parse(line));
    ++lines;
  }
  EXPECT_EQ(lines, 3u);

  const auto e = Loft({"eval", "--checkpoint", P("run/checkpoint.bin"), "--split", P("split"),
                      "--out", P("run")});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = ReadJson(dir_ / "run" / "report.json");
  EXPECT_EQ(report["n_test"], 300);
  EXPECT_GT(report["accuracy"].get<double>(), 0.9);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "reliability.csv"));
  EXPECT_FALSE(report.contains("ood_filtering"));

  // One manifest per run directory: eval nests under the train record.
  const auto m = ReadJson(dir_ / "run" / "manifest.json");
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["outputs"]["checkpoint"]["sha256"], Sha256FileHex(dir_ / "run" / "checkpoint.bin"));
  for (const auto& [role, entry] : m["eval"]["outputs"].items()) {
    EXPECT_EQ(entry["sha256"], Sha256FileHex(dir_ / "run" / entry["path"].get<std::string>()))
        << role;
  }
  EXPECT_EQ(m["eval"]["inputs"]["checkpoint"]["sha256"],
            Sha256FileHex(dir_ / "run" / "checkpoint.bin"));
}

TEST_F(CliTest, TrainIsReproducibleAndResumable) {
  MakeSplit();
  const std::vector<std::string> base = {"train", "--split", P("split"), "--eval-every", "50"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return Loft(a);
  };
  ASSERT_EQ(with({"--iters", "100", "--out", P("full")}).code, 0);
  ASSERT_EQ(with({"--iters", "100", "--serial", "--out", P("again")}).code, 0);
  ASSERT_EQ(with({"--iters", "50", "--out", P("half")}).code, 0);
  const auto r = with({"--resume", P("half/checkpoint.bin"), "--iters", "100", "--out",
                       P("resumed")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto full = LoadCheckpoint(dir_ / "full" / "checkpoint.bin");
  EXPECT_EQ(LoadCheckpoint(dir_ / "again" / "checkpoint.bin").head.params(), full.head.params());
  const auto resumed = LoadCheckpoint(dir_ / "resumed" / "checkpoint.bin");
  EXPECT_EQ(resumed.head.params(), full.head.params());
  EXPECT_EQ(resumed.opt, full.opt);
}

TEST_F(CliTest, TrainErrorCodes) {
  MakeSplit();
  const auto no_protos = Loft({"train", "--split", P("split"), "--mode", "loft-ow", "--out",
                              P("ow")});
  EXPECT_EQ(no_protos.code, kExitUsage);
  EXPECT_NE(no_protos.err.find("prototypes"), std::string::npos);

  const auto diverged = Loft({"train", "--split", P("split"), "--lr", "1e200", "--iters", "50",
                             "--out", P("div")});
  EXPECT_EQ(diverged.code, kExitNumerical);
  EXPECT_TRUE(fs::exists(dir_ / "div" / "divergence.json"));

  std::ofstream(P("bad.bin")) << "garbage";
  EXPECT_EQ(Loft({"train", "--split", P("split"), "--resume", P("bad.bin"), "--out", P("r")}).code,
            kExitIo);
  EXPECT_EQ(Loft({"train", "--split", P("split"), "--c-u", "1.5", "--out", P("r")}).code,
            kExitUsage);
  EXPECT_EQ(Loft({"train", "--split", P("split"), "--mode", "loft-ow", "--prototypes",
                 P("data.lftb"), "--out", P("r")})
                .code,
            kExitIo);
}

TEST_F(CliTest, OpenWorldRunReportsFiltering) {
  MakeSplit();
  ASSERT_EQ(Loft({"synth", "--orthogonal-to", P("data.lftb"), "--classes", "3", "--per-class",
                 "200", "--seed", "99", "-o", P("ood.lftb")})
                .code,
            0);
  ASSERT_EQ(Loft({"split", "--data", P("data.lftb"), "--n1", "20", "--gamma-l", "10", "--m1",
                 "100", "--test-per-class", "100", "--ood-pool", P("ood.lftb"), "--ood-ratio",
                 "0.5", "--out", P("mixed")})
                .code,
            0);
  const auto t = Loft({"train", "--split", P("mixed"), "--mode", "loft-ow", "--prototypes",
                      P("protos.lftb"), "--temperature", "auto", "--iters", "200", "--out",
                      P("ow")});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(dir_ / "ow" / "stage1_kept.json"));
  const auto m = ReadJson(dir_ / "ow" / "manifest.json");
  EXPECT_GT(m["config"]["prototypes_temperature"].get<double>(), 0.0);
  ASSERT_EQ(Loft({"eval", "--checkpoint", P("ow/checkpoint.bin"), "--split", P("mixed"),
                 "--ood-bundle", P("ood.lftb"), "--out", P("ow")})
                .code,
            0);
  const auto report = ReadJson(dir_ / "ow" / "report.json");
  ASSERT_TRUE(report.contains("ood_filtering"));
  const auto& f = report["ood_filtering"];
  const auto injected = ReadJson(dir_ / "mixed" / "manifest.json")["sizes"]["ood_injected"];
  EXPECT_EQ(f["n_ood"], injected);
  EXPECT_LE(f["removed_stage1"].get<std::size_t>() + f["removed_stage2"].get<std::size_t>(),
            f["n_ood"].get<std::size_t>());
  EXPECT_FALSE(report["ood"].is_null());
}

TEST_F(CliTest, SweepRowsAndSinglePointEquivalence) {
  MakeSplit();
  const auto s = Loft({"sweep", "--split", P("split"), "--param", "c_u", "--grid",
                      "0.2:0.95:0.05", "--iters", "30", "--out", P("sweep")});
  ASSERT_EQ(s.code, 0) << s.err;
  std::ifstream csv(dir_ / "sweep" / "sweep.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "value,accuracy");
  std::vector<double> values;
  while (std::getline(csv, line)) values.push_back(std::stod(line.substr(0, line.find(','))));
  ASSERT_EQ(values.size(), 16u);
  EXPECT_DOUBLE_EQ(values.front(), 0.2);
  EXPECT_DOUBLE_EQ(values.back(), 0.95);
  EXPECT_TRUE(fs::exists(dir_ / "sweep" / "point_15" / "report.json"));

  ASSERT_EQ(Loft({"sweep", "--split", P("split"), "--param", "c_u", "--grid", "0.7", "--iters",
                 "60", "--out", P("one")})
                .code,
            0);
  ASSERT_EQ(Loft({"train", "--split", P("split"), "--c-u", "0.7", "--iters", "60", "--out",
                 P("run")})
                .code,
            0);
  ASSERT_EQ(Loft({"eval", "--checkpoint", P("run/checkpoint.bin"), "--split", P("split"),
                 "--out", P("run")})
                .code,
            0);
  EXPECT_EQ(ReadJson(dir_ / "one" / "point_00" / "report.json")["accuracy"],
            ReadJson(dir_ / "run" / "report.json")["accuracy"]);
  EXPECT_EQ(LoadCheckpoint(dir_ / "one" / "point_00" / "checkpoint.bin").head.params(),
            LoadCheckpoint(dir_ / "run" / "checkpoint.bin").head.params());

  EXPECT_EQ(Loft({"sweep", "--split", P("split"), "--param", "tau", "--grid", "1", "--out",
                 P("x")})
                .code,
            kExitUsage);
  EXPECT_EQ(Loft({"sweep", "--split", P("split"), "--grid", "0.9:0.2:0.1", "--out", P("x")}).code,
            kExitUsage);
}

}  // namespace
}  // namespace loft
