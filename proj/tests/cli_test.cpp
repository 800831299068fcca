// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(SVDRANK_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "svdrank_cli_test";
    fs::remove_all(dir_);
    const Outcome r = run("synth --out " + dir_.string() +
                      " --speakers 40 --acr 400 --ccr 600 --panel-questions 10 --panel-annotators 8");
    ASSERT_EQ(r.code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string data(const std::string& name) { return (dir_ / name).string(); }
  static std::string common() {
    return " --manifest " + data("manifest.jsonl") + " --labels " + data("labels_acr.jsonl") +
           " " + data("labels_ccr.jsonl");
  }

  static fs::path dir_;
};

fs::path CliPipeline::dir_;

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_NE(run("frobnicate").code, 0);
  EXPECT_EQ(run("train --manifest /nonexistent/m.jsonl --labels x --split y --out z").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliPipeline, SynthWritesCorpusAndLabels) {
  for (const char* f : {"manifest.jsonl", "labels_acr.jsonl", "labels_ccr.jsonl", "panel.jsonl", "world.json"})
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  std::istringstream acr(slurp(dir_ / "labels_acr.jsonl"));
  std::size_t lines = 0;
  for (std::string l; std::getline(acr, l);) ++lines;
  EXPECT_EQ(lines, 400u);
}

TEST_F(CliPipeline, SplitTrainEvaluate) {
  ASSERT_EQ(run("split" + common() + " --svd youthfulF --seed 3 --out " + data("split.json")).code, 0);
  const auto split = nlohmann::json::parse(slurp(dir_ / "split.json"));
  EXPECT_EQ(split["svd"], "youthfulF");

  const Outcome bad = run("train" + common() + " --split " + data("split.json") +
                      " --mode pairwise --out " + data("m.svdm"));
  EXPECT_EQ(bad.code, 2);

  const Outcome train = run("train" + common() + " --split " + data("split.json") +
                        " --epochs 2 --n 50 --hidden 16 --out " + data("m.svdm"));
  ASSERT_EQ(train.code, 0);
  EXPECT_NE(train.out.find("epoch"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "m.svdm"));

  const Outcome eval = run("eval" + common() + " --model " + data("m.svdm") + " --split " +
                       data("split.json") + " --panel " + data("panel.jsonl"));
  ASSERT_EQ(eval.code, 0);
  const auto report = nlohmann::json::parse(eval.out);
  for (const char* k : {"svd", "n_pairs_strong", "n_pairs_weak", "ppref_strong", "ppref_weak", "ub_strong", "ub_weak"})
    EXPECT_TRUE(report.contains(k)) << k;
  EXPECT_GT(report["n_pairs_strong"].get<int>(), 0);
}

TEST_F(CliPipeline, AgreementAndPseudoF) {
  const Outcome a = run("agreement --labels " + data("panel.jsonl"));
  ASSERT_EQ(a.code, 0);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_GE(j["ub_strong"].get<double>(), 0.5);
  const Outcome f = run("pseudo-f" + common() + " --svd youthfulF");
  ASSERT_EQ(f.code, 0);
  EXPECT_FALSE(f.out.empty());
}

TEST_F(CliPipeline, ExperimentIsReproducible) {
  const std::string args = "experiment" + common() +
                           " --svd youthfulF --sizes 30 --seeds 2 --epochs 2 --hidden 8 --test-size 100";
  const Outcome a = run(args + " --out " + data("a.csv"));
  const Outcome b = run(args + " --out " + data("b.csv"));
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  auto body = [](std::string s) {
    return s.rfind("#", 0) == 0 ? s.substr(s.find('\n') + 1) : s;
  };
  const std::string csv = slurp(dir_ / "a.csv");
  EXPECT_EQ(csv[0], '#');
  EXPECT_EQ(body(csv), body(slurp(dir_ / "b.csv")));
  EXPECT_NE(csv.find("svd,mode,arch,n_train,seed,best_epoch,ppref_strong,ppref_weak"), std::string::npos);
  const Outcome plain = run(args + " --no-timestamp");
  EXPECT_EQ(plain.out, body(csv));
}

}  // namespace
