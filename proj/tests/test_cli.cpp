// Copyright 2026 The Group-Fair-PL Authors.
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
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gfpl/core.hpp"
#include "gfpl/dataset.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(GFPL_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gfpl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const nlohmann::json& j, const std::string& name = "config.json") {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  static nlohmann::json synthetic_config() {
    return {{"synthetic",
             {{"n_queries", 12}, {"items_per_query", 10}, {"proportions", {0.7, 0.3}}, {"feature_dim", 4}, {"seed", 3}}},
            {"mode", "group_fair"},
            {"k", 5},
            {"delta", 0.05},
            {"M", 3},
            {"epochs", 2},
            {"learning_rate", 0.01},
            {"batch_size", 20},
            {"hidden", 8},
            {"log_samples", 10},
            {"eval_samples", 20},
            {"seed", 11}};
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, MissingDatasetNamesTheField) {
  auto j = synthetic_config();
  j.erase("synthetic");
  const auto r = run_cli("train --config " + write_config(j) + " --out " + out("a"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("dataset"), std::string::npos) << r.output;
}

TEST_F(CliTest, UnreadableDatasetFails) {
  auto j = synthetic_config();
  j.erase("synthetic");
  j["dataset"] = (dir_ / "nope.txt").string();
  const auto r = run_cli("train --config " + write_config(j) + " --out " + out("a"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
}

TEST_F(CliTest, TrainIsDeterministic) {
  const auto cfg = write_config(synthetic_config());
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out("a")).code, 0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out("b")).code, 0);
  const auto log = slurp(dir_ / "a" / "train_log.csv");
  EXPECT_EQ(log, slurp(dir_ / "b" / "train_log.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "model.json"), slurp(dir_ / "b" / "model.json"));
  EXPECT_EQ(log.rfind("epoch,split,ndcg_observed,ndcg_true,fairness_violation_rate\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  ASSERT_EQ(run_cli("train --config " + cfg + " --seed 12 --out " + out("c")).code, 0);
  EXPECT_NE(slurp(dir_ / "c" / "model.json"), slurp(dir_ / "a" / "model.json"));
}

TEST_F(CliTest, WorkerCountDoesNotChangeOutput) {
  const auto cfg = write_config(synthetic_config());
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out("a")).code, 0);
  const std::string cmd = "env GFPL_WORKERS=3 " + std::string(GFPL_CLI_PATH) + " train --config " + cfg + " --out " +
                          out("b") + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "model.json"), slurp(dir_ / "b" / "model.json"));
}

TEST_F(CliTest, EvalWritesBoundsAndZeroViolations) {
  const auto cfg = write_config(synthetic_config());
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out("m")).code, 0);
  const std::string ckpt = out("m") + "/model.json";
  ASSERT_EQ(run_cli("eval --config " + cfg + " --checkpoint " + ckpt + " --out " + out("e1")).code, 0);
  ASSERT_EQ(run_cli("eval --config " + cfg + " --checkpoint " + ckpt + " --out " + out("e2")).code, 0);
  const auto csv = slurp(dir_ / "e1" / "metrics.csv");
  EXPECT_EQ(csv, slurp(dir_ / "e2" / "metrics.csv"));

  // bounds are derive_constraints_from_delta(0.7/0.3, 0.05, 5) / k for the minority
  const auto c = gfpl::derive_constraints_from_delta(std::vector<double>{0.7, 0.3}, 0.05, 5);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dataset,method,beta,metric,rank_or_epoch,value,stderr");
  int ranks = 0;
  bool saw_ndcg = false;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 7u) << line;
    EXPECT_EQ(f[1], "group_fair");
    if (f[3] == "fairness_violation_rate") {
      EXPECT_EQ(std::stod(f[5]), 0.0);
    }
    if (f[3] == "ndcg_true") saw_ndcg = true;
    if (f[3] == "lower_bound") {
      EXPECT_DOUBLE_EQ(std::stod(f[5]), c.lower[1] / 5.0);
    }
    if (f[3] == "upper_bound") {
      EXPECT_DOUBLE_EQ(std::stod(f[5]), c.upper[1] / 5.0);
    }
    if (f[3] == "minority_fraction") ++ranks;
  }
  EXPECT_TRUE(saw_ndcg);
  EXPECT_EQ(ranks, 5);
}

TEST_F(CliTest, EvalRejectsIncompatibleCheckpoint) {
  auto j = synthetic_config();
  const auto cfg = write_config(j);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out("m")).code, 0);
  j["synthetic"]["feature_dim"] = 6;
  const auto other = write_config(j, "other.json");
  const auto r = run_cli("eval --config " + other + " --checkpoint " + out("m") + "/model.json --out " + out("e"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("checkpoint"), std::string::npos) << r.output;
}

TEST_F(CliTest, SampleLinesAreFairAndReproducible) {
  const auto cfg = write_config(synthetic_config());
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + out("m")).code, 0);
  const std::string base = "sample --config " + cfg + " --checkpoint " + out("m") + "/model.json --query 3 -n 20 ";
  ASSERT_EQ(run_cli(base + "--out " + out("s1")).code, 0);
  ASSERT_EQ(run_cli(base + "--out " + out("s2")).code, 0);
  const auto text = slurp(dir_ / "s1" / "samples.jsonl");
  EXPECT_EQ(text, slurp(dir_ / "s2" / "samples.jsonl"));
  std::istringstream in(text);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["query_id"], "3");
    EXPECT_EQ(j["items"].size(), 5u);
    EXPECT_TRUE(j["fair"].get<bool>());
    EXPECT_LE(j["log_prob"].get<double>(), 0.0);
  }
  EXPECT_EQ(lines, 20u);

  ASSERT_EQ(run_cli("sample --config " + cfg + " --checkpoint " + out("m") + "/model.json --query 3 -n 1 --out " +
                    out("s3"))
                .code,
            0);
  const auto one = slurp(dir_ / "s3" / "samples.jsonl");
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 1);

  const auto bad = run_cli("sample --config " + cfg + " --checkpoint " + out("m") + "/model.json --query zz --out " +
                           out("s4"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("zz"), std::string::npos);
}

TEST_F(CliTest, ExperimentResumesCompletedCells) {
  auto j = synthetic_config();
  j["betas"] = {1.0};
  j["methods"] = {"plain_pl", "group_fair"};
  j["runs"] = 2;
  const auto cfg = write_config(j);
  const auto first = run_cli("experiment --config " + cfg + " --out " + out("x"));
  ASSERT_EQ(first.code, 0) << first.output;
  EXPECT_NE(first.output.find("4 cells run, 0 already complete"), std::string::npos) << first.output;
  const auto results = slurp(dir_ / "x" / "results.csv");
  const auto cells = slurp(dir_ / "x" / "cells.csv");

  const auto second = run_cli("experiment --config " + cfg + " --out " + out("x"));
  ASSERT_EQ(second.code, 0);
  EXPECT_NE(second.output.find("0 cells run, 4 already complete"), std::string::npos) << second.output;
  EXPECT_EQ(slurp(dir_ / "x" / "cells.csv"), cells);
  EXPECT_EQ(slurp(dir_ / "x" / "results.csv"), results);

  // widening the sweep only runs the new cells, and matches a fresh sweep
  j["runs"] = 3;
  const auto wider = write_config(j, "wider.json");
  const auto third = run_cli("experiment --config " + wider + " --out " + out("x"));
  EXPECT_NE(third.output.find("2 cells run, 4 already complete"), std::string::npos) << third.output;
  ASSERT_EQ(run_cli("experiment --config " + wider + " --out " + out("fresh")).code, 0);
  EXPECT_EQ(slurp(dir_ / "x" / "results.csv"), slurp(dir_ / "fresh" / "results.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "x" / "results.meta.json"));
}

TEST_F(CliTest, ExperimentRecomputesTornCell) {
  auto j = synthetic_config();
  j["methods"] = {"plain_pl"};
  const auto cfg = write_config(j);
  ASSERT_EQ(run_cli("experiment --config " + cfg + " --out " + out("x")).code, 0);
  const auto results = slurp(dir_ / "x" / "results.csv");
  // drop the completion marker, as if the process died mid-cell
  auto cells = slurp(dir_ / "x" / "cells.csv");
  cells.erase(cells.rfind("1,plain_pl,0,cell_complete"));
  std::ofstream(dir_ / "x" / "cells.csv") << cells;
  const auto r = run_cli("experiment --config " + cfg + " --out " + out("x"));
  EXPECT_NE(r.output.find("1 cells run, 0 already complete"), std::string::npos) << r.output;
  EXPECT_EQ(slurp(dir_ / "x" / "results.csv"), results);
  const auto again = run_cli("experiment --config " + cfg + " --out " + out("x"));
  EXPECT_NE(again.output.find("0 cells run, 1 already complete"), std::string::npos) << again.output;
  EXPECT_EQ(slurp(dir_ / "x" / "results.csv"), results);
}

TEST_F(CliTest, UnbiasedPlainAndTrueTrainingCoincide) {
  auto j = synthetic_config();
  j["betas"] = {1.0};
  j["methods"] = {"plain_pl", "plain_pl_true"};
  const auto cfg = write_config(j);
  ASSERT_EQ(run_cli("experiment --config " + cfg + " --out " + out("x")).code, 0);
  std::map<std::string, std::string> ndcg;
  std::istringstream in(slurp(dir_ / "x" / "results.csv"));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (f.size() == 7 && f[3] == "ndcg_true") ndcg[f[1]] = f[5];
  }
  ASSERT_EQ(ndcg.size(), 2u);
  // without bias the observed labels are the true labels, so training is identical
  EXPECT_EQ(ndcg["plain_pl"], ndcg["plain_pl_true"]);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_NE(run_cli("").code, 0);
  EXPECT_NE(run_cli("train").code, 0);
  EXPECT_NE(run_cli("train --config " + out("missing.json")).code, 0);
  std::ofstream(dir_ / "bad.json") << "{";
  EXPECT_EQ(run_cli("train --config " + out("bad.json")).code, 1);
}
