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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gfpl/error.hpp"
#include "gfpl/trainer.hpp"
#include "support/oracles.hpp"

using namespace gfpl;

namespace {

QueryInstance random_query(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  QueryInstance q;
  q.query_id = "r";
  for (std::size_t i = 0; i < n; ++i) {
    Item it;
    it.item_id = i;
    it.group = i % 2;
    for (std::size_t c = 0; c < f; ++c) it.features.push_back(normal(rng));
    q.items.push_back(it);
  }
  refresh_group_sizes(q, 2);
  return q;
}

double objective(const MlpParams& p, const QueryInstance& q, const std::vector<double>& upstream) {
  const auto m = forward_scores(p, q);
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += upstream[i] * m[i];
  return s;
}

// Central difference on every parameter entry, visited in a fixed order.
template <typename Fn>
void for_each_param(MlpParams& p, Fn fn) {
  for (Eigen::MatrixXd* m : {&p.W1, &p.W2})
    for (Eigen::Index i = 0; i < m->size(); ++i) fn(m->data()[i]);
  for (Eigen::VectorXd* v : {&p.b1, &p.b2, &p.w3})
    for (Eigen::Index i = 0; i < v->size(); ++i) fn(v->data()[i]);
  fn(p.b3);
}

DatasetManifest small_synth(std::size_t queries, std::uint64_t seed) {
  SynthSpec s;
  s.n_queries = queries;
  s.items_per_query = 10;
  s.feature_dim = 4;
  s.seed = seed;
  s.noise = 0.0;
  s.sharpness = 4.0;
  return synth_generate(s);
}

bool same_params(const MlpParams& a, const MlpParams& b) {
  return a.W1 == b.W1 && a.b1 == b.b1 && a.W2 == b.W2 && a.b2 == b.b2 && a.w3 == b.w3 && a.b3 == b.b3;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("gfpl_trainer_" + name)).string();
}

}  // namespace

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  const auto q = random_query(7, 5, 1);
  MlpParams p = MlpParams::init(5, 2, 8);
  p.b1.setConstant(0.05);
  p.b2.setConstant(0.05);
  std::vector<double> upstream{0.3, -1.0, 0.5, 0.0, 2.0, -0.7, 0.1};
  const MlpGradients g = backward_chain(p, q, upstream);
  std::vector<double> analytic;
  MlpGradients gc = g;
  for_each_param(gc, [&](double& v) { analytic.push_back(v); });
  std::size_t idx = 0;
  const double h = 1e-6;
  for_each_param(p, [&](double& v) {
    const double saved = v;
    v = saved + h;
    const double up = objective(p, q, upstream);
    v = saved - h;
    const double down = objective(p, q, upstream);
    v = saved;
    const double fd = (up - down) / (2 * h);
    EXPECT_NEAR(analytic[idx], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "parameter " << idx;
    ++idx;
  });
}

TEST(Mlp, ZeroParamsGiveZeroScores) {
  const auto q = random_query(4, 3, 3);
  for (double m : forward_scores(MlpParams::zeros(3, 6), q)) EXPECT_EQ(m, 0.0);
}

TEST(Mlp, ZeroHeadBlocksHiddenGradients) {
  const auto q = random_query(5, 3, 4);
  MlpParams p = MlpParams::init(3, 5, 6);
  p.w3.setZero();
  const auto g = backward_chain(p, q, std::vector<double>{1, 2, 3, 4, 5});
  EXPECT_EQ(g.W1.norm(), 0.0);
  EXPECT_EQ(g.W2.norm(), 0.0);
  EXPECT_DOUBLE_EQ(g.b3, 15.0);
}

TEST(Mlp, FeatureDimMismatch) {
  const auto q = random_query(3, 4, 5);
  try {
    forward_scores(MlpParams::zeros(3, 2), q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDimMismatch);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint c{MlpParams::init(4, 9, 5), {{"mode", "group_fair"}, {"seed", 9}}};
  c.params.b3 = 0.1 + 0.2;
  const std::string path = temp_path("ckpt.json");
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_TRUE(same_params(c.params, back.params));
  EXPECT_EQ(back.metadata, c.metadata);
  std::filesystem::remove(path);
}

TEST(Checkpoint, IncompatibleInputs) {
  const auto j = checkpoint_to_json({MlpParams::init(2, 1, 3), {}});
  auto code_of = [](const nlohmann::json& bad) {
    try {
      checkpoint_from_json(bad);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::kIo;
  };
  auto wrong_format = j;
  wrong_format["format"] = "other";
  auto wrong_version = j;
  wrong_version["version"] = 2;
  auto wrong_shape = j;
  wrong_shape["hidden"] = 4;
  auto missing = j;
  missing.erase("W2");
  auto wrong_type = j;
  wrong_type["b3"] = "x";
  for (const auto& bad : {wrong_format, wrong_version, wrong_shape, missing, wrong_type})
    EXPECT_EQ(code_of(bad), Errc::kIncompatibleCheckpoint);

  const std::string path = temp_path("broken.json");
  std::ofstream(path) << "{not json";
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kIncompatibleCheckpoint);
  }
  std::filesystem::remove(path);
}

TEST(QueryScoreGradient, ZeroIdealGivesZeros) {
  const auto q = oracle::make_query({0, 1, 0, 1});
  TrainConfig cfg;
  Rng rng(1);
  const std::vector<double> rel(4, 0.0);
  const auto g = query_score_gradient(q, {2, {1, 1}, {1, 1}}, {0.1, 0.2, 0.3, 0.4}, rel, cfg, rng, nullptr);
  EXPECT_EQ(g, std::vector<double>(4, 0.0));
}

TEST(QueryScoreGradient, ScaledByIdealDcg) {
  const auto q = oracle::make_query({0, 1, 0, 1});
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> rel{1.0, 0.0, 0.5, 1.0};
  TrainConfig cfg;
  cfg.samples = 7;
  const FairnessConstraints c{2, {1, 1}, {1, 1}};
  Rng a(4);
  Rng b(4);
  const auto scaled = query_score_gradient(q, c, scores, rel, cfg, a, nullptr);
  const auto theta = PositionDiscounts::ndcg(2);
  const double ideal = 1.0 + theta.theta[1];
  const auto raw = algorithm1_gradient(FairPolicy::create(q, c, scores), rel, theta, 7, b);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(scaled[d], raw[d] / ideal, 1e-12);
}

TEST(Train, RejectsBadConfig) {
  const auto d = small_synth(3, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(d, d, cfg), Error);
  cfg = {};
  cfg.samples = 0;
  EXPECT_THROW(train(d, d, cfg), Error);
  EXPECT_THROW(train(DatasetManifest{}, d, TrainConfig{}), Error);
}

TEST(Train, DeterministicAcrossRunsAndWorkerCounts) {
  const auto d = small_synth(12, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.samples = 5;
  cfg.batch_size = 25;
  cfg.eval_samples = 10;
  cfg.hidden = 8;
  const auto a = train(d, d, cfg);
  const auto b = train(d, d, cfg);
  cfg.workers = 4;
  const auto c = train(d, d, cfg);
  EXPECT_TRUE(same_params(a.params, b.params));
  EXPECT_TRUE(same_params(a.params, c.params));
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(a.log, c.log);
  ASSERT_EQ(a.log.size(), 4u);
  EXPECT_EQ(a.log[0].epoch, 0u);
  EXPECT_EQ(a.log[3].epoch, 3u);
}

TEST(Train, SeedChangesResult) {
  const auto d = small_synth(6, 3);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.eval_samples = 0;
  cfg.hidden = 4;
  const auto a = train(d, d, cfg);
  cfg.seed = 2;
  const auto b = train(d, d, cfg);
  EXPECT_FALSE(same_params(a.params, b.params));
  EXPECT_TRUE(a.log.empty());
}

TEST(Train, GroupFairModeLogsNoViolations) {
  const auto d = small_synth(10, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.samples = 3;
  cfg.eval_samples = 20;
  cfg.k = 5;
  cfg.delta = 0.0;
  cfg.hidden = 8;
  for (const auto& row : train(d, d, cfg).log) EXPECT_EQ(row.fairness_violation_rate, 0.0);
}

TEST(Train, ImprovesExpectedNdcg) {
  const auto d = small_synth(60, 5);
  for (TrainMode mode : {TrainMode::kPlainPl, TrainMode::kGroupFair}) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.epochs = 15;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 50;
    cfg.k = 5;
    cfg.eval_samples = 50;
    const auto r = train(d, d, cfg);
    EXPECT_GT(r.log.back().ndcg_true, r.log.front().ndcg_true + 0.05) << to_string(mode);
  }
}

TEST(TrainLog, CsvFormat) {
  std::ostringstream out;
  write_train_log(out, {{0, "valid", 0.5, 0.25, 0.0}, {1, "valid", 0.75, 1.0 / 3, 0.1}});
  EXPECT_EQ(out.str(),
            "epoch,split,ndcg_observed,ndcg_true,fairness_violation_rate\n"
            "0,valid,0.5,0.25,0\n"
            "1,valid,0.75,0.3333333333333333,0.1\n");
}

TEST(TrainMode, Strings) {
  EXPECT_EQ(train_mode_from_string("plain_pl"), TrainMode::kPlainPl);
  EXPECT_EQ(train_mode_from_string("group_fair"), TrainMode::kGroupFair);
  EXPECT_THROW(train_mode_from_string("fair"), Error);
  EXPECT_EQ(to_string(TrainMode::kGroupFair), "group_fair");
}
