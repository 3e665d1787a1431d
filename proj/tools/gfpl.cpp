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

// gfpl: train, evaluate and sample group-fair Plackett-Luce rankers, and run
// (beta, method, run) sweeps.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfpl/composition.hpp"
#include "gfpl/experiment.hpp"
#include "gfpl/fair_policy.hpp"
#include "gfpl/mlp.hpp"
#include "gfpl/parallel.hpp"
#include "gfpl/plackett_luce.hpp"
#include "gfpl/policy.hpp"
#include "gfpl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::string> dataset;
  std::optional<std::string> mode;
  std::optional<std::string> policy;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> k;
  std::optional<double> delta;
  std::optional<std::size_t> samples;
  std::optional<double> beta;
  std::optional<double> learning_rate;
  std::optional<std::size_t> eval_samples;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--dataset", c.dataset, "override the dataset path");
  cmd->add_option("--mode", c.mode, "plain_pl or group_fair");
  cmd->add_option("--policy", c.policy, "plain_pl, group_fair, gdl22 or gak19");
  cmd->add_option("--epochs", c.epochs);
  cmd->add_option("-k,--k", c.k, "ranking length");
  cmd->add_option("--delta", c.delta);
  cmd->add_option("-M,--samples", c.samples, "sampled rankings per gradient");
  cmd->add_option("--beta", c.beta, "bias on the minority group");
  cmd->add_option("--lr", c.learning_rate, "learning rate");
  cmd->add_option("--eval-samples", c.eval_samples, "rankings per query during evaluation");
}

gfpl::ExperimentConfig resolve(const Common& c) {
  auto cfg = gfpl::load_config(c.config);
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.dataset) cfg.dataset = *c.dataset;
  if (c.mode) {
    const bool policy_followed_mode = cfg.policy == gfpl::to_string(cfg.train.mode);
    cfg.train.mode = gfpl::train_mode_from_string(*c.mode);
    if (policy_followed_mode) cfg.policy = std::string(gfpl::to_string(cfg.train.mode));
  }
  if (c.policy) cfg.policy = std::string(gfpl::to_string(gfpl::policy_kind_from_string(*c.policy)));
  if (c.epochs) cfg.train.epochs = *c.epochs;
  if (c.k) cfg.train.k = *c.k;
  if (c.delta) cfg.train.delta = *c.delta;
  if (c.samples) cfg.train.samples = *c.samples;
  if (c.beta) cfg.beta = *c.beta;
  if (c.learning_rate) cfg.train.learning_rate = *c.learning_rate;
  if (c.eval_samples) cfg.eval_samples = *c.eval_samples;
  cfg.train.workers = gfpl::default_workers();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  gfpl::require(static_cast<bool>(out), gfpl::Errc::kIo, "cannot write '" + path.string() + "'");
  return out;
}

gfpl::MlpParams load_model(const std::string& path, const gfpl::DatasetManifest& d) {
  auto ckpt = gfpl::load_checkpoint(path);
  gfpl::require(ckpt.params.feature_dim() == d.feature_dim, gfpl::Errc::kIncompatibleCheckpoint,
                "checkpoint expects " + std::to_string(ckpt.params.feature_dim()) + " features, dataset has " +
                    std::to_string(d.feature_dim));
  return ckpt.params;
}

void cmd_train(const Common& c) {
  const auto cfg = resolve(c);
  const auto data = gfpl::prepare_data(gfpl::load_dataset(cfg), cfg, cfg.beta);
  const auto result = gfpl::train(data.train, data.test, cfg.train);
  fs::create_directories(c.out);
  gfpl::Checkpoint ckpt{result.params, nlohmann::json::object()};
  ckpt.metadata["mode"] = gfpl::to_string(cfg.train.mode);
  ckpt.metadata["seed"] = cfg.train.seed;
  ckpt.metadata["epochs"] = cfg.train.epochs;
  ckpt.metadata["beta"] = cfg.beta;
  gfpl::save_checkpoint(ckpt, (fs::path(c.out) / "model.json").string());
  auto log = open_out(fs::path(c.out) / "train_log.csv");
  gfpl::write_train_log(log, result.log);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cerr << "epoch " << last.epoch << ": ndcg_true " << last.ndcg_true << ", ndcg_observed "
              << last.ndcg_observed << '\n';
  }
}

void cmd_eval(const Common& c, const std::string& checkpoint) {
  const auto cfg = resolve(c);
  const auto data = gfpl::prepare_data(gfpl::load_dataset(cfg), cfg, cfg.beta);
  const auto params = load_model(checkpoint, data.test);
  gfpl::EvalOptions opt;
  opt.kind = gfpl::policy_kind_from_string(cfg.policy);
  opt.k = cfg.train.k;
  opt.delta = cfg.train.delta;
  opt.n_samples = cfg.eval_samples;
  opt.seed = gfpl::derive_seed(cfg.train.seed, {0x6576616cULL});
  opt.workers = cfg.train.workers;
  const auto ev = gfpl::evaluate_policy(params, data.test, opt);
  fs::create_directories(c.out);
  auto out = open_out(fs::path(c.out) / "metrics.csv");
  out << gfpl::kMetricCsvHeader << '\n';
  for (const auto& row : gfpl::metric_rows(ev, data.test, cfg.policy, cfg.beta, cfg.train.k, cfg.train.delta))
    gfpl::write_metric_row(out, row);
}

void cmd_sample(const Common& c, const std::string& checkpoint, const std::string& query_id, std::size_t n) {
  const auto cfg = resolve(c);
  const auto data = gfpl::prepare_data(gfpl::load_dataset(cfg), cfg, cfg.beta);
  const auto& q = data.full.find_query(query_id);
  const auto params = load_model(checkpoint, data.full);
  const auto kind = gfpl::policy_kind_from_string(cfg.policy);
  const auto constraints = gfpl::query_constraints(q, cfg.train.k, cfg.train.delta);
  const auto scores = gfpl::forward_scores(params, q);
  const auto sampler = gfpl::make_query_sampler(kind, q, scores, constraints);

  std::optional<gfpl::FairPolicy> fair;
  std::optional<gfpl::CompositionTable> table;
  if (kind == gfpl::PolicyKind::kGroupFair) fair = gfpl::FairPolicy::create(q, constraints, scores);
  if (kind == gfpl::PolicyKind::kGdl22) table = gfpl::build_count_table(constraints);
  std::vector<gfpl::ItemIndex> all(q.size());
  std::iota(all.begin(), all.end(), 0);
  auto log_prob = [&](const gfpl::RankingOutcome& r) -> gfpl::LogProb {
    switch (kind) {
      case gfpl::PolicyKind::kPlainPl: return {gfpl::pl_log_prob(r.ranked_items, all, scores), true};
      case gfpl::PolicyKind::kGroupFair: return gfpl::fair_ranking_log_prob(r, *fair);
      case gfpl::PolicyKind::kGdl22: return gfpl::mu_log_prob(r.assignment, *table);
      case gfpl::PolicyKind::kGak19: return {0.0, true};
    }
    return gfpl::LogProb::outside();
  };

  fs::create_directories(c.out);
  auto out = open_out(fs::path(c.out) / "samples.jsonl");
  gfpl::Rng rng(gfpl::derive_seed(cfg.train.seed, {0x73616d70ULL, gfpl::hash_string(q.query_id)}));
  for (std::size_t s = 0; s < n; ++s) {
    const auto r = sampler(rng);
    nlohmann::json line;
    line["query_id"] = q.query_id;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> groups;
    for (auto d : r.ranked_items) {
      ids.push_back(q.items[d].item_id);
      groups.push_back(q.items[d].group + 1);
    }
    line["items"] = ids;
    line["groups"] = groups;
    const auto lp = log_prob(r);
    line["log_prob"] = lp.in_support ? nlohmann::json(lp.value) : nlohmann::json(nullptr);
    line["fair"] = gfpl::check_ex_post_fair(r, constraints);
    out << line.dump() << '\n';
  }
}

void cmd_experiment(const Common& c) {
  const auto cfg = resolve(c);
  const auto summary = gfpl::run_experiment(cfg, c.out, gfpl::default_workers());
  std::cerr << summary.cells_run << " cells run, " << summary.cells_skipped << " already complete\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-fair Plackett-Luce learning to rank"};
  app.require_subcommand(1);

  Common train_opts;
  auto* train = app.add_subcommand("train", "train a model; writes model.json and train_log.csv");
  add_common(train, train_opts);

  Common eval_opts;
  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split; writes metrics.csv");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt)->required();

  Common sample_opts;
  std::string sample_ckpt;
  std::string query;
  std::size_t n = 1;
  auto* sample = app.add_subcommand("sample", "sample rankings for one query; writes samples.jsonl");
  add_common(sample, sample_opts);
  sample->add_option("--checkpoint", sample_ckpt)->required();
  sample->add_option("--query", query, "query id")->required();
  sample->add_option("-n,--n", n, "number of rankings")->capture_default_str();

  Common exp_opts;
  auto* experiment = app.add_subcommand("experiment", "run the configured sweep; writes cells.csv and results.csv");
  add_common(experiment, exp_opts);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) cmd_train(train_opts);
    if (*eval) cmd_eval(eval_opts, eval_ckpt);
    if (*sample) cmd_sample(sample_opts, sample_ckpt, query, n);
    if (*experiment) cmd_experiment(exp_opts);
  } catch (const gfpl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
