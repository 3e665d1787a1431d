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

#pragma once

// SGD training of the score model. Per query the score gradient comes from
// the group-fair estimator (group_fair) or from unconstrained PL-Rank-3
// (plain_pl) and is chained through the network; parameters ascend the
// expected NDCG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gfpl/composition.hpp"
#include "gfpl/core.hpp"
#include "gfpl/dataset.hpp"
#include "gfpl/error.hpp"
#include "gfpl/fair_policy.hpp"
#include "gfpl/gradient.hpp"
#include "gfpl/metrics.hpp"
#include "gfpl/mlp.hpp"
#include "gfpl/parallel.hpp"
#include "gfpl/policy.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

enum class TrainMode { kPlainPl, kGroupFair };
enum class RelevanceSource { kObserved, kTrue };

inline std::string_view to_string(TrainMode m) { return m == TrainMode::kPlainPl ? "plain_pl" : "group_fair"; }

inline TrainMode train_mode_from_string(std::string_view s) {
  if (s == "plain_pl") return TrainMode::kPlainPl;
  if (s == "group_fair") return TrainMode::kGroupFair;
  fail(Errc::kInvalidArgument, "unknown mode '" + std::string(s) + "' (expected plain_pl or group_fair)");
}

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 512;  // items per update; whole queries only
  std::size_t epochs = 100;
  std::size_t samples = 25;  // M
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::kGroupFair;
  RelevanceSource relevance = RelevanceSource::kObserved;
  std::size_t k = 10;
  double delta = 0.05;
  std::size_t eval_samples = 100;  // per validation query per epoch; 0 disables the log
  std::size_t hidden = kDefaultHidden;
  std::size_t workers = 1;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;
  double ndcg_observed = 0.0;
  double ndcg_true = 0.0;
  double fairness_violation_rate = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainResult {
  MlpParams params;
  std::vector<EpochLog> log;
};

inline constexpr const char* kTrainLogHeader = "epoch,split,ndcg_observed,ndcg_true,fairness_violation_rate";

inline void write_train_log(std::ostream& out, const std::vector<EpochLog>& log) {
  out << kTrainLogHeader << '\n';
  for (const auto& row : log)
    out << row.epoch << ',' << row.split << ',' << detail::format_double(row.ndcg_observed) << ','
        << detail::format_double(row.ndcg_true) << ',' << detail::format_double(row.fairness_violation_rate) << '\n';
}

inline PolicyKind policy_for(TrainMode mode) {
  return mode == TrainMode::kGroupFair ? PolicyKind::kGroupFair : PolicyKind::kPlainPl;
}

// Score gradient of the expected NDCG for one query (discounts divided by the
// query's ideal DCG under the training relevance).
inline GradientVector query_score_gradient(const QueryInstance& q, const FairnessConstraints& c,
                                           const ScoreVector& scores, std::span<const double> relevance,
                                           const TrainConfig& cfg, Rng& rng, CompositionCache* cache) {
  const auto theta = PositionDiscounts::ndcg(c.k);
  const double ideal = ideal_dcg(relevance, theta);
  if (ideal <= 0.0) return GradientVector(q.size(), 0.0);
  const auto scaled = theta.scaled(1.0 / ideal);
  if (cfg.mode == TrainMode::kPlainPl) return plrank3_gradient(scores, relevance, scaled, cfg.samples, rng);
  const FairPolicy policy = FairPolicy::create(q, c, scores, cache);
  return algorithm1_gradient(policy, relevance, scaled, cfg.samples, rng);
}

namespace detail {

inline void check_finite(std::span<const double> values, std::size_t epoch, const std::string& query,
                         const char* what) {
  for (double v : values)
    require(std::isfinite(v), Errc::kNonFiniteLoss,
            std::string(what) + " not finite at epoch " + std::to_string(epoch) + ", query " + query);
}

}  // namespace detail

inline EpochLog validation_entry(const MlpParams& params, const DatasetManifest& valid, const TrainConfig& cfg,
                                 std::size_t epoch, CompositionCache* cache) {
  EvalOptions opt;
  opt.kind = policy_for(cfg.mode);
  opt.k = cfg.k;
  opt.delta = cfg.delta;
  opt.n_samples = cfg.eval_samples;
  opt.seed = derive_seed(cfg.seed, {0x7661'6c69'64ULL, epoch});
  opt.workers = cfg.workers;
  const auto ev = evaluate_policy(params, valid, opt, cache);
  return {epoch, "valid", ev.ndcg_observed.mean, ev.ndcg_true.mean, ev.fairness_violation_rate};
}

// Trains on `train` and logs expected NDCG on `valid` after every epoch
// (epoch 0 is the initial model). Deterministic for a fixed config.
inline TrainResult train(const DatasetManifest& train_set, const DatasetManifest& valid, const TrainConfig& cfg) {
  require(cfg.learning_rate > 0.0, Errc::kInvalidArgument, "learning_rate must be positive");
  require(cfg.samples >= 1, Errc::kInvalidArgument, "M must be at least 1");
  require(cfg.k >= 1, Errc::kInvalidArgument, "k must be at least 1");
  require(!train_set.queries.empty(), Errc::kEmptyDataset, "no training queries");

  const auto constraints = dataset_constraints(train_set, cfg.k, cfg.delta);
  CompositionCache cache;
  TrainResult result;
  result.params = MlpParams::init(train_set.feature_dim, derive_seed(cfg.seed, {0x696e6974ULL}), cfg.hidden);
  auto& params = result.params;
  const bool log_enabled = cfg.eval_samples > 0 && !valid.queries.empty();
  if (log_enabled) result.log.push_back(validation_entry(params, valid, cfg, 0, &cache));

  const std::size_t nq = train_set.queries.size();
  std::vector<std::size_t> order(nq);
  std::vector<MlpGradients> per_query(nq);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {0x7368756666ULL, epoch}));
    for (std::size_t i = nq; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }
    std::size_t start = 0;
    while (start < nq) {
      std::size_t end = start;
      std::size_t items = 0;
      while (end < nq && items < cfg.batch_size) items += train_set.queries[order[end++]].size();
      // parameters are fixed for the whole batch
      parallel_for(end - start, cfg.workers, [&](std::size_t b) {
        const std::size_t qi = order[start + b];
        const auto& q = train_set.queries[qi];
        const ScoreVector scores = forward_scores(params, q);
        detail::check_finite(scores, epoch, q.query_id, "score");
        const auto relevance =
            cfg.relevance == RelevanceSource::kTrue ? q.relevance_true() : q.relevance_observed();
        Rng rng(derive_seed(cfg.seed, {epoch, hash_string(q.query_id)}));
        const auto grad = query_score_gradient(q, constraints[qi], scores, relevance, cfg, rng, &cache);
        detail::check_finite(grad, epoch, q.query_id, "score gradient");
        per_query[qi] = backward_chain(params, q, grad);
      });
      MlpGradients step = MlpGradients::zeros(params.feature_dim(), params.hidden());
      for (std::size_t b = start; b < end; ++b) step.add_scaled(per_query[order[b]], 1.0);
      params.add_scaled(step, cfg.learning_rate);
      require(params.all_finite(), Errc::kNonFiniteLoss, "parameters diverged at epoch " + std::to_string(epoch));
      start = end;
    }
    if (log_enabled) result.log.push_back(validation_entry(params, valid, cfg, epoch, &cache));
  }
  return result;
}

}  // namespace gfpl
