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

// Score gradients of the expected fair relevance.
//
// For one sampled sub-ranking of group j, placed on ranks r_1 < ... < r_n of
// the full ranking, with rewards q_t = theta[r_t] * rho(sigma_t) and
// denominators Z_t, the per-sample PL-Rank-3 term for item d is
//
//   PR_t(d) + w_d * (rho_d * DR_t(d) - RI_t(d))
//
//   PR_t = sum_{t' > t} q_t'              (reward strictly after d)
//   DR_t = sum_{t' <= t} theta[r_t'] / Z_t'
//   RI_t = sum_{t' <= t} (sum_{t'' >= t'} q_t'') / Z_t'
//
// where t is d's within-group position, or n for items left unplaced (PR = 0).
// w_d = exp(m(d)) and Z_t share the same max shift, so only their ratio is
// ever formed. Averaging over fair draws and summing over groups gives an
// unbiased estimate of dR/dm(d).

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/fair_policy.hpp"
#include "gfpl/plackett_luce.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

using GradientVector = std::vector<double>;

struct PerSampleStats {
  std::vector<double> placed_reward;
  std::vector<double> future_reward;
  std::vector<double> denominators;
  std::vector<double> discount_ratio;
  std::vector<double> reward_ratio;
};

inline PerSampleStats per_sample_stats(std::span<const std::size_t> ranks, std::span<const ItemIndex> placed,
                                       std::span<const double> denominators, std::span<const double> relevance,
                                       const PositionDiscounts& theta) {
  const std::size_t n = ranks.size();
  require(placed.size() == n && denominators.size() == n, Errc::kShapeMismatch,
          "ranks, placed items and denominators must have equal length");
  PerSampleStats s;
  s.placed_reward.resize(n);
  s.future_reward.resize(n);
  s.denominators.assign(denominators.begin(), denominators.end());
  s.discount_ratio.resize(n);
  s.reward_ratio.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    require(ranks[t] < theta.size(), Errc::kShapeMismatch, "rank beyond discount vector");
    require(t == 0 || ranks[t] > ranks[t - 1], Errc::kShapeMismatch, "ranks must be ascending");
    s.placed_reward[t] = theta.theta[ranks[t]] * relevance[placed[t]];
  }
  double suffix = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    s.future_reward[t] = suffix;
    suffix += s.placed_reward[t];
  }
  double dr = 0.0;
  double ri = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double z = s.denominators[t];
    dr += theta.theta[ranks[t]] / z;
    ri += (s.future_reward[t] + s.placed_reward[t]) / z;
    s.discount_ratio[t] = dr;
    s.reward_ratio[t] = ri;
  }
  return s;
}

namespace detail {

struct GradientScratch {
  std::vector<std::size_t> placed_at;
  std::vector<double> future;
  std::vector<double> dr;
  std::vector<double> ri;
};

// Adds scale * (per-sample term) for every item of the pool into grad.
inline void accumulate_plrank3(const PoolWeights& pw, std::span<const std::size_t> ranks,
                               std::span<const std::size_t> positions, std::span<const double> denominators,
                               std::span<const double> relevance, std::span<const double> theta,
                               std::span<double> grad, double scale, GradientScratch& scratch) {
  const std::size_t n = ranks.size();
  constexpr std::size_t kUnplaced = std::numeric_limits<std::size_t>::max();
  auto& placed_at = scratch.placed_at;
  placed_at.assign(pw.size(), kUnplaced);
  auto& future = scratch.future;
  auto& dr = scratch.dr;
  auto& ri = scratch.ri;
  future.resize(n);
  dr.resize(n);
  ri.resize(n);
  double suffix = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    future[t] = suffix;
    suffix += theta[ranks[t]] * relevance[pw.items[positions[t]]];
  }
  double d_acc = 0.0;
  double r_acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    placed_at[positions[t]] = t;
    const double z = denominators[t];
    const double q = theta[ranks[t]] * relevance[pw.items[positions[t]]];
    d_acc += theta[ranks[t]] / z;
    r_acc += (future[t] + q) / z;
    dr[t] = d_acc;
    ri[t] = r_acc;
  }
  for (std::size_t p = 0; p < pw.size(); ++p) {
    const ItemIndex d = pw.items[p];
    const double w = pw.weights[p];
    const std::size_t t = placed_at[p];
    double term;
    if (t == kUnplaced) {
      term = n == 0 ? 0.0 : w * (relevance[d] * d_acc - r_acc);
    } else {
      term = future[t] + w * (relevance[d] * dr[t] - ri[t]);
    }
    grad[d] += scale * term;
  }
}

inline void check_gradient_inputs(const FairPolicy& policy, std::span<const double> relevance,
                                  const PositionDiscounts& theta, std::size_t samples) {
  require(samples >= 1, Errc::kInvalidArgument, "need at least one sample");
  require(relevance.size() == policy.num_items(), Errc::kShapeMismatch, "relevance does not cover the query");
  require(theta.size() == policy.k(), Errc::kLengthMismatch, "discounts must have length k");
}

}  // namespace detail

// Single-sample contribution for every item of one group's pool, returned in
// pool order. `ranks` are the global 0-based ranks the group occupies and
// `sub_ranking` the items placed there, in rank order.
inline std::vector<double> plrank3_group_gradient(std::span<const ItemIndex> sub_ranking,
                                                  std::span<const std::size_t> ranks,
                                                  std::span<const ItemIndex> pool, std::span<const double> scores,
                                                  std::span<const double> relevance, const PositionDiscounts& theta) {
  require(sub_ranking.size() == ranks.size(), Errc::kShapeMismatch, "sub-ranking and rank set differ in size");
  require(relevance.size() == scores.size(), Errc::kShapeMismatch, "relevance and scores differ in length");
  for (std::size_t t = 0; t < ranks.size(); ++t) {
    require(ranks[t] < theta.size(), Errc::kShapeMismatch, "rank beyond discount vector");
    require(t == 0 || ranks[t] > ranks[t - 1], Errc::kShapeMismatch, "ranks must be ascending");
  }
  const PoolWeights pw = make_pool_weights(pool, scores);
  const auto positions = detail::sigma_positions(sub_ranking, pool, scores.size());
  const Denominators z = detail::denominators_from_positions(pw, positions);
  std::vector<double> grad(scores.size(), 0.0);
  detail::GradientScratch scratch;
  detail::accumulate_plrank3(pw, ranks, positions, z.shifted, relevance, theta.theta, grad, 1.0, scratch);
  std::vector<double> out(pool.size());
  for (std::size_t p = 0; p < pool.size(); ++p) out[p] = grad[pool[p]];
  return out;
}

// Draws `samples` fair rankings (one group assignment and one sub-ranking per
// group each) and averages the per-sample terms.
inline GradientVector algorithm1_gradient(const FairPolicy& policy, std::span<const double> relevance,
                                          const PositionDiscounts& theta, std::size_t samples, Rng& rng) {
  detail::check_gradient_inputs(policy, relevance, theta, samples);
  GradientVector grad(policy.num_items(), 0.0);
  const double scale = 1.0 / static_cast<double>(samples);
  FairDraw draw;
  detail::GradientScratch scratch;
  for (std::size_t s = 0; s < samples; ++s) {
    draw_fair_into(policy, rng, draw);
    for (std::size_t j = 0; j < policy.num_groups(); ++j) {
      const GroupDraw& g = draw.groups[j];
      if (g.ranks.empty()) continue;  // R_j is identically zero for this draw
      detail::accumulate_plrank3(policy.weights(j), g.ranks, g.positions, g.denominators, relevance, theta.theta,
                                 grad, scale, scratch);
    }
  }
  return grad;
}

inline GradientVector algorithm1_gradient(const QueryInstance& q, ScoreVector scores, const FairnessConstraints& c,
                                          std::span<const double> relevance, const PositionDiscounts& theta,
                                          std::size_t samples, Rng& rng) {
  const FairPolicy policy = FairPolicy::create(q, c, std::move(scores));
  return algorithm1_gradient(policy, relevance, theta, samples, rng);
}

// Unconstrained PL-Rank-3 over the whole item set; the ranking length is
// theta.size().
inline GradientVector plrank3_gradient(std::span<const double> scores, std::span<const double> relevance,
                                       const PositionDiscounts& theta, std::size_t samples, Rng& rng) {
  require(samples >= 1, Errc::kInvalidArgument, "need at least one sample");
  require(relevance.size() == scores.size(), Errc::kShapeMismatch, "relevance and scores differ in length");
  std::vector<ItemIndex> all(scores.size());
  std::iota(all.begin(), all.end(), 0);
  const PoolWeights pw = make_pool_weights(all, scores);
  const std::size_t k = theta.size();
  std::vector<std::size_t> ranks(k);
  std::iota(ranks.begin(), ranks.end(), 0);
  GradientVector grad(scores.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(samples);
  std::vector<std::size_t> positions;
  std::vector<double> z;
  detail::GradientScratch scratch;
  for (std::size_t s = 0; s < samples; ++s) {
    detail::sample_positions(pw, k, rng, positions, z);
    detail::accumulate_plrank3(pw, ranks, positions, z, relevance, theta.theta, grad, scale, scratch);
  }
  return grad;
}

// Score-function estimator: reward times the score-gradient of the log
// probability. The assignment probability does not depend on the scores, so
// only the per-group PL factors contribute.
inline GradientVector reinforce_gradient(const FairPolicy& policy, std::span<const double> relevance,
                                         const PositionDiscounts& theta, std::size_t samples, Rng& rng) {
  detail::check_gradient_inputs(policy, relevance, theta, samples);
  GradientVector grad(policy.num_items(), 0.0);
  const double scale = 1.0 / static_cast<double>(samples);
  FairDraw draw;
  std::vector<double> inv_prefix;
  std::vector<std::size_t> placed_at;
  constexpr std::size_t kUnplaced = std::numeric_limits<std::size_t>::max();
  for (std::size_t s = 0; s < samples; ++s) {
    draw_fair_into(policy, rng, draw);
    const double reward = ranking_reward(draw.outcome.ranked_items, relevance, theta) * scale;
    for (std::size_t j = 0; j < policy.num_groups(); ++j) {
      const GroupDraw& g = draw.groups[j];
      if (g.ranks.empty()) continue;
      const PoolWeights& pw = policy.weights(j);
      const std::size_t n = g.ranks.size();
      inv_prefix.resize(n);
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        acc += 1.0 / g.denominators[t];
        inv_prefix[t] = acc;
      }
      placed_at.assign(pw.size(), kUnplaced);
      for (std::size_t t = 0; t < n; ++t) placed_at[g.positions[t]] = t;
      for (std::size_t p = 0; p < pw.size(); ++p) {
        const std::size_t t = placed_at[p];
        const double score_grad =
            t == kUnplaced ? -pw.weights[p] * inv_prefix[n - 1] : 1.0 - pw.weights[p] * inv_prefix[t];
        grad[pw.items[p]] += reward * score_grad;
      }
    }
  }
  return grad;
}

// Central differences of the enumerated expected relevance.
inline GradientVector finite_difference_oracle(const FairPolicy& policy, std::span<const double> relevance,
                                               const PositionDiscounts& theta, double h = 1e-5,
                                               EnumerationLimits limits = kFairEnumerationLimits) {
  require(h > 0.0, Errc::kInvalidArgument, "step must be positive");
  GradientVector grad(policy.num_items(), 0.0);
  for (ItemIndex d = 0; d < policy.num_items(); ++d) {
    ScoreVector plus = policy.scores();
    ScoreVector minus = policy.scores();
    plus[d] += h;
    minus[d] -= h;
    const double up = exact_fair_relevance(policy.with_scores(std::move(plus)), relevance, theta, limits);
    const double down = exact_fair_relevance(policy.with_scores(std::move(minus)), relevance, theta, limits);
    grad[d] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace gfpl
