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

// The group-fair Plackett-Luce policy: draw a fair group assignment, then fill
// each group's ranks with a Plackett-Luce draw restricted to that group.

#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gfpl/composition.hpp"
#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/plackett_luce.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

class FairPolicy {
 public:
  FairPolicy(std::shared_ptr<const CompositionTable> table, ScoreVector scores, std::vector<GroupIndex> group_of)
      : table_(std::move(table)), scores_(std::move(scores)), group_of_(std::move(group_of)) {
    require(table_ != nullptr, Errc::kInvalidArgument, "missing composition table");
    require(scores_.size() == group_of_.size(), Errc::kShapeMismatch, "scores and groups differ in length");
    pools_.resize(table_->num_groups());
    for (ItemIndex d = 0; d < group_of_.size(); ++d) {
      require(group_of_[d] < pools_.size(), Errc::kMissingGroup, "item group outside constraints");
      pools_[group_of_[d]].push_back(d);
    }
    weights_.resize(pools_.size());
    for (std::size_t j = 0; j < pools_.size(); ++j) {
      require(pools_[j].size() >= constraints().lower[j], Errc::kGroupTooSmall,
              "group " + std::to_string(j + 1) + " smaller than its lower bound");
      if (!pools_[j].empty()) weights_[j] = make_pool_weights(pools_[j], scores_);
    }
  }

  // Validates the constraints against the query before building the policy.
  static FairPolicy create(const QueryInstance& q, const FairnessConstraints& c, ScoreVector scores,
                           CompositionCache* cache = nullptr) {
    const FairnessConstraints valid = validate_constraints(c, q);
    auto table = cache ? cache->get(valid) : std::make_shared<const CompositionTable>(build_count_table(valid));
    return FairPolicy(std::move(table), std::move(scores), q.groups());
  }

  FairPolicy with_scores(ScoreVector scores) const { return FairPolicy(table_, std::move(scores), group_of_); }

  const FairnessConstraints& constraints() const { return table_->constraints(); }
  const CompositionTable& table() const { return *table_; }
  const ScoreVector& scores() const { return scores_; }
  const std::vector<GroupIndex>& group_of() const { return group_of_; }
  const std::vector<std::vector<ItemIndex>>& pools() const { return pools_; }
  const PoolWeights& weights(GroupIndex j) const { return weights_.at(j); }
  std::size_t k() const { return constraints().k; }
  std::size_t num_items() const { return scores_.size(); }
  std::size_t num_groups() const { return pools_.size(); }

 private:
  std::shared_ptr<const CompositionTable> table_;
  ScoreVector scores_;
  std::vector<GroupIndex> group_of_;
  std::vector<std::vector<ItemIndex>> pools_;
  std::vector<PoolWeights> weights_;
};

// One group's share of a fair draw. ranks are the 0-based global ranks
// psi_j(gamma), ascending; positions index into the group's pool in draw
// order; denominators are the shifted softmax sums used at each draw.
struct GroupDraw {
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> positions;
  std::vector<double> denominators;
};

struct FairDraw {
  RankingOutcome outcome;
  std::vector<GroupDraw> groups;
};

// Fills a pre-sized draw in place so repeated sampling reuses buffers.
inline void draw_fair_into(const FairPolicy& policy, Rng& rng, FairDraw& draw) {
  const GroupAssignment gamma = sample_fair_assignment(policy.table(), rng);
  const std::size_t k = gamma.size();
  draw.groups.resize(policy.num_groups());
  for (auto& g : draw.groups) g.ranks.clear();
  for (std::size_t i = 0; i < k; ++i) draw.groups[gamma.slots[i]].ranks.push_back(i);
  draw.outcome.ranked_items.assign(k, 0);
  for (std::size_t j = 0; j < policy.num_groups(); ++j) {
    auto& g = draw.groups[j];
    if (g.ranks.empty()) {
      g.positions.clear();
      g.denominators.clear();
      continue;
    }
    const PoolWeights& pw = policy.weights(j);
    detail::sample_positions(pw, g.ranks.size(), rng, g.positions, g.denominators);
    // t-th draw of the group goes to the t-th smallest rank of the group.
    for (std::size_t t = 0; t < g.ranks.size(); ++t) draw.outcome.ranked_items[g.ranks[t]] = pw.items[g.positions[t]];
  }
  draw.outcome.assignment = gamma;
}

inline FairDraw draw_fair(const FairPolicy& policy, Rng& rng) {
  FairDraw draw;
  draw_fair_into(policy, rng, draw);
  return draw;
}

inline RankingOutcome sample_fair_ranking(const FairPolicy& policy, Rng& rng) {
  return draw_fair(policy, rng).outcome;
}

// Splits a ranking into per-group subsequences in rank order.
inline std::vector<std::vector<ItemIndex>> split_by_group(std::span<const ItemIndex> ranked,
                                                          std::span<const GroupIndex> group_of,
                                                          std::size_t num_groups) {
  std::vector<std::vector<ItemIndex>> parts(num_groups);
  for (ItemIndex d : ranked) {
    require(d < group_of.size(), Errc::kItemNotInPool, "item " + std::to_string(d) + " not in query");
    parts.at(group_of[d]).push_back(d);
  }
  return parts;
}

inline LogProb fair_ranking_log_prob(const RankingOutcome& sigma, const FairPolicy& policy) {
  require(sigma.size() == policy.k(), Errc::kLengthMismatch,
          "ranking length " + std::to_string(sigma.size()) + " != k=" + std::to_string(policy.k()));
  const auto parts = split_by_group(sigma.ranked_items, policy.group_of(), policy.num_groups());
  GroupAssignment gamma;
  for (ItemIndex d : sigma.ranked_items) gamma.slots.push_back(policy.group_of()[d]);
  require(sigma.assignment.slots.empty() || sigma.assignment == gamma, Errc::kShapeMismatch,
          "ranking's group labels disagree with item groups");
  const LogProb mu = mu_log_prob(gamma, policy.table());
  if (!mu.in_support) {
    // still reject malformed rankings rather than silently calling them unfair
    for (std::size_t j = 0; j < parts.size(); ++j)
      if (!parts[j].empty()) detail::sigma_positions(parts[j], policy.pools()[j], policy.num_items());
    return LogProb::outside();
  }
  double lp = mu.value;
  for (std::size_t j = 0; j < parts.size(); ++j)
    if (!parts[j].empty()) lp += pl_log_prob(parts[j], policy.pools()[j], policy.scores());
  return {lp, true};
}

inline double ranking_reward(std::span<const ItemIndex> ranked, std::span<const double> relevance,
                             const PositionDiscounts& theta) {
  require(ranked.size() <= theta.size(), Errc::kLengthMismatch, "ranking longer than discount vector");
  double r = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) r += theta.theta[i] * relevance[ranked[i]];
  return r;
}

inline constexpr EnumerationLimits kFairEnumerationLimits{8, 4};

// Every ex-post fair ranking of the policy's query, lexicographic.
inline std::vector<RankingOutcome> enumerate_fair_rankings(const FairPolicy& policy,
                                                           EnumerationLimits limits = kFairEnumerationLimits) {
  std::vector<ItemIndex> all(policy.num_items());
  std::iota(all.begin(), all.end(), 0);
  std::vector<RankingOutcome> out;
  for (auto& seq : enumerate_rankings(all, policy.k(), limits)) {
    RankingOutcome r = make_outcome(std::move(seq), policy.group_of());
    if (check_ex_post_fair(r, policy.constraints())) out.push_back(std::move(r));
  }
  return out;
}

// Expected sum_i theta_i rho_sigma(i) under the policy, by enumeration.
inline double exact_fair_relevance(const FairPolicy& policy, std::span<const double> relevance,
                                   const PositionDiscounts& theta, EnumerationLimits limits = kFairEnumerationLimits) {
  require(relevance.size() == policy.num_items(), Errc::kShapeMismatch, "relevance does not cover the query");
  require(theta.size() == policy.k(), Errc::kLengthMismatch, "discounts must have length k");
  double total = 0.0;
  for (const auto& sigma : enumerate_fair_rankings(policy, limits))
    total += fair_ranking_log_prob(sigma, policy).prob() * ranking_reward(sigma.ranked_items, relevance, theta);
  return total;
}

struct RejectionResult {
  RankingOutcome ranking;
  std::size_t trials = 0;
};

// Plain PL over all items, redrawn until a fair ranking appears.
inline RejectionResult rejection_sample_baseline(std::span<const double> scores, const FairnessConstraints& c,
                                                 std::span<const GroupIndex> group_of, Rng& rng,
                                                 std::size_t max_trials) {
  require(max_trials >= 1, Errc::kInvalidArgument, "max_trials must be at least 1");
  require(scores.size() == group_of.size(), Errc::kShapeMismatch, "scores and groups differ in length");
  std::vector<ItemIndex> all(scores.size());
  std::iota(all.begin(), all.end(), 0);
  const PoolWeights pw = make_pool_weights(all, scores);
  std::vector<std::size_t> picked;
  std::vector<double> z;
  std::vector<std::size_t> counts(c.num_groups());
  for (std::size_t trial = 1; trial <= max_trials; ++trial) {
    detail::sample_positions(pw, c.k, rng, picked, z);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t p : picked) ++counts.at(group_of[pw.items[p]]);
    if (within_bounds(counts, c)) {
      std::vector<ItemIndex> ranked;
      for (std::size_t p : picked) ranked.push_back(pw.items[p]);
      return {make_outcome(std::move(ranked), group_of), trial};
    }
  }
  fail(Errc::kExhausted, "no fair ranking in " + std::to_string(max_trials) + " draws");
}

}  // namespace gfpl
