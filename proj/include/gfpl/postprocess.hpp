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

// Post-processing baselines that enforce the representation constraints on
// top of a trained model's scores.

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gfpl/composition.hpp"
#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

namespace detail {

// Each group's items sorted by score, descending; ties keep item order.
inline std::vector<std::vector<ItemIndex>> sorted_group_lists(std::span<const double> scores,
                                                              const QueryInstance& q) {
  require(scores.size() == q.size(), Errc::kShapeMismatch, "scores do not cover the query");
  auto lists = q.group_pools();
  for (auto& list : lists)
    std::stable_sort(list.begin(), list.end(), [&](ItemIndex a, ItemIndex b) { return scores[a] > scores[b]; });
  return lists;
}

}  // namespace detail

// Randomised re-ranker: a fair group assignment is drawn, then each group's
// ranks are filled top-down with that group's items in score order.
class Gdl22Reranker {
 public:
  Gdl22Reranker(std::span<const double> scores, const QueryInstance& q, const FairnessConstraints& c,
                CompositionCache* cache = nullptr) {
    const FairnessConstraints valid = validate_constraints(c, q);
    table_ = cache ? cache->get(valid) : std::make_shared<const CompositionTable>(build_count_table(valid));
    lists_ = detail::sorted_group_lists(scores, q);
  }

  RankingOutcome operator()(Rng& rng) const {
    RankingOutcome out;
    out.assignment = sample_fair_assignment(*table_, rng);
    std::vector<std::size_t> next(lists_.size(), 0);
    out.ranked_items.reserve(out.assignment.size());
    for (GroupIndex g : out.assignment.slots) out.ranked_items.push_back(lists_[g][next[g]++]);
    return out;
  }

 private:
  std::shared_ptr<const CompositionTable> table_;
  std::vector<std::vector<ItemIndex>> lists_;
};

inline RankingOutcome gdl22_postprocess(std::span<const double> scores, const QueryInstance& q,
                                        const FairnessConstraints& c, Rng& rng) {
  return Gdl22Reranker(scores, q, c)(rng);
}

// Deterministic greedy re-ranker. At rank i (1-based) group j is "due" while
// its count is below ceil(L_j i / k) and "capped" once it reaches
// min(U_j, floor(U_j i / k) + 1). A due group's best item is placed first
// (the best next score wins among several due groups); otherwise the best
// remaining item of an uncapped group is placed.
//
// A placement is only taken if the remaining ranks can still meet every lower
// bound and be filled within the upper bounds. When the greedy choice fails
// that test, the group with the largest outstanding lower-bound deficit is
// forced instead, which always completes a feasible ranking.
inline RankingOutcome gak19_detgreedy(std::span<const double> scores, const QueryInstance& q,
                                      const FairnessConstraints& c) {
  const FairnessConstraints valid = validate_constraints(c, q);
  const auto lists = detail::sorted_group_lists(scores, q);
  const std::size_t k = valid.k;
  const std::size_t groups = valid.num_groups();
  std::vector<std::size_t> count(groups, 0);

  auto has_items = [&](GroupIndex j) { return count[j] < lists[j].size(); };
  auto next_score = [&](GroupIndex j) { return scores[lists[j][count[j]]]; };
  // Can ranks i+1..k be completed after one more item of group j at rank i?
  auto completable_after = [&](GroupIndex j, std::size_t i) {
    if (!has_items(j) || count[j] + 1 > valid.upper[j]) return false;
    const std::size_t left = k - i;
    std::size_t deficit = 0;
    std::size_t capacity = 0;
    for (GroupIndex g = 0; g < groups; ++g) {
      const std::size_t n = count[g] + (g == j ? 1 : 0);
      deficit += valid.lower[g] > n ? valid.lower[g] - n : 0;
      capacity += std::min(valid.upper[g], lists[g].size()) - std::min(n, valid.upper[g]);
    }
    return deficit <= left && capacity >= left;
  };
  auto best_of = [&](auto&& eligible) {
    std::size_t best = groups;
    for (GroupIndex g = 0; g < groups; ++g) {
      if (!eligible(g)) continue;
      if (best == groups || next_score(g) > next_score(best)) best = g;
    }
    return best;
  };

  RankingOutcome out;
  for (std::size_t i = 1; i <= k; ++i) {
    auto due = [&](GroupIndex g) { return count[g] < (valid.lower[g] * i + k - 1) / k; };
    auto uncapped = [&](GroupIndex g) {
      return count[g] < std::min(valid.upper[g], valid.upper[g] * i / k + 1);
    };
    bool any_due = false;
    for (GroupIndex g = 0; g < groups; ++g) any_due = any_due || due(g);

    std::size_t pick = any_due ? best_of([&](GroupIndex g) { return due(g) && completable_after(g, i); })
                               : best_of([&](GroupIndex g) { return uncapped(g) && completable_after(g, i); });
    if (pick == groups) {
      std::size_t best_deficit = 0;
      for (GroupIndex g = 0; g < groups; ++g) {
        if (!completable_after(g, i)) continue;
        const std::size_t deficit = valid.lower[g] > count[g] ? valid.lower[g] - count[g] : 0;
        if (pick == groups || deficit > best_deficit ||
            (deficit == best_deficit && next_score(g) > next_score(pick))) {
          pick = g;
          best_deficit = deficit;
        }
      }
    }
    require(pick != groups, Errc::kConstructionFailure, "greedy re-ranking stuck at rank " + std::to_string(i));
    out.ranked_items.push_back(lists[pick][count[pick]]);
    out.assignment.slots.push_back(pick);
    ++count[pick];
  }
  return out;
}

}  // namespace gfpl
