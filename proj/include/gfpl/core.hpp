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

// Shared domain types and the representation-constraint algebra.
//
// Conventions: group indices are 0-based in memory (the ranking file format
// uses 1-based gid tokens and converts at the boundary). Items are addressed
// by their position inside the owning QueryInstance, so score and relevance
// vectors are plain dense arrays indexed by item.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gfpl/error.hpp"

namespace gfpl {

using ItemIndex = std::size_t;
using GroupIndex = std::size_t;

struct Item {
  std::size_t item_id = 0;
  std::vector<double> features;
  double raw_label = 0.0;
  double relevance_true = 0.0;
  double relevance_observed = 0.0;
  GroupIndex group = 0;
};

struct QueryInstance {
  std::string query_id;
  std::vector<Item> items;
  std::vector<std::size_t> group_sizes;

  std::size_t size() const { return items.size(); }
  std::size_t num_groups() const { return group_sizes.size(); }

  std::vector<double> relevance_true() const {
    std::vector<double> out(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) out[i] = items[i].relevance_true;
    return out;
  }

  std::vector<double> relevance_observed() const {
    std::vector<double> out(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) out[i] = items[i].relevance_observed;
    return out;
  }

  std::vector<GroupIndex> groups() const {
    std::vector<GroupIndex> out(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) out[i] = items[i].group;
    return out;
  }

  // Item indices of each group, in item order.
  std::vector<std::vector<ItemIndex>> group_pools() const {
    std::vector<std::vector<ItemIndex>> pools(num_groups());
    for (std::size_t i = 0; i < items.size(); ++i) pools.at(items[i].group).push_back(i);
    return pools;
  }
};

// Recomputes group_sizes from the items; `num_groups` may exceed the largest
// group present so that every query of a dataset shares the same group count.
inline void refresh_group_sizes(QueryInstance& q, std::size_t num_groups) {
  q.group_sizes.assign(num_groups, 0);
  for (const auto& item : q.items) {
    require(item.group < num_groups, Errc::kMissingGroup,
            "item group " + std::to_string(item.group + 1) + " outside 1.." +
                std::to_string(num_groups));
    ++q.group_sizes[item.group];
  }
}

struct FairnessConstraints {
  std::size_t k = 0;
  std::vector<std::size_t> lower;
  std::vector<std::size_t> upper;

  std::size_t num_groups() const { return lower.size(); }

  static FairnessConstraints vacuous(std::size_t k, std::size_t num_groups) {
    return {k, std::vector<std::size_t>(num_groups, 0), std::vector<std::size_t>(num_groups, k)};
  }

  friend bool operator==(const FairnessConstraints&, const FairnessConstraints&) = default;
};

struct GroupAssignment {
  std::vector<GroupIndex> slots;

  std::size_t size() const { return slots.size(); }

  std::vector<std::size_t> counts(std::size_t num_groups) const {
    std::vector<std::size_t> out(num_groups, 0);
    for (GroupIndex g : slots) {
      require(g < num_groups, Errc::kShapeMismatch, "group label outside [0, num_groups)");
      ++out[g];
    }
    return out;
  }

  friend bool operator==(const GroupAssignment&, const GroupAssignment&) = default;
};

struct RankingOutcome {
  std::vector<ItemIndex> ranked_items;
  GroupAssignment assignment;

  std::size_t size() const { return ranked_items.size(); }

  friend bool operator==(const RankingOutcome&, const RankingOutcome&) = default;
};

inline RankingOutcome make_outcome(std::vector<ItemIndex> ranked, std::span<const GroupIndex> group_of) {
  RankingOutcome out;
  out.assignment.slots.reserve(ranked.size());
  for (ItemIndex d : ranked) {
    require(d < group_of.size(), Errc::kItemNotInPool, "ranked item outside the query");
    out.assignment.slots.push_back(group_of[d]);
  }
  out.ranked_items = std::move(ranked);
  return out;
}

struct PositionDiscounts {
  std::vector<double> theta;

  std::size_t size() const { return theta.size(); }

  // theta_i = 1 / log2(i + 1) for ranks i = 1..k.
  static PositionDiscounts ndcg(std::size_t k) {
    PositionDiscounts d;
    d.theta.resize(k);
    for (std::size_t i = 0; i < k; ++i) d.theta[i] = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return d;
  }

  PositionDiscounts scaled(double factor) const {
    PositionDiscounts d = *this;
    for (double& t : d.theta) t *= factor;
    return d;
  }
};

// Log-probability with an explicit outside-support flag, so rankings that a
// policy can never emit do not leak -inf or NaN into sums.
struct LogProb {
  double value = 0.0;
  bool in_support = true;

  static LogProb outside() { return {-std::numeric_limits<double>::infinity(), false}; }
  double prob() const { return in_support ? std::exp(value) : 0.0; }
};

namespace detail {

inline void check_shape(const FairnessConstraints& c) {
  require(c.lower.size() == c.upper.size(), Errc::kShapeMismatch, "lower/upper length differ");
  require(!c.lower.empty(), Errc::kShapeMismatch, "constraints need at least one group");
  require(c.k > 0, Errc::kInvalidArgument, "ranking length k must be positive");
}

inline bool feasible_sums(const FairnessConstraints& c) {
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (std::size_t j = 0; j < c.num_groups(); ++j) {
    if (c.lower[j] > c.upper[j]) return false;
    lo += c.lower[j];
    hi += c.upper[j];
  }
  return lo <= c.k && c.k <= hi;
}

}  // namespace detail

// Clamps each upper bound to min(U_j, k, |I_j|) and checks that the band still
// admits a composition of k.
inline FairnessConstraints validate_constraints(FairnessConstraints c, const QueryInstance& q) {
  detail::check_shape(c);
  require(c.num_groups() == q.num_groups(), Errc::kShapeMismatch,
          "constraints have " + std::to_string(c.num_groups()) + " groups, query has " +
              std::to_string(q.num_groups()));
  for (std::size_t j = 0; j < c.num_groups(); ++j) {
    require(c.lower[j] <= q.group_sizes[j], Errc::kGroupTooSmall,
            "group " + std::to_string(j + 1) + " needs " + std::to_string(c.lower[j]) +
                " items but has " + std::to_string(q.group_sizes[j]));
    c.upper[j] = std::min({c.upper[j], c.k, q.group_sizes[j]});
  }
  require(detail::feasible_sums(c), Errc::kInfeasible,
          "bounds do not admit a composition of k=" + std::to_string(c.k));
  return c;
}

// L_j = max(0, floor((p_j - delta) k)), U_j = min(k, ceil((p_j + delta) k)).
inline FairnessConstraints derive_constraints_from_delta(std::span<const double> proportions, double delta,
                                                         std::size_t k) {
  require(!proportions.empty(), Errc::kShapeMismatch, "empty proportion vector");
  require(delta >= 0.0, Errc::kInvalidArgument, "delta must be non-negative");
  require(k > 0, Errc::kInvalidArgument, "k must be positive");
  const double total = std::accumulate(proportions.begin(), proportions.end(), 0.0);
  require(std::abs(total - 1.0) < 1e-6, Errc::kInvalidArgument, "proportions must sum to 1");

  // (p - delta) * k often lands a few ulps off an integer; snap those.
  auto snap = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  };
  const double kd = static_cast<double>(k);
  FairnessConstraints c;
  c.k = k;
  for (double p : proportions) {
    require(p >= 0.0 && p <= 1.0, Errc::kInvalidArgument, "proportion outside [0,1]");
    const double lo = std::floor(snap((p - delta) * kd));
    const double hi = std::ceil(snap((p + delta) * kd));
    c.lower.push_back(static_cast<std::size_t>(std::max(0.0, lo)));
    c.upper.push_back(static_cast<std::size_t>(std::clamp(hi, 0.0, kd)));
  }
  require(detail::feasible_sums(c), Errc::kInfeasible, "derived bounds are infeasible");
  return c;
}

inline std::vector<double> group_proportions(const QueryInstance& q) {
  std::vector<double> p(q.num_groups(), 0.0);
  const double n = static_cast<double>(q.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = static_cast<double>(q.group_sizes[j]) / n;
  return p;
}

inline bool within_bounds(std::span<const std::size_t> counts, const FairnessConstraints& c) {
  for (std::size_t j = 0; j < c.num_groups(); ++j) {
    const std::size_t n = j < counts.size() ? counts[j] : 0;
    if (n < c.lower[j] || n > c.upper[j]) return false;
  }
  return true;
}

inline bool check_ex_post_fair(const GroupAssignment& gamma, const FairnessConstraints& c) {
  require(gamma.size() == c.k, Errc::kLengthMismatch,
          "ranking has length " + std::to_string(gamma.size()) + ", constraints expect " +
              std::to_string(c.k));
  const auto counts = gamma.counts(c.num_groups());
  return within_bounds(counts, c);
}

inline bool check_ex_post_fair(const RankingOutcome& sigma, const FairnessConstraints& c) {
  return check_ex_post_fair(sigma.assignment, c);
}

}  // namespace gfpl
