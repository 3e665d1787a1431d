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

// Sampling of fair group assignments: a uniformly random bounded composition
// (x_1..x_l) of k, followed by a uniformly random arrangement of the multiset
// with x_j copies of each group label.

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <tuple>
#include <vector>

#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

using BigCount = boost::multiprecision::cpp_int;

// counts[j][s] = number of (x_1..x_j) with L_t <= x_t <= U_t and sum s.
class CompositionTable {
 public:
  CompositionTable(FairnessConstraints c, std::vector<std::vector<BigCount>> counts)
      : constraints_(std::move(c)), counts_(std::move(counts)) {}

  const FairnessConstraints& constraints() const { return constraints_; }
  std::size_t num_groups() const { return constraints_.num_groups(); }
  std::size_t k() const { return constraints_.k; }

  const BigCount& count(std::size_t groups, std::size_t sum) const { return counts_.at(groups).at(sum); }
  const BigCount& total() const { return counts_.back()[constraints_.k]; }

 private:
  FairnessConstraints constraints_;
  std::vector<std::vector<BigCount>> counts_;
};

// Fills the table row by row. Each cell is a window sum over the previous row,
// maintained with prefix sums so a row costs O(k) additions.
inline CompositionTable build_count_table(const FairnessConstraints& c) {
  detail::check_shape(c);
  const std::size_t k = c.k;
  const std::size_t groups = c.num_groups();
  std::vector<std::vector<BigCount>> counts(groups + 1, std::vector<BigCount>(k + 1));
  counts[0][0] = 1;
  std::vector<BigCount> prefix(k + 2);
  for (std::size_t j = 1; j <= groups; ++j) {
    const auto& prev = counts[j - 1];
    prefix[0] = 0;
    for (std::size_t s = 0; s <= k; ++s) prefix[s + 1] = prefix[s] + prev[s];
    const std::size_t lo = c.lower[j - 1];
    const std::size_t hi = c.upper[j - 1];
    if (lo > hi) continue;  // row stays zero
    for (std::size_t s = lo; s <= k; ++s) {
      // sum of prev[s - x] for x in [lo, min(hi, s)] = prev[s - min(hi,s) .. s - lo]
      const std::size_t first = s >= hi ? s - hi : 0;
      const std::size_t last = s - lo;
      counts[j][s] = prefix[last + 1] - prefix[first];
    }
  }
  CompositionTable table(c, std::move(counts));
  require(table.total() > 0, Errc::kInfeasible, "no composition satisfies the bounds");
  return table;
}

// Uniform over bounded compositions; draws the last group first.
inline std::vector<std::size_t> sample_composition(const CompositionTable& t, Rng& rng) {
  require(t.total() > 0, Errc::kInfeasible, "empty composition table");
  const auto& c = t.constraints();
  boost::random::uniform_int_distribution<BigCount> pick(0, t.total() - 1);
  BigCount r = pick(rng);
  std::vector<std::size_t> x(c.num_groups(), 0);
  std::size_t remaining = c.k;
  for (std::size_t j = c.num_groups(); j >= 1; --j) {
    const std::size_t lo = c.lower[j - 1];
    const std::size_t hi = std::min(c.upper[j - 1], remaining);
    bool placed = false;
    for (std::size_t xj = lo; xj <= hi; ++xj) {
      const BigCount& w = t.count(j - 1, remaining - xj);
      if (r < w) {
        x[j - 1] = xj;
        remaining -= xj;
        placed = true;
        break;
      }
      r -= w;
    }
    require(placed, Errc::kInfeasible, "composition table inconsistent with constraints");
  }
  return x;
}

// Fisher-Yates shuffle of (0,..,0, 1,..,1, ...) with x_j copies of label j.
inline GroupAssignment sample_group_assignment(std::span<const std::size_t> composition, Rng& rng) {
  GroupAssignment gamma;
  for (std::size_t j = 0; j < composition.size(); ++j) gamma.slots.insert(gamma.slots.end(), composition[j], j);
  auto& v = gamma.slots;
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
  return gamma;
}

inline GroupAssignment sample_fair_assignment(const CompositionTable& t, Rng& rng) {
  const auto x = sample_composition(t, rng);
  return sample_group_assignment(x, rng);
}

// log(1 / C) + log(x_1! ... x_l! / k!), or outside-support for assignments
// violating the bounds.
inline LogProb mu_log_prob(const GroupAssignment& gamma, const CompositionTable& t) {
  const auto& c = t.constraints();
  if (gamma.size() != c.k) return LogProb::outside();
  for (GroupIndex g : gamma.slots)
    if (g >= c.num_groups()) return LogProb::outside();
  const auto x = gamma.counts(c.num_groups());
  if (!within_bounds(x, c)) return LogProb::outside();
  double lp = -std::log(t.total().convert_to<double>());
  lp -= std::lgamma(static_cast<double>(c.k) + 1.0);
  for (std::size_t xj : x) lp += std::lgamma(static_cast<double>(xj) + 1.0);
  return {lp, true};
}

// Tables keyed by (k, L, U), shared across queries with equal constraints.
class CompositionCache {
 public:
  std::shared_ptr<const CompositionTable> get(const FairnessConstraints& c) {
    const Key key{c.k, c.lower, c.upper};
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = tables_.find(key);
    if (it != tables_.end()) return it->second;
    auto table = std::make_shared<const CompositionTable>(build_count_table(c));
    tables_.emplace(key, table);
    return table;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return tables_.size();
  }

 private:
  using Key = std::tuple<std::size_t, std::vector<std::size_t>, std::vector<std::size_t>>;
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const CompositionTable>> tables_;
};

}  // namespace gfpl
