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

// Plackett-Luce sampling, log-probabilities and brute-force enumeration over
// an arbitrary item pool. A pool is a list of item indices; scores (log
// scores m(d)) are a dense array over the whole query so the same score
// vector serves the full pool and every per-group sub-pool.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

using ScoreVector = std::vector<double>;

// Softmax denominators Z_1..Z_n of a (partial) ranking, stored relative to
// exp(shift) where shift is the pool's max score: Z_i = shifted[i] * e^shift.
struct Denominators {
  std::vector<double> shifted;
  double shift = 0.0;

  std::vector<double> unshifted() const {
    std::vector<double> out(shifted.size());
    const double scale = std::exp(shift);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = shifted[i] * scale;
    return out;
  }
};

// Exponentiated pool scores after subtracting the pool max.
struct PoolWeights {
  std::vector<ItemIndex> items;
  std::vector<double> weights;
  double shift = 0.0;
  double total = 0.0;

  std::size_t size() const { return items.size(); }
};

inline PoolWeights make_pool_weights(std::span<const ItemIndex> pool, std::span<const double> scores) {
  require(!pool.empty(), Errc::kEmptyPool, "pool is empty");
  PoolWeights pw;
  pw.items.assign(pool.begin(), pool.end());
  pw.shift = -std::numeric_limits<double>::infinity();
  for (ItemIndex d : pool) {
    require(d < scores.size(), Errc::kItemNotInPool, "pool item " + std::to_string(d) + " has no score");
    require(std::isfinite(scores[d]), Errc::kNonFiniteLoss, "non-finite score for item " + std::to_string(d));
    pw.shift = std::max(pw.shift, scores[d]);
  }
  pw.weights.resize(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pw.weights[i] = std::exp(scores[pool[i]] - pw.shift);
    pw.total += pw.weights[i];
  }
  return pw;
}

namespace detail {

// Successive subtraction loses precision once most of the mass is placed.
constexpr double kRecomputeFraction = 1e-6;

inline double untaken_sum(const PoolWeights& pw, const std::vector<char>& taken) {
  double s = 0.0;
  for (std::size_t i = 0; i < pw.size(); ++i)
    if (!taken[i]) s += pw.weights[i];
  return s;
}

// Sequential categorical draw of `slots` pool positions. Writes the drawn
// positions (indices into pw.items) and the shifted denominator used at each
// step.
inline void sample_positions(const PoolWeights& pw, std::size_t slots, Rng& rng, std::vector<std::size_t>& picked,
                             std::vector<double>& denominators) {
  require(slots <= pw.size(), Errc::kSlotsExceedPool,
          std::to_string(slots) + " slots from a pool of " + std::to_string(pw.size()));
  picked.clear();
  denominators.clear();
  std::vector<char> taken(pw.size(), 0);
  double remaining = pw.total;
  for (std::size_t slot = 0; slot < slots; ++slot) {
    if (remaining < kRecomputeFraction * pw.total) remaining = untaken_sum(pw, taken);
    denominators.push_back(remaining);
    const double u = uniform01(rng) * remaining;
    double acc = 0.0;
    std::size_t choice = pw.size();
    std::size_t last_untaken = pw.size();
    for (std::size_t i = 0; i < pw.size(); ++i) {
      if (taken[i]) continue;
      last_untaken = i;
      acc += pw.weights[i];
      if (u < acc) {
        choice = i;
        break;
      }
    }
    if (choice == pw.size()) choice = last_untaken;  // u landed in rounding slack
    taken[choice] = 1;
    picked.push_back(choice);
    remaining -= pw.weights[choice];
  }
}

class Membership {
 public:
  Membership(std::span<const ItemIndex> pool, std::size_t universe) : position_(universe, kAbsent) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      require(pool[i] < universe, Errc::kItemNotInPool, "pool item outside score vector");
      require(position_[pool[i]] == kAbsent, Errc::kDuplicateItem, "pool lists an item twice");
      position_[pool[i]] = i;
    }
  }

  // Position of item d within the pool; throws ItemNotInPool.
  std::size_t position(ItemIndex d) const {
    require(d < position_.size() && position_[d] != kAbsent, Errc::kItemNotInPool,
            "item " + std::to_string(d) + " not in pool");
    return position_[d];
  }

 private:
  static constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> position_;
};

inline std::vector<std::size_t> sigma_positions(std::span<const ItemIndex> sigma, std::span<const ItemIndex> pool,
                                                std::size_t universe) {
  Membership member(pool, universe);
  std::vector<std::size_t> pos;
  pos.reserve(sigma.size());
  std::vector<char> seen(pool.size(), 0);
  for (ItemIndex d : sigma) {
    const std::size_t p = member.position(d);
    require(!seen[p], Errc::kDuplicateItem, "item " + std::to_string(d) + " repeated in ranking");
    seen[p] = 1;
    pos.push_back(p);
  }
  return pos;
}

inline Denominators denominators_from_positions(const PoolWeights& pw, std::span<const std::size_t> positions) {
  Denominators z;
  z.shift = pw.shift;
  z.shifted.reserve(positions.size());
  std::vector<char> taken(pw.size(), 0);
  double remaining = pw.total;
  for (std::size_t p : positions) {
    if (remaining < kRecomputeFraction * pw.total) remaining = untaken_sum(pw, taken);
    z.shifted.push_back(remaining);
    taken[p] = 1;
    remaining -= pw.weights[p];
  }
  return z;
}

}  // namespace detail

// Draws an ordered selection of `slots` distinct items from `pool`.
inline std::vector<ItemIndex> pl_sample(std::span<const ItemIndex> pool, std::size_t slots,
                                        std::span<const double> scores, Rng& rng) {
  const PoolWeights pw = make_pool_weights(pool, scores);
  std::vector<std::size_t> picked;
  std::vector<double> z;
  detail::sample_positions(pw, slots, rng, picked, z);
  std::vector<ItemIndex> out;
  out.reserve(picked.size());
  for (std::size_t p : picked) out.push_back(pw.items[p]);
  return out;
}

inline Denominators softmax_denominators(std::span<const ItemIndex> sigma, std::span<const ItemIndex> pool,
                                         std::span<const double> scores) {
  const PoolWeights pw = make_pool_weights(pool, scores);
  const auto positions = detail::sigma_positions(sigma, pool, scores.size());
  return detail::denominators_from_positions(pw, positions);
}

inline double pl_log_prob(std::span<const ItemIndex> sigma, std::span<const ItemIndex> pool,
                          std::span<const double> scores) {
  if (sigma.empty()) return 0.0;
  const Denominators z = softmax_denominators(sigma, pool, scores);
  double lp = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) lp += (scores[sigma[i]] - z.shift) - std::log(z.shifted[i]);
  return lp;
}

struct EnumerationLimits {
  std::size_t max_pool = 8;
  std::size_t max_slots = 5;
};

// All ordered selections of `slots` items, lexicographic in item index.
inline std::vector<std::vector<ItemIndex>> enumerate_rankings(std::span<const ItemIndex> pool, std::size_t slots,
                                                              EnumerationLimits limits = {}) {
  require(pool.size() <= limits.max_pool && slots <= limits.max_slots, Errc::kTooLarge,
          "enumeration of " + std::to_string(slots) + " slots over " + std::to_string(pool.size()) +
              " items exceeds the guard");
  require(slots <= pool.size(), Errc::kSlotsExceedPool, "more slots than items");
  std::vector<ItemIndex> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::vector<ItemIndex>> out;
  std::vector<ItemIndex> prefix;
  std::vector<char> used(sorted.size(), 0);
  auto recurse = [&](auto&& self) -> void {
    if (prefix.size() == slots) {
      out.push_back(prefix);
      return;
    }
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (used[i]) continue;
      used[i] = 1;
      prefix.push_back(sorted[i]);
      self(self);
      prefix.pop_back();
      used[i] = 0;
    }
  };
  recurse(recurse);
  return out;
}

}  // namespace gfpl
