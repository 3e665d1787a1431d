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

// Ranking quality and fairness metrics over stochastic ranking policies.
// A policy is anything callable as `RankingOutcome(Rng&)`.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/format.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

template <typename F>
concept RankingSampler = std::invocable<F&, Rng&> &&
                         std::same_as<std::invoke_result_t<F&, Rng&>, RankingOutcome>;

struct Estimate {
  double mean = 0.0;
  std::optional<double> std_error;  // unavailable for a single sample
};

// Running mean / variance (Welford).
class RunningStat {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

  Estimate estimate() const {
    Estimate e{mean_, std::nullopt};
    if (n_ > 1) e.std_error = std::sqrt(variance() / static_cast<double>(n_));
    return e;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline double ideal_dcg(std::span<const double> relevance, const PositionDiscounts& theta) {
  std::vector<double> sorted(relevance.begin(), relevance.end());
  const std::size_t k = std::min(theta.size(), sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                    std::greater<>());
  double dcg = 0.0;
  for (std::size_t i = 0; i < k; ++i) dcg += theta.theta[i] * sorted[i];
  return dcg;
}

// DCG of the ranking over the ideal DCG of the full pool; 1 when the ideal is 0.
inline double ndcg_of_ranking(std::span<const ItemIndex> ranked, std::span<const double> relevance,
                              const PositionDiscounts& theta) {
  require(ranked.size() == theta.size(), Errc::kLengthMismatch,
          "ranking length " + std::to_string(ranked.size()) + " != discount length " + std::to_string(theta.size()));
  const double ideal = ideal_dcg(relevance, theta);
  if (ideal <= 0.0) return 1.0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    require(ranked[i] < relevance.size(), Errc::kItemNotInPool, "ranked item without relevance");
    dcg += theta.theta[i] * relevance[ranked[i]];
  }
  return dcg / ideal;
}

inline double ndcg_of_ranking(const RankingOutcome& sigma, std::span<const double> relevance,
                              const PositionDiscounts& theta) {
  return ndcg_of_ranking(sigma.ranked_items, relevance, theta);
}

template <RankingSampler Policy>
Estimate expected_ndcg(Policy&& policy, std::span<const double> relevance, const PositionDiscounts& theta,
                       std::size_t n_samples, Rng& rng) {
  require(n_samples >= 1, Errc::kInvalidArgument, "need at least one sample");
  RunningStat stat;
  for (std::size_t s = 0; s < n_samples; ++s) stat.add(ndcg_of_ranking(policy(rng), relevance, theta));
  return stat.estimate();
}

// Entry i: fraction of sampled rankings whose rank-i item belongs to `group`.
template <RankingSampler Policy>
std::vector<double> per_rank_group_fraction(Policy&& policy, GroupIndex group, std::size_t k, std::size_t n_samples,
                                            Rng& rng) {
  require(n_samples >= 1, Errc::kInvalidArgument, "need at least one sample");
  std::vector<double> hits(k, 0.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const RankingOutcome r = policy(rng);
    require(r.assignment.size() == k, Errc::kLengthMismatch, "policy returned a ranking of the wrong length");
    for (std::size_t i = 0; i < k; ++i)
      if (r.assignment.slots[i] == group) hits[i] += 1.0;
  }
  for (double& h : hits) h /= static_cast<double>(n_samples);
  return hits;
}

template <RankingSampler Policy>
double fairness_violation_rate(Policy&& policy, const FairnessConstraints& c, std::size_t n_samples, Rng& rng) {
  require(n_samples >= 1, Errc::kInvalidArgument, "need at least one sample");
  std::size_t violations = 0;
  for (std::size_t s = 0; s < n_samples; ++s)
    if (!check_ex_post_fair(policy(rng), c)) ++violations;
  return static_cast<double>(violations) / static_cast<double>(n_samples);
}

// One row of the long-format metrics table.
struct MetricRow {
  std::string dataset;
  std::string method;
  double beta = 1.0;
  std::string metric;
  long rank_or_epoch = 0;
  double value = 0.0;
  std::optional<double> std_error;
};

inline constexpr const char* kMetricCsvHeader = "dataset,method,beta,metric,rank_or_epoch,value,stderr";

inline void write_metric_row(std::ostream& out, const MetricRow& row) {
  const auto num = detail::format_double;
  out << row.dataset << ',' << row.method << ',' << num(row.beta) << ',' << row.metric << ',' << row.rank_or_epoch
      << ',' << num(row.value) << ',' << (row.std_error ? num(*row.std_error) : std::string("NA")) << '\n';
}

}  // namespace gfpl
