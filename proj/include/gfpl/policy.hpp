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

// Ranking policies built from a model's scores for one query, and dataset-wide
// evaluation of a trained model under each policy.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gfpl/composition.hpp"
#include "gfpl/core.hpp"
#include "gfpl/dataset.hpp"
#include "gfpl/error.hpp"
#include "gfpl/fair_policy.hpp"
#include "gfpl/metrics.hpp"
#include "gfpl/mlp.hpp"
#include "gfpl/parallel.hpp"
#include "gfpl/plackett_luce.hpp"
#include "gfpl/postprocess.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

enum class PolicyKind { kPlainPl, kGroupFair, kGdl22, kGak19 };

inline std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kPlainPl: return "plain_pl";
    case PolicyKind::kGroupFair: return "group_fair";
    case PolicyKind::kGdl22: return "gdl22";
    case PolicyKind::kGak19: return "gak19";
  }
  return "unknown";
}

inline PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "plain_pl") return PolicyKind::kPlainPl;
  if (s == "group_fair") return PolicyKind::kGroupFair;
  if (s == "gdl22") return PolicyKind::kGdl22;
  if (s == "gak19") return PolicyKind::kGak19;
  fail(Errc::kInvalidArgument, "unknown policy '" + std::string(s) + "'");
}

// Constraints for one query: bounds from the query's own group proportions,
// with k capped at the query size.
inline FairnessConstraints query_constraints(const QueryInstance& q, std::size_t k, double delta) {
  const std::size_t kq = std::min(k, q.size());
  const auto p = group_proportions(q);
  return validate_constraints(derive_constraints_from_delta(p, delta, kq), q);
}

inline std::vector<FairnessConstraints> dataset_constraints(const DatasetManifest& d, std::size_t k, double delta) {
  std::vector<FairnessConstraints> out;
  out.reserve(d.queries.size());
  for (const auto& q : d.queries) out.push_back(query_constraints(q, k, delta));
  return out;
}

using QuerySampler = std::function<RankingOutcome(Rng&)>;

// Sampler for one query. plain_pl ignores the constraints except for k.
inline QuerySampler make_query_sampler(PolicyKind kind, const QueryInstance& q, ScoreVector scores,
                                       const FairnessConstraints& c, CompositionCache* cache = nullptr) {
  switch (kind) {
    case PolicyKind::kPlainPl: {
      auto group_of = q.groups();
      std::vector<ItemIndex> all(q.size());
      std::iota(all.begin(), all.end(), 0);
      auto pw = std::make_shared<const PoolWeights>(make_pool_weights(all, scores));
      const std::size_t k = c.k;
      return [pw, group_of = std::move(group_of), k](Rng& rng) {
        std::vector<std::size_t> picked;
        std::vector<double> z;
        detail::sample_positions(*pw, k, rng, picked, z);
        std::vector<ItemIndex> ranked;
        ranked.reserve(k);
        for (std::size_t p : picked) ranked.push_back(pw->items[p]);
        return make_outcome(std::move(ranked), group_of);
      };
    }
    case PolicyKind::kGroupFair: {
      auto policy = std::make_shared<const FairPolicy>(FairPolicy::create(q, c, std::move(scores), cache));
      return [policy](Rng& rng) { return sample_fair_ranking(*policy, rng); };
    }
    case PolicyKind::kGdl22: {
      auto reranker = std::make_shared<const Gdl22Reranker>(scores, q, c, cache);
      return [reranker](Rng& rng) { return (*reranker)(rng); };
    }
    case PolicyKind::kGak19: {
      const RankingOutcome fixed = gak19_detgreedy(scores, q, c);
      return [fixed](Rng&) { return fixed; };
    }
  }
  fail(Errc::kInvalidArgument, "unknown policy kind");
}

struct PolicyEvaluation {
  Estimate ndcg_true;
  Estimate ndcg_observed;
  // minority_fraction[i]: share of sampled rankings with a minority item at rank i+1
  std::vector<double> minority_fraction;
  double fairness_violation_rate = 0.0;
  std::size_t rankings = 0;
};

struct EvalOptions {
  PolicyKind kind = PolicyKind::kGroupFair;
  std::size_t k = 10;
  double delta = 0.05;
  std::size_t n_samples = 100;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

// Per query, draws n_samples rankings and scores them; NDCG estimates are the
// mean over queries of each query's expected NDCG, with the standard error
// taken across queries.
inline PolicyEvaluation evaluate_policy(const MlpParams& params, const DatasetManifest& d, const EvalOptions& opt,
                                        CompositionCache* cache = nullptr) {
  require(!d.queries.empty(), Errc::kEmptyDataset, "nothing to evaluate");
  require(opt.n_samples >= 1, Errc::kInvalidArgument, "need at least one sample");
  struct PerQuery {
    double ndcg_true = 0.0;
    double ndcg_observed = 0.0;
    std::vector<double> minority_hits;
    std::size_t violations = 0;
  };
  CompositionCache local_cache;
  CompositionCache* tables = cache ? cache : &local_cache;
  std::vector<PerQuery> results(d.queries.size());
  parallel_for(d.queries.size(), opt.workers, [&](std::size_t qi) {
    const auto& q = d.queries[qi];
    const FairnessConstraints c = query_constraints(q, opt.k, opt.delta);
    const auto sampler = make_query_sampler(opt.kind, q, forward_scores(params, q), c, tables);
    const auto theta = PositionDiscounts::ndcg(c.k);
    const auto rel_true = q.relevance_true();
    const auto rel_obs = q.relevance_observed();
    Rng rng(derive_seed(opt.seed, {hash_string(q.query_id)}));
    PerQuery& out = results[qi];
    out.minority_hits.assign(c.k, 0.0);
    for (std::size_t s = 0; s < opt.n_samples; ++s) {
      const RankingOutcome r = sampler(rng);
      out.ndcg_true += ndcg_of_ranking(r, rel_true, theta);
      out.ndcg_observed += ndcg_of_ranking(r, rel_obs, theta);
      for (std::size_t i = 0; i < c.k; ++i)
        if (r.assignment.slots[i] == d.minority_group) out.minority_hits[i] += 1.0;
      if (!check_ex_post_fair(r, c)) ++out.violations;
    }
    out.ndcg_true /= static_cast<double>(opt.n_samples);
    out.ndcg_observed /= static_cast<double>(opt.n_samples);
  });

  PolicyEvaluation eval;
  RunningStat t;
  RunningStat o;
  std::vector<double> hits(opt.k, 0.0);
  std::vector<double> totals(opt.k, 0.0);
  std::size_t violations = 0;
  for (const auto& r : results) {
    t.add(r.ndcg_true);
    o.add(r.ndcg_observed);
    for (std::size_t i = 0; i < r.minority_hits.size(); ++i) {
      hits[i] += r.minority_hits[i];
      totals[i] += static_cast<double>(opt.n_samples);
    }
    violations += r.violations;
  }
  eval.ndcg_true = t.estimate();
  eval.ndcg_observed = o.estimate();
  eval.rankings = results.size() * opt.n_samples;
  eval.fairness_violation_rate = static_cast<double>(violations) / static_cast<double>(eval.rankings);
  for (std::size_t i = 0; i < opt.k; ++i) {
    if (totals[i] == 0.0) break;
    eval.minority_fraction.push_back(hits[i] / totals[i]);
  }
  return eval;
}

}  // namespace gfpl
