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

// JSON experiment configs, the shared data pipeline (load, bias, split) and
// the (beta, method, run) sweep with resumable per-cell output.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gfpl/composition.hpp"
#include "gfpl/core.hpp"
#include "gfpl/dataset.hpp"
#include "gfpl/error.hpp"
#include "gfpl/format.hpp"
#include "gfpl/metrics.hpp"
#include "gfpl/mlp.hpp"
#include "gfpl/parallel.hpp"
#include "gfpl/policy.hpp"
#include "gfpl/random.hpp"
#include "gfpl/trainer.hpp"

namespace gfpl {

inline const std::vector<std::string> kExperimentMethods = {"plain_pl", "group_fair", "plain_pl+gdl22",
                                                            "plain_pl+gak19", "plain_pl_true"};

struct ExperimentConfig {
  std::optional<std::string> dataset;  // path to a ranking file
  std::optional<SynthSpec> synthetic;
  std::optional<std::size_t> minority;  // 1-based; defaults to the smallest group
  std::optional<double> max_label;

  TrainConfig train;
  std::string policy;  // eval/sample policy; defaults to the training mode
  double train_fraction = 0.8;
  double beta = 1.0;
  std::size_t eval_samples = 1000;

  std::vector<double> betas{1.0};
  std::vector<std::string> methods = kExperimentMethods;
  std::size_t runs = 1;
};

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(Errc::kInvalidArgument, std::string("config field '") + key + "' has the wrong type");
  }
}

inline SynthSpec synth_from_json(const nlohmann::json& j) {
  require(j.is_object(), Errc::kInvalidArgument, "config field 'synthetic' must be an object");
  SynthSpec s;
  read_field(j, "n_queries", s.n_queries);
  read_field(j, "items_per_query", s.items_per_query);
  read_field(j, "proportions", s.proportions);
  s.num_groups = s.proportions.size();
  read_field(j, "num_groups", s.num_groups);
  read_field(j, "feature_dim", s.feature_dim);
  read_field(j, "seed", s.seed);
  read_field(j, "noise", s.noise);
  read_field(j, "sharpness", s.sharpness);
  read_field(j, "group_shift", s.group_shift);
  return s;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), Errc::kInvalidArgument, "config must be a JSON object");
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = j.at("dataset").is_string() ? j.at("dataset").get<std::string>() : "";
  if (j.contains("synthetic")) c.synthetic = detail::synth_from_json(j.at("synthetic"));
  if (j.contains("minority")) {
    std::size_t m = 0;
    detail::read_field(j, "minority", m);
    c.minority = m;
  }
  if (j.contains("max_label")) {
    double m = 0.0;
    detail::read_field(j, "max_label", m);
    c.max_label = m;
  }
  auto& t = c.train;
  if (j.contains("mode")) t.mode = train_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("relevance")) {
    const auto r = j.at("relevance").get<std::string>();
    require(r == "observed" || r == "true", Errc::kInvalidArgument, "relevance must be 'observed' or 'true'");
    t.relevance = r == "true" ? RelevanceSource::kTrue : RelevanceSource::kObserved;
  }
  detail::read_field(j, "k", t.k);
  detail::read_field(j, "delta", t.delta);
  detail::read_field(j, "M", t.samples);
  detail::read_field(j, "epochs", t.epochs);
  detail::read_field(j, "learning_rate", t.learning_rate);
  detail::read_field(j, "batch_size", t.batch_size);
  detail::read_field(j, "seed", t.seed);
  detail::read_field(j, "hidden", t.hidden);
  detail::read_field(j, "log_samples", t.eval_samples);
  detail::read_field(j, "policy", c.policy);
  detail::read_field(j, "train_fraction", c.train_fraction);
  detail::read_field(j, "beta", c.beta);
  detail::read_field(j, "eval_samples", c.eval_samples);
  detail::read_field(j, "betas", c.betas);
  detail::read_field(j, "methods", c.methods);
  detail::read_field(j, "runs", c.runs);
  if (c.policy.empty()) c.policy = std::string(to_string(t.mode));
  policy_kind_from_string(c.policy);
  for (const auto& m : c.methods)
    require(std::find(kExperimentMethods.begin(), kExperimentMethods.end(), m) != kExperimentMethods.end(),
            Errc::kInvalidArgument, "unknown method '" + m + "'");
  require(c.runs >= 1, Errc::kInvalidArgument, "runs must be at least 1");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::kIo, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kParseError, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// Full dataset named by the config (file or synthetic), without bias.
inline DatasetManifest load_dataset(const ExperimentConfig& c) {
  DatasetManifest d;
  if (c.dataset && !c.dataset->empty()) {
    ParseOptions opt;
    opt.max_label = c.max_label;
    d = parse_ranking_file(*c.dataset, opt);
  } else if (c.synthetic) {
    d = synth_generate(*c.synthetic);
  } else {
    fail(Errc::kInvalidArgument, "config field 'dataset' is missing (give a file path or a 'synthetic' spec)");
  }
  if (c.minority) {
    require(*c.minority >= 1 && *c.minority <= d.num_groups(), Errc::kInvalidArgument,
            "config field 'minority' is out of range");
    d.minority_group = *c.minority - 1;
  }
  return d;
}

struct PreparedData {
  DatasetManifest full;  // biased, before the split
  DatasetManifest train;
  DatasetManifest test;
};

// Bias with `beta` on the minority group, then split by the config seed.
inline PreparedData prepare_data(const DatasetManifest& raw, const ExperimentConfig& c, double beta) {
  PreparedData p;
  p.full = inject_bias(raw, BiasSpec::on_group(raw.num_groups(), raw.minority_group, beta));
  std::tie(p.train, p.test) = split_train_test(p.full, c.train_fraction, derive_seed(c.train.seed, {0x73706c6974ULL}));
  return p;
}

// Rows of the long-format metrics table for one evaluated policy: expected
// NDCG (true and observed), the violation rate, and per rank the minority
// fraction next to the (p +- delta) bounds derived for the whole dataset.
inline std::vector<MetricRow> metric_rows(const PolicyEvaluation& ev, const DatasetManifest& d,
                                          const std::string& method, double beta, std::size_t k, double delta) {
  std::vector<MetricRow> rows;
  rows.push_back({d.name, method, beta, "ndcg_true", 0, ev.ndcg_true.mean, ev.ndcg_true.std_error});
  rows.push_back({d.name, method, beta, "ndcg_observed", 0, ev.ndcg_observed.mean, ev.ndcg_observed.std_error});
  rows.push_back({d.name, method, beta, "fairness_violation_rate", 0, ev.fairness_violation_rate, std::nullopt});
  const auto p = d.group_proportions();
  const auto bounds = derive_constraints_from_delta(p, delta, k);
  const double lo = static_cast<double>(bounds.lower[d.minority_group]) / static_cast<double>(k);
  const double hi = static_cast<double>(bounds.upper[d.minority_group]) / static_cast<double>(k);
  for (std::size_t i = 0; i < ev.minority_fraction.size(); ++i) {
    const long rank = static_cast<long>(i + 1);
    rows.push_back({d.name, method, beta, "minority_fraction", rank, ev.minority_fraction[i], std::nullopt});
    rows.push_back({d.name, method, beta, "lower_bound", rank, lo, std::nullopt});
    rows.push_back({d.name, method, beta, "upper_bound", rank, hi, std::nullopt});
  }
  return rows;
}

// ---- sweep ----

struct CellKey {
  std::string beta;  // formatted, as written to disk
  std::string method;
  std::size_t run = 0;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellValue {
  std::string metric;
  long rank = 0;
  double value = 0.0;
};

inline constexpr const char* kCellsHeader = "beta,method,run,metric,rank,value";
inline constexpr const char* kCellDoneMetric = "cell_complete";

// Completed cells and their values from an existing cells.csv; cells without
// the completion marker are dropped so they are recomputed.
inline std::map<CellKey, std::vector<CellValue>> read_cells(const std::filesystem::path& path) {
  std::map<CellKey, std::vector<CellValue>> partial;
  std::set<CellKey> done;
  std::ifstream in(path);
  if (!in) return {};
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_commas(line);
    if (f.size() != 6) continue;
    try {
      CellKey key{f[0], f[1], static_cast<std::size_t>(std::stoul(f[2]))};
      if (f[3] == kCellDoneMetric) {
        done.insert(key);
        continue;
      }
      CellValue v{f[3], std::stol(f[4]), std::stod(f[5])};
      auto& values = partial[key];
      // a repeated (metric, rank) means the cell was started again after a torn write
      const bool restart = std::any_of(values.begin(), values.end(),
                                       [&](const CellValue& o) { return o.metric == v.metric && o.rank == v.rank; });
      if (restart && !done.count(key)) values.clear();
      values.push_back(std::move(v));
    } catch (const std::exception&) {
      continue;  // torn trailing line from an interrupted run
    }
  }
  std::map<CellKey, std::vector<CellValue>> out;
  for (auto& [key, values] : partial)
    if (done.count(key)) out.emplace(key, std::move(values));
  for (const auto& key : done) out.try_emplace(key);
  return out;
}

struct SweepSummary {
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;
  std::vector<MetricRow> results;
};

namespace detail {

inline std::vector<CellValue> cell_values(const PolicyEvaluation& ev) {
  std::vector<CellValue> v;
  v.push_back({"ndcg_true", 0, ev.ndcg_true.mean});
  v.push_back({"ndcg_observed", 0, ev.ndcg_observed.mean});
  v.push_back({"fairness_violation_rate", 0, ev.fairness_violation_rate});
  for (std::size_t i = 0; i < ev.minority_fraction.size(); ++i)
    v.push_back({"minority_fraction", static_cast<long>(i + 1), ev.minority_fraction[i]});
  return v;
}

inline PolicyKind method_policy(const std::string& method) {
  if (method == "group_fair") return PolicyKind::kGroupFair;
  if (method == "plain_pl+gdl22") return PolicyKind::kGdl22;
  if (method == "plain_pl+gak19") return PolicyKind::kGak19;
  return PolicyKind::kPlainPl;
}

}  // namespace detail

// Runs every (beta, method, run) cell not already recorded in
// out_dir/cells.csv, then writes run-aggregated means with standard errors to
// out_dir/results.csv. Post-processing methods reuse the plain_pl model of the
// same (beta, run); every method of a run shares the run's seed.
inline SweepSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                   std::size_t workers) {
  std::filesystem::create_directories(out_dir);
  const auto cells_path = out_dir / "cells.csv";
  auto cells = read_cells(cells_path);
  const bool fresh = !std::filesystem::exists(cells_path);
  std::ofstream appender(cells_path, std::ios::app);
  require(static_cast<bool>(appender), Errc::kIo, "cannot write '" + cells_path.string() + "'");
  if (fresh) appender << kCellsHeader << '\n' << std::flush;
  std::mutex write_mutex;

  const DatasetManifest raw = load_dataset(cfg);
  struct Unit {
    double beta;
    std::size_t run;
    std::vector<std::string> methods;
  };
  std::vector<Unit> units;
  SweepSummary summary;
  for (double beta : cfg.betas)
    for (std::size_t run = 0; run < cfg.runs; ++run) {
      Unit u{beta, run, {}};
      for (const auto& m : cfg.methods) {
        if (cells.count({detail::format_double(beta), m, run})) {
          ++summary.cells_skipped;
          continue;
        }
        u.methods.push_back(m);
      }
      if (!u.methods.empty()) units.push_back(std::move(u));
    }

  std::vector<std::map<std::string, std::vector<CellValue>>> fresh_values(units.size());
  parallel_for(units.size(), workers, [&](std::size_t ui) {
    const Unit& u = units[ui];
    const auto data = prepare_data(raw, cfg, u.beta);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, {0x72756eULL, u.run});
    tc.eval_samples = 0;
    tc.workers = 1;
    std::optional<MlpParams> plain;
    auto model_for = [&](const std::string& method) -> MlpParams {
      TrainConfig mc = tc;
      if (method == "group_fair") {
        mc.mode = TrainMode::kGroupFair;
        mc.relevance = RelevanceSource::kObserved;
        return train(data.train, data.test, mc).params;
      }
      if (method == "plain_pl_true") {
        mc.mode = TrainMode::kPlainPl;
        mc.relevance = RelevanceSource::kTrue;
        return train(data.train, data.test, mc).params;
      }
      if (!plain) {
        mc.mode = TrainMode::kPlainPl;
        mc.relevance = RelevanceSource::kObserved;
        plain = train(data.train, data.test, mc).params;
      }
      return *plain;
    };
    CompositionCache cache;
    for (const auto& method : u.methods) {
      const MlpParams params = model_for(method);
      EvalOptions opt;
      opt.kind = detail::method_policy(method);
      opt.k = cfg.train.k;
      opt.delta = cfg.train.delta;
      opt.n_samples = cfg.eval_samples;
      opt.seed = derive_seed(tc.seed, {0x6576616cULL});
      const auto values = detail::cell_values(evaluate_policy(params, data.test, opt, &cache));
      std::lock_guard<std::mutex> lock(write_mutex);
      const std::string prefix = detail::format_double(u.beta) + ',' + method + ',' + std::to_string(u.run) + ',';
      for (const auto& v : values) appender << prefix << v.metric << ',' << v.rank << ',' << detail::format_double(v.value) << '\n';
      appender << prefix << kCellDoneMetric << ",0,1\n" << std::flush;
      fresh_values[ui][method] = values;
    }
  });
  for (std::size_t ui = 0; ui < units.size(); ++ui)
    for (auto& [method, values] : fresh_values[ui]) {
      cells[{detail::format_double(units[ui].beta), method, units[ui].run}] = std::move(values);
      ++summary.cells_run;
    }

  // Aggregate over runs: mean and standard error per (beta, method, metric, rank).
  std::map<std::tuple<std::string, std::string, std::string, long>, RunningStat> agg;
  for (const auto& [key, values] : cells) {
    if (std::find(cfg.betas.begin(), cfg.betas.end(), std::stod(key.beta)) == cfg.betas.end()) continue;
    if (std::find(cfg.methods.begin(), cfg.methods.end(), key.method) == cfg.methods.end()) continue;
    if (key.run >= cfg.runs) continue;
    for (const auto& v : values) agg[{key.beta, key.method, v.metric, v.rank}].add(v.value);
  }
  const auto prepared = prepare_data(raw, cfg, 1.0);
  const auto bounds = derive_constraints_from_delta(prepared.test.group_proportions(), cfg.train.delta, cfg.train.k);
  const double k = static_cast<double>(cfg.train.k);
  std::ofstream out(out_dir / "results.csv");
  require(static_cast<bool>(out), Errc::kIo, "cannot write results.csv");
  out << kMetricCsvHeader << '\n';
  for (const auto& [key, stat] : agg) {
    const auto& [beta, method, metric, rank] = key;
    const Estimate e = stat.estimate();
    MetricRow row{raw.name, method, std::stod(beta), metric, rank, e.mean, e.std_error};
    write_metric_row(out, row);
    summary.results.push_back(row);
    if (metric == "minority_fraction") {
      for (auto [name, count] : {std::pair{"lower_bound", bounds.lower[raw.minority_group]},
                                 std::pair{"upper_bound", bounds.upper[raw.minority_group]}}) {
        MetricRow b{raw.name, method, row.beta, name, rank, static_cast<double>(count) / k, std::nullopt};
        write_metric_row(out, b);
        summary.results.push_back(b);
      }
    }
  }

  nlohmann::json meta;
  meta["aggregation"] = "mean over runs with standard error (sample std / sqrt(runs)); NA for a single run";
  meta["runs"] = cfg.runs;
  meta["bounds"] = "L_j = floor((p_j - delta) k), U_j = ceil((p_j + delta) k), p_j the group share of test items";
  meta["gak19"] = "deterministic greedy; min/max proportions L_j/k and U_j/k";
  std::ofstream(out_dir / "results.meta.json") << meta.dump(2) << '\n';
  return summary;
}

}  // namespace gfpl
