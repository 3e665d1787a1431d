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

// Ranking datasets: the extended LibSVM ranking format, implicit-bias
// injection, query-level splits and a synthetic generator.
//
// Format, one item per line (UTF-8, LF):
//
//   <label> qid:<int> gid:<int> <fid>:<float> <fid>:<float> ...
//
// gid is the 1-based group, feature ids are 1-based and strictly ascending,
// and every line must end at the same highest feature id. Text after '#' is a
// comment; header comments of the form "# key=value" carry dataset metadata
// (name, max_label, groups, minority).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/format.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

struct DatasetManifest {
  std::string name;
  std::vector<QueryInstance> queries;
  double max_label = 1.0;
  std::vector<std::string> group_names;
  GroupIndex minority_group = 0;
  std::size_t feature_dim = 0;

  std::size_t num_groups() const { return group_names.size(); }

  std::size_t num_items() const {
    std::size_t n = 0;
    for (const auto& q : queries) n += q.size();
    return n;
  }

  // Item-count share of each group over the whole dataset.
  std::vector<double> group_proportions() const {
    std::vector<double> p(num_groups(), 0.0);
    for (const auto& q : queries)
      for (std::size_t j = 0; j < q.group_sizes.size(); ++j) p[j] += static_cast<double>(q.group_sizes[j]);
    const double n = static_cast<double>(num_items());
    for (double& v : p) v /= n;
    return p;
  }

  const QueryInstance& find_query(std::string_view id) const {
    for (const auto& q : queries)
      if (q.query_id == id) return q;
    fail(Errc::kUnknownQuery, "no query with id '" + std::string(id) + "'");
  }
};

struct BiasSpec {
  std::vector<double> beta;

  // beta on one group, 1.0 elsewhere.
  static BiasSpec on_group(std::size_t num_groups, GroupIndex group, double beta) {
    BiasSpec b{std::vector<double>(num_groups, 1.0)};
    b.beta.at(group) = beta;
    return b;
  }
};

struct ParseOptions {
  std::optional<double> max_label;
  std::string name = "dataset";
};

namespace detail {

inline double parse_double(std::string_view s, std::size_t line, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v), Errc::kParseError,
          "line " + std::to_string(line) + ": bad " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, std::size_t line, std::string_view what) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), Errc::kParseError,
          "line " + std::to_string(line) + ": bad " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split_commas(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    out.emplace_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

}  // namespace detail

inline DatasetManifest parse_ranking_stream(std::istream& in, const ParseOptions& options = {}) {
  struct RawLine {
    double label;
    std::string qid;
    GroupIndex group;
    std::vector<double> features;
    std::size_t line;
  };
  std::vector<RawLine> rows;
  std::optional<double> header_max_label;
  std::optional<std::size_t> header_minority;
  std::vector<std::string> group_names;
  std::string name = options.name;
  std::optional<std::size_t> dim;

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    std::string_view line(text);
    const auto hash = line.find('#');
    if (hash != std::string_view::npos && detail::split_ws(line.substr(0, hash)).empty()) {
      const auto comment = detail::split_ws(line.substr(hash + 1));
      for (auto tok : comment) {
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) continue;
        const auto key = tok.substr(0, eq);
        const auto value = tok.substr(eq + 1);
        if (key == "max_label") header_max_label = detail::parse_double(value, line_no, "max_label");
        if (key == "groups") group_names = detail::split_commas(value);
        if (key == "minority")
          header_minority = static_cast<std::size_t>(detail::parse_int(value, line_no, "minority"));
        if (key == "name") name = std::string(value);
      }
    }
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    require(tokens.size() >= 3, Errc::kParseError, "line " + std::to_string(line_no) + ": too few fields");
    RawLine row;
    row.line = line_no;
    row.label = detail::parse_double(tokens[0], line_no, "label");
    require(row.label >= 0.0, Errc::kParseError, "line " + std::to_string(line_no) + ": negative label");
    require(tokens[1].starts_with("qid:"), Errc::kParseError,
            "line " + std::to_string(line_no) + ": expected qid:<int>");
    row.qid = std::string(tokens[1].substr(4));
    detail::parse_int(row.qid, line_no, "qid");
    require(tokens[2].starts_with("gid:"), Errc::kMissingGroup,
            "line " + std::to_string(line_no) + ": expected gid:<int> after qid");
    const auto gid = detail::parse_int(tokens[2].substr(4), line_no, "gid");
    require(gid >= 1, Errc::kParseError, "line " + std::to_string(line_no) + ": gid must be >= 1");
    row.group = static_cast<GroupIndex>(gid - 1);
    std::int64_t last_fid = 0;
    for (std::size_t t = 3; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      require(colon != std::string_view::npos, Errc::kParseError,
              "line " + std::to_string(line_no) + ": expected <fid>:<value>");
      const auto fid = detail::parse_int(tokens[t].substr(0, colon), line_no, "feature id");
      require(fid > last_fid, Errc::kParseError,
              "line " + std::to_string(line_no) + ": feature ids must be 1-based and ascending");
      const double v = detail::parse_double(tokens[t].substr(colon + 1), line_no, "feature value");
      row.features.resize(static_cast<std::size_t>(fid), 0.0);
      row.features.back() = v;
      last_fid = fid;
    }
    if (!dim) dim = row.features.size();
    require(row.features.size() == *dim, Errc::kInconsistentFeatureDim,
            "line " + std::to_string(line_no) + " has " + std::to_string(row.features.size()) +
                " features, expected " + std::to_string(*dim));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), Errc::kEmptyDataset, "no ranking lines");

  double max_label = 0.0;
  for (const auto& r : rows) max_label = std::max(max_label, r.label);
  if (header_max_label) max_label = *header_max_label;
  if (options.max_label) max_label = *options.max_label;
  require(max_label > 0.0, Errc::kParseError, "max_label must be positive");

  DatasetManifest d;
  d.name = name;
  d.max_label = max_label;
  d.feature_dim = *dim;
  std::size_t num_groups = group_names.size();
  for (const auto& r : rows) num_groups = std::max(num_groups, r.group + 1);
  for (std::size_t j = group_names.size(); j < num_groups; ++j) group_names.push_back("group" + std::to_string(j + 1));
  d.group_names = std::move(group_names);

  std::map<std::string, std::size_t> index;
  for (auto& r : rows) {
    require(r.label <= max_label, Errc::kParseError,
            "line " + std::to_string(r.line) + ": label exceeds max_label " + detail::format_double(max_label));
    auto [it, inserted] = index.try_emplace(r.qid, d.queries.size());
    if (inserted) d.queries.push_back(QueryInstance{r.qid, {}, {}});
    auto& q = d.queries[it->second];
    Item item;
    item.item_id = q.items.size();
    item.features = std::move(r.features);
    item.raw_label = r.label;
    item.relevance_true = r.label / max_label;
    item.relevance_observed = item.relevance_true;
    item.group = r.group;
    q.items.push_back(std::move(item));
  }
  for (auto& q : d.queries) refresh_group_sizes(q, num_groups);

  if (header_minority) {
    require(*header_minority >= 1 && *header_minority <= num_groups, Errc::kParseError, "minority group out of range");
    d.minority_group = *header_minority - 1;
  } else {
    const auto p = d.group_proportions();
    d.minority_group = static_cast<GroupIndex>(std::min_element(p.begin(), p.end()) - p.begin());
  }
  return d;
}

inline DatasetManifest parse_ranking_file(const std::string& path, ParseOptions options = {}) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::kIo, "cannot open '" + path + "'");
  if (options.name == "dataset") options.name = path;
  return parse_ranking_stream(in, options);
}

inline void serialize_ranking(const DatasetManifest& d, std::ostream& out) {
  out << "# name=" << d.name << '\n';
  out << "# max_label=" << detail::format_double(d.max_label) << '\n';
  out << "# groups=";
  for (std::size_t j = 0; j < d.group_names.size(); ++j) out << (j ? "," : "") << d.group_names[j];
  out << '\n';
  out << "# minority=" << d.minority_group + 1 << '\n';
  for (const auto& q : d.queries) {
    for (const auto& item : q.items) {
      out << detail::format_double(item.raw_label) << " qid:" << q.query_id << " gid:" << item.group + 1;
      for (std::size_t f = 0; f < item.features.size(); ++f)
        out << ' ' << f + 1 << ':' << detail::format_double(item.features[f]);
      out << '\n';
    }
  }
}

inline void write_ranking_file(const DatasetManifest& d, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::kIo, "cannot write '" + path + "'");
  serialize_ranking(d, out);
}

// relevance_observed = beta_g * relevance_true; relevance_true is untouched.
inline DatasetManifest inject_bias(DatasetManifest d, const BiasSpec& b) {
  require(b.beta.size() == d.num_groups(), Errc::kShapeMismatch,
          "bias has " + std::to_string(b.beta.size()) + " entries for " + std::to_string(d.num_groups()) + " groups");
  for (double beta : b.beta) require(beta >= 0.0 && beta <= 1.0, Errc::kInvalidArgument, "beta outside [0,1]");
  for (auto& q : d.queries)
    for (auto& item : q.items) item.relevance_observed = b.beta[item.group] * item.relevance_true;
  return d;
}

// Query-level split; the train side gets floor(fraction * n) queries (at
// least one, and at least one left for test). Queries keep file order.
inline std::pair<DatasetManifest, DatasetManifest> split_train_test(const DatasetManifest& d, double fraction,
                                                                    std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, Errc::kInvalidArgument, "fraction must lie in (0,1)");
  const std::size_t n = d.queries.size();
  require(n >= 2, Errc::kTooFewQueries, "need at least 2 queries to split, have " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  auto subset = [&](const std::vector<std::size_t>& idx, const char* suffix) {
    DatasetManifest out = d;
    out.name = d.name + suffix;
    out.queries.clear();
    for (std::size_t i : idx) out.queries.push_back(d.queries[i]);
    return out;
  };
  return {subset(train_idx, "/train"), subset(test_idx, "/test")};
}

struct SynthSpec {
  std::size_t n_queries = 100;
  std::size_t items_per_query = 20;
  std::size_t num_groups = 2;
  std::vector<double> proportions{0.7, 0.3};
  std::size_t feature_dim = 8;
  std::uint64_t seed = 1;
  // Std-dev of the label noise on the logit scale; 0 gives labels that are a
  // deterministic function of the features.
  double noise = 0.5;
  // Slope of the logistic link from the hidden linear score to relevance.
  double sharpness = 2.0;
  // Distance between the per-group feature means.
  double group_shift = 1.0;
};

// Largest-remainder allocation of n items over the proportions.
inline std::vector<std::size_t> allocate_counts(std::size_t n, std::span<const double> proportions) {
  std::vector<std::size_t> counts(proportions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t used = 0;
  for (std::size_t j = 0; j < proportions.size(); ++j) {
    const double exact = proportions[j] * static_cast<double>(n);
    counts[j] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += counts[j];
    remainders.emplace_back(exact - static_cast<double>(counts[j]), j);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++counts[remainders[i % remainders.size()].second];
  return counts;
}

// Features are group mean + N(0, I); true relevance is a logistic function of
// a hidden linear score of the group-centred features, so every group shares
// the same relevance distribution.
inline DatasetManifest synth_generate(const SynthSpec& spec) {
  require(spec.num_groups >= 1 && spec.proportions.size() == spec.num_groups, Errc::kShapeMismatch,
          "proportions must have one entry per group");
  const double total = std::accumulate(spec.proportions.begin(), spec.proportions.end(), 0.0);
  require(std::abs(total - 1.0) < 1e-6, Errc::kInvalidArgument, "proportions must sum to 1");
  require(spec.feature_dim >= 1 && spec.items_per_query >= 1, Errc::kInvalidArgument, "empty synthetic shape");

  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> hidden(spec.feature_dim);
  for (double& w : hidden) w = normal(rng) / std::sqrt(static_cast<double>(spec.feature_dim));
  std::vector<std::vector<double>> means(spec.num_groups, std::vector<double>(spec.feature_dim));
  for (std::size_t j = 0; j < spec.num_groups; ++j)
    for (double& mu : means[j]) mu = spec.group_shift * normal(rng);

  DatasetManifest d;
  d.name = "synthetic";
  d.max_label = 1.0;
  d.feature_dim = spec.feature_dim;
  for (std::size_t j = 0; j < spec.num_groups; ++j) d.group_names.push_back("group" + std::to_string(j + 1));
  d.minority_group = static_cast<GroupIndex>(
      std::min_element(spec.proportions.begin(), spec.proportions.end()) - spec.proportions.begin());

  const auto counts = allocate_counts(spec.items_per_query, spec.proportions);
  for (std::size_t qi = 0; qi < spec.n_queries; ++qi) {
    QueryInstance q;
    q.query_id = std::to_string(qi + 1);
    for (std::size_t j = 0; j < spec.num_groups; ++j) {
      for (std::size_t c = 0; c < counts[j]; ++c) {
        Item item;
        item.item_id = q.items.size();
        item.group = j;
        item.features.resize(spec.feature_dim);
        double latent = 0.0;
        for (std::size_t f = 0; f < spec.feature_dim; ++f) {
          const double z = normal(rng);
          item.features[f] = means[j][f] + z;
          latent += hidden[f] * z;
        }
        const double logit = spec.sharpness * latent + spec.noise * normal(rng);
        item.relevance_true = std::clamp(1.0 / (1.0 + std::exp(-logit)), 0.0, 1.0);
        item.raw_label = item.relevance_true;
        item.relevance_observed = item.relevance_true;
        q.items.push_back(std::move(item));
      }
    }
    refresh_group_sizes(q, spec.num_groups);
    d.queries.push_back(std::move(q));
  }
  return d;
}

}  // namespace gfpl
