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

// Score model m: features -> log score, a two-hidden-layer ReLU network.
//
//   a1 = relu(W1^T x + b1),  a2 = relu(W2^T a1 + b2),  m(x) = w3 . a2 + b3
//
// W1 is F x H and W2 is H x H (H = 32 by default).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfpl/core.hpp"
#include "gfpl/error.hpp"
#include "gfpl/random.hpp"

namespace gfpl {

inline constexpr std::size_t kDefaultHidden = 32;

struct MlpParams {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;
  Eigen::VectorXd b2;
  Eigen::VectorXd w3;
  double b3 = 0.0;

  std::size_t feature_dim() const { return static_cast<std::size_t>(W1.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(W1.cols()); }

  static MlpParams zeros(std::size_t feature_dim, std::size_t hidden = kDefaultHidden) {
    const auto f = static_cast<Eigen::Index>(feature_dim);
    const auto h = static_cast<Eigen::Index>(hidden);
    return {Eigen::MatrixXd::Zero(f, h), Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Zero(h, h),
            Eigen::VectorXd::Zero(h),    Eigen::VectorXd::Zero(h), 0.0};
  }

  // Uniform He-style init, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  // The head uses sqrt(1/fan_in) so initial scores stay small.
  static MlpParams init(std::size_t feature_dim, std::uint64_t seed, std::size_t hidden = kDefaultHidden) {
    MlpParams p = zeros(feature_dim, hidden);
    Rng rng(seed);
    auto fill = [&rng](Eigen::Ref<Eigen::MatrixXd> m, double limit) {
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
    };
    fill(p.W1, std::sqrt(6.0 / static_cast<double>(feature_dim)));
    fill(p.W2, std::sqrt(6.0 / static_cast<double>(hidden)));
    fill(p.w3, std::sqrt(1.0 / static_cast<double>(hidden)));
    return p;
  }

  bool all_finite() const { return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite() &&
                                   w3.allFinite() && std::isfinite(b3); }

  // this += scale * other
  void add_scaled(const MlpParams& other, double scale) {
    W1 += scale * other.W1;
    b1 += scale * other.b1;
    W2 += scale * other.W2;
    b2 += scale * other.b2;
    w3 += scale * other.w3;
    b3 += scale * other.b3;
  }
};

// Same shapes as the parameters they differentiate.
using MlpGradients = MlpParams;

inline Eigen::MatrixXd feature_matrix(const QueryInstance& q, std::size_t feature_dim) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(q.size()), static_cast<Eigen::Index>(feature_dim));
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& f = q.items[i].features;
    require(f.size() == feature_dim, Errc::kDimMismatch,
            "item has " + std::to_string(f.size()) + " features, model expects " + std::to_string(feature_dim));
    for (std::size_t c = 0; c < feature_dim; ++c)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = f[c];
  }
  return x;
}

namespace detail {

struct ForwardPass {
  Eigen::MatrixXd x;
  Eigen::MatrixXd a1;
  Eigen::MatrixXd a2;
  Eigen::VectorXd scores;
};

inline ForwardPass forward(const MlpParams& p, const QueryInstance& q) {
  ForwardPass f;
  f.x = feature_matrix(q, p.feature_dim());
  f.a1 = ((f.x * p.W1).rowwise() + p.b1.transpose()).cwiseMax(0.0);
  f.a2 = ((f.a1 * p.W2).rowwise() + p.b2.transpose()).cwiseMax(0.0);
  f.scores = (f.a2 * p.w3).array() + p.b3;
  return f;
}

}  // namespace detail

inline std::vector<double> forward_scores(const MlpParams& p, const QueryInstance& q) {
  const auto f = detail::forward(p, q);
  return {f.scores.data(), f.scores.data() + f.scores.size()};
}

// Gradient of sum_d upstream(d) * m(d) with respect to every parameter.
inline MlpGradients backward_chain(const MlpParams& p, const QueryInstance& q, std::span<const double> upstream) {
  require(upstream.size() == q.size(), Errc::kDimMismatch, "upstream gradient does not cover the query");
  const auto f = detail::forward(p, q);
  const Eigen::Map<const Eigen::VectorXd> g(upstream.data(), static_cast<Eigen::Index>(upstream.size()));
  MlpGradients out;
  out.w3 = f.a2.transpose() * g;
  out.b3 = g.sum();
  const Eigen::MatrixXd d2 = ((g * p.w3.transpose()).array() * (f.a2.array() > 0.0).cast<double>()).matrix();
  out.W2 = f.a1.transpose() * d2;
  out.b2 = d2.colwise().sum().transpose();
  const Eigen::MatrixXd d1 = ((d2 * p.W2.transpose()).array() * (f.a1.array() > 0.0).cast<double>()).matrix();
  out.W1 = f.x.transpose() * d1;
  out.b1 = d1.colwise().sum().transpose();
  return out;
}

// Checkpoint: JSON with a format tag, version and shape header, followed by
// the parameter arrays (row-major nested lists) and free-form metadata.
inline constexpr const char* kCheckpointFormat = "gfpl-mlp";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                                        const char* field) {
  require(j.is_array() && j.size() == rows, Errc::kIncompatibleCheckpoint, std::string("bad shape for ") + field);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    require(j[r].is_array() && j[r].size() == cols, Errc::kIncompatibleCheckpoint,
            std::string("bad shape for ") + field);
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, std::size_t n, const char* field) {
  require(j.is_array() && j.size() == n, Errc::kIncompatibleCheckpoint, std::string("bad shape for ") + field);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace detail

struct Checkpoint {
  MlpParams params;
  nlohmann::json metadata = nlohmann::json::object();
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["feature_dim"] = p.feature_dim();
  j["hidden"] = p.hidden();
  j["W1"] = detail::matrix_to_json(p.W1);
  j["b1"] = detail::vector_to_json(p.b1);
  j["W2"] = detail::matrix_to_json(p.W2);
  j["b2"] = detail::vector_to_json(p.b2);
  j["w3"] = detail::vector_to_json(p.w3);
  j["b3"] = p.b3;
  j["metadata"] = ckpt.metadata;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) try {
  require(j.is_object() && j.value("format", "") == kCheckpointFormat, Errc::kIncompatibleCheckpoint,
          "not a gfpl-mlp checkpoint");
  require(j.value("version", 0) == kCheckpointVersion, Errc::kIncompatibleCheckpoint, "unsupported version");
  const auto f = j.at("feature_dim").get<std::size_t>();
  const auto h = j.at("hidden").get<std::size_t>();
  Checkpoint c;
  c.params.W1 = detail::matrix_from_json(j.at("W1"), f, h, "W1");
  c.params.b1 = detail::vector_from_json(j.at("b1"), h, "b1");
  c.params.W2 = detail::matrix_from_json(j.at("W2"), h, h, "W2");
  c.params.b2 = detail::vector_from_json(j.at("b2"), h, "b2");
  c.params.w3 = detail::vector_from_json(j.at("w3"), h, "w3");
  c.params.b3 = j.at("b3").get<double>();
  c.metadata = j.value("metadata", nlohmann::json::object());
  return c;
} catch (const nlohmann::json::exception& e) {
  fail(Errc::kIncompatibleCheckpoint, std::string("malformed checkpoint: ") + e.what());
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::kIo, "cannot write '" + path + "'");
  out << checkpoint_to_json(ckpt).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::kIo, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kIncompatibleCheckpoint, std::string("malformed checkpoint: ") + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace gfpl
