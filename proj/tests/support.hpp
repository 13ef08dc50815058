#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include "fcgssl/autodiff.hpp"
#include "fcgssl/graph.hpp"
#include "fcgssl/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace fcg::testing {

/// Erdos-Renyi graph with Gaussian features. Isolated nodes are allowed.
inline Graph random_graph(Index n, double p, Index feature_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (uniform_open0(rng) <= p) edges.push_back({i, j});
  Eigen::MatrixXd x(n, feature_dim);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < feature_dim; ++c) x(r, c) = standard_normal(rng);
  return Graph(n, std::move(edges), std::move(x));
}

inline Graph path_graph(Index n, Index feature_dim = 2) {
  std::vector<Edge> edges;
  for (Index i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  return Graph(n, std::move(edges), Eigen::MatrixXd::Ones(n, feature_dim));
}

/// Adds N(0, scale^2) noise to every parameter so checks run away from the
/// all-zero biases and mask token of a fresh model.
inline void jitter(ad::ParameterStore& store, double scale, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : store)
    for (Index k = 0; k < p->value().size(); ++k) p->value().data()[k] += scale * standard_normal(rng);
}

struct GradCheck {
  double max_rel_error = 0.0;
  Index checked = 0;
  std::string worst;
};

/// Compares tape gradients with central differences on up to `samples`
/// randomly chosen scalars spread across all parameters. `loss` must build a
/// fresh tape each call and be deterministic in the parameter values.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(ad::ParameterStore& store, const std::function<double(bool)>& loss, Index samples,
                                 std::uint64_t seed, double h = 1e-5, double floor = 1e-6) {
  store.zero_grad();
  loss(true);
  std::vector<std::pair<ad::Parameter*, Index>> slots;
  for (auto& p : store)
    for (Index k = 0; k < p->value().size(); ++k) slots.emplace_back(p.get(), k);
  Rng rng(seed);
  std::shuffle(slots.begin(), slots.end(), rng);
  if (static_cast<Index>(slots.size()) > samples) slots.resize(static_cast<std::size_t>(samples));

  GradCheck out;
  for (auto& [param, k] : slots) {
    const double analytic = param->has_grad() ? param->grad().data()[k] : 0.0;
    double& v = param->value().data()[k];
    const double saved = v;
    v = saved + h;
    const double up = loss(false);
    v = saved - h;
    const double down = loss(false);
    v = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = param->name() + "[" + std::to_string(k) + "] analytic=" + std::to_string(analytic) +
                  " numeric=" + std::to_string(numeric);
    }
    ++out.checked;
  }
  return out;
}

/// Exact inclusion probabilities of sequential weighted sampling without
/// replacement, by enumerating every ordered sequence of `count` draws.
inline std::vector<double> exact_inclusion(const std::vector<double>& weights, Index count) {
  std::vector<double> incl(weights.size(), 0.0);
  std::vector<char> taken(weights.size(), 0);
  std::vector<std::size_t> chosen;
  const std::function<void(double)> recurse = [&](double prob) {
    if (static_cast<Index>(chosen.size()) == count) {
      for (std::size_t i : chosen) incl[i] += prob;
      return;
    }
    double left = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (!taken[i]) left += weights[i];
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (taken[i] || weights[i] == 0.0) continue;
      taken[i] = 1;
      chosen.push_back(i);
      recurse(prob * weights[i] / left);
      chosen.pop_back();
      taken[i] = 0;
    }
  };
  recurse(1.0);
  return incl;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fcgssl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fcg::testing
