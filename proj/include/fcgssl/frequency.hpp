#pragma once

#include "fcgssl/graph.hpp"
#include "fcgssl/spectral.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>

namespace fcg {

/// Low-frequency contribution of every edge (aligned with Graph::edges())
/// and of every node.
struct ContributionScores {
  Eigen::VectorXd edge;
  Eigen::VectorXd node;
};

/// Area under the normalized cumulative-spectrum curve of one edge.
///
/// `terms[n]` is |u_n[i] * lambda_n * u_n[j]| in ascending-frequency order.
/// Returns (1/K) sum_m (sum_{n<=m} terms[n]) / (sum_n terms[n]), computed with
/// one prefix-sum pass. An all-zero term vector scores 0.
template <typename Derived>
double cumulative_contribution(const Eigen::MatrixBase<Derived>& terms) {
  const Index k = terms.size();
  double prefix = 0.0;
  double area = 0.0;
  for (Index n = 0; n < k; ++n) {
    prefix += terms(n);
    area += prefix;
  }
  if (prefix == 0.0) return 0.0;
  return area / (static_cast<double>(k) * prefix);
}

/// |u_n[i] lambda_n u_n[j]| for the K frequency components of the bundle.
Eigen::VectorXd spectral_terms(const SpectralBundle& bundle, Index i, Index j);

Eigen::VectorXd edge_contributions(const SpectralBundle& bundle, const Graph& g);

/// Mean of incident edge scores; isolated nodes score 0.
Eigen::VectorXd node_contributions(const Eigen::VectorXd& edge_scores, const Graph& g);

inline ContributionScores contributions(const SpectralBundle& bundle, const Graph& g) {
  ContributionScores s;
  s.edge = edge_contributions(bundle, g);
  s.node = node_contributions(s.edge, g);
  return s;
}

/// Writes "i,j,C_E" lines for every edge followed by "i,C_N" lines for every node.
void write_contributions_csv(const std::filesystem::path& path, const Graph& g, const ContributionScores& s,
                             const std::string& header_comment = {});

}  // namespace fcg
