#include "fcgssl/frequency.hpp"

#include "fcgssl/errors.hpp"

#include <charconv>
#include <fstream>

namespace fcg {

Eigen::VectorXd spectral_terms(const SpectralBundle& bundle, Index i, Index j) {
  const auto u = bundle.frequency_vectors();
  const auto lambda = bundle.frequency_values();
  return (u.row(i).transpose().array() * lambda.array() * u.row(j).transpose().array()).abs().matrix();
}

Eigen::VectorXd edge_contributions(const SpectralBundle& bundle, const Graph& g) {
  if (bundle.num_nodes() != g.num_nodes()) throw ShapeError("spectral bundle does not match graph size");
  if (bundle.num_frequencies < 1) throw ConfigError("K must be >= 1");
  Eigen::VectorXd scores(g.num_edges());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& [i, j] = g.edges()[static_cast<std::size_t>(e)];
    scores[e] = cumulative_contribution(spectral_terms(bundle, i, j));
  }
  return scores;
}

Eigen::VectorXd node_contributions(const Eigen::VectorXd& edge_scores, const Graph& g) {
  if (edge_scores.size() != g.num_edges()) throw ShapeError("edge score count does not match edge count");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g.num_nodes());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& [i, j] = g.edges()[static_cast<std::size_t>(e)];
    sum[i] += edge_scores[e];
    sum[j] += edge_scores[e];
  }
  for (Index i = 0; i < g.num_nodes(); ++i) {
    const Index deg = g.degree(i);
    sum[i] = deg > 0 ? sum[i] / static_cast<double>(deg) : 0.0;
  }
  return sum;
}

void write_contributions_csv(const std::filesystem::path& path, const Graph& g, const ContributionScores& s,
                             const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write " + path.string());
  out << header_comment;
  char buf[64];
  auto fmt = [&buf](double x) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
  };
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& [i, j] = g.edges()[static_cast<std::size_t>(e)];
    out << i << ',' << j << ',' << fmt(s.edge[e]) << '\n';
  }
  for (Index i = 0; i < g.num_nodes(); ++i) out << i << ',' << fmt(s.node[i]) << '\n';
}

}  // namespace fcg
