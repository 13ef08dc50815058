#pragma once

#include "fcgssl/frequency.hpp"
#include "fcgssl/graph.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fcg {

/// Draws `count` distinct items without replacement, each step picking an
/// item with probability proportional to its weight among those left.
///
/// Uses exponential race keys -log(u)/w and keeps the `count` smallest.
/// Zero-weight items rank behind every positive-weight item (in random order
/// among themselves). If every weight is zero the draw is uniform. Returns
/// the chosen item indices in ascending order.
std::vector<Index> sample_without_replacement(std::span<const double> weights, Index count, std::uint64_t seed);

/// Rank index of every value: smallest -> 1, largest -> M. Equal values are
/// ranked by ascending item index.
Eigen::VectorXd rank_weights(std::span<const double> values);

inline std::vector<Index> sample_value_based(std::span<const double> weights, Index count, std::uint64_t seed) {
  return sample_without_replacement(weights, count, seed);
}

inline std::vector<Index> sample_rank_based(std::span<const double> values, Index count, std::uint64_t seed) {
  const Eigen::VectorXd ranks = rank_weights(values);
  return sample_without_replacement({ranks.data(), static_cast<std::size_t>(ranks.size())}, count, seed);
}

/// round(rate * total), halves rounded up, clamped to [0, total].
Index sample_count(double rate, Index total);

/// Sorted node ids and edge ids (positions in Graph::edges()).
struct ItemSet {
  enum class Kind { kNode, kEdge, kMixed };

  Kind kind = Kind::kNode;
  std::vector<Index> nodes;
  std::vector<Index> edges;

  bool empty() const { return nodes.empty() && edges.empty(); }
};

struct CorruptionOptions {
  double node_rate = 0.3;
  double edge_rate = 0.3;
  /// Replace C_N / C_E with uniform random selection.
  bool uniform_nodes = false;
  bool uniform_edges = false;
  /// Skip the union/intersection step: the value-based draws form the node and
  /// edge views, the rank-based draws form the combined (contrast) view.
  bool separate_strategies = false;
};

/// The four raw draws and the three combined item sets for one epoch.
struct CorruptionPlan {
  std::vector<Index> value_nodes;  ///< P_N
  std::vector<Index> rank_nodes;   ///< Q_N
  std::vector<Index> value_edges;  ///< P_E
  std::vector<Index> rank_edges;   ///< Q_E

  ItemSet node_view;      ///< S_N = P_N u Q_N
  ItemSet edge_view;      ///< S_E = P_E u Q_E
  ItemSet combined_view;  ///< S_C = (P_N n Q_N) u (P_E n Q_E)

  CorruptionOptions options;
  std::uint64_t seed = 0;
  std::array<std::uint64_t, 4> sub_seeds{};
};

CorruptionPlan build_plan(const ContributionScores& scores, const Graph& g, const CorruptionOptions& opt,
                          std::uint64_t seed);

enum class ViewKind { kNode, kEdge, kCombined };

/// A graph with masked node features and dropped edges. The mask token itself
/// belongs to the model, so masked rows are only marked here.
struct CorruptedGraph {
  const Graph* base = nullptr;
  std::vector<Index> masked_nodes;
  std::vector<char> is_masked;
  std::vector<Index> kept_edges;
  std::vector<Index> dropped_edges;

  /// X with masked rows replaced by `token`.
  Eigen::MatrixXd corrupted_features(const Eigen::RowVectorXd& token) const;
};

CorruptedGraph materialize(const CorruptionPlan& plan, const Graph& g, ViewKind view);

/// The identity corruption: no masked nodes, every edge kept.
CorruptedGraph uncorrupted(const Graph& g);

void write_plan_json(const std::filesystem::path& path, const CorruptionPlan& plan, const Graph& g);

}  // namespace fcg
