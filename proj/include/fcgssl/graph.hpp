#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace fcg {

using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Undirected edge in canonical orientation (first < second).
struct Edge {
  Index u = 0;
  Index v = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge canonical(Index i, Index j) { return i < j ? Edge{i, j} : Edge{j, i}; }

/// How self-loops and duplicate edges in raw input are treated.
enum class EdgePolicy { kStrict, kLenient };

/// Per-node (or per-graph) targets. Integral labels are class indices.
struct Labels {
  Eigen::VectorXd values;
  bool integral = true;

  std::vector<int> classes() const;
  int num_classes() const;
};

/// Immutable simple undirected graph with a dense node feature matrix.
class Graph {
 public:
  Graph() = default;
  /// Validates and canonicalizes `edges`. In strict mode self-loops and
  /// duplicates throw GraphError; in lenient mode they are dropped.
  Graph(Index num_nodes, std::vector<Edge> edges, Eigen::MatrixXd features,
        std::optional<Labels> labels = std::nullopt, EdgePolicy policy = EdgePolicy::kStrict);

  Index num_nodes() const { return num_nodes_; }
  Index num_edges() const { return static_cast<Index>(edges_.size()); }
  Index feature_dim() const { return features_.cols(); }

  const std::vector<Edge>& edges() const { return edges_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::optional<Labels>& labels() const { return labels_; }
  const SparseMatrix& adjacency() const { return adjacency_; }
  const std::vector<Index>& neighbors(Index i) const { return neighbors_[static_cast<std::size_t>(i)]; }
  Index degree(Index i) const { return static_cast<Index>(neighbors(i).size()); }

  /// Position of the canonical edge (i, j) in edges(), if present.
  std::optional<Index> edge_index(Index i, Index j) const;
  bool has_edge(Index i, Index j) const { return edge_index(i, j).has_value(); }

  /// 64-bit FNV-1a hash over N and the canonical edge list.
  std::uint64_t structure_hash() const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  Index num_nodes_ = 0;
  std::vector<Edge> edges_;
  Eigen::MatrixXd features_;
  std::optional<Labels> labels_;
  SparseMatrix adjacency_;
  std::vector<std::vector<Index>> neighbors_;
};

/// Degrees plus the symmetric normalized Laplacian I - D^-1/2 A D^-1/2.
/// Isolated nodes use d^-1/2 = 0, so their row is the identity row.
struct LaplacianView {
  Eigen::VectorXd degree;
  SparseMatrix laplacian;
};

LaplacianView build_laplacian(const Graph& g);

enum class GraphFormat {
  kEdgeListFeatures,  ///< directory holding edges.csv, features.csv, optional labels.csv
  kJsonBundle,        ///< single graph.json
};

/// Picks the format from the path: directories are edge-list bundles, files are JSON.
GraphFormat detect_format(const std::filesystem::path& path);

Graph load_graph(const std::filesystem::path& path, GraphFormat format,
                 EdgePolicy policy = EdgePolicy::kStrict);
inline Graph load_graph(const std::filesystem::path& path, EdgePolicy policy = EdgePolicy::kStrict) {
  return load_graph(path, detect_format(path), policy);
}

/// Writes with round-trip precision so load_graph(save_graph(g)) == g.
void save_graph(const Graph& g, const std::filesystem::path& path, GraphFormat format);

// Lower-level readers, exposed for tests and for callers that already hold the text.
std::vector<Edge> parse_edge_list(const std::string& text);
Eigen::MatrixXd parse_feature_matrix(const std::string& text);
Labels parse_labels(const std::string& text);

struct SyntheticSpec {
  std::vector<Index> block_sizes{50, 50};
  double p_in = 0.2;
  double p_out = 0.02;
  Index feature_dim = 16;
  /// Scale of the per-block feature means.
  double feature_signal = 1.0;
  /// Std-dev of per-node Gaussian noise added to the block mean.
  double feature_noise = 1.0;
  bool require_edges = true;
  std::uint64_t seed = 0;
};

/// Planted-partition graph: each pair (i, j) is linked independently with
/// p_in inside a block and p_out across blocks. Labels are block indices and
/// features are block mean + isotropic Gaussian noise.
Graph generate_synthetic(const SyntheticSpec& spec);

}  // namespace fcg
