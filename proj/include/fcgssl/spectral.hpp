#pragma once

#include "fcgssl/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>

namespace fcg {

/// Eigenpairs in ascending eigenvalue order; column n of `vectors` pairs with values[n].
struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

struct LanczosOptions {
  /// Residual ||A y - theta y|| a Ritz pair must reach before it is locked.
  double tolerance = 1e-10;
  /// Smallest Krylov subspace tried per restart.
  Index min_subspace = 40;
  /// Upper bound on Lanczos restarts across the whole solve.
  int max_restarts = 1000;
  std::uint64_t seed = 0x5eed;
};

/// Smallest `count` eigenpairs of a sparse symmetric matrix by restarted
/// Lanczos with full re-orthogonalization and explicit locking. Converged
/// pairs are deflated, so repeated eigenvalues are recovered one copy per
/// restart; a final pass checks the complement for anything smaller than the
/// largest locked value. Throws SpectralError if a pair cannot be resolved.
EigenPairs lanczos_smallest(const SparseMatrix& a, Index count, const LanczosOptions& opt = {});

/// Smallest `count` eigenpairs from a full dense symmetric eigensolve.
EigenPairs dense_smallest(const Eigen::MatrixXd& a, Index count);

/// Flips each column so that its entry of largest magnitude is positive.
/// Magnitude ties (within 1e-12) resolve to the lowest row index.
template <typename Derived>
void normalize_signs(Eigen::MatrixBase<Derived>& u) {
  for (Index c = 0; c < u.cols(); ++c) {
    const double peak = u.col(c).cwiseAbs().maxCoeff();
    for (Index r = 0; r < u.rows(); ++r) {
      if (std::abs(u(r, c)) >= peak - 1e-12) {
        if (u(r, c) < 0) u.col(c) *= -1.0;
        break;
      }
    }
  }
}

/// max_n ||A u_n - lambda_n u_n||_2 over the pairs.
double max_residual(const SparseMatrix& a, const EigenPairs& pairs);

/// Low-frequency spectrum of a graph's normalized Laplacian.
///
/// `num_frequencies` (K) columns feed the contribution metric; the first
/// `num_position` (K_e) columns feed relative positions and edge features.
/// Enough pairs are stored for both, so eigenvalues().size() == max(K, K_e).
struct SpectralBundle {
  Index num_frequencies = 0;
  Index num_position = 0;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;

  Index num_nodes() const { return eigenvectors.rows(); }
  auto frequency_values() const { return eigenvalues.head(num_frequencies); }
  auto frequency_vectors() const { return eigenvectors.leftCols(num_frequencies); }
  auto position_vectors() const { return eigenvectors.leftCols(num_position); }
};

struct SpectralOptions {
  /// Graphs with fewer nodes than this use the dense solver, as does any
  /// request for more than half the spectrum.
  Index dense_cutoff = 512;
  LanczosOptions lanczos{};
};

/// K smallest eigenpairs of the Laplacian, sign-normalized. Requires
/// 1 <= K <= N and 1 <= K_e <= N.
SpectralBundle eigensolve_smallest(const LaplacianView& lap, Index num_frequencies, Index num_position,
                                   const SpectralOptions& opt = {});
inline SpectralBundle eigensolve_smallest(const LaplacianView& lap, Index k, const SpectralOptions& opt = {}) {
  return eigensolve_smallest(lap, k, k, opt);
}

/// Distances ||U_i - U_j|| between the spectral coordinates of adjacent
/// nodes, over the first K_e eigenvectors. Zero off the edge set.
struct PositionMatrix {
  /// One entry per edge, aligned with Graph::edges().
  Eigen::VectorXd edge_distance;
  /// Symmetric sparse view holding the same values.
  SparseMatrix matrix;

  double operator()(Index i, Index j) const { return matrix.coeff(i, j); }
  double max_distance() const { return edge_distance.size() ? edge_distance.maxCoeff() : 0.0; }
};

PositionMatrix position_matrix(const SpectralBundle& bundle, const Graph& g);

/// U_i (*) U_j over the first K_e eigenvectors, one row per edge of Graph::edges().
struct EdgeFeatureMatrix {
  Eigen::MatrixXd rows;

  Index dim() const { return rows.cols(); }
};

EdgeFeatureMatrix edge_features(const SpectralBundle& bundle, const Graph& g);

/// Gaussian radial basis used to lift a scalar distance into B features.
struct RbfBasis {
  Eigen::VectorXd means;
  double sigma = 1.0;
};

/// B means evenly spaced on [0, max_distance]; sigma equals the spacing.
/// Falls back to sigma = max(max_distance, 1) when the spacing is zero.
RbfBasis make_rbf_basis(double max_distance, Index count);

/// exp(-(p - mu_k)^2 / (2 sigma^2)) for each mean. Throws ConfigError if sigma <= 0.
Eigen::RowVectorXd rbf_embed(double distance, const Eigen::Ref<const Eigen::VectorXd>& means, double sigma);

/// One row of RBF features per entry of `distances`.
template <typename Derived>
Eigen::MatrixXd rbf_embed(const Eigen::MatrixBase<Derived>& distances, const RbfBasis& basis) {
  Eigen::MatrixXd out(distances.size(), basis.means.size());
  for (Index r = 0; r < distances.size(); ++r) out.row(r) = rbf_embed(distances(r), basis.means, basis.sigma);
  return out;
}

/// Versioned binary cache of a SpectralBundle keyed by Graph::structure_hash().
void save_spectral_cache(const std::filesystem::path& path, const SpectralBundle& bundle, std::uint64_t graph_hash);

/// Returns the cached bundle if the file exists, parses and matches (hash, N, K, K_e).
std::optional<SpectralBundle> load_spectral_cache(const std::filesystem::path& path, std::uint64_t graph_hash,
                                                  Index num_nodes, Index num_frequencies, Index num_position);

}  // namespace fcg
