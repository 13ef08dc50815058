#include "fcgssl/errors.hpp"
#include "fcgssl/spectral.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace fcg;

namespace {

void check_orthonormal(const Eigen::MatrixXd& u, double tol) {
  const Eigen::MatrixXd gram = u.transpose() * u;
  CHECK((gram - Eigen::MatrixXd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff() < tol);
}

}  // namespace

TEST_CASE("K2 spectrum, positions and edge features") {
  const Graph g(2, {{0, 1}}, Eigen::MatrixXd::Ones(2, 1));
  const SpectralBundle b = eigensolve_smallest(build_laplacian(g), 2);
  CHECK(std::abs(b.eigenvalues[0]) < 1e-12);
  CHECK(std::abs(b.eigenvalues[1] - 2.0) < 1e-12);

  const PositionMatrix p = position_matrix(b, g);
  CHECK(std::abs(p(0, 1) - std::sqrt(2.0)) < 1e-12);
  CHECK(p(1, 0) == p(0, 1));
  CHECK(p(0, 0) == 0.0);

  const EdgeFeatureMatrix ef = edge_features(b, g);
  REQUIRE(ef.dim() == 2);
  CHECK(std::abs(ef.rows(0, 0) - 0.5) < 1e-12);
  CHECK(std::abs(ef.rows(0, 1) + 0.5) < 1e-12);
}

TEST_CASE("eigenpairs satisfy the residual bound and are orthonormal") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = testing::random_graph(30 + static_cast<Index>(seed) * 5, 0.15, 1, seed);
    const LaplacianView lap = build_laplacian(g);
    const SpectralBundle b = eigensolve_smallest(lap, 8);
    CHECK(max_residual(lap.laplacian, {b.eigenvalues, b.eigenvectors}) <= 1e-8);
    check_orthonormal(b.eigenvectors, 1e-8);
    for (Index c = 1; c < b.eigenvalues.size(); ++c) CHECK(b.eigenvalues[c] >= b.eigenvalues[c - 1]);
  }
}

TEST_CASE("Lanczos agrees with the dense solver") {
  SpectralOptions sparse;
  sparse.dense_cutoff = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // Low edge probability leaves isolated nodes and several components,
    // which puts repeated eigenvalues at 0 and 1.
    const Graph g = testing::random_graph(40 + static_cast<Index>(seed), seed % 2 ? 0.04 : 0.12, 1, seed);
    const LaplacianView lap = build_laplacian(g);
    const Index k = 10;
    const EigenPairs ref = dense_smallest(Eigen::MatrixXd(lap.laplacian), k);
    const EigenPairs lz = lanczos_smallest(lap.laplacian, k);
    CAPTURE(seed);
    CHECK((ref.values - lz.values).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(max_residual(lap.laplacian, lz) <= 1e-8);
    check_orthonormal(lz.vectors, 1e-8);
    const SpectralBundle b = eigensolve_smallest(lap, k, sparse);
    CHECK((b.eigenvalues - ref.values).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("sign normalization makes the largest-magnitude entry positive") {
  Eigen::MatrixXd u{{0.1, -0.9}, {-0.8, 0.2}, {0.3, 0.1}};
  normalize_signs(u);
  CHECK(u(1, 0) == 0.8);
  CHECK(u(0, 1) == 0.9);
  CHECK(u(0, 0) == -0.1);
}

TEST_CASE("K and K_e are range checked") {
  const LaplacianView lap = build_laplacian(testing::path_graph(4));
  CHECK_THROWS_AS(eigensolve_smallest(lap, 5), ConfigError);
  CHECK_THROWS_AS(eigensolve_smallest(lap, 0), ConfigError);
  CHECK_THROWS_AS(eigensolve_smallest(lap, 2, 5), ConfigError);
  const SpectralBundle b = eigensolve_smallest(lap, 2, 4);
  CHECK(b.eigenvalues.size() == 4);
  CHECK(b.frequency_values().size() == 2);
  CHECK(b.position_vectors().cols() == 4);
}

TEST_CASE("RBF basis values") {
  const Eigen::VectorXd means{{0.0, 1.0, 2.0}};
  const Eigen::RowVectorXd at_mean = rbf_embed(1.0, means, 0.5);
  CHECK(at_mean[1] == 1.0);
  const Eigen::RowVectorXd one_sigma = rbf_embed(1.5, means, 0.5);
  CHECK(std::abs(one_sigma[1] - std::exp(-0.5)) < 1e-15);
  CHECK(rbf_embed(100.0, means, 0.5).maxCoeff() < 1e-300);
  CHECK_THROWS_AS(rbf_embed(1.0, means, 0.0), ConfigError);
  CHECK_THROWS_AS(rbf_embed(1.0, means, -1.0), ConfigError);

  const RbfBasis basis = make_rbf_basis(3.0, 4);
  CHECK(basis.means.isApprox(Eigen::VectorXd{{0.0, 1.0, 2.0, 3.0}}));
  CHECK(basis.sigma == 1.0);
  CHECK(make_rbf_basis(0.0, 4).sigma == 1.0);
}

TEST_CASE("spectral cache round trip and key mismatch") {
  const Graph g = testing::random_graph(20, 0.3, 1, 9);
  const SpectralBundle b = eigensolve_smallest(build_laplacian(g), 4, 6);
  const auto path = testing::scratch_dir("spectral_cache") / "spectral.bin";
  const std::uint64_t hash = g.structure_hash();
  save_spectral_cache(path, b, hash);
  const auto loaded = load_spectral_cache(path, hash, 20, 4, 6);
  REQUIRE(loaded);
  CHECK(loaded->eigenvalues == b.eigenvalues);
  CHECK(loaded->eigenvectors == b.eigenvectors);
  CHECK(!load_spectral_cache(path, hash + 1, 20, 4, 6));
  CHECK(!load_spectral_cache(path, hash, 20, 5, 6));
  CHECK(!load_spectral_cache(path, hash, 20, 4, 5));
  CHECK(!load_spectral_cache(path.parent_path() / "missing.bin", hash, 20, 4, 6));
  std::filesystem::resize_file(path, 40);
  CHECK(!load_spectral_cache(path, hash, 20, 4, 6));
}
