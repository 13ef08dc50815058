#include "fcgssl/spectral.hpp"

#include "fcgssl/binary_io.hpp"
#include "fcgssl/errors.hpp"
#include "fcgssl/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace fcg {

namespace {

constexpr char kCacheMagic[9] = "FCGSPEC\0";
constexpr std::uint64_t kCacheVersion = 1;

// Removes the components of v along the columns of basis (classical
// Gram-Schmidt, applied twice).
void project_out(const Eigen::Ref<const Eigen::MatrixXd>& basis, Eigen::VectorXd& v) {
  if (basis.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) v.noalias() -= basis * (basis.transpose() * v);
}

struct KrylovRun {
  Eigen::VectorXd ritz_values;
  Eigen::MatrixXd ritz_vectors;
};

// One Lanczos pass of at most `steps` steps restricted to the orthogonal
// complement of `locked`. Stops early on an invariant subspace.
KrylovRun lanczos_pass(const SparseMatrix& a, const Eigen::MatrixXd& locked, Index steps, Rng& rng) {
  const Index n = a.rows();
  Eigen::MatrixXd basis(n, steps);
  Eigen::VectorXd alpha(steps);
  Eigen::VectorXd beta(steps);

  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = standard_normal(rng);
  project_out(locked, v);
  v.normalize();

  Index m = 0;
  Eigen::VectorXd w(n);
  for (Index j = 0; j < steps; ++j) {
    basis.col(j) = v;
    m = j + 1;
    w.noalias() = a * v;
    alpha[j] = v.dot(w);
    w -= alpha[j] * v;
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
    project_out(basis.leftCols(j + 1), w);
    project_out(locked, w);
    beta[j] = w.norm();
    if (beta[j] < 1e-12) break;
    v = w / beta[j];
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
  Eigen::VectorXd diag = alpha.head(m);
  Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(beta.head(m - 1)) : Eigen::VectorXd(0);
  tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  KrylovRun run;
  run.ritz_values = tri.eigenvalues();
  run.ritz_vectors = basis.leftCols(m) * tri.eigenvectors();
  for (Index c = 0; c < run.ritz_vectors.cols(); ++c) run.ritz_vectors.col(c).normalize();
  return run;
}

double residual(const SparseMatrix& a, const Eigen::Ref<const Eigen::VectorXd>& y, double theta) {
  return (a * y - theta * y).norm();
}

void sort_pairs(EigenPairs& p) {
  std::vector<Index> order(static_cast<std::size_t>(p.values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return p.values[x] < p.values[y]; });
  EigenPairs sorted{Eigen::VectorXd(p.values.size()), Eigen::MatrixXd(p.vectors.rows(), p.vectors.cols())};
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted.values[static_cast<Index>(k)] = p.values[order[k]];
    sorted.vectors.col(static_cast<Index>(k)) = p.vectors.col(order[k]);
  }
  p = std::move(sorted);
}

}  // namespace

EigenPairs dense_smallest(const Eigen::MatrixXd& a, Index count) {
  if (count < 1 || count > a.rows()) throw ConfigError("eigenpair count out of range");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw SpectralError("dense eigensolve failed", -1.0);
  return {es.eigenvalues().head(count), es.eigenvectors().leftCols(count)};
}

EigenPairs lanczos_smallest(const SparseMatrix& a, Index count, const LanczosOptions& opt) {
  const Index n = a.rows();
  if (count < 1 || count > n) throw ConfigError("eigenpair count out of range");
  Rng rng(opt.seed);
  Eigen::MatrixXd locked(n, 0);
  std::vector<double> locked_values;
  int restarts = 0;
  double worst = 0.0;

  auto lock = [&](const Eigen::VectorXd& y, double theta) {
    locked.conservativeResize(Eigen::NoChange, locked.cols() + 1);
    locked.col(locked.cols() - 1) = y;
    locked_values.push_back(theta);
  };

  // Finds at least one converged pair in the complement of `locked`, growing
  // the Krylov space as needed. Returns the run and how many leading Ritz
  // pairs converged.
  auto solve_complement = [&](Index wanted) -> std::pair<KrylovRun, Index> {
    const Index room = n - locked.cols();
    Index steps = std::min(room, std::max(opt.min_subspace, 2 * wanted + 20));
    while (true) {
      if (++restarts > opt.max_restarts) {
        throw SpectralError("Lanczos did not converge within " + std::to_string(opt.max_restarts) + " restarts",
                            worst);
      }
      auto run = lanczos_pass(a, locked, steps, rng);
      Index converged = 0;
      worst = 0.0;
      for (Index c = 0; c < run.ritz_values.size() && converged < wanted; ++c) {
        const double r = residual(a, run.ritz_vectors.col(c), run.ritz_values[c]);
        if (r > opt.tolerance) {
          worst = r;
          break;
        }
        ++converged;
      }
      if (converged > 0) return {std::move(run), converged};
      if (steps == room) {
        // The Krylov space spans the whole complement; a miss here means
        // rounding has destroyed orthogonality and restarting will not help.
        throw SpectralError("Lanczos failed on the full complement space", worst);
      }
      steps = std::min(room, steps * 2);
    }
  };

  while (locked.cols() < count) {
    const Index wanted = count - locked.cols();
    auto [run, converged] = solve_complement(wanted);
    for (Index c = 0; c < converged; ++c) lock(run.ritz_vectors.col(c), run.ritz_values[c]);
  }

  // A single Krylov run carries one copy of each eigenvalue, so a repeated
  // eigenvalue may have been skipped. Keep pulling the smallest pair out of the
  // complement while it undercuts the largest locked value.
  while (locked.cols() < n) {
    auto [run, converged] = solve_complement(1);
    const double candidate = run.ritz_values[0];
    const auto largest = std::max_element(locked_values.begin(), locked_values.end());
    if (candidate >= *largest - opt.tolerance) break;
    const auto drop = static_cast<Index>(largest - locked_values.begin());
    locked.col(drop) = run.ritz_vectors.col(0);
    *largest = candidate;
    // Re-orthonormalize the swapped column against the rest.
    Eigen::VectorXd y = locked.col(drop);
    Eigen::MatrixXd others(n, locked.cols() - 1);
    for (Index c = 0, k = 0; c < locked.cols(); ++c)
      if (c != drop) others.col(k++) = locked.col(c);
    project_out(others, y);
    locked.col(drop) = y.normalized();
  }

  EigenPairs out{Eigen::Map<Eigen::VectorXd>(locked_values.data(), static_cast<Index>(locked_values.size())),
                 locked};
  sort_pairs(out);
  return out;
}

double max_residual(const SparseMatrix& a, const EigenPairs& pairs) {
  double worst = 0.0;
  for (Index c = 0; c < pairs.values.size(); ++c)
    worst = std::max(worst, residual(a, pairs.vectors.col(c), pairs.values[c]));
  return worst;
}

SpectralBundle eigensolve_smallest(const LaplacianView& lap, Index num_frequencies, Index num_position,
                                   const SpectralOptions& opt) {
  const Index n = lap.laplacian.rows();
  if (num_frequencies < 1 || num_frequencies > n) {
    throw ConfigError("K must lie in [1, N]; got K=" + std::to_string(num_frequencies) + ", N=" + std::to_string(n));
  }
  if (num_position < 1 || num_position > n) {
    throw ConfigError("K_e must lie in [1, N]; got K_e=" + std::to_string(num_position) + ", N=" + std::to_string(n));
  }
  const Index count = std::max(num_frequencies, num_position);
  // Past half the spectrum a full dense solve is cheaper than Lanczos.
  const bool dense = n < opt.dense_cutoff || 2 * count > n;
  EigenPairs pairs = dense ? dense_smallest(Eigen::MatrixXd(lap.laplacian), count)
                                          : lanczos_smallest(lap.laplacian, count, opt.lanczos);
  const double worst = max_residual(lap.laplacian, pairs);
  if (worst > 1e-8) throw SpectralError("eigenpair residual above tolerance", worst);
  normalize_signs(pairs.vectors);

  SpectralBundle bundle;
  bundle.num_frequencies = num_frequencies;
  bundle.num_position = num_position;
  bundle.eigenvalues = std::move(pairs.values);
  bundle.eigenvectors = std::move(pairs.vectors);
  return bundle;
}

PositionMatrix position_matrix(const SpectralBundle& bundle, const Graph& g) {
  if (bundle.num_nodes() != g.num_nodes()) throw ShapeError("spectral bundle does not match graph size");
  const auto u = bundle.position_vectors();
  PositionMatrix p;
  p.edge_distance.resize(g.num_edges());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * g.edges().size());
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& [i, j] = g.edges()[static_cast<std::size_t>(e)];
    const double d = (u.row(i) - u.row(j)).norm();
    p.edge_distance[e] = d;
    trips.emplace_back(i, j, d);
    trips.emplace_back(j, i, d);
  }
  p.matrix.resize(g.num_nodes(), g.num_nodes());
  p.matrix.setFromTriplets(trips.begin(), trips.end());
  return p;
}

EdgeFeatureMatrix edge_features(const SpectralBundle& bundle, const Graph& g) {
  if (bundle.num_nodes() != g.num_nodes()) throw ShapeError("spectral bundle does not match graph size");
  const auto u = bundle.position_vectors();
  EdgeFeatureMatrix ef;
  ef.rows.resize(g.num_edges(), bundle.num_position);
  for (Index e = 0; e < g.num_edges(); ++e) {
    const auto& [i, j] = g.edges()[static_cast<std::size_t>(e)];
    ef.rows.row(e) = u.row(i).cwiseProduct(u.row(j));
  }
  return ef;
}

RbfBasis make_rbf_basis(double max_distance, Index count) {
  if (count < 1) throw ConfigError("RBF count must be >= 1");
  RbfBasis basis;
  basis.means = Eigen::VectorXd::LinSpaced(count, 0.0, max_distance);
  const double spacing = count > 1 ? max_distance / static_cast<double>(count - 1) : 0.0;
  basis.sigma = spacing > 0.0 ? spacing : std::max(max_distance, 1.0);
  return basis;
}

Eigen::RowVectorXd rbf_embed(double distance, const Eigen::Ref<const Eigen::VectorXd>& means, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("RBF sigma must be positive");
  if (means.size() < 1) throw ConfigError("RBF needs at least one mean");
  const double denom = 2.0 * sigma * sigma;
  return (-(distance - means.array()).square() / denom).exp().matrix().transpose();
}

void save_spectral_cache(const std::filesystem::path& path, const SpectralBundle& bundle, std::uint64_t graph_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GraphError("cannot write spectral cache " + path.string());
  binary::write_magic(out, kCacheMagic);
  binary::write_u64(out, kCacheVersion);
  binary::write_u64(out, graph_hash);
  binary::write_u64(out, static_cast<std::uint64_t>(bundle.num_nodes()));
  binary::write_u64(out, static_cast<std::uint64_t>(bundle.num_frequencies));
  binary::write_u64(out, static_cast<std::uint64_t>(bundle.num_position));
  binary::write_u64(out, static_cast<std::uint64_t>(bundle.eigenvalues.size()));
  for (Index c = 0; c < bundle.eigenvalues.size(); ++c) binary::write_f64(out, bundle.eigenvalues[c]);
  // Row-major: one node's spectral coordinates are contiguous.
  for (Index r = 0; r < bundle.eigenvectors.rows(); ++r)
    for (Index c = 0; c < bundle.eigenvectors.cols(); ++c) binary::write_f64(out, bundle.eigenvectors(r, c));
}

std::optional<SpectralBundle> load_spectral_cache(const std::filesystem::path& path, std::uint64_t graph_hash,
                                                  Index num_nodes, Index num_frequencies, Index num_position) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    if (!binary::check_magic(in, kCacheMagic)) return std::nullopt;
    if (binary::read_u64(in) != kCacheVersion) return std::nullopt;
    if (binary::read_u64(in) != graph_hash) return std::nullopt;
    if (binary::read_u64(in) != static_cast<std::uint64_t>(num_nodes)) return std::nullopt;
    if (binary::read_u64(in) != static_cast<std::uint64_t>(num_frequencies)) return std::nullopt;
    if (binary::read_u64(in) != static_cast<std::uint64_t>(num_position)) return std::nullopt;
    const auto count = static_cast<Index>(binary::read_u64(in));
    if (count != std::max(num_frequencies, num_position)) return std::nullopt;
    SpectralBundle b;
    b.num_frequencies = num_frequencies;
    b.num_position = num_position;
    b.eigenvalues.resize(count);
    for (Index c = 0; c < count; ++c) b.eigenvalues[c] = binary::read_f64(in);
    b.eigenvectors.resize(num_nodes, count);
    for (Index r = 0; r < num_nodes; ++r)
      for (Index c = 0; c < count; ++c) b.eigenvectors(r, c) = binary::read_f64(in);
    return b;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace fcg
