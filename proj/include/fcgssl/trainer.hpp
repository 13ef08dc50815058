#pragma once

#include "fcgssl/autodiff.hpp"
#include "fcgssl/config.hpp"
#include "fcgssl/corruption.hpp"
#include "fcgssl/frequency.hpp"
#include "fcgssl/graph.hpp"
#include "fcgssl/model.hpp"
#include "fcgssl/spectral.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fcg {

/// Loads data.path, or generates the synthetic graph when it is empty.
Graph load_run_graph(const RunConfig& cfg);

/// Everything computed once per graph before training.
struct Preprocessed {
  SpectralBundle bundle;
  ContributionScores scores;
  PositionMatrix positions;
  EdgeFeatureMatrix edge_targets;
  PositionEncoding encoding;
  bool cache_hit = false;
};

/// K and K_e after resolving the 0 defaults against N.
std::pair<Index, Index> resolve_spectral_sizes(const RunConfig& cfg, Index num_nodes);

/// Directory named by FCG_CACHE_DIR, if set and non-empty.
std::optional<std::filesystem::path> cache_dir_from_env();

/// Eigensolve (or cache load), contribution scores, positions, edge targets and
/// RBF lift. With a cache directory the eigenpairs are read from and written
/// to "<dir>/spectral_<hash>_<N>_<K>_<K_e>.bin".
Preprocessed preprocess(const Graph& g, const RunConfig& cfg,
                        const std::optional<std::filesystem::path>& cache_dir = cache_dir_from_env());

/// RBF width used by the model: encoder.rbf, or the feature width when 0.
Index rbf_width(const RunConfig& cfg, const Graph& g);

std::unique_ptr<FcgModel> make_model(const RunConfig& cfg, const Graph& g, const Preprocessed& pre);

/// Per-epoch corruption seed.
std::uint64_t plan_seed(std::uint64_t run_seed, Index epoch);

struct StepLosses {
  ad::Var total;
  ad::Var node;
  ad::Var edge;
  ad::Var align;
};

/// One forward pass: encode the three corrupted views, reconstruct masked
/// features from the node view and dropped edges from the edge view, align
/// the node and edge views with the combined view, and combine the terms.
StepLosses compute_losses(ad::Tape& tape, FcgModel& model, const Graph& g, const Preprocessed& pre,
                          const CorruptionPlan& plan, const RunConfig& cfg);

struct EpochRecord {
  Index epoch = 0;  ///< 1-based
  double total = 0.0;
  double node = 0.0;
  double edge = 0.0;
  double align = 0.0;
};

struct TrainResult {
  std::unique_ptr<FcgModel> model;
  std::vector<EpochRecord> history;
};

/// Called after each epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Fresh corruption plan, forward, backward and one Adam step per epoch.
/// A non-finite loss throws NumericError naming the epoch.
TrainResult train(const RunConfig& cfg, const Graph& g, const Preprocessed& pre, const EpochCallback& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       const RunConfig& cfg);

/// Parameters plus the resolved config as metadata.
void save_model(const std::filesystem::path& path, const FcgModel& model, const RunConfig& cfg);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<FcgModel> model;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace fcg
