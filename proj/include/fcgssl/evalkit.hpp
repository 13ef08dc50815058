#pragma once

#include "fcgssl/config.hpp"
#include "fcgssl/graph.hpp"
#include "fcgssl/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fcg {

struct Preprocessed;

/// Frozen-encoder representations of the uncorrupted graph, N x hidden.
Eigen::MatrixXd embed(FcgModel& model, const Graph& g, const Preprocessed& pre);

struct Split {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

/// Per-class shuffle, then the first 60% of each class to train, the next 20%
/// to validation and the rest to test.
Split stratified_split(std::span<const int> labels, std::uint64_t seed, double train_frac = 0.6,
                       double val_frac = 0.2);

/// Reads {"splits": [{"train": [...], "val": [...], "test": [...]}, ...]}.
std::vector<Split> read_splits(const std::filesystem::path& path, Index num_nodes);

struct ProbeOptions {
  Index steps = 300;
  double lr = 0.01;
  Index repeats = 5;
  std::uint64_t seed = 0;
};

struct SplitScores {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

struct ProbeResult {
  std::string metric;
  double mean = 0.0;
  /// Population standard deviation over repeats; 0 for one repeat.
  double std = 0.0;
  std::vector<double> per_repeat;
  std::vector<SplitScores> per_split;
};

/// Multinomial logistic regression on standardized frozen features, trained
/// with full-batch Adam. Reports test accuracy per repeat. When `splits` is
/// empty, repeat r uses a stratified split seeded from (seed, r); otherwise
/// repeat r uses splits[r % splits.size()].
ProbeResult linear_probe(const Eigen::MatrixXd& h, std::span<const int> labels, const std::vector<Split>& splits,
                         const ProbeOptions& opt);

/// Sum or mean of the rows of H. Throws GraphError for an empty H.
Eigen::RowVectorXd graph_readout(const Eigen::MatrixXd& h, Pooling pooling);

double accuracy(std::span<const int> predicted, std::span<const int> truth);
double rmse(std::span<const double> predicted, std::span<const double> truth);
/// Mann-Whitney AUC with midranks for ties. Throws ConfigError unless both
/// classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct GraphSample {
  Eigen::RowVectorXd vector;
  double target = 0.0;
};

/// Linear head on pooled graph vectors. Regression targets are fitted by
/// least squares and scored by RMSE; binary integral targets by a logistic
/// head scored by ROC-AUC.
ProbeResult graph_probe(const std::vector<GraphSample>& samples, bool classification, const ProbeOptions& opt);

/// {"metric", "mean", "std", "per_repeat", "per_split"} plus the config under "config".
void write_results_json(const std::filesystem::path& path, const ProbeResult& r, const RunConfig& cfg);

}  // namespace fcg
