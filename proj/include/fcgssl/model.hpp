#pragma once

#include "fcgssl/autodiff.hpp"
#include "fcgssl/corruption.hpp"
#include "fcgssl/graph.hpp"
#include "fcgssl/spectral.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fcg {

enum class EncoderVariant { kGat, kGatedGcn };

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::kGat;
  Index layers = 2;
  Index hidden = 32;
  /// Attention heads (GAT only); hidden must be divisible by heads.
  Index heads = 4;
  /// Number of RBF kernels lifting each distance; 0 means "feature dimension".
  Index rbf = 0;
  double leaky_slope = 0.2;

  void validate() const;
};

/// RBF features of every edge distance, plus the row used for self-loops
/// (distance 0).
struct PositionEncoding {
  Eigen::MatrixXd edge_rbf;
  Eigen::RowVectorXd self_rbf;
  RbfBasis basis;

  Index width() const { return edge_rbf.cols(); }
};

PositionEncoding make_position_encoding(const PositionMatrix& p, const RbfBasis& basis);

/// Directed messages target <- source: both orientations of every kept edge,
/// then one self-loop per node. `position_row` indexes into the stacked
/// [edge_rbf; self_rbf] table (edge id, or num_edges for self-loops).
struct MessageLayout {
  std::vector<Index> target;
  std::vector<Index> source;
  std::vector<Index> position_row;

  Index size() const { return static_cast<Index>(target.size()); }
};

MessageLayout message_layout(const CorruptedGraph& cg);

struct EncodedState {
  ad::Var output;                ///< H = X^(L), N x hidden
  std::vector<ad::Var> features;  ///< X^(0) .. X^(L)
  std::vector<ad::Var> positions; ///< P^(0) .. P^(L), one row per message
  MessageLayout layout;
};

/// Encoder, both decoders and the mask token, with their parameters.
class FcgModel {
 public:
  FcgModel(const EncoderConfig& cfg, Index feature_dim, Index edge_feature_dim, Index rbf_width,
           std::uint64_t init_seed);

  const EncoderConfig& config() const { return cfg_; }
  Index feature_dim() const { return feature_dim_; }
  Index edge_feature_dim() const { return edge_dim_; }
  Index rbf_width() const { return rbf_width_; }

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  /// Runs the dual feature / position message passing on a corrupted graph.
  EncodedState encode(ad::Tape& tape, const CorruptedGraph& cg, const PositionEncoding& pos);

  /// Two-layer ReLU MLP back to the raw feature space.
  ad::Var decode_nodes(ad::Tape& tape, const ad::Var& h);

  /// H_u (*) H_v for each listed edge, mapped by a two-layer ReLU MLP to the
  /// edge feature width. Throws BoundsError for ids outside the graph.
  ad::Var decode_edges(ad::Tape& tape, const ad::Var& h, const Graph& g, std::span<const Index> edge_ids);

  /// Plain (tape-free) forward pass of the encoder on the uncorrupted graph.
  Eigen::MatrixXd embed(const Graph& g, const PositionEncoding& pos);

 private:
  ad::Var linear(ad::Tape& tape, const ad::Var& x, const std::string& prefix);
  ad::Var mlp2(ad::Tape& tape, const ad::Var& x, const std::string& prefix);

  EncoderConfig cfg_;
  Index feature_dim_;
  Index edge_dim_;
  Index rbf_width_;
  Eigen::MatrixXd head_mask_;  // hidden x heads; 1 where a channel belongs to a head
  ad::ParameterStore params_;
};

// ---------------------------------------------------------------------------
// Losses

/// mean over rows of (1 - cos(target_i, recon_i))^gamma; 0 for no rows.
/// A zero-norm row has cosine 0.
ad::Var scaled_cosine_error(ad::Tape& tape, const Eigen::MatrixXd& target, const ad::Var& recon, double gamma);

/// SCE over the masked nodes: rows `nodes` of X against rows of X_hat.
ad::Var loss_node(ad::Tape& tape, const Eigen::MatrixXd& x, const ad::Var& x_hat, std::span<const Index> nodes,
                  double gamma);

/// SCE between original edge features (rows `edge_ids`) and decoded rows
/// (one per edge id, in the same order).
ad::Var loss_edge(ad::Tape& tape, const Eigen::MatrixXd& edge_features, const ad::Var& e_hat,
                  std::span<const Index> edge_ids, double gamma);

/// InfoNCE with cosine similarity over all N candidates of the second view.
ad::Var info_nce(const ad::Var& first, const ad::Var& second, double tau);

/// I(X_N, X_C) + I(X_E, X_C).
ad::Var loss_align(const ad::Var& x_node, const ad::Var& x_edge, const ad::Var& x_combined, double tau);

/// node + alpha * edge + beta * align.
ad::Var loss_total(const ad::Var& node, const ad::Var& edge, const ad::Var& align, double alpha, double beta);

}  // namespace fcg
