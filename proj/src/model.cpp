#include "fcgssl/model.hpp"

#include "fcgssl/errors.hpp"
#include "fcgssl/log.hpp"

namespace fcg {

using ad::Var;

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder.layers must be >= 1");
  if (hidden < 1) throw ConfigError("encoder.hidden must be >= 1");
  if (rbf < 0) throw ConfigError("encoder.rbf must be >= 0");
  if (variant == EncoderVariant::kGat) {
    if (heads < 1) throw ConfigError("encoder.heads must be >= 1");
    if (hidden % heads != 0) {
      throw ConfigError("encoder.hidden (" + std::to_string(hidden) + ") must be divisible by encoder.heads (" +
                        std::to_string(heads) + ")");
    }
  }
}

PositionEncoding make_position_encoding(const PositionMatrix& p, const RbfBasis& basis) {
  PositionEncoding enc;
  enc.basis = basis;
  enc.edge_rbf = rbf_embed(p.edge_distance, basis);
  enc.self_rbf = rbf_embed(0.0, basis.means, basis.sigma);
  return enc;
}

MessageLayout message_layout(const CorruptedGraph& cg) {
  const Graph& g = *cg.base;
  MessageLayout m;
  const std::size_t total = 2 * cg.kept_edges.size() + static_cast<std::size_t>(g.num_nodes());
  m.target.reserve(total);
  m.source.reserve(total);
  m.position_row.reserve(total);
  for (Index e : cg.kept_edges) {
    const auto& [u, v] = g.edges()[static_cast<std::size_t>(e)];
    m.target.push_back(u);
    m.source.push_back(v);
    m.position_row.push_back(e);
    m.target.push_back(v);
    m.source.push_back(u);
    m.position_row.push_back(e);
  }
  for (Index i = 0; i < g.num_nodes(); ++i) {
    m.target.push_back(i);
    m.source.push_back(i);
    m.position_row.push_back(g.num_edges());
  }
  return m;
}

FcgModel::FcgModel(const EncoderConfig& cfg, Index feature_dim, Index edge_feature_dim, Index rbf_width,
                   std::uint64_t init_seed)
    : cfg_(cfg), feature_dim_(feature_dim), edge_dim_(edge_feature_dim), rbf_width_(rbf_width) {
  cfg_.validate();
  if (feature_dim < 1 || edge_feature_dim < 1 || rbf_width < 1) throw ConfigError("model dimensions must be >= 1");
  const Index h = cfg_.hidden;
  Rng rng(init_seed);

  params_.add_zeros("mask_token", 1, feature_dim);
  params_.add_glorot("input.weight", feature_dim, h, rng);
  params_.add_zeros("input.bias", 1, h);
  params_.add_glorot("position.weight", rbf_width, h, rng);
  params_.add_zeros("position.bias", 1, h);
  for (Index l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    params_.add_glorot(p + ".weight", h, h, rng);
    if (cfg_.variant == EncoderVariant::kGat) {
      params_.add_glorot(p + ".att_target", h, cfg_.heads, rng);
      params_.add_glorot(p + ".att_source", h, cfg_.heads, rng);
    }
  }
  params_.add_glorot("node_decoder.0.weight", h, h, rng);
  params_.add_zeros("node_decoder.0.bias", 1, h);
  params_.add_glorot("node_decoder.1.weight", h, feature_dim, rng);
  params_.add_zeros("node_decoder.1.bias", 1, feature_dim);
  params_.add_glorot("edge_decoder.0.weight", h, h, rng);
  params_.add_zeros("edge_decoder.0.bias", 1, h);
  params_.add_glorot("edge_decoder.1.weight", h, edge_feature_dim, rng);
  params_.add_zeros("edge_decoder.1.bias", 1, edge_feature_dim);

  const Index heads = cfg_.variant == EncoderVariant::kGat ? cfg_.heads : 1;
  head_mask_ = Eigen::MatrixXd::Zero(h, heads);
  for (Index c = 0; c < h; ++c) head_mask_(c, c / (h / heads)) = 1.0;
}

Var FcgModel::linear(ad::Tape& tape, const Var& x, const std::string& prefix) {
  return ad::add(ad::matmul(x, tape.param(params_.at(prefix + ".weight"))), tape.param(params_.at(prefix + ".bias")));
}

Var FcgModel::mlp2(ad::Tape& tape, const Var& x, const std::string& prefix) {
  return linear(tape, ad::relu(linear(tape, x, prefix + ".0")), prefix + ".1");
}

EncodedState FcgModel::encode(ad::Tape& tape, const CorruptedGraph& cg, const PositionEncoding& pos) {
  const Graph& g = *cg.base;
  if (g.feature_dim() != feature_dim_) throw ShapeError("graph feature width does not match the model");
  if (pos.width() != rbf_width_ || pos.edge_rbf.rows() != g.num_edges()) {
    throw ShapeError("position encoding does not match the model or graph");
  }
  const Index n = g.num_nodes();
  EncodedState state;
  state.layout = message_layout(cg);
  const MessageLayout& m = state.layout;

  // X~ = X with masked rows replaced by the token: (1 - mask) * X + mask * token.
  Eigen::MatrixXd kept = g.features();
  Eigen::MatrixXd mask_col = Eigen::MatrixXd::Zero(n, 1);
  for (Index i : cg.masked_nodes) {
    kept.row(i).setZero();
    mask_col(i, 0) = 1.0;
  }
  Var x_tilde = ad::add(tape.constant(std::move(kept), "features"),
                        ad::matmul(tape.constant(std::move(mask_col), "mask"), tape.param(params_.at("mask_token"))));
  Var x = linear(tape, x_tilde, "input");

  Eigen::MatrixXd table(pos.edge_rbf.rows() + 1, pos.width());
  table.topRows(pos.edge_rbf.rows()) = pos.edge_rbf;
  table.bottomRows(1) = pos.self_rbf;
  Var p = ad::gather_rows(linear(tape, tape.constant(std::move(table), "rbf"), "position"), m.position_row);

  state.features.push_back(x);
  state.positions.push_back(p);
  const Var head_mask = tape.constant(head_mask_, "head_mask");
  const Var head_expand = tape.constant(head_mask_.transpose(), "head_expand");

  for (Index l = 0; l < cfg_.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    Var z = ad::matmul(x, tape.param(params_.at(prefix + ".weight")));
    Var alpha;
    if (cfg_.variant == EncoderVariant::kGat) {
      Var score_t = ad::matmul(z, ad::mul(tape.param(params_.at(prefix + ".att_target")), head_mask));
      Var score_s = ad::matmul(z, ad::mul(tape.param(params_.at(prefix + ".att_source")), head_mask));
      Var logits = ad::leaky_relu(ad::add(ad::gather_rows(score_t, m.target), ad::gather_rows(score_s, m.source)),
                                  cfg_.leaky_slope);
      Var weights = ad::segment_softmax(logits, m.target, n);
      alpha = ad::matmul(weights, head_expand);
    } else {
      alpha = ad::sigmoid(ad::add(ad::gather_rows(z, m.target), ad::gather_rows(z, m.source)));
    }
    Var messages = ad::mul(ad::add(alpha, p), ad::gather_rows(x, m.source));
    x = ad::leaky_relu(ad::scatter_add_rows(messages, m.target, n), cfg_.leaky_slope);
    p = ad::add(p, alpha);
    state.features.push_back(x);
    state.positions.push_back(p);
  }
  state.output = x;
  return state;
}

Var FcgModel::decode_nodes(ad::Tape& tape, const Var& h) {
  if (h.cols() != cfg_.hidden) throw ShapeError("decode_nodes: representation width does not match the model");
  return mlp2(tape, h, "node_decoder");
}

Var FcgModel::decode_edges(ad::Tape& tape, const Var& h, const Graph& g, std::span<const Index> edge_ids) {
  if (h.cols() != cfg_.hidden || h.rows() != g.num_nodes()) {
    throw ShapeError("decode_edges: representation shape does not match the model");
  }
  std::vector<Index> us;
  std::vector<Index> vs;
  us.reserve(edge_ids.size());
  vs.reserve(edge_ids.size());
  for (Index e : edge_ids) {
    if (e < 0 || e >= g.num_edges()) throw BoundsError("decode_edges: edge id " + std::to_string(e) + " not in graph");
    us.push_back(g.edges()[static_cast<std::size_t>(e)].u);
    vs.push_back(g.edges()[static_cast<std::size_t>(e)].v);
  }
  Var product = ad::mul(ad::gather_rows(h, us), ad::gather_rows(h, vs));
  return mlp2(tape, product, "edge_decoder");
}

Eigen::MatrixXd FcgModel::embed(const Graph& g, const PositionEncoding& pos) {
  ad::Tape tape;
  return encode(tape, uncorrupted(g), pos).output.value();
}

// --- Losses -------------------------------------------------------------------

Var scaled_cosine_error(ad::Tape& tape, const Eigen::MatrixXd& target, const Var& recon, double gamma) {
  if (!(gamma >= 1.0)) throw ConfigError("gamma must be >= 1");
  if (target.rows() != recon.rows() || target.cols() != recon.cols()) {
    throw ShapeError("scaled_cosine_error: target and reconstruction shapes differ");
  }
  if (target.rows() == 0) return tape.constant(Eigen::MatrixXd::Zero(1, 1), "empty_loss");
  const Eigen::VectorXd tn = target.rowwise().norm();
  const Eigen::VectorXd rn = recon.value().rowwise().norm();
  const Index degenerate = (tn.array() == 0.0).count() + (rn.array() == 0.0).count();
  if (degenerate > 0) log::debug("scaled cosine error: zero-norm rows treated as cosine 0");
  Var cos = ad::cosine_similarity(tape.constant(target, "target"), recon);
  return ad::mean(ad::pow(ad::clamp_min(ad::add_scalar(ad::neg(cos), 1.0), 0.0), gamma));
}

Var loss_node(ad::Tape& tape, const Eigen::MatrixXd& x, const Var& x_hat, std::span<const Index> nodes, double gamma) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw ShapeError("loss_node: X and X_hat shapes differ");
  if (nodes.empty()) return scaled_cosine_error(tape, Eigen::MatrixXd(0, x.cols()), x_hat, gamma);
  std::vector<Index> rows(nodes.begin(), nodes.end());
  Eigen::MatrixXd target(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) target.row(static_cast<Index>(k)) = x.row(rows[k]);
  return scaled_cosine_error(tape, target, ad::gather_rows(x_hat, rows), gamma);
}

Var loss_edge(ad::Tape& tape, const Eigen::MatrixXd& edge_features, const Var& e_hat, std::span<const Index> edge_ids,
              double gamma) {
  if (e_hat.rows() != static_cast<Index>(edge_ids.size()) || e_hat.cols() != edge_features.cols()) {
    throw ShapeError("loss_edge: decoded edge features do not match the requested edges");
  }
  Eigen::MatrixXd target(static_cast<Index>(edge_ids.size()), edge_features.cols());
  for (std::size_t k = 0; k < edge_ids.size(); ++k) {
    if (edge_ids[k] < 0 || edge_ids[k] >= edge_features.rows()) throw BoundsError("loss_edge: edge id out of range");
    target.row(static_cast<Index>(k)) = edge_features.row(edge_ids[k]);
  }
  return scaled_cosine_error(tape, target, e_hat, gamma);
}

Var info_nce(const Var& first, const Var& second, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (first.rows() != second.rows() || first.cols() != second.cols()) {
    throw ShapeError("info_nce: views have different shapes");
  }
  ad::Tape& tape = first.tape();
  const Index n = first.rows();
  Var sim = ad::scale(ad::matmul(ad::normalize_rows(first), ad::transpose(ad::normalize_rows(second))), 1.0 / tau);
  Var log_prob = ad::log_softmax(sim, ad::Axis::kCols);
  Var positives = ad::mul(log_prob, tape.constant(Eigen::MatrixXd::Identity(n, n), "identity"));
  return ad::scale(ad::sum(positives), -1.0 / static_cast<double>(n));
}

Var loss_align(const Var& x_node, const Var& x_edge, const Var& x_combined, double tau) {
  return ad::add(info_nce(x_node, x_combined, tau), info_nce(x_edge, x_combined, tau));
}

Var loss_total(const Var& node, const Var& edge, const Var& align, double alpha, double beta) {
  return ad::add(ad::add(node, ad::scale(edge, alpha)), ad::scale(align, beta));
}

}  // namespace fcg
