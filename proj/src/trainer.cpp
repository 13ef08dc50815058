#include "fcgssl/trainer.hpp"

#include "fcgssl/errors.hpp"
#include "fcgssl/log.hpp"
#include "fcgssl/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace fcg {

Graph load_run_graph(const RunConfig& cfg) {
  if (cfg.data_path.empty()) return generate_synthetic(cfg.synth);
  return load_graph(cfg.data_path, EdgePolicy::kLenient);
}

std::pair<Index, Index> resolve_spectral_sizes(const RunConfig& cfg, Index num_nodes) {
  const Index k = cfg.k == 0 ? num_nodes : cfg.k;
  const Index k_e = cfg.k_e == 0 ? std::min<Index>(50, num_nodes) : cfg.k_e;
  return {k, k_e};
}

std::optional<std::filesystem::path> cache_dir_from_env() {
  const char* dir = std::getenv("FCG_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return std::filesystem::path(dir);
}

Index rbf_width(const RunConfig& cfg, const Graph& g) { return cfg.encoder.rbf > 0 ? cfg.encoder.rbf : g.feature_dim(); }

Preprocessed preprocess(const Graph& g, const RunConfig& cfg, const std::optional<std::filesystem::path>& cache_dir) {
  if (g.num_nodes() < 1) throw GraphError("cannot preprocess an empty graph");
  const auto [k, k_e] = resolve_spectral_sizes(cfg, g.num_nodes());
  if (k < 1 || k > g.num_nodes() || k_e < 1 || k_e > g.num_nodes()) {
    throw ConfigError("spectral sizes must satisfy 1 <= K, K_e <= N; got K=" + std::to_string(k) +
                      ", K_e=" + std::to_string(k_e) + ", N=" + std::to_string(g.num_nodes()));
  }
  Preprocessed pre;
  std::optional<std::filesystem::path> cache_file;
  if (cache_dir && cfg.spectral_cache) {
    char name[96];
    std::snprintf(name, sizeof name, "spectral_%016llx_%lld_%lld_%lld.bin",
                  static_cast<unsigned long long>(g.structure_hash()), static_cast<long long>(g.num_nodes()),
                  static_cast<long long>(k), static_cast<long long>(k_e));
    cache_file = *cache_dir / name;
    if (auto cached = load_spectral_cache(*cache_file, g.structure_hash(), g.num_nodes(), k, k_e)) {
      log::info("spectral cache hit: " + cache_file->string());
      pre.bundle = std::move(*cached);
      pre.cache_hit = true;
    }
  }
  if (!pre.cache_hit) {
    log::info("eigensolve: N=" + std::to_string(g.num_nodes()) + " K=" + std::to_string(k) +
              " K_e=" + std::to_string(k_e));
    SpectralOptions opt;
    opt.dense_cutoff = cfg.dense_cutoff;
    pre.bundle = eigensolve_smallest(build_laplacian(g), k, k_e, opt);
    if (cache_file) save_spectral_cache(*cache_file, pre.bundle, g.structure_hash());
  }
  pre.scores = contributions(pre.bundle, g);
  pre.positions = position_matrix(pre.bundle, g);
  pre.edge_targets = edge_features(pre.bundle, g);
  pre.encoding = make_position_encoding(pre.positions, make_rbf_basis(pre.positions.max_distance(), rbf_width(cfg, g)));
  return pre;
}

std::unique_ptr<FcgModel> make_model(const RunConfig& cfg, const Graph& g, const Preprocessed& pre) {
  return std::make_unique<FcgModel>(cfg.encoder, g.feature_dim(), pre.edge_targets.dim(), pre.encoding.width(),
                                    derive_seed(cfg.seed, {tag(SeedPurpose::kInit)}));
}

std::uint64_t plan_seed(std::uint64_t run_seed, Index epoch) {
  return derive_seed(run_seed, {tag(SeedPurpose::kSampling), static_cast<std::uint64_t>(epoch)});
}

StepLosses compute_losses(ad::Tape& tape, FcgModel& model, const Graph& g, const Preprocessed& pre,
                          const CorruptionPlan& plan, const RunConfig& cfg) {
  const CorruptedGraph node_view = materialize(plan, g, ViewKind::kNode);
  const CorruptedGraph edge_view = materialize(plan, g, ViewKind::kEdge);
  const CorruptedGraph combined_view = materialize(plan, g, ViewKind::kCombined);

  const ad::Var h_node = model.encode(tape, node_view, pre.encoding).output;
  const ad::Var h_edge = model.encode(tape, edge_view, pre.encoding).output;
  const ad::Var h_combined = model.encode(tape, combined_view, pre.encoding).output;

  const ad::Var zero = tape.constant(Eigen::MatrixXd::Zero(1, 1), "zero");
  StepLosses out;
  out.node = node_view.masked_nodes.empty()
                 ? zero
                 : loss_node(tape, g.features(), model.decode_nodes(tape, h_node), node_view.masked_nodes, cfg.gamma);
  const std::vector<Index>& dropped = plan.edge_view.edges;
  out.edge = dropped.empty() ? zero
                             : loss_edge(tape, pre.edge_targets.rows, model.decode_edges(tape, h_edge, g, dropped),
                                         dropped, cfg.gamma);
  out.align = loss_align(h_node, h_edge, h_combined, cfg.tau);
  out.total = loss_total(out.node, out.edge, out.align, cfg.alpha, effective_beta(cfg));
  return out;
}

TrainResult train(const RunConfig& cfg, const Graph& g, const Preprocessed& pre, const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult result;
  result.model = make_model(cfg, g, pre);
  FcgModel& model = *result.model;
  const ad::Adam adam(cfg.lr);
  const CorruptionOptions copt = corruption_options(cfg);

  double best = std::numeric_limits<double>::infinity();
  Index since_best = 0;
  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      const CorruptionPlan plan = build_plan(pre.scores, g, copt, plan_seed(cfg.seed, epoch));
      ad::Tape tape;
      const StepLosses losses = compute_losses(tape, model, g, pre, plan, cfg);
      rec.total = losses.total.scalar();
      rec.node = losses.node.scalar();
      rec.edge = losses.edge.scalar();
      rec.align = losses.align.scalar();
      model.params().zero_grad();
      tape.backward(losses.total);
      adam.step(model.params());
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    result.history.push_back(rec);
    log::debug("epoch " + std::to_string(epoch) + " loss " + format_double(rec.total));
    if (on_epoch && !on_epoch(rec)) break;
    if (cfg.patience > 0) {
      if (rec.total < best) {
        best = rec.total;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        log::info("early stop at epoch " + std::to_string(epoch));
        break;
      }
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GraphError("cannot write " + path.string());
  out << cfg.to_comment();
  out << "epoch,loss_total,loss_node,loss_edge,loss_align\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.total) << ',' << format_double(r.node) << ',' << format_double(r.edge)
        << ',' << format_double(r.align) << '\n';
  }
}

void save_model(const std::filesystem::path& path, const FcgModel& model, const RunConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ad::save_checkpoint(path, model.params(), cfg.to_text());
}

LoadedModel load_model(const std::filesystem::path& path) {
  const ad::Checkpoint ckpt = ad::read_checkpoint(path);
  LoadedModel out;
  out.config = parse_config(ckpt.metadata);
  auto shape_of = [&](const std::string& name) -> const Eigen::MatrixXd& {
    for (const auto& [n, m] : ckpt.tensors)
      if (n == name) return m;
    throw ParseError("checkpoint " + path.string() + " lacks tensor " + name);
  };
  const Index feature_dim = shape_of("input.weight").rows();
  const Index edge_dim = shape_of("edge_decoder.1.weight").cols();
  const Index rbf = shape_of("position.weight").rows();
  out.model = std::make_unique<FcgModel>(out.config.encoder, feature_dim, edge_dim, rbf, 0);
  ad::load_into(ckpt, out.model->params());
  return out;
}

}  // namespace fcg
