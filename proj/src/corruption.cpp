#include "fcgssl/corruption.hpp"

#include "fcgssl/errors.hpp"
#include "fcgssl/log.hpp"
#include "fcgssl/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace fcg {

namespace {

std::vector<Index> set_union(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<Index> set_intersection(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::span<const double> as_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

std::vector<Index> sample_without_replacement(std::span<const double> weights, Index count, std::uint64_t seed) {
  const auto m = static_cast<Index>(weights.size());
  if (count < 0 || count > m) {
    throw ConfigError("cannot draw " + std::to_string(count) + " items from " + std::to_string(m));
  }
  bool any_positive = false;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("sampling weights must be finite and non-negative");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive && m > 0 && count > 0) log::warn("all sampling weights are zero; drawing uniformly");

  // (primary, secondary) keys; zero-weight items get primary = inf and are
  // ordered among themselves by a uniform secondary key.
  struct Key {
    double primary;
    double secondary;
    Index item;
  };
  SplitMix64 rng(seed);
  std::vector<Key> keys(static_cast<std::size_t>(m));
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < m; ++i) {
    const double u = uniform_open0(rng);
    const double w = any_positive ? weights[static_cast<std::size_t>(i)] : 1.0;
    keys[static_cast<std::size_t>(i)] = w > 0.0 ? Key{-std::log(u) / w, 0.0, i} : Key{kInf, u, i};
  }
  auto less = [](const Key& a, const Key& b) {
    if (a.primary != b.primary) return a.primary < b.primary;
    if (a.secondary != b.secondary) return a.secondary < b.secondary;
    return a.item < b.item;
  };
  std::partial_sort(keys.begin(), keys.begin() + count, keys.end(), less);
  std::vector<Index> out(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = keys[static_cast<std::size_t>(k)].item;
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd rank_weights(std::span<const double> values) {
  const auto m = static_cast<Index>(values.size());
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
  });
  Eigen::VectorXd ranks(m);
  for (Index r = 0; r < m; ++r) ranks[order[static_cast<std::size_t>(r)]] = static_cast<double>(r + 1);
  return ranks;
}

Index sample_count(double rate, Index total) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("sampling rate must lie in [0, 1]");
  const auto t = static_cast<Index>(std::floor(rate * static_cast<double>(total) + 0.5));
  return std::clamp<Index>(t, 0, total);
}

CorruptionPlan build_plan(const ContributionScores& scores, const Graph& g, const CorruptionOptions& opt,
                          std::uint64_t seed) {
  if (scores.node.size() != g.num_nodes() || scores.edge.size() != g.num_edges()) {
    throw ShapeError("contribution scores do not match the graph");
  }
  CorruptionPlan plan;
  plan.options = opt;
  plan.seed = seed;
  for (std::uint64_t k = 0; k < 4; ++k) plan.sub_seeds[k] = derive_seed(seed, {tag(SeedPurpose::kSampling), k});

  const Index node_count = sample_count(opt.node_rate, g.num_nodes());
  const Index edge_count = sample_count(opt.edge_rate, g.num_edges());

  const Eigen::VectorXd uniform_nodes = Eigen::VectorXd::Ones(g.num_nodes());
  const Eigen::VectorXd uniform_edges = Eigen::VectorXd::Ones(g.num_edges());

  auto draw = [](const Eigen::VectorXd& values, bool uniform, bool rank, const Eigen::VectorXd& ones, Index count,
                 std::uint64_t s) {
    if (uniform) return sample_without_replacement(as_span(ones), count, s);
    return rank ? sample_rank_based(as_span(values), count, s) : sample_value_based(as_span(values), count, s);
  };
  plan.value_nodes = draw(scores.node, opt.uniform_nodes, false, uniform_nodes, node_count, plan.sub_seeds[0]);
  plan.rank_nodes = draw(scores.node, opt.uniform_nodes, true, uniform_nodes, node_count, plan.sub_seeds[1]);
  plan.value_edges = draw(scores.edge, opt.uniform_edges, false, uniform_edges, edge_count, plan.sub_seeds[2]);
  plan.rank_edges = draw(scores.edge, opt.uniform_edges, true, uniform_edges, edge_count, plan.sub_seeds[3]);

  plan.node_view.kind = ItemSet::Kind::kNode;
  plan.edge_view.kind = ItemSet::Kind::kEdge;
  plan.combined_view.kind = ItemSet::Kind::kMixed;
  if (opt.separate_strategies) {
    plan.node_view.nodes = plan.value_nodes;
    plan.edge_view.edges = plan.value_edges;
    plan.combined_view.nodes = plan.rank_nodes;
    plan.combined_view.edges = plan.rank_edges;
  } else {
    plan.node_view.nodes = set_union(plan.value_nodes, plan.rank_nodes);
    plan.edge_view.edges = set_union(plan.value_edges, plan.rank_edges);
    plan.combined_view.nodes = set_intersection(plan.value_nodes, plan.rank_nodes);
    plan.combined_view.edges = set_intersection(plan.value_edges, plan.rank_edges);
  }
  return plan;
}

Eigen::MatrixXd CorruptedGraph::corrupted_features(const Eigen::RowVectorXd& token) const {
  Eigen::MatrixXd x = base->features();
  if (token.size() != x.cols()) throw ShapeError("mask token width does not match feature dimension");
  for (Index i : masked_nodes) x.row(i) = token;
  return x;
}

CorruptedGraph materialize(const CorruptionPlan& plan, const Graph& g, ViewKind view) {
  const ItemSet& items = view == ViewKind::kNode ? plan.node_view
                         : view == ViewKind::kEdge ? plan.edge_view
                                                   : plan.combined_view;
  CorruptedGraph cg;
  cg.base = &g;
  cg.masked_nodes = items.nodes;
  cg.is_masked.assign(static_cast<std::size_t>(g.num_nodes()), 0);
  for (Index i : items.nodes) {
    if (i < 0 || i >= g.num_nodes()) throw BoundsError("plan node outside graph");
    cg.is_masked[static_cast<std::size_t>(i)] = 1;
  }
  cg.dropped_edges = items.edges;
  std::vector<char> dropped(static_cast<std::size_t>(g.num_edges()), 0);
  for (Index e : items.edges) {
    if (e < 0 || e >= g.num_edges()) throw BoundsError("plan edge outside graph");
    dropped[static_cast<std::size_t>(e)] = 1;
  }
  cg.kept_edges.reserve(static_cast<std::size_t>(g.num_edges()) - items.edges.size());
  for (Index e = 0; e < g.num_edges(); ++e)
    if (!dropped[static_cast<std::size_t>(e)]) cg.kept_edges.push_back(e);
  return cg;
}

CorruptedGraph uncorrupted(const Graph& g) {
  CorruptedGraph cg;
  cg.base = &g;
  cg.is_masked.assign(static_cast<std::size_t>(g.num_nodes()), 0);
  cg.kept_edges.resize(static_cast<std::size_t>(g.num_edges()));
  std::iota(cg.kept_edges.begin(), cg.kept_edges.end(), Index{0});
  return cg;
}

void write_plan_json(const std::filesystem::path& path, const CorruptionPlan& plan, const Graph& g) {
  auto edges_json = [&g](const std::vector<Index>& ids) {
    auto arr = nlohmann::json::array();
    for (Index e : ids) {
      const auto& edge = g.edges()[static_cast<std::size_t>(e)];
      arr.push_back({edge.u, edge.v});
    }
    return arr;
  };
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["sub_seeds"] = plan.sub_seeds;
  j["node_rate"] = plan.options.node_rate;
  j["edge_rate"] = plan.options.edge_rate;
  j["separate_strategies"] = plan.options.separate_strategies;
  j["draws"] = {{"value_nodes", plan.value_nodes},
                {"rank_nodes", plan.rank_nodes},
                {"value_edges", edges_json(plan.value_edges)},
                {"rank_edges", edges_json(plan.rank_edges)}};
  j["S_N"] = {{"nodes", plan.node_view.nodes}};
  j["S_E"] = {{"edges", edges_json(plan.edge_view.edges)}};
  j["S_C"] = {{"nodes", plan.combined_view.nodes}, {"edges", edges_json(plan.combined_view.edges)}};
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fcg
