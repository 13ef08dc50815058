#include "fcgssl/corruption.hpp"
#include "fcgssl/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <json.hpp>

#include <fstream>
#include <set>

using namespace fcg;

namespace {

std::vector<double> inclusion_frequency(const std::vector<double>& weights, Index count, int draws,
                                        std::uint64_t seed) {
  std::vector<double> freq(weights.size(), 0.0);
  for (int d = 0; d < draws; ++d)
    for (Index i : sample_without_replacement(weights, count, derive_seed(seed, {static_cast<std::uint64_t>(d)})))
      freq[static_cast<std::size_t>(i)] += 1.0 / draws;
  return freq;
}

ContributionScores scores_for(const Graph& g, Index k) {
  return contributions(eigensolve_smallest(build_laplacian(g), k), g);
}

std::set<Index> as_set(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("drawing every item returns all of them") {
  const std::vector<double> w{0.3, 0.0, 5.0, 1.0};
  CHECK(sample_without_replacement(w, 4, 11) == std::vector<Index>{0, 1, 2, 3});
  CHECK(sample_without_replacement(w, 0, 11).empty());
  CHECK_THROWS_AS(sample_without_replacement(w, 5, 11), ConfigError);
  CHECK_THROWS_AS(sample_without_replacement(std::vector<double>{1.0, -1.0}, 1, 11), ConfigError);
}

TEST_CASE("zero weights are never drawn while positive ones remain") {
  const std::vector<double> w{1.0, 0.0, 0.0};
  for (std::uint64_t s = 0; s < 200; ++s) CHECK(sample_without_replacement(w, 1, s) == std::vector<Index>{0});
}

TEST_CASE("single draw follows the weights") {
  const auto freq = inclusion_frequency({2.0, 1.0, 1.0}, 1, 100000, 3);
  CHECK(std::abs(freq[0] - 0.5) < 0.01);
  CHECK(std::abs(freq[1] - 0.25) < 0.01);

  int hits = 0;
  const int draws = 100000;
  const std::vector<double> values{1.0, 3.0, 2.0};
  for (int d = 0; d < draws; ++d)
    if (sample_rank_based(values, 1, derive_seed(8, {static_cast<std::uint64_t>(d)})).front() == 1) ++hits;
  CHECK(std::abs(hits / double(draws) - 3.0 / 6.0) < 0.01);
}

TEST_CASE("multi-draw inclusion matches exact enumeration") {
  const std::vector<double> w{0.1, 0.7, 0.2, 1.5, 0.5};
  const auto exact = testing::exact_inclusion(w, 3);
  double total = 0.0;
  for (double p : exact) total += p;
  CHECK(std::abs(total - 3.0) < 1e-12);
  const auto freq = inclusion_frequency(w, 3, 100000, 21);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(freq[i] - exact[i]) < 0.01);
}

TEST_CASE("rank weights") {
  const Eigen::VectorXd r = rank_weights(std::vector<double>{0.4, 0.1, 0.9});
  CHECK(r == Eigen::VectorXd{{2.0, 1.0, 3.0}});
  // Ties are broken by ascending item index.
  const Eigen::VectorXd tied = rank_weights(std::vector<double>{0.5, 0.5, 0.1});
  CHECK(tied == Eigen::VectorXd{{2.0, 3.0, 1.0}});
}

TEST_CASE("sample counts round half up") {
  CHECK(sample_count(0.3, 10) == 3);
  CHECK(sample_count(0.25, 10) == 3);
  CHECK(sample_count(0.0, 10) == 0);
  CHECK(sample_count(1.0, 10) == 10);
  CHECK_THROWS_AS(sample_count(1.5, 10), ConfigError);
}

TEST_CASE("plan views obey the set laws") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Graph g = testing::random_graph(20, 0.25, 2, seed);
    const ContributionScores s = scores_for(g, 8);
    const CorruptionPlan plan = build_plan(s, g, {}, seed);
    CHECK(plan.value_nodes.size() == 6u);
    CHECK(plan.rank_nodes.size() == 6u);
    CHECK(static_cast<Index>(plan.value_edges.size()) == sample_count(0.3, g.num_edges()));

    std::set<Index> sn = as_set(plan.value_nodes), se = as_set(plan.value_edges), cn, ce;
    sn.insert(plan.rank_nodes.begin(), plan.rank_nodes.end());
    se.insert(plan.rank_edges.begin(), plan.rank_edges.end());
    for (Index i : plan.value_nodes)
      if (as_set(plan.rank_nodes).count(i)) cn.insert(i);
    for (Index e : plan.value_edges)
      if (as_set(plan.rank_edges).count(e)) ce.insert(e);
    CHECK(as_set(plan.node_view.nodes) == sn);
    CHECK(plan.node_view.edges.empty());
    CHECK(as_set(plan.edge_view.edges) == se);
    CHECK(plan.edge_view.nodes.empty());
    CHECK(as_set(plan.combined_view.nodes) == cn);
    CHECK(as_set(plan.combined_view.edges) == ce);
    CHECK(std::is_sorted(plan.node_view.nodes.begin(), plan.node_view.nodes.end()));
  }
}

TEST_CASE("rates of zero and one") {
  const Graph g = testing::random_graph(15, 0.3, 2, 2);
  const ContributionScores s = scores_for(g, 5);
  CorruptionOptions none;
  none.node_rate = none.edge_rate = 0.0;
  const CorruptionPlan empty = build_plan(s, g, none, 1);
  CHECK(empty.node_view.empty());
  CHECK(empty.edge_view.empty());
  CHECK(empty.combined_view.empty());

  CorruptionOptions all;
  all.node_rate = all.edge_rate = 1.0;
  const CorruptionPlan full = build_plan(s, g, all, 1);
  CHECK(static_cast<Index>(full.combined_view.nodes.size()) == g.num_nodes());
  CHECK(static_cast<Index>(full.combined_view.edges.size()) == g.num_edges());
}

TEST_CASE("separate strategies skip the set algebra") {
  const Graph g = testing::random_graph(20, 0.3, 2, 5);
  CorruptionOptions opt;
  opt.separate_strategies = true;
  const CorruptionPlan plan = build_plan(scores_for(g, 6), g, opt, 4);
  CHECK(plan.node_view.nodes == plan.value_nodes);
  CHECK(plan.edge_view.edges == plan.value_edges);
  CHECK(plan.combined_view.nodes == plan.rank_nodes);
  CHECK(plan.combined_view.edges == plan.rank_edges);
}

TEST_CASE("materialized views partition the edges") {
  const Graph g = testing::random_graph(20, 0.3, 3, 6);
  const CorruptionPlan plan = build_plan(scores_for(g, 6), g, {}, 9);
  for (ViewKind v : {ViewKind::kNode, ViewKind::kEdge, ViewKind::kCombined}) {
    const CorruptedGraph cg = materialize(plan, g, v);
    CHECK(cg.kept_edges.size() + cg.dropped_edges.size() == g.edges().size());
    std::set<Index> all = as_set(cg.kept_edges);
    for (Index e : cg.dropped_edges) CHECK(all.insert(e).second);
    const Eigen::RowVectorXd token = Eigen::RowVectorXd::Constant(3, 7.0);
    const Eigen::MatrixXd x = cg.corrupted_features(token);
    for (Index i = 0; i < g.num_nodes(); ++i) {
      if (cg.is_masked[static_cast<std::size_t>(i)])
        CHECK(x.row(i) == token);
      else
        CHECK(x.row(i) == g.features().row(i));
    }
  }
  const CorruptedGraph node_view = materialize(plan, g, ViewKind::kNode);
  CHECK(node_view.dropped_edges.empty());
  CHECK(materialize(plan, g, ViewKind::kEdge).masked_nodes.empty());
  CHECK(uncorrupted(g).kept_edges.size() == g.edges().size());
}

TEST_CASE("plans are reproducible from the seed") {
  const Graph g = testing::random_graph(30, 0.2, 2, 7);
  const ContributionScores s = scores_for(g, 8);
  const CorruptionPlan a = build_plan(s, g, {}, 42);
  const CorruptionPlan b = build_plan(s, g, {}, 42);
  const CorruptionPlan c = build_plan(s, g, {}, 43);
  CHECK(a.node_view.nodes == b.node_view.nodes);
  CHECK(a.edge_view.edges == b.edge_view.edges);
  CHECK(a.combined_view.nodes == b.combined_view.nodes);
  CHECK(a.sub_seeds == b.sub_seeds);
  CHECK(a.sub_seeds != c.sub_seeds);

  const auto path = testing::scratch_dir("plan") / "plan.json";
  write_plan_json(path, a, g);
  const auto j = nlohmann::json::parse(std::ifstream(path));
  CHECK(j["seed"] == 42);
  CHECK(j["S_N"]["nodes"].get<std::vector<Index>>() == a.node_view.nodes);
  CHECK(j["S_E"]["edges"].size() == a.edge_view.edges.size());
}
