#include "fcgssl/errors.hpp"
#include "fcgssl/model.hpp"
#include "fcgssl/trainer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace fcg;

namespace {

Graph k2(Eigen::MatrixXd x) { return Graph(2, {{0, 1}}, std::move(x)); }

PositionEncoding manual_encoding(Eigen::MatrixXd edge_rbf, Eigen::RowVectorXd self_rbf) {
  PositionEncoding p;
  p.edge_rbf = std::move(edge_rbf);
  p.self_rbf = std::move(self_rbf);
  return p;
}

void set_identity(FcgModel& m, const std::string& name) {
  auto& v = m.params().at(name).value();
  v.setIdentity();
}

double leaky(double v) { return v > 0 ? v : 0.2 * v; }
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("single isolated node uses its self-loop") {
  Graph g(1, {}, Eigen::MatrixXd{{1.0, 2.0}});
  EncoderConfig cfg;
  cfg.hidden = 4;
  cfg.heads = 2;
  FcgModel model(cfg, 2, 3, 2, 7);
  PositionEncoding pos = manual_encoding(Eigen::MatrixXd(0, 2), Eigen::RowVectorXd{{1.0, 0.5}});
  ad::Tape tape;
  const EncodedState s = model.encode(tape, uncorrupted(g), pos);
  CHECK(s.layout.size() == 1);
  CHECK(s.output.value().allFinite());
  CHECK(s.output.value().norm() > 0.0);
  CHECK(s.features.size() == 3);
  CHECK(s.positions.size() == 3);
}

TEST_CASE("one-layer GatedGCN on K2 matches a straight-line forward pass") {
  const Eigen::MatrixXd x{{0.5, -1.0}, {2.0, 0.25}};
  Graph g = k2(x);
  EncoderConfig cfg;
  cfg.variant = EncoderVariant::kGatedGcn;
  cfg.layers = 1;
  cfg.hidden = 2;
  FcgModel model(cfg, 2, 2, 2, 1);
  for (auto name : {"input.weight", "position.weight", "layer0.weight"}) set_identity(model, name);
  const Eigen::RowVectorXd p_edge{{0.3, 0.7}};
  const Eigen::RowVectorXd p_self{{1.0, 0.2}};
  PositionEncoding pos = manual_encoding(p_edge, p_self);

  ad::Tape tape;
  const Eigen::MatrixXd h = model.encode(tape, uncorrupted(g), pos).output.value();

  for (int i = 0; i < 2; ++i) {
    const int j = 1 - i;
    for (int c = 0; c < 2; ++c) {
      const double a_self = sigmoid(x(i, c) + x(i, c));
      const double a_edge = sigmoid(x(i, c) + x(j, c));
      const double expect = leaky((a_self + p_self[c]) * x(i, c) + (a_edge + p_edge[c]) * x(j, c));
      CHECK(h(i, c) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("one-layer GAT on K2 matches a straight-line forward pass") {
  const Eigen::MatrixXd x{{0.5, -1.0}, {2.0, 0.25}};
  Graph g = k2(x);
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 2;
  cfg.heads = 2;
  FcgModel model(cfg, 2, 2, 2, 1);
  for (auto name : {"input.weight", "position.weight", "layer0.weight"}) set_identity(model, name);
  const Eigen::MatrixXd at = model.params().at("layer0.att_target").value();
  const Eigen::MatrixXd as = model.params().at("layer0.att_source").value();
  const Eigen::RowVectorXd p_edge{{0.3, 0.7}};
  const Eigen::RowVectorXd p_self{{1.0, 0.2}};
  PositionEncoding pos = manual_encoding(p_edge, p_self);

  ad::Tape tape;
  const Eigen::MatrixXd h = model.encode(tape, uncorrupted(g), pos).output.value();

  // With one channel per head, head c scores x_i[c] * at(c, c) + x_j[c] * as(c, c).
  for (int i = 0; i < 2; ++i) {
    const int j = 1 - i;
    for (int c = 0; c < 2; ++c) {
      const double s_self = leaky(x(i, c) * at(c, c) + x(i, c) * as(c, c));
      const double s_edge = leaky(x(i, c) * at(c, c) + x(j, c) * as(c, c));
      const double z = std::exp(s_self) + std::exp(s_edge);
      const double a_self = std::exp(s_self) / z;
      const double a_edge = std::exp(s_edge) / z;
      const double expect = leaky((a_self + p_self[c]) * x(i, c) + (a_edge + p_edge[c]) * x(j, c));
      CHECK(h(i, c) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("encoder is permutation equivariant") {
  const Graph g = testing::random_graph(9, 0.4, 3, 11);
  std::vector<Index> perm(9);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.begin() + 5);
  std::swap(perm[6], perm[8]);

  std::vector<Edge> edges;
  for (const auto& e : g.edges()) edges.push_back(canonical(perm[e.u], perm[e.v]));
  Eigen::MatrixXd xp(9, 3);
  for (Index i = 0; i < 9; ++i) xp.row(perm[i]) = g.features().row(i);
  const Graph gp(9, edges, xp);

  auto encoding = [](const Graph& graph) {
    PositionMatrix pm;
    pm.edge_distance.resize(graph.num_edges());
    for (Index e = 0; e < graph.num_edges(); ++e) {
      const auto& [u, v] = graph.edges()[static_cast<std::size_t>(e)];
      pm.edge_distance[e] = (graph.features().row(u) - graph.features().row(v)).norm();
    }
    return make_position_encoding(pm, make_rbf_basis(3.0, 4));
  };

  for (auto variant : {EncoderVariant::kGat, EncoderVariant::kGatedGcn}) {
    EncoderConfig cfg;
    cfg.variant = variant;
    cfg.hidden = 8;
    cfg.heads = 2;
    FcgModel model(cfg, 3, 4, 4, 5);
    const Eigen::MatrixXd h = model.embed(g, encoding(g));
    const Eigen::MatrixXd hp = model.embed(gp, encoding(gp));
    for (Index i = 0; i < 9; ++i) CHECK((h.row(i) - hp.row(perm[i])).norm() < 1e-12);
  }
}

TEST_CASE("decoders") {
  EncoderConfig cfg;
  cfg.hidden = 2;
  cfg.heads = 1;
  FcgModel model(cfg, 2, 3, 2, 3);
  const Graph g = k2(Eigen::MatrixXd::Ones(2, 2));

  SUBCASE("identity node decoder returns its input") {
    set_identity(model, "node_decoder.0.weight");
    set_identity(model, "node_decoder.1.weight");
    ad::Tape tape;
    const Eigen::MatrixXd h{{0.5, 2.0}, {0.0, 3.0}};
    CHECK(model.decode_nodes(tape, tape.constant(h)).value().isApprox(h, 0.0));
  }
  SUBCASE("random init gives finite node outputs of width d") {
    ad::Tape tape;
    const auto out = model.decode_nodes(tape, tape.constant(Eigen::MatrixXd::Random(2, 2)));
    CHECK(out.cols() == 2);
    CHECK(out.value().allFinite());
  }
  SUBCASE("zero representations decode to the zero edge feature") {
    ad::Tape tape;
    const std::vector<Index> ids{0};
    const auto out = model.decode_edges(tape, tape.constant(Eigen::MatrixXd::Zero(2, 2)), g, ids);
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 3);
    CHECK(out.value().norm() == 0.0);
  }
  SUBCASE("edge decoding is symmetric in its endpoints") {
    ad::Tape tape;
    const std::vector<Index> ids{0};
    Eigen::MatrixXd h{{0.4, -1.2}, {2.0, 0.7}};
    const Eigen::MatrixXd a = model.decode_edges(tape, tape.constant(h), g, ids).value();
    h.row(0).swap(h.row(1));
    const Eigen::MatrixXd b = model.decode_edges(tape, tape.constant(h), g, ids).value();
    CHECK(a.isApprox(b, 0.0));
  }
  SUBCASE("edge ids outside the graph are rejected") {
    ad::Tape tape;
    const std::vector<Index> ids{1};
    CHECK_THROWS_AS(model.decode_edges(tape, tape.constant(Eigen::MatrixXd::Zero(2, 2)), g, ids), BoundsError);
  }
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.hidden = 10;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.heads = 5;
  CHECK_NOTHROW(cfg.validate());
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("scaled cosine error closed forms") {
  const Eigen::MatrixXd x{{1.0, 2.0, -1.0}, {0.5, 0.0, 3.0}};
  for (double gamma : {1.0, 2.0}) {
    ad::Tape tape;
    CHECK(scaled_cosine_error(tape, x, tape.constant(x), gamma).scalar() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(scaled_cosine_error(tape, x, tape.constant(-x), gamma).scalar() - std::pow(2.0, gamma)) < 1e-12);
  }
  ad::Tape tape;
  const Eigen::MatrixXd a{{1.0, 0.0}, {0.0, 2.0}};
  const Eigen::MatrixXd b{{0.0, 3.0}, {-1.0, 0.0}};
  CHECK(std::abs(scaled_cosine_error(tape, a, tape.constant(b), 2.0).scalar() - 1.0) < 1e-12);
  CHECK(std::abs(scaled_cosine_error(tape, a, tape.constant(-a), 1.0).scalar() - 2.0) < 1e-12);
  SUBCASE("zero rows count as cosine 0") {
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 2);
    CHECK(scaled_cosine_error(tape, z, tape.constant(Eigen::MatrixXd::Ones(1, 2)), 2.0).scalar() == 1.0);
  }
  SUBCASE("empty set scores 0") {
    CHECK(scaled_cosine_error(tape, Eigen::MatrixXd(0, 2), tape.constant(Eigen::MatrixXd(0, 2)), 2.0).scalar() == 0.0);
  }
  SUBCASE("gamma below 1 is rejected") {
    CHECK_THROWS_AS(scaled_cosine_error(tape, a, tape.constant(a), 0.5), ConfigError);
  }
}

TEST_CASE("node and edge losses select their rows") {
  const Eigen::MatrixXd x{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  Eigen::MatrixXd recon = x;
  recon.row(1) = -x.row(1);
  ad::Tape tape;
  const std::vector<Index> masked_ok{0, 2};
  const std::vector<Index> masked_bad{1};
  CHECK(loss_node(tape, x, tape.constant(recon), masked_ok, 1.0).scalar() == doctest::Approx(0.0));
  CHECK(loss_node(tape, x, tape.constant(recon), masked_bad, 1.0).scalar() == doctest::Approx(2.0));
  const std::vector<Index> ids{2, 0};
  const Eigen::MatrixXd decoded{{1.0, 1.0}, {0.0, 5.0}};
  CHECK(loss_edge(tape, x, tape.constant(decoded), ids, 2.0).scalar() == doctest::Approx(0.5));
}

TEST_CASE("InfoNCE") {
  SUBCASE("two orthonormal rows at tau 0.2") {
    ad::Tape tape;
    const auto x = tape.constant(Eigen::MatrixXd::Identity(2, 2));
    // -log(e^5 / (e^5 + 1)) = log(1 + e^-5).
    const double expect = std::log1p(std::exp(-5.0));
    CHECK(std::abs(info_nce(x, x, 0.2).scalar() - expect) < 1e-12);
  }
  SUBCASE("a single candidate scores 0") {
    ad::Tape tape;
    const auto a = tape.constant(Eigen::MatrixXd{{1.0, 2.0}});
    const auto b = tape.constant(Eigen::MatrixXd{{-3.0, 0.5}});
    CHECK(info_nce(a, b, 0.2).scalar() == 0.0);
  }
  SUBCASE("positive row rescaling leaves it unchanged") {
    ad::Tape tape;
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 3);
    const Eigen::MatrixXd b = Eigen::MatrixXd::Random(5, 3);
    Eigen::VectorXd s(5);
    s << 0.1, 2.0, 7.0, 1.0, 0.5;
    const double base = info_nce(tape.constant(a), tape.constant(b), 0.3).scalar();
    const double scaled = info_nce(tape.constant(s.asDiagonal() * a), tape.constant(b), 0.3).scalar();
    CHECK(std::abs(base - scaled) < 1e-12);
  }
  SUBCASE("self-contrast is bounded by log N") {
    for (int trial = 0; trial < 20; ++trial) {
      ad::Tape tape;
      const Index n = 2 + trial % 7;
      const auto x = tape.constant(Eigen::MatrixXd::Random(n, 4));
      for (double tau : {0.05, 0.2, 1.0, 10.0}) {
        const double v = info_nce(x, x, tau).scalar();
        CHECK(v >= 0.0);
        CHECK(v <= std::log(static_cast<double>(n)) + 1e-12);
      }
    }
  }
  SUBCASE("tau must be positive") {
    ad::Tape tape;
    const auto x = tape.constant(Eigen::MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(info_nce(x, x, 0.0), ConfigError);
    CHECK_THROWS_AS(info_nce(x, x, -1.0), ConfigError);
  }
}

TEST_CASE("total loss is a weighted sum") {
  ad::Tape tape;
  auto c = [&](double v) { return tape.constant(Eigen::MatrixXd::Constant(1, 1, v)); };
  CHECK(loss_total(c(0.7), c(3.0), c(5.0), 0.0, 0.0).scalar() == 0.7);
  CHECK(loss_total(c(0.7), c(3.0), c(5.0), 0.01, 1e-5).scalar() == doctest::Approx(0.7 + 0.03 + 5e-5).epsilon(1e-15));
  CHECK(loss_total(c(1.4), c(6.0), c(10.0), 0.5, 2.0).scalar() ==
        doctest::Approx(2.0 * loss_total(c(0.7), c(3.0), c(5.0), 0.5, 2.0).scalar()));
}

TEST_CASE("full loss gradients agree with central differences") {
  const Graph g = testing::random_graph(10, 0.35, 4, 21);
  for (auto variant : {EncoderVariant::kGat, EncoderVariant::kGatedGcn}) {
    CAPTURE(static_cast<int>(variant));
    RunConfig cfg;
    cfg.encoder.variant = variant;
    cfg.encoder.hidden = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.rbf = 3;
    cfg.k_e = 4;
    cfg.r_n = 0.4;
    cfg.r_e = 0.4;
    cfg.alpha = 0.5;
    cfg.beta = 0.5;
    const Preprocessed pre = preprocess(g, cfg, std::nullopt);
    auto model = make_model(cfg, g, pre);
    testing::jitter(model->params(), 0.1, 3);
    const CorruptionPlan plan = build_plan(pre.scores, g, corruption_options(cfg), 99);
    auto loss = [&](bool backward) {
      ad::Tape tape;
      const StepLosses l = compute_losses(tape, *model, g, pre, plan, cfg);
      if (backward) tape.backward(l.total);
      return l.total.scalar();
    };
    const auto check = testing::check_gradients(model->params(), loss, 80, 5);
    CAPTURE(check.worst);
    CHECK(check.checked >= 50);
    CHECK(check.max_rel_error < 1e-4);
  }
}
