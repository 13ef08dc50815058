#include "fcgssl/autodiff.hpp"
#include "fcgssl/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace fcg;
using namespace fcg::ad;

namespace {

using UnaryBuilder = std::function<Var(Tape&, const Var&)>;

/// Gradient check of sum(w (*) f(x)) for a fixed random weighting w.
double unary_grad_error(const UnaryBuilder& f, Matrix x0, std::uint64_t seed = 1) {
  ParameterStore store;
  Parameter& x = store.add("x", std::move(x0));
  Rng rng(seed);
  Matrix w;
  auto loss = [&](bool backward) {
    Tape tape;
    Var y = f(tape, tape.param(x));
    if (w.size() == 0) {
      w.resize(y.rows(), y.cols());
      for (Index k = 0; k < w.size(); ++k) w.data()[k] = standard_normal(rng);
    }
    Var l = sum(mul(y, tape.constant(w)));
    if (backward) tape.backward(l);
    return l.scalar();
  };
  return testing::check_gradients(store, loss, 1000, seed).max_rel_error;
}

Matrix random_matrix(Index r, Index c, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  Matrix m(r, c);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = standard_normal(rng) + shift;
  return m;
}

}  // namespace

TEST_CASE("op gradients match central differences") {
  const Matrix a = random_matrix(4, 3, 2);
  const Matrix b = random_matrix(3, 5, 3);
  const Matrix same = random_matrix(4, 3, 4);
  const Matrix row = random_matrix(1, 3, 5);
  const Matrix col = random_matrix(4, 1, 6);
  const Matrix one = random_matrix(1, 1, 7);
  const std::vector<Index> idx{2, 0, 2, 3, 1};
  const std::vector<Index> seg{0, 1, 0, 2};

  struct Case {
    std::string name;
    UnaryBuilder f;
    Matrix x;
  };
  const std::vector<Case> cases = {
      {"matmul left", [&](Tape& t, const Var& x) { return matmul(x, t.constant(b)); }, a},
      {"matmul right", [&](Tape& t, const Var& x) { return matmul(t.constant(a), x); }, b},
      {"add same", [&](Tape& t, const Var& x) { return add(x, t.constant(same)); }, a},
      {"add row operand", [&](Tape& t, const Var& x) { return add(t.constant(a), x); }, row},
      {"add col operand", [&](Tape& t, const Var& x) { return add(t.constant(a), x); }, col},
      {"add scalar operand", [&](Tape& t, const Var& x) { return add(t.constant(a), x); }, one},
      {"sub", [&](Tape& t, const Var& x) { return sub(t.constant(same), x); }, a},
      {"mul same", [&](Tape& t, const Var& x) { return mul(x, t.constant(same)); }, a},
      {"mul row operand", [&](Tape& t, const Var& x) { return mul(t.constant(a), x); }, row},
      {"mul col operand", [&](Tape& t, const Var& x) { return mul(t.constant(a), x); }, col},
      {"mul self", [&](Tape&, const Var& x) { return mul(x, x); }, a},
      {"scale", [&](Tape&, const Var& x) { return scale(x, -2.5); }, a},
      {"add_scalar", [&](Tape&, const Var& x) { return add_scalar(x, 1.5); }, a},
      {"neg", [&](Tape&, const Var& x) { return neg(x); }, a},
      {"transpose", [&](Tape&, const Var& x) { return transpose(x); }, a},
      {"concat", [&](Tape& t, const Var& x) { return concat_cols({x, t.constant(same), x}); }, a},
      {"slice", [&](Tape&, const Var& x) { return slice_cols(x, 1, 2); }, a},
      {"gather", [&](Tape&, const Var& x) { return gather_rows(x, idx); }, a},
      {"scatter", [&](Tape&, const Var& x) { return scatter_add_rows(x, idx, 6); }, random_matrix(5, 3, 8)},
      {"sum", [&](Tape&, const Var& x) { return sum(x); }, a},
      {"mean", [&](Tape&, const Var& x) { return mean(x); }, a},
      {"row_sum", [&](Tape&, const Var& x) { return row_sum(x); }, a},
      {"exp", [&](Tape&, const Var& x) { return exp(x); }, a},
      {"log", [&](Tape&, const Var& x) { return log(x); }, random_matrix(4, 3, 9).cwiseAbs().array() + 0.5},
      {"sqrt", [&](Tape&, const Var& x) { return sqrt(x); }, random_matrix(4, 3, 10).cwiseAbs().array() + 0.5},
      {"sigmoid", [&](Tape&, const Var& x) { return sigmoid(x); }, a},
      {"relu", [&](Tape&, const Var& x) { return relu(x); }, a},
      {"leaky_relu", [&](Tape&, const Var& x) { return leaky_relu(x, 0.2); }, a},
      {"clamp_min", [&](Tape&, const Var& x) { return clamp_min(x, 0.1); }, a},
      {"pow 2", [&](Tape&, const Var& x) { return pow(x, 2.0); }, a},
      {"pow 2.5", [&](Tape&, const Var& x) { return pow(x, 2.5); }, random_matrix(4, 3, 11).cwiseAbs().array() + 0.2},
      {"softmax cols", [&](Tape&, const Var& x) { return softmax(x, Axis::kCols); }, a},
      {"softmax rows", [&](Tape&, const Var& x) { return softmax(x, Axis::kRows); }, a},
      {"log_softmax cols", [&](Tape&, const Var& x) { return log_softmax(x, Axis::kCols); }, a},
      {"log_softmax rows", [&](Tape&, const Var& x) { return log_softmax(x, Axis::kRows); }, a},
      {"segment_softmax", [&](Tape&, const Var& x) { return segment_softmax(x, seg, 3); }, a},
      {"row_norm", [&](Tape&, const Var& x) { return row_norm(x); }, a},
      {"normalize_rows", [&](Tape&, const Var& x) { return normalize_rows(x); }, a},
      {"cosine left", [&](Tape& t, const Var& x) { return cosine_similarity(x, t.constant(same)); }, a},
      {"cosine shared", [&](Tape& t, const Var& x) { return cosine_similarity(x, add(x, t.constant(same))); }, a},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(unary_grad_error(c.f, c.x) < 1e-6);
  }
}

TEST_CASE("reused values accumulate gradients") {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Constant(1, 1, 3.0));
  Tape tape;
  Var x = tape.param(p);
  Var y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x
  tape.backward(sum(y));
  CHECK(p.grad()(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("forward and backward non-finite values name the op") {
  Tape tape;
  Var x = tape.constant(Matrix::Constant(1, 1, -1.0));
  try {
    log(x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Zero(1, 1));
  Tape t2;
  Var s = sqrt(t2.param(p));
  CHECK_THROWS_AS(t2.backward(sum(s)), NumericError);
}

TEST_CASE("tape misuse") {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Ones(2, 2));
  SUBCASE("non-scalar loss") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tape.param(p)), ShapeError);
  }
  SUBCASE("double backward") {
    Tape tape;
    Var l = sum(tape.param(p));
    tape.backward(l);
    CHECK_THROWS_AS(tape.backward(l), NumericError);
  }
  SUBCASE("fresh mode refuses stale gradients") {
    Tape t1;
    t1.backward(sum(t1.param(p)));
    Tape t2;
    CHECK_THROWS_AS(t2.backward(sum(t2.param(p))), NumericError);
    Tape t3;
    t3.backward(sum(t3.param(p)), GradMode::kAccumulate);
    CHECK(p.grad()(0, 0) == 2.0);
  }
  SUBCASE("shape mismatch") {
    Tape tape;
    CHECK_THROWS_AS(matmul(tape.param(p), tape.constant(Matrix::Ones(3, 1))), ShapeError);
    CHECK_THROWS_AS(add(tape.param(p), tape.constant(Matrix::Ones(3, 3))), ShapeError);
  }
}

TEST_CASE("normalize_rows keeps zero rows at zero") {
  Tape tape;
  Var v = normalize_rows(tape.constant(Matrix{{0.0, 0.0}, {3.0, 4.0}}));
  CHECK(v.value().row(0).norm() == 0.0);
  CHECK(v.value()(1, 0) == doctest::Approx(0.6));
}

TEST_CASE("Adam takes a bias-corrected first step of size lr") {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix{{1.0, -2.0}});
  Tape tape;
  tape.backward(sum(mul(tape.param(p), tape.constant(Matrix{{3.0, -0.5}}))));
  Adam(0.1).step(store);
  CHECK(p.value()(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.value()(0, 1) == doctest::Approx(-1.9).epsilon(1e-6));
}

TEST_CASE("Adam minimizes a quadratic") {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix{{4.0, -3.0}});
  const Adam adam(0.05);
  for (int i = 0; i < 2000; ++i) {
    Tape tape;
    store.zero_grad();
    tape.backward(sum(mul(tape.param(p), tape.param(p))));
    adam.step(store);
  }
  CHECK(p.value().norm() < 1e-3);
}

TEST_CASE("Glorot init stays within its bound") {
  ParameterStore store;
  Rng rng(3);
  const Parameter& w = store.add_glorot("w", 20, 30, rng);
  CHECK(w.value().cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50.0));
  CHECK(w.value().cwiseAbs().maxCoeff() > 0.0);
  CHECK(store.num_scalars() == 600);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testing::scratch_dir("ckpt");
  ParameterStore a;
  Rng rng(1);
  a.add_glorot("w", 3, 4, rng);
  a.add_zeros("b", 1, 4);
  save_checkpoint(dir / "m.ckpt", a, "meta data\nline two");
  const Checkpoint c = read_checkpoint(dir / "m.ckpt");
  CHECK(c.metadata == "meta data\nline two");
  ParameterStore b;
  b.add_zeros("w", 3, 4);
  b.add_zeros("b", 1, 4);
  load_into(c, b);
  CHECK(b.at("w").value() == a.at("w").value());

  ParameterStore wrong;
  wrong.add_zeros("w", 4, 3);
  wrong.add_zeros("b", 1, 4);
  CHECK_THROWS_AS(load_into(c, wrong), ShapeError);
  CHECK_THROWS(read_checkpoint(dir / "missing.ckpt"));
}
