#include "fcgssl/autodiff.hpp"

#include "fcgssl/binary_io.hpp"
#include "fcgssl/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace fcg::ad {

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw NumericError("operands live on different tapes");
  return a.tape();
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_kind(std::string_view op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_error(op, a, b);
}

// Expands b to a's shape.
Matrix expand(const Matrix& b, Index rows, Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kCol:
      return b.replicate(1, cols);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

// Sums a full-shape gradient back down to b's broadcast shape.
Matrix reduce(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kCol:
      return g.rowwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

template <typename F, typename D>
Var unary(std::string_view op, const Var& a, F&& forward, D&& derivative) {
  Matrix out = a.value().unaryExpr(forward);
  return a.tape().record(op, std::move(out), {a},
                         [derivative](const Matrix& out, const Matrix& g, const auto& in, const auto& dg) {
                           if (dg[0]) *dg[0] += derivative(*in[0], out).cwiseProduct(g);
                         });
}

}  // namespace

// --- Parameter / store / Adam ---------------------------------------------

Parameter::Parameter(std::string name, Matrix value)
    : name_(std::move(name)),
      value_(std::move(value)),
      grad_(Matrix::Zero(value_.rows(), value_.cols())),
      first_moment_(Matrix::Zero(value_.rows(), value_.cols())),
      second_moment_(Matrix::Zero(value_.rows(), value_.cols())) {}

void Parameter::zero_grad() {
  grad_.setZero();
  has_grad_ = false;
}

void Parameter::accumulate_grad(const Matrix& g) {
  if (g.rows() != value_.rows() || g.cols() != value_.cols()) shape_error("accumulate_grad", value_, g);
  grad_ += g;
  has_grad_ = true;
}

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  index_[name] = params_.size();
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  return *params_.back();
}

Parameter& ParameterStore::add_glorot(const std::string& name, Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  // Row-major fill keeps the draw order independent of Eigen's storage order.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) w(r, c) = bound * (2.0 * uniform_open0(rng) - 1.0);
  return add(name, std::move(w));
}

Parameter& ParameterStore::add_zeros(const std::string& name, Index rows, Index cols) {
  return add(name, Matrix::Zero(rows, cols));
}

Parameter& ParameterStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return *params_[it->second];
}

Index ParameterStore::num_scalars() const {
  Index n = 0;
  for (const auto& p : params_) n += p->value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void Adam::step(Parameter& p) const {
  if (!p.has_grad_) return;
  ++p.steps_;
  p.first_moment_ = beta1_ * p.first_moment_ + (1.0 - beta1_) * p.grad_;
  p.second_moment_ = beta2_ * p.second_moment_ + (1.0 - beta2_) * p.grad_.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(p.steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(p.steps_));
  p.value_.array() -=
      lr_ * (p.first_moment_.array() / c1) / ((p.second_moment_.array() / c2).sqrt() + eps_);
}

void Adam::step(ParameterStore& params) const {
  for (auto& p : params) step(*p);
}

// --- Tape -------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
Matrix Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on a " + shape_str(v) + " value");
  return v(0, 0);
}

Var Tape::constant(Matrix value, std::string_view name) {
  if (!value.allFinite()) throw NumericError(std::string(name) + ": non-finite constant");
  Node n;
  n.op = name;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  if (!p.value().allFinite()) throw NumericError("parameter " + p.name() + " holds non-finite values");
  Node n;
  n.op = "param:" + p.name();
  n.value = p.value();
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(std::string_view op, Matrix value, std::vector<Var> parents, BackwardFn backward) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": non-finite value in forward pass");
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.tape_ != this) throw NumericError(std::string(op) + ": operand from another tape");
    n.parents.push_back(p.id_);
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(p.id_)].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& loss, GradMode mode) {
  if (loss.tape_ != this) throw NumericError("backward: loss belongs to another tape");
  if (differentiated_) throw NumericError("backward called twice on the same tape");
  const Matrix& lv = loss.value();
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(lv));
  if (!std::isfinite(lv(0, 0))) throw NumericError("backward: loss is not finite");

  const auto root = static_cast<std::size_t>(loss.id_);
  if (mode == GradMode::kFresh) {
    for (std::size_t i = 0; i <= root; ++i) {
      const Node& n = nodes_[i];
      if (n.param && n.param->has_grad()) {
        throw NumericError("backward: parameter " + n.param->name() +
                           " already holds a gradient; call zero_grad() or use GradMode::kAccumulate");
      }
    }
  }
  differentiated_ = true;

  nodes_[root].grad = Matrix::Ones(1, 1);
  std::vector<const Matrix*> in;
  std::vector<Matrix*> dg;
  for (std::size_t k = root + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->accumulate_grad(n.grad);
      continue;
    }
    if (!n.backward) continue;
    in.clear();
    dg.clear();
    for (int p : n.parents) {
      Node& parent = nodes_[static_cast<std::size_t>(p)];
      in.push_back(&parent.value);
      if (parent.needs_grad) {
        if (parent.grad.size() == 0) parent.grad = Matrix::Zero(parent.value.rows(), parent.value.cols());
        dg.push_back(&parent.grad);
      } else {
        dg.push_back(nullptr);
      }
    }
    n.backward(n.value, n.grad, in, dg);
    for (Matrix* g : dg) {
      if (g && !g->allFinite()) throw NumericError(n.op + ": non-finite gradient in backward pass");
    }
  }
}

// --- Ops --------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return t.record("matmul", std::move(out), {a, b}, [](const Matrix&, const Matrix& g, const auto& in, const auto& dg) {
    if (dg[0]) dg[0]->noalias() += g * in[1]->transpose();
    if (dg[1]) dg[1]->noalias() += in[0]->transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Broadcast kind = broadcast_kind("add", a.value(), b.value());
  Matrix out = a.value() + expand(b.value(), a.rows(), a.cols(), kind);
  return t.record("add", std::move(out), {a, b}, [kind](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
    if (dg[0]) *dg[0] += g;
    if (dg[1]) *dg[1] += reduce(g, kind);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Broadcast kind = broadcast_kind("sub", a.value(), b.value());
  Matrix out = a.value() - expand(b.value(), a.rows(), a.cols(), kind);
  return t.record("sub", std::move(out), {a, b}, [kind](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
    if (dg[0]) *dg[0] += g;
    if (dg[1]) *dg[1] -= reduce(g, kind);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Broadcast kind = broadcast_kind("mul", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(expand(b.value(), a.rows(), a.cols(), kind));
  return t.record("mul", std::move(out), {a, b}, [kind](const Matrix&, const Matrix& g, const auto& in, const auto& dg) {
    const Index rows = in[0]->rows();
    const Index cols = in[0]->cols();
    if (dg[0]) *dg[0] += g.cwiseProduct(expand(*in[1], rows, cols, kind));
    if (dg[1]) *dg[1] += reduce(g.cwiseProduct(*in[0]), kind);
  });
}

Var scale(const Var& a, double s) {
  return a.tape().record("scale", a.value() * s, {a}, [s](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
    if (dg[0]) *dg[0] += s * g;
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape().record("add_scalar", std::move(out), {a},
                         [](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
                           if (dg[0]) *dg[0] += g;
                         });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return a.tape().record("transpose", std::move(out), {a}, [](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
    if (dg[0]) *dg[0] += g.transpose();
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = parts.front().tape();
  Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    same_tape(parts.front(), p);
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return t.record("concat_cols", std::move(out), parts,
                  [offsets](const Matrix&, const Matrix& g, const auto& in, const auto& dg) {
                    for (std::size_t k = 0; k < dg.size(); ++k)
                      if (dg[k]) *dg[k] += g.middleCols(offsets[k], in[k]->cols());
                  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(a.value()));
  }
  Matrix out = a.value().middleCols(start, count);
  return a.tape().record("slice_cols", std::move(out), {a},
                         [start, count](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
                           if (dg[0]) dg[0]->middleCols(start, count) += g;
                         });
}

Var gather_rows(const Var& a, const std::vector<Index>& index) {
  const Matrix& v = a.value();
  Matrix out(static_cast<Index>(index.size()), v.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= v.rows()) throw BoundsError("gather_rows: row index out of range");
    out.row(static_cast<Index>(k)) = v.row(index[k]);
  }
  return a.tape().record("gather_rows", std::move(out), {a},
                         [index](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
                           if (!dg[0]) return;
                           for (std::size_t k = 0; k < index.size(); ++k)
                             dg[0]->row(index[k]) += g.row(static_cast<Index>(k));
                         });
}

Var scatter_add_rows(const Var& a, const std::vector<Index>& index, Index rows) {
  const Matrix& v = a.value();
  if (static_cast<Index>(index.size()) != v.rows()) throw ShapeError("scatter_add_rows: index length != rows");
  Matrix out = Matrix::Zero(rows, v.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= rows) throw BoundsError("scatter_add_rows: row index out of range");
    out.row(index[k]) += v.row(static_cast<Index>(k));
  }
  return a.tape().record("scatter_add_rows", std::move(out), {a},
                         [index](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
                           if (!dg[0]) return;
                           for (std::size_t k = 0; k < index.size(); ++k)
                             dg[0]->row(static_cast<Index>(k)) += g.row(index[k]);
                         });
}

Var sum(const Var& a) {
  return a.tape().record("sum", Matrix::Constant(1, 1, a.value().sum()), {a},
                         [](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
                           if (dg[0]) dg[0]->array() += g(0, 0);
                         });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return a.tape().record("mean", Matrix::Constant(1, 1, a.value().sum() / n), {a},
                         [n](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
                           if (dg[0]) dg[0]->array() += g(0, 0) / n;
                         });
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape().record("row_sum", std::move(out), {a}, [](const Matrix&, const Matrix& g, const auto&, const auto& dg) {
    if (dg[0]) dg[0]->colwise() += g.col(0);
  });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](const Matrix&, const Matrix& out) { return out; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](const Matrix& in, const Matrix&) { return Matrix(in.cwiseInverse()); });
}

Var sqrt(const Var& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](const Matrix&, const Matrix& out) { return Matrix((0.5 / out.array()).matrix()); });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](const Matrix&, const Matrix& out) { return Matrix((out.array() * (1.0 - out.array())).matrix()); });
}

Var relu(const Var& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](const Matrix& in, const Matrix&) { return Matrix(in.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; })); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](const Matrix& in, const Matrix&) {
        return Matrix(in.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; }));
      });
}

Var clamp_min(const Var& a, double lo) {
  return unary(
      "clamp_min", a, [lo](double x) { return x > lo ? x : lo; },
      [lo](const Matrix& in, const Matrix&) { return Matrix(in.unaryExpr([lo](double x) { return x > lo ? 1.0 : 0.0; })); });
}

Var pow(const Var& a, double gamma) {
  return unary(
      "pow", a, [gamma](double x) { return std::pow(x, gamma); },
      [gamma](const Matrix& in, const Matrix&) {
        return Matrix(in.unaryExpr([gamma](double x) { return gamma == 1.0 ? 1.0 : gamma * std::pow(x, gamma - 1.0); }));
      });
}

Var log_softmax(const Var& a, Axis axis) {
  // Work row-wise; transpose for the other axis.
  const bool rowwise = axis == Axis::kCols;
  Matrix x = rowwise ? a.value() : Matrix(a.value().transpose());
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  if (!rowwise) out.transposeInPlace();
  return a.tape().record("log_softmax", std::move(out), {a},
                         [rowwise](const Matrix& out, const Matrix& g, const auto&, const auto& dg) {
                           if (!dg[0]) return;
                           const Matrix p = out.array().exp();
                           if (rowwise)
                             *dg[0] += g - Matrix(p.array().colwise() * g.rowwise().sum().array());
                           else
                             *dg[0] += g - Matrix(p.array().rowwise() * g.colwise().sum().array());
                         });
}

Var softmax(const Var& a, Axis axis) {
  const bool rowwise = axis == Axis::kCols;
  Matrix x = rowwise ? a.value() : Matrix(a.value().transpose());
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  if (!rowwise) out.transposeInPlace();
  return a.tape().record("softmax", std::move(out), {a},
                         [rowwise](const Matrix& out, const Matrix& g, const auto&, const auto& dg) {
                           if (!dg[0]) return;
                           const Matrix gy = g.cwiseProduct(out);
                           if (rowwise)
                             *dg[0] += gy - Matrix(out.array().colwise() * gy.rowwise().sum().array());
                           else
                             *dg[0] += gy - Matrix(out.array().rowwise() * gy.colwise().sum().array());
                         });
}

Var segment_softmax(const Var& a, const std::vector<Index>& segment, Index num_segments) {
  const Matrix& x = a.value();
  if (static_cast<Index>(segment.size()) != x.rows()) throw ShapeError("segment_softmax: segment length != rows");
  for (Index s : segment)
    if (s < 0 || s >= num_segments) throw BoundsError("segment_softmax: segment id out of range");
  Matrix seg_max = Matrix::Constant(num_segments, x.cols(), -std::numeric_limits<double>::infinity());
  for (Index r = 0; r < x.rows(); ++r) seg_max.row(segment[r]) = seg_max.row(segment[r]).cwiseMax(x.row(r));
  Matrix out(x.rows(), x.cols());
  Matrix denom = Matrix::Zero(num_segments, x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    out.row(r) = (x.row(r) - seg_max.row(segment[r])).array().exp();
    denom.row(segment[r]) += out.row(r);
  }
  for (Index r = 0; r < x.rows(); ++r) out.row(r).array() /= denom.row(segment[r]).array();
  return a.tape().record("segment_softmax", std::move(out), {a},
                         [segment, num_segments](const Matrix& out, const Matrix& g, const auto&, const auto& dg) {
                           if (!dg[0]) return;
                           const Matrix gy = g.cwiseProduct(out);
                           Matrix seg_sum = Matrix::Zero(num_segments, out.cols());
                           for (Index r = 0; r < out.rows(); ++r) seg_sum.row(segment[r]) += gy.row(r);
                           for (Index r = 0; r < out.rows(); ++r)
                             dg[0]->row(r) += gy.row(r) - out.row(r).cwiseProduct(seg_sum.row(segment[r]));
                         });
}

Var row_norm(const Var& a) {
  Matrix out = a.value().rowwise().norm();
  return a.tape().record("row_norm", std::move(out), {a},
                         [](const Matrix& out, const Matrix& g, const auto& in, const auto& dg) {
                           if (!dg[0]) return;
                           for (Index r = 0; r < out.rows(); ++r)
                             if (out(r, 0) > 0.0) dg[0]->row(r) += (g(r, 0) / out(r, 0)) * in[0]->row(r);
                         });
}

Var normalize_rows(const Var& a) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r)
    if (norms[r] > 0.0) out.row(r) = x.row(r) / norms[r];
  return a.tape().record("normalize_rows", std::move(out), {a},
                         [norms](const Matrix& out, const Matrix& g, const auto&, const auto& dg) {
                           if (!dg[0]) return;
                           for (Index r = 0; r < out.rows(); ++r) {
                             if (norms[r] == 0.0) continue;
                             const double proj = out.row(r).dot(g.row(r));
                             dg[0]->row(r) += (g.row(r) - proj * out.row(r)) / norms[r];
                           }
                         });
}

Var cosine_similarity(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("cosine_similarity", a.value(), b.value());
  return row_sum(mul(normalize_rows(a), normalize_rows(b)));
}

// --- Checkpoints ----------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[9] = "FCGCKPT\0";
constexpr std::uint64_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& metadata) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError("cannot write checkpoint " + path.string());
  binary::write_magic(out, kCheckpointMagic);
  binary::write_u64(out, kCheckpointVersion);
  binary::write_string(out, metadata);
  binary::write_u64(out, params.size());
  for (const auto& p : params) {
    binary::write_string(out, p->name());
    binary::write_u64(out, static_cast<std::uint64_t>(p->value().rows()));
    binary::write_u64(out, static_cast<std::uint64_t>(p->value().cols()));
    for (Index r = 0; r < p->value().rows(); ++r)
      for (Index c = 0; c < p->value().cols(); ++c) binary::write_f64(out, p->value()(r, c));
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  if (!binary::check_magic(in, kCheckpointMagic)) throw ParseError("not a checkpoint file: " + path.string());
  const auto version = binary::read_u64(in);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.metadata = binary::read_string(in);
  const auto count = binary::read_u64(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    auto name = binary::read_string(in, 4096);
    const auto rows = static_cast<Index>(binary::read_u64(in));
    const auto cols = static_cast<Index>(binary::read_u64(in));
    if (rows < 0 || cols < 0 || rows * cols > (Index{1} << 32)) throw ParseError("checkpoint tensor too large");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = binary::read_f64(in);
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void load_into(const Checkpoint& ckpt, ParameterStore& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                     std::to_string(params.size()));
  }
  for (const auto& [name, m] : ckpt.tensors) {
    Parameter& p = params.at(name);
    if (p.value().rows() != m.rows() || p.value().cols() != m.cols()) shape_error("load " + name, p.value(), m);
    p.value() = m;
  }
}

}  // namespace fcg::ad
