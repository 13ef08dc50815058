#pragma once

// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every op applied to Var handles; Tape::backward walks the
// records in reverse and accumulates gradients into the Parameters that were
// bound to the tape. All values are rank-2 (scalars are 1x1). Every op checks
// its forward output and its backward contribution for non-finite values and
// throws NumericError naming the op.

#include "fcgssl/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace fcg::ad {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;

/// Trainable tensor with its gradient slot and Adam moments.
class Parameter {
 public:
  Parameter(std::string name, Matrix value);

  const std::string& name() const { return name_; }
  Matrix& value() { return value_; }
  const Matrix& value() const { return value_; }
  const Matrix& grad() const { return grad_; }
  bool has_grad() const { return has_grad_; }

  void zero_grad();
  void accumulate_grad(const Matrix& g);

 private:
  friend class Adam;
  std::string name_;
  Matrix value_;
  Matrix grad_;
  bool has_grad_ = false;
  Matrix first_moment_;
  Matrix second_moment_;
  std::int64_t steps_ = 0;
};

/// Named parameters in insertion order. Addresses are stable.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  /// Uniform in +-sqrt(6 / (rows + cols)).
  Parameter& add_glorot(const std::string& name, Index rows, Index cols, Rng& rng);
  Parameter& add_zeros(const std::string& name, Index rows, Index cols);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Index num_scalars() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Bias-corrected Adam.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates every parameter that holds a gradient; others are left alone.
  void step(ParameterStore& params) const;
  void step(Parameter& p) const;

  double lr() const { return lr_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient of the last backward() w.r.t. this value (zeros if unreached).
  Matrix grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class GradMode {
  kFresh,       ///< throw if a reachable parameter already holds a gradient
  kAccumulate,  ///< add onto existing parameter gradients
};

class Tape {
 public:
  /// Receives the op's output value and gradient, the parents' values, and
  /// one gradient slot per parent (nullptr when that parent needs none).
  using BackwardFn = std::function<void(const Matrix& out, const Matrix& out_grad,
                                        const std::vector<const Matrix*>& in, const std::vector<Matrix*>& in_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value, std::string_view name = "constant");
  Var param(Parameter& p);

  /// Records an op; throws NumericError if `value` is not finite.
  Var record(std::string_view op, Matrix value, std::vector<Var> parents, BackwardFn backward);

  /// Backpropagates from a finite 1x1 loss. A tape may be differentiated once.
  void backward(const Var& loss, GradMode mode = GradMode::kFresh);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Matrix grad(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

// ---------------------------------------------------------------------------
// Ops. Binary ops require both operands on the same tape.

Var matmul(const Var& a, const Var& b);
/// a + b where b has a's shape, is a 1 x cols row (broadcast down rows),
/// a rows x 1 column (broadcast across columns), or 1 x 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product with the same broadcasting rules as add.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var transpose(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index start, Index count);
/// out.row(k) = a.row(index[k]).
Var gather_rows(const Var& a, const std::vector<Index>& index);
/// out.row(index[k]) += a.row(k); out has `rows` rows.
Var scatter_add_rows(const Var& a, const std::vector<Index>& index, Index rows);

Var sum(const Var& a);
Var mean(const Var& a);
/// rows x 1 sums of each row.
Var row_sum(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
/// max(a, lo) elementwise; gradient passes where a > lo.
Var clamp_min(const Var& a, double lo);
/// a^gamma elementwise; a must be non-negative for non-integer gamma.
Var pow(const Var& a, double gamma);

enum class Axis { kRows, kCols };
/// Softmax along columns (Axis::kCols: each row sums to one) or down rows.
Var softmax(const Var& a, Axis axis);
Var log_softmax(const Var& a, Axis axis);
/// Softmax down each column within groups of rows sharing a segment id.
Var segment_softmax(const Var& a, const std::vector<Index>& segment, Index num_segments);

/// rows x 1 Euclidean norm of each row.
Var row_norm(const Var& a);
/// Each row divided by its norm; zero rows stay zero.
Var normalize_rows(const Var& a);
/// rows x 1 cosine similarity of matching rows; 0 when either row is zero.
Var cosine_similarity(const Var& a, const Var& b);

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary with a free-form metadata string followed by
// (name, rows, cols, row-major float64 data) for every parameter.

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& metadata);

struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into matching parameters; shapes and names must agree.
void load_into(const Checkpoint& ckpt, ParameterStore& params);

}  // namespace fcg::ad
