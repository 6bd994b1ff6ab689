#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace atomic_sm::ad {

using Shape = std::vector<std::size_t>;
using Mask = std::vector<bool>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by softmax when every entry is masked out.
class DegenerateSoftmaxError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a caller breaks an operation's precondition (e.g. backward on a non-scalar).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};
}  // namespace detail

/// Dense row-major array of doubles with optional gradient storage.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Gradient buffer; allocated (zeroed) on first access.
  std::span<const double> grad() const;
  /// Writable gradient view. Const because the handle, not the storage, is const.
  std::span<double> mutable_grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::Node> node_;
};

/// Records differentiable operations in execution order and replays them
/// in reverse to propagate gradients. One tape per forward pass.
class Tape {
 public:
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::record; }
  std::size_t size() const { return entries_.size(); }
  const std::string& op_name(std::size_t index) const { return entries_.at(index).name; }

  /// Registers `output` as produced from `inputs`. When recording and any input
  /// requires a gradient, the output is marked likewise and `backward_fn` is kept
  /// for the reverse sweep.
  Tensor record(std::string name, Tensor output, const std::vector<Tensor>& inputs,
                std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse order.
  /// Gradients of leaf tensors accumulate across calls; intermediate gradients
  /// are reset at the start of each call.
  void backward(const Tensor& loss);

  /// Order in which the most recent backward() visited entries (tape indices).
  const std::vector<std::size_t>& last_backward_order() const { return visit_order_; }

  void clear();

 private:
  struct Entry {
    std::string name;
    Tensor output;
    std::function<void()> backward_fn;
  };
  Mode mode_;
  std::vector<Entry> entries_;
  std::vector<std::size_t> visit_order_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
/// Adds a scalar tensor (shape {} or {1}) to every element of `a`.
Tensor add_scalar(Tape& tape, const Tensor& a, const Tensor& s);

Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
Tensor leaky_relu(Tape& tape, const Tensor& a, double negative_slope = 0.2);
Tensor elu(Tape& tape, const Tensor& a, double alpha = 1.0);

/// Concatenates along the last axis; all leading dimensions must agree.
Tensor concat(Tape& tape, const std::vector<Tensor>& parts);
/// Columns [begin, end) of the last axis.
Tensor slice_last(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end);
/// Rows [begin, end) of the first axis.
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

/// Repeats a length-n vector as the rows of an m x n matrix.
Tensor broadcast_rows(Tape& tape, const Tensor& row, std::size_t m);
/// Multiplies row i of `a` (m x n) by s[i]; s has m elements.
Tensor scale_rows(Tape& tape, const Tensor& a, const Tensor& s);
/// out[i][j] = u[i] + v[j] for vectors of m and n elements.
Tensor pairwise_sum(Tape& tape, const Tensor& u, const Tensor& v);

/// Max-stabilized softmax over a vector. Masked-out entries (mask[i] == false)
/// are exactly zero and excluded from the normalizer.
Tensor softmax(Tape& tape, const Tensor& logits, const Mask& mask = {});
/// Row-wise masked softmax over a matrix; `mask` is row-major m x n or empty.
Tensor softmax_rows(Tape& tape, const Tensor& logits, const Mask& mask = {});

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

/// Batched bilinear form: out[n][k] = sum_ij q[n][i] * w[i][k][j] * c[n][j],
/// with q: N x a, w: a x f x b, c: N x b.
Tensor bilinear(Tape& tape, const Tensor& q, const Tensor& w, const Tensor& c);

/// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
Tensor binary_cross_entropy(Tape& tape, const Tensor& probabilities, std::span<const double> labels,
                            double eps = 1e-12);

// ---- finite-difference verification ------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed() const;
  double max_relative_error() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so near-zero gradients are
  /// judged on absolute error instead.
  double floor = 1e-6;
  /// When nonzero, check at most this many coordinates per tensor (evenly strided).
  std::size_t max_coords_per_tensor = 0;
};

/// Compares tape gradients of the scalar returned by `f` against central finite
/// differences for every coordinate of every tensor in `params`.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options = {});

}  // namespace atomic_sm::ad
