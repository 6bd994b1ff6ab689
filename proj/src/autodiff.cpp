#include "atomic_sm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace atomic_sm::ad {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor -------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) on tensor of shape " + shape_to_string(shape()));
  return node_->data[row * node_->shape[1] + col];
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

Tensor Tensor::clone() const {
  Tensor copy(node_->shape, node_->data, node_->requires_grad);
  if (has_grad()) copy.node_->grad = node_->grad;
  return copy;
}

// ---- Tape ---------------------------------------------------------------------

Tensor Tape::record(std::string name, Tensor output, const std::vector<Tensor>& inputs,
                    std::function<void()> backward_fn) {
  if (!recording()) return output;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return output;
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::move(name), output, std::move(backward_fn)});
  return output;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractViolation("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  const bool on_tape = std::any_of(entries_.begin(), entries_.end(),
                                   [&](const Entry& e) { return e.output.same_storage(loss); });
  if (!on_tape) throw ContractViolation("backward(): loss is not produced by a recorded operation");

  for (auto& entry : entries_) entry.output.zero_grad();
  Tensor seed = loss;
  seed.mutable_grad()[0] = 1.0;

  visit_order_.clear();
  visit_order_.reserve(entries_.size());
  for (std::size_t i = entries_.size(); i-- > 0;) {
    visit_order_.push_back(i);
    entries_[i].backward_fn();
  }
}

void Tape::clear() {
  entries_.clear();
  visit_order_.clear();
}

// ---- helpers ------------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(a.shape()));
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Tensor result(a.shape(), std::move(out));
  return tape.record(name, result, {a}, [a, result, deriv]() mutable {
    if (!a.requires_grad()) return;
    const auto g = result.grad();
    const auto x = a.data();
    const auto y = result.data();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax over `n` entries starting at `logits`, honoring an optional mask slice.
void softmax_span(const double* logits, const Mask& mask, std::size_t offset, std::size_t n, double* out,
                  const char* op) {
  auto live = [&](std::size_t j) { return mask.empty() || mask[offset + j]; };
  double max_logit = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (!live(j)) continue;
    any = true;
    max_logit = std::max(max_logit, logits[j]);
  }
  if (!any) throw DegenerateSoftmaxError(std::string(op) + ": every entry is masked");
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = live(j) ? std::exp(logits[j] - max_logit) : 0.0;
    total += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= total;
}

// d(logits) = y * (g - <g, y>) over one softmax row; masked entries have y == 0.
void softmax_span_backward(const double* y, const double* g, std::size_t n, double* gx) {
  double dot = 0.0;
  for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
}

}  // namespace

// ---- linear algebra -------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: dimension mismatch " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Tensor result({m, n}, std::move(out));
  return tape.record("matmul", result, {a, b}, [a, b, result, m, k, n]() mutable {
    const auto G = result.grad();
    if (a.requires_grad()) {
      // dA = G * B^T
      const auto B = b.data();
      auto gA = a.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          gA[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      // dB = A^T * G
      const auto A = a.data();
      auto gB = b.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result(a.shape(), std::move(out));
  return tape.record("add", result, {a, b}, [a, b, result]() mutable {
    const auto g = result.grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->mutable_grad();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Tensor result(a.shape(), std::move(out));
  return tape.record("sub", result, {a, b}, [a, b, result]() mutable {
    const auto g = result.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor result(a.shape(), std::move(out));
  return tape.record("mul", result, {a, b}, [a, b, result]() mutable {
    const auto g = result.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return unary(tape, "scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("add_scalar: expected scalar, got " + shape_to_string(s.shape()));
  const double v = s.item();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + v;
  Tensor result(a.shape(), std::move(out));
  return tape.record("add_scalar", result, {a, s}, [a, s, result]() mutable {
    const auto g = result.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (s.requires_grad()) {
      double total = 0.0;
      for (double gi : g) total += gi;
      s.mutable_grad()[0] += total;
    }
  });
}

// ---- nonlinearities --------------------------------------------------------------

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(tape, "tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(tape, "sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return unary(tape, "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor leaky_relu(Tape& tape, const Tensor& a, double negative_slope) {
  return unary(
      tape, "leaky_relu", a, [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
      [negative_slope](double x, double) { return x >= 0.0 ? 1.0 : negative_slope; });
}

Tensor elu(Tape& tape, const Tensor& a, double alpha) {
  return unary(
      tape, "elu", a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

// ---- structural -------------------------------------------------------------------

Tensor concat(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat: scalar operands");
  const Shape lead(first.begin(), first.end() - 1);
  const std::size_t outer = shape_numel(lead);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw ShapeError("concat: shape mismatch " + shape_to_string(first) + " vs " + shape_to_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<double> out(outer * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t r = 0; r < outer; ++r)
      std::copy_n(&src[r * widths[k]], widths[k], &out[r * total + offset]);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  Tensor result(std::move(shape), std::move(out));
  return tape.record("concat", result, parts, [parts, widths, outer, total, result]() mutable {
    const auto g = result.grad();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (parts[k].requires_grad()) {
        auto gp = parts[k].mutable_grad();
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g[r * total + offset + c];
      }
      offset += widths[k];
    }
  });
}

Tensor slice_last(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.shape().back()) {
    throw ShapeError("slice_last: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_to_string(a.shape()));
  }
  const std::size_t width = a.shape().back();
  const std::size_t outer = a.numel() / width;
  const std::size_t w = end - begin;
  std::vector<double> out(outer * w);
  const auto src = a.data();
  for (std::size_t r = 0; r < outer; ++r) std::copy_n(&src[r * width + begin], w, &out[r * w]);
  Shape shape = a.shape();
  shape.back() = w;
  Tensor result(std::move(shape), std::move(out));
  return tape.record("slice_last", result, {a}, [a, result, outer, width, begin, w]() mutable {
    if (!a.requires_grad()) return;
    const auto g = result.grad();
    auto ga = a.mutable_grad();
    for (std::size_t r = 0; r < outer; ++r)
      for (std::size_t c = 0; c < w; ++c) ga[r * width + begin + c] += g[r * w + c];
  });
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_to_string(a.shape()));
  }
  const std::size_t stride = a.numel() / a.dim(0);
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          a.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  Shape shape = a.shape();
  shape[0] = end - begin;
  Tensor result(std::move(shape), std::move(out));
  return tape.record("slice_rows", result, {a}, [a, result, begin, stride]() mutable {
    if (!a.requires_grad()) return;
    const auto g = result.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * stride + i] += g[i];
  });
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  Tensor result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  return tape.record("reshape", result, {a}, [a, result]() mutable {
    if (!a.requires_grad()) return;
    const auto g = result.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Tensor broadcast_rows(Tape& tape, const Tensor& row, std::size_t m) {
  if (row.rank() != 1) throw ShapeError("broadcast_rows: expected a vector, got " + shape_to_string(row.shape()));
  const std::size_t n = row.numel();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy(row.data().begin(), row.data().end(), &out[i * n]);
  Tensor result({m, n}, std::move(out));
  return tape.record("broadcast_rows", result, {row}, [row, result, m, n]() mutable {
    if (!row.requires_grad()) return;
    const auto g = result.grad();
    auto gr = row.mutable_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
  });
}

Tensor scale_rows(Tape& tape, const Tensor& a, const Tensor& s) {
  require_rank("scale_rows", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (s.numel() != m) {
    throw ShapeError("scale_rows: scale " + shape_to_string(s.shape()) + " does not match rows of " +
                     shape_to_string(a.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] * s[i];
  Tensor result({m, n}, std::move(out));
  return tape.record("scale_rows", result, {a, s}, [a, s, result, m, n]() mutable {
    const auto g = result.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * s[i];
    }
    if (s.requires_grad()) {
      auto gs = s.mutable_grad();
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * a[i * n + j];
        gs[i] += acc;
      }
    }
  });
}

Tensor pairwise_sum(Tape& tape, const Tensor& u, const Tensor& v) {
  const std::size_t m = u.numel(), n = v.numel();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = u[i] + v[j];
  Tensor result({m, n}, std::move(out));
  return tape.record("pairwise_sum", result, {u, v}, [u, v, result, m, n]() mutable {
    const auto g = result.grad();
    if (u.requires_grad()) {
      auto gu = u.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gu[i] += g[i * n + j];
    }
    if (v.requires_grad()) {
      auto gv = v.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += g[i * n + j];
    }
  });
}

// ---- softmax ---------------------------------------------------------------------

Tensor softmax(Tape& tape, const Tensor& logits, const Mask& mask) {
  require_rank("softmax", logits, 1);
  const std::size_t n = logits.numel();
  if (!mask.empty() && mask.size() != n) {
    throw ShapeError("softmax: mask of " + std::to_string(mask.size()) + " entries for logits " +
                     shape_to_string(logits.shape()));
  }
  std::vector<double> out(n);
  softmax_span(logits.data().data(), mask, 0, n, out.data(), "softmax");
  Tensor result({n}, std::move(out));
  return tape.record("softmax", result, {logits}, [logits, result, n]() mutable {
    if (!logits.requires_grad()) return;
    softmax_span_backward(result.data().data(), result.grad().data(), n, logits.mutable_grad().data());
  });
}

Tensor softmax_rows(Tape& tape, const Tensor& logits, const Mask& mask) {
  require_rank("softmax_rows", logits, 2);
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  if (!mask.empty() && mask.size() != m * n) {
    throw ShapeError("softmax_rows: mask of " + std::to_string(mask.size()) + " entries for logits " +
                     shape_to_string(logits.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    softmax_span(&logits.data()[i * n], mask, i * n, n, &out[i * n], "softmax_rows");
  Tensor result({m, n}, std::move(out));
  return tape.record("softmax_rows", result, {logits}, [logits, result, m, n]() mutable {
    if (!logits.requires_grad()) return;
    const auto y = result.data();
    const auto g = result.grad();
    auto gx = logits.mutable_grad();
    for (std::size_t i = 0; i < m; ++i) softmax_span_backward(&y[i * n], &g[i * n], n, &gx[i * n]);
  });
}

// ---- reductions -------------------------------------------------------------------

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor result = Tensor::scalar(total);
  return tape.record("sum", result, {a}, [a, result]() mutable {
    if (!a.requires_grad()) return;
    const double g = result.grad()[0];
    for (double& gi : a.mutable_grad()) gi += g;
  });
}

Tensor mean(Tape& tape, const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.numel()));
}

// ---- fused model ops ---------------------------------------------------------------

Tensor bilinear(Tape& tape, const Tensor& q, const Tensor& w, const Tensor& c) {
  if (q.rank() != 2 || c.rank() != 2 || w.rank() != 3 || q.dim(0) != c.dim(0) || w.dim(0) != q.dim(1) ||
      w.dim(2) != c.dim(1)) {
    throw ShapeError("bilinear: dimension mismatch q" + shape_to_string(q.shape()) + " w" +
                     shape_to_string(w.shape()) + " c" + shape_to_string(c.shape()));
  }
  const std::size_t N = q.dim(0), A = w.dim(0), F = w.dim(1), B = w.dim(2);
  // qw[n][k][j] = sum_i q[n][i] w[i][k][j]; kept for the backward pass.
  std::vector<double> qw(N * F * B, 0.0);
  const auto Q = q.data();
  const auto W = w.data();
  const auto C = c.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < A; ++i) {
      const double qi = Q[n * A + i];
      if (qi == 0.0) continue;
      const double* wrow = &W[i * F * B];
      double* dst = &qw[n * F * B];
      for (std::size_t kj = 0; kj < F * B; ++kj) dst[kj] += qi * wrow[kj];
    }
  std::vector<double> out(N * F, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < F; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < B; ++j) acc += qw[(n * F + k) * B + j] * C[n * B + j];
      out[n * F + k] = acc;
    }
  Tensor result({N, F}, std::move(out));
  return tape.record("bilinear", result, {q, w, c},
                     [q, w, c, result, qw = std::move(qw), N, A, F, B]() mutable {
                       const auto G = result.grad();
                       const auto Q = q.data();
                       const auto W = w.data();
                       const auto C = c.data();
                       if (c.requires_grad()) {
                         auto gc = c.mutable_grad();
                         for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t k = 0; k < F; ++k) {
                             const double g = G[n * F + k];
                             for (std::size_t j = 0; j < B; ++j) gc[n * B + j] += g * qw[(n * F + k) * B + j];
                           }
                       }
                       if (!q.requires_grad() && !w.requires_grad()) return;
                       // gc_outer[n][k][j] = G[n][k] * c[n][j]
                       std::vector<double> outer(F * B);
                       auto gq = q.requires_grad() ? q.mutable_grad() : std::span<double>{};
                       auto gw = w.requires_grad() ? w.mutable_grad() : std::span<double>{};
                       for (std::size_t n = 0; n < N; ++n) {
                         for (std::size_t k = 0; k < F; ++k)
                           for (std::size_t j = 0; j < B; ++j) outer[k * B + j] = G[n * F + k] * C[n * B + j];
                         for (std::size_t i = 0; i < A; ++i) {
                           const double* wrow = &W[i * F * B];
                           if (!gq.empty()) {
                             double acc = 0.0;
                             for (std::size_t kj = 0; kj < F * B; ++kj) acc += wrow[kj] * outer[kj];
                             gq[n * A + i] += acc;
                           }
                           if (!gw.empty()) {
                             const double qi = Q[n * A + i];
                             if (qi == 0.0) continue;
                             double* gwrow = &gw[i * F * B];
                             for (std::size_t kj = 0; kj < F * B; ++kj) gwrow[kj] += qi * outer[kj];
                           }
                         }
                       }
                     });
}

Tensor binary_cross_entropy(Tape& tape, const Tensor& probabilities, std::span<const double> labels, double eps) {
  const std::size_t n = probabilities.numel();
  if (labels.size() != n) {
    throw ShapeError("binary_cross_entropy: " + std::to_string(n) + " probabilities vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (n == 0) throw ShapeError("binary_cross_entropy: empty input");
  std::vector<double> y(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
    total -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(n));
  return tape.record("binary_cross_entropy", result, {probabilities},
                     [probabilities, result, y = std::move(y), n, eps]() mutable {
                       if (!probabilities.requires_grad()) return;
                       const double g = result.grad()[0] / static_cast<double>(n);
                       auto gp = probabilities.mutable_grad();
                       for (std::size_t i = 0; i < n; ++i) {
                         const double raw = probabilities[i];
                         if (raw < eps || raw > 1.0 - eps) continue;  // clamped: flat
                         gp[i] += g * (-y[i] / raw + (1.0 - y[i]) / (1.0 - raw));
                       }
                     });
}

// ---- grad check ------------------------------------------------------------------

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [this](const GradCheckEntry& e) { return e.max_relative_error < tolerance; });
}

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) p.tensor.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  auto evaluate = [&f]() {
    Tape tape(Tape::Mode::inference);
    return f(tape).item();
  };

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    const std::size_t count = p.tensor.numel();
    std::size_t stride = 1;
    if (options.max_coords_per_tensor > 0 && count > options.max_coords_per_tensor) {
      stride = (count + options.max_coords_per_tensor - 1) / options.max_coords_per_tensor;
    }
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < count; i += stride) {
      const double original = values[i];
      values[i] = original + options.step;
      const double up = evaluate();
      values[i] = original - options.step;
      const double down = evaluate();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (entry.checked++ == 0 || rel > entry.max_relative_error) {
        entry.max_relative_error = rel;
        entry.worst_index = i;
        entry.analytic_at_worst = analytic[i];
        entry.numeric_at_worst = numeric;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace atomic_sm::ad
