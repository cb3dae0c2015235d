#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every op of one forward pass in creation order, which is a
// topological order, so backward() is a single reverse sweep. Parameters
// live in a ParamStore that the tape only reads; parameter gradients land in
// a separate Gradients buffer, so several tapes may share one store.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "glopt/errors.hpp"

namespace glopt::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct Gradients {
  std::vector<Matrix<T>> tensors;

  void set_zero() {
    for (auto& g : tensors) g.setZero();
  }

  void add(const Gradients& other) {
    for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += other.tensors[i];
  }

  void scale(T factor) {
    for (auto& g : tensors) g *= factor;
  }

  double squared_norm() const {
    double total = 0.0;
    for (const auto& g : tensors) total += g.template cast<double>().squaredNorm();
    return total;
  }
};

/// Named, ordered collection of learnable tensors. Names are unique and the
/// insertion order is the serialization order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix<T> value;
  };

  std::size_t add(std::string name, Index rows, Index cols) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), Matrix<T>::Zero(rows, cols)});
    return entries_.size() - 1;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Matrix<T>& value(std::string_view name) { return entries_[index_of(name)].value; }
  const Matrix<T>& value(std::string_view name) const { return entries_[index_of(name)].value; }

  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t total_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  Gradients<T> zero_gradients() const {
    Gradients<T> g;
    g.tensors.reserve(entries_.size());
    for (const auto& e : entries_) g.tensors.push_back(Matrix<T>::Zero(e.value.rows(), e.value.cols()));
    return g;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Tape

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  const Matrix<T>& grad() const { return tape_->grad(id_); }
  T scalar() const { return value()(0, 0); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

  Tape<T>* tape() const noexcept { return tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(const ParamStore<T>* params = nullptr) : params_(params) {
    if (params_ != nullptr) param_nodes_.assign(params_->size(), -1);
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), nullptr); }

  Var<T> scalar(T v) {
    Matrix<T> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var<T> row(std::span<const T> values) {
    Matrix<T> m(1, static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Index>(i)) = values[i];
    return constant(std::move(m));
  }

  /// Leaf for parameter `index`; repeated calls return the same node so the
  /// gradients of every use accumulate in one place.
  Var<T> param(std::size_t index) {
    if (params_ == nullptr) throw std::logic_error("tape has no parameter store");
    int& slot = param_nodes_.at(index);
    if (slot < 0) {
      Node node;
      node.external = &(*params_)[index].value;
      node.param_index = static_cast<int>(index);
      nodes_.push_back(std::move(node));
      slot = static_cast<int>(nodes_.size()) - 1;
    }
    return Var<T>(this, slot);
  }

  Var<T> push(Matrix<T> value, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<T>& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external != nullptr ? *n.external : n.value;
  }

  const Matrix<T>& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() != 0; }

  template <typename Expr>
  void accumulate(int id, const Expr& contribution) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) {
      n.grad = contribution;
    } else {
      n.grad += contribution;
    }
  }

  /// Reverse sweep from a 1x1 root, seeding d(root)/d(root) = 1. Each node
  /// created before the root is visited at most once.
  void backward(Var<T> root) {
    if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
    if (value(root.id()).size() != 1) throw ShapeError("backward: root must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    accumulate(root.id(), Matrix<T>::Ones(1, 1));
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.size() != 0 && n.backward) n.backward(*this, id);
    }
  }

  /// Adds parameter-node gradients into `out` (indexed like the store).
  void accumulate_param_grads(Gradients<T>& out) const {
    for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
      const int id = param_nodes_[i];
      if (id >= 0 && has_grad(id)) out.tensors[i] += grad(id);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const ParamStore<T>* params() const noexcept { return params_; }

 private:
  struct Node {
    Matrix<T> value;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    BackwardFn backward;
    int param_index = -1;
  };

  const ParamStore<T>* params_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

// ---------------------------------------------------------------------------
// Ops

namespace detail {

template <typename T>
Tape<T>& same_tape(std::string_view op, std::initializer_list<Var<T>> vars) {
  Tape<T>* tape = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw std::invalid_argument(std::string(op) + ": invalid operand");
    if (tape == nullptr) tape = v.tape();
    if (v.tape() != tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  }
  return *tape;
}

inline std::string shape_str(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename T>
void require_same_shape(std::string_view op, const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

template <typename T>
void require_scalar(std::string_view op, const Var<T>& a) {
  if (a.rows() != 1 || a.cols() != 1) {
    throw ShapeError(std::string(op) + ": expected 1x1 operand, got " + shape_str(a.rows(), a.cols()));
  }
}

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(Var<T> x, Fwd&& fwd, Deriv&& deriv) {
  Tape<T>& tape = *x.tape();
  Matrix<T> out = x.value().unaryExpr(fwd);
  const int xi = x.id();
  return tape.push(std::move(out), [xi, deriv](Tape<T>& t, int self) {
    const Matrix<T>& xv = t.value(xi);
    const Matrix<T>& yv = t.value(self);
    Matrix<T> local(xv.rows(), xv.cols());
    for (Index k = 0; k < xv.size(); ++k) local.data()[k] = deriv(xv.data()[k], yv.data()[k]);
    t.accumulate(xi, t.grad(self).cwiseProduct(local));
  });
}

}  // namespace detail

/// y = x W^T + b with x: n x in, W: out x in, b: 1 x out.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  Tape<T>& tape = detail::same_tape<T>("linear", {x, w, b});
  if (x.cols() != w.cols()) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + " does not match weight " +
                     detail::shape_str(w.rows(), w.cols()));
  }
  if (b.rows() != 1 || b.cols() != w.rows()) {
    throw ShapeError("linear: bias " + detail::shape_str(b.rows(), b.cols()) + " does not match weight " +
                     detail::shape_str(w.rows(), w.cols()));
  }
  Matrix<T> out(x.rows(), w.rows());
  out.noalias() = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  const int xi = x.id(), wi = w.id(), bi = b.id();
  return tape.push(std::move(out), [xi, wi, bi](Tape<T>& t, int self) {
    const Matrix<T>& dy = t.grad(self);
    t.accumulate(xi, dy * t.value(wi));
    t.accumulate(wi, dy.transpose() * t.value(xi));
    t.accumulate(bi, dy.colwise().sum());
  });
}

/// Column-wise concatenation of equal-height blocks.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape<T>& tape = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat: operands on different tapes");
    if (p.rows() != rows) {
      throw ShapeError("concat: row mismatch " + std::to_string(p.rows()) + " vs " + std::to_string(rows));
    }
    cols += p.cols();
  }
  Matrix<T> out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> widths;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return tape.push(std::move(out), [ids = std::move(ids), widths = std::move(widths)](Tape<T>& t, int self) {
    Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], t.grad(self).middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  return concat<T>(std::span<const Var<T>>(parts.begin(), parts.size()));
}

/// Mean over rows (samples): n x d -> 1 x d.
template <typename T>
Var<T> mean_over_samples(Var<T> x) {
  Tape<T>& tape = *x.tape();
  if (x.rows() == 0) throw ShapeError("mean_over_samples: empty input");
  Matrix<T> out = x.value().colwise().mean();
  const int xi = x.id();
  const Index n = x.rows();
  return tape.push(std::move(out), [xi, n](Tape<T>& t, int self) {
    const Matrix<T> g = t.grad(self) / static_cast<T>(n);
    t.accumulate(xi, g.replicate(n, 1));
  });
}

/// Repeats a 1 x d row n times.
template <typename T>
Var<T> tile_rows(Var<T> x, Index n) {
  Tape<T>& tape = *x.tape();
  if (x.rows() != 1) throw ShapeError("tile_rows: expected a single row, got " + std::to_string(x.rows()));
  Matrix<T> out = x.value().replicate(n, 1);
  const int xi = x.id();
  return tape.push(std::move(out), [xi](Tape<T>& t, int self) { t.accumulate(xi, t.grad(self).colwise().sum()); });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// log(1 + e^x) in the overflow-safe form max(x, 0) + log1p(exp(-|x|)).
template <typename T>
T softplus_value(T v) {
  return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
}

template <typename T>
T sigmoid_value(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Var<T> softplus(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return softplus_value(v); }, [](T v, T) { return sigmoid_value(v); });
}

/// min(x, threshold); gradient 0 strictly above the threshold, 1 otherwise.
template <typename T>
Var<T> clamp_max(Var<T> x, T threshold) {
  return detail::unary<T>(
      x, [threshold](T v) { return v > threshold ? threshold : v; },
      [threshold](T v, T) { return v > threshold ? T(0) : T(1); });
}

/// Clamp to [lo, hi]; gradient 1 inside the closed interval, 0 outside.
template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary<T>(
      x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](T v, T) { return (v < lo || v > hi) ? T(0) : T(1); });
}

template <typename T>
Var<T> abs(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return detail::unary<T>(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  return detail::unary<T>(
      x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape<T>("add", {a, b});
  detail::require_same_shape("add", a, b);
  Matrix<T> out = a.value() + b.value();
  const int ai = a.id(), bi = b.id();
  return tape.push(std::move(out), [ai, bi](Tape<T>& t, int self) {
    t.accumulate(ai, t.grad(self));
    t.accumulate(bi, t.grad(self));
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape<T>("sub", {a, b});
  detail::require_same_shape("sub", a, b);
  Matrix<T> out = a.value() - b.value();
  const int ai = a.id(), bi = b.id();
  return tape.push(std::move(out), [ai, bi](Tape<T>& t, int self) {
    t.accumulate(ai, t.grad(self));
    t.accumulate(bi, -t.grad(self));
  });
}

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape<T>("mul", {a, b});
  detail::require_same_shape("mul", a, b);
  Matrix<T> out = a.value().cwiseProduct(b.value());
  const int ai = a.id(), bi = b.id();
  return tape.push(std::move(out), [ai, bi](Tape<T>& t, int self) {
    t.accumulate(ai, t.grad(self).cwiseProduct(t.value(bi)));
    t.accumulate(bi, t.grad(self).cwiseProduct(t.value(ai)));
  });
}

/// Sum of all entries -> 1 x 1.
template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = *x.tape();
  Matrix<T> out(1, 1);
  out(0, 0) = x.value().sum();
  const int xi = x.id();
  const Index r = x.rows(), c = x.cols();
  return tape.push(std::move(out), [xi, r, c](Tape<T>& t, int self) {
    t.accumulate(xi, Matrix<T>::Constant(r, c, t.grad(self)(0, 0)));
  });
}

/// Unbiased (n - 1) sample variance of three 1 x 1 values.
template <typename T>
T variance3_value(T a, T b, T c) {
  const T m = (a + b + c) / T(3);
  return ((a - m) * (a - m) + (b - m) * (b - m) + (c - m) * (c - m)) / T(2);
}

template <typename T>
Var<T> variance3(Var<T> a, Var<T> b, Var<T> c) {
  Tape<T>& tape = detail::same_tape<T>("variance3", {a, b, c});
  detail::require_scalar("variance3", a);
  detail::require_scalar("variance3", b);
  detail::require_scalar("variance3", c);
  Matrix<T> out(1, 1);
  out(0, 0) = variance3_value(a.scalar(), b.scalar(), c.scalar());
  const int ai = a.id(), bi = b.id(), ci = c.id();
  return tape.push(std::move(out), [ai, bi, ci](Tape<T>& t, int self) {
    const T g = t.grad(self)(0, 0);
    const T va = t.value(ai)(0, 0), vb = t.value(bi)(0, 0), vc = t.value(ci)(0, 0);
    const T m = (va + vb + vc) / T(3);
    // d/da of sum((x - m)^2) / 2 is (a - m), since sum(x - m) = 0.
    t.accumulate(ai, Matrix<T>::Constant(1, 1, g * (va - m)));
    t.accumulate(bi, Matrix<T>::Constant(1, 1, g * (vb - m)));
    t.accumulate(ci, Matrix<T>::Constant(1, 1, g * (vc - m)));
  });
}

/// Log-parameterised coefficients of one StableCubic activation.
template <typename T>
struct StableCubicVars {
  Var<T> log_alpha;
  Var<T> log_beta;
  Var<T> log_gamma;
};

inline constexpr double kStableCubicClamp = 10.0;

/// alpha r + beta r^2 + gamma r^3 with r = relu(min(z, 10)) and
/// (alpha, beta, gamma) = exp(log parameters). Fused single node.
template <typename T>
Var<T> stable_cubic(Var<T> z, const StableCubicVars<T>& p) {
  Tape<T>& tape = detail::same_tape<T>("stable_cubic", {z, p.log_alpha, p.log_beta, p.log_gamma});
  detail::require_scalar("stable_cubic", p.log_alpha);
  detail::require_scalar("stable_cubic", p.log_beta);
  detail::require_scalar("stable_cubic", p.log_gamma);
  const T alpha = std::exp(p.log_alpha.scalar());
  const T beta = std::exp(p.log_beta.scalar());
  const T gamma = std::exp(p.log_gamma.scalar());
  const T cap = static_cast<T>(kStableCubicClamp);
  const auto r = z.value().array().min(cap).max(T(0));
  Matrix<T> out = (r * (alpha + r * (beta + r * gamma))).matrix();
  const int zi = z.id(), ai = p.log_alpha.id(), bi = p.log_beta.id(), gi = p.log_gamma.id();
  return tape.push(std::move(out), [zi, ai, bi, gi, cap](Tape<T>& t, int self) {
    const T a = std::exp(t.value(ai)(0, 0));
    const T b = std::exp(t.value(bi)(0, 0));
    const T g = std::exp(t.value(gi)(0, 0));
    const auto zv = t.value(zi).array();
    const auto dy = t.grad(self).array();
    const auto rr = zv.min(cap).max(T(0));
    // relu passes only z > 0; clamp_max blocks z > cap.
    const auto pass = (zv > T(0) && zv <= cap).template cast<T>();
    t.accumulate(zi, (dy * pass * (a + rr * (T(2) * b + T(3) * g * rr))).matrix());
    const T ga = (dy * rr).sum() * a;
    const T gb = (dy * rr * rr).sum() * b;
    const T gg = (dy * rr * rr * rr).sum() * g;
    t.accumulate(ai, Matrix<T>::Constant(1, 1, ga));
    t.accumulate(bi, Matrix<T>::Constant(1, 1, gb));
    t.accumulate(gi, Matrix<T>::Constant(1, 1, gg));
  });
}

/// Column slice [offset, offset + width).
template <typename T>
Var<T> slice_cols(Var<T> x, Index offset, Index width) {
  Tape<T>& tape = *x.tape();
  if (offset < 0 || width < 0 || offset + width > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(offset) + ", " + std::to_string(offset + width) +
                     ") outside " + std::to_string(x.cols()) + " columns");
  }
  Matrix<T> out = x.value().middleCols(offset, width);
  const int xi = x.id();
  const Index r = x.rows(), c = x.cols();
  return tape.push(std::move(out), [xi, r, c, offset, width](Tape<T>& t, int self) {
    Matrix<T> g = Matrix<T>::Zero(r, c);
    g.middleCols(offset, width) = t.grad(self);
    t.accumulate(xi, g);
  });
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Index worst_index = 0;
  std::size_t checked = 0;
  std::vector<std::pair<std::string, double>> per_tensor;
};

/// Builds the scalar objective on a fresh tape.
template <typename T>
using Objective = std::function<Var<T>(Tape<T>&)>;

template <typename T>
T evaluate_objective(const ParamStore<T>& store, const Objective<T>& f) {
  Tape<T> tape(&store);
  const Var<T> out = f(tape);
  if (out.value().size() != 1) throw ShapeError("grad_check: objective must be 1x1");
  const T v = out.scalar();
  if (!std::isfinite(static_cast<double>(v))) throw NumericError("grad_check: non-finite objective value");
  return v;
}

/// Analytic gradient of f over every parameter of `store`.
template <typename T>
Gradients<T> analytic_gradient(const ParamStore<T>& store, const Objective<T>& f, T* value = nullptr) {
  Tape<T> tape(&store);
  const Var<T> out = f(tape);
  if (out.value().size() != 1) throw ShapeError("grad_check: objective must be 1x1");
  if (!std::isfinite(static_cast<double>(out.scalar()))) throw NumericError("grad_check: non-finite objective value");
  if (value != nullptr) *value = out.scalar();
  tape.backward(out);
  Gradients<T> g = store.zero_gradients();
  tape.accumulate_param_grads(g);
  return g;
}

/// Max over checked entries of |analytic - central difference| / max(1, |analytic|).
/// `max_per_tensor` > 0 checks that many evenly strided entries per tensor
/// instead of all of them. The store is restored before returning.
template <typename T>
GradCheckResult grad_check(ParamStore<T>& store, const Objective<T>& f, double eps, std::size_t max_per_tensor = 0) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-4]");
  const Gradients<T> g = analytic_gradient(store, f);
  GradCheckResult result;
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& entry = store[p];
    const Index n = entry.value.size();
    Index stride = 1;
    if (max_per_tensor > 0 && static_cast<std::size_t>(n) > max_per_tensor) {
      stride = (n + static_cast<Index>(max_per_tensor) - 1) / static_cast<Index>(max_per_tensor);
    }
    double tensor_max = 0.0;
    for (Index k = 0; k < n; k += stride) {
      T& slot = entry.value.data()[k];
      const T saved = slot;
      slot = saved + static_cast<T>(eps);
      const double plus = static_cast<double>(evaluate_objective(store, f));
      slot = saved - static_cast<T>(eps);
      const double minus = static_cast<double>(evaluate_objective(store, f));
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double analytic = static_cast<double>(g.tensors[p].data()[k]);
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      tensor_max = std::max(tensor_max, err);
      if (err > result.max_rel_error || result.checked == 0) {
        result.max_rel_error = err;
        result.worst_tensor = entry.name;
        result.worst_index = k;
      }
      ++result.checked;
    }
    result.per_tensor.emplace_back(entry.name, tensor_max);
  }
  return result;
}

}  // namespace glopt::ad
