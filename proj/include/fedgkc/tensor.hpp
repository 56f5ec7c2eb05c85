#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape owns every intermediate value; Tensor is a lightweight
// handle (tape pointer + node id). Backward walks the tape in reverse
// recording order, so callers never need a topological sort.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedgkc/errors.hpp"
#include "fedgkc/sparse_matrix.hpp"

namespace fedgkc {

using Parameters = std::map<std::string, Matrix>;
using Gradients = std::map<std::string, Matrix>;

class Tape;

class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Matrix& value() const;
  /// Gradient after backward; zeros when nothing flowed into this node.
  Matrix grad() const;
  bool requires_grad() const;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value) { return push("constant", std::move(value), false, {}); }
  Tensor variable(Matrix value) { return push("variable", std::move(value), true, {}); }

  /// Records the output of a differentiable op. The node requires a gradient
  /// iff any parent does; `backward` is only kept in that case.
  Tensor record(std::string_view op, Matrix value, std::span<const Tensor> parents, BackwardFn backward) {
    bool needs = false;
    for (const auto& p : parents) {
      if (p.tape_ != this) throw PreconditionError(std::string(op) + ": operands live on different tapes");
      needs = needs || nodes_[p.id_].requires_grad;
    }
    return push(op, std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  Tensor record(std::string_view op, Matrix value, std::initializer_list<Tensor> parents, BackwardFn backward) {
    return record(op, std::move(value), std::span<const Tensor>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_.at(id).grad_allocated; }

  /// Lazily allocated, zero-initialised gradient slot.
  Matrix& grad(std::size_t id) {
    auto& node = nodes_.at(id);
    if (!node.grad_allocated) {
      node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
      node.grad_allocated = true;
    }
    return node.grad;
  }

  /// Accumulates `g` into the gradient of `id` when that node needs one.
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    if (nodes_[id].requires_grad) grad(id) += g;
  }

  void backward(const Tensor& loss) {
    if (loss.tape_ != this) throw PreconditionError("backward: loss belongs to another tape");
    if (consumed_) throw PreconditionError("backward: tape already consumed");
    const auto& v = value(loss.id_);
    if (v.rows() != 1 || v.cols() != 1)
      throw DimensionError("backward: loss must be scalar, got " + detail::shape_string(v.rows(), v.cols()));
    consumed_ = true;
    if (!nodes_[loss.id_].requires_grad) return;
    grad(loss.id_)(0, 0) = 1.0;
    for (std::size_t id = loss.id_ + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (node.backward && node.grad_allocated) node.backward(*this, id);
    }
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool grad_allocated = false;
    BackwardFn backward;
  };

  Tensor push(std::string_view op, Matrix value, bool requires_grad, BackwardFn backward) {
    if (!value.allFinite()) throw NumericError(std::string(op) + ": produced a non-finite value");
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false, std::move(backward)});
    return Tensor(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline const Matrix& Tensor::value() const { return tape_->value(id_); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }
inline Matrix Tensor::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  return Matrix::Zero(rows(), cols());
}
inline double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw DimensionError("item: tensor is not scalar");
  return value()(0, 0);
}

/// Collects gradients of named variables after backward.
inline Gradients gradients_of(const std::map<std::string, Tensor>& bound) {
  Gradients out;
  for (const auto& [name, t] : bound) out.emplace(name, t.grad());
  return out;
}

namespace detail {

inline void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) + " vs " +
                         shape_string(b.rows(), b.cols()));
}

inline Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

inline Matrix log_softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    row.array() -= lse;
  }
  return out;
}

inline Matrix scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace detail

inline constexpr double kLogClamp = 1e-12;

/// Copy of `x` that no gradient flows through.
inline Tensor detach(const Tensor& x) { return x.tape().constant(x.value()); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + detail::shape_string(a.rows(), a.cols()) + " x " +
                         detail::shape_string(b.rows(), b.cols()));
  Matrix out = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

/// Sparse-dense product. `s` must outlive the backward pass.
inline Tensor spmm(const SparseMatrix& s, const Tensor& x) {
  if (s.size() != static_cast<std::size_t>(x.rows()))
    throw DimensionError("spmm: sparse n=" + std::to_string(s.size()) + " vs dense " +
                         detail::shape_string(x.rows(), x.cols()));
  const auto ix = x.id();
  const SparseMatrix* sp = &s;
  return x.tape().record("spmm", s.multiply(x.value()), {x}, [ix, sp](Tape& t, std::size_t self) {
    t.accumulate(ix, sp->multiply_transposed(t.grad(self)));
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

inline Tensor scale(const Tensor& a, double s) {
  const auto ia = a.id();
  return a.tape().record("scale", a.value() * s, {a}, [ia, s](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self) * s);
  });
}

/// x (n×c) plus a 1×c bias broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw DimensionError("add_bias: bias " + detail::shape_string(bias.rows(), bias.cols()) + " for input " +
                         detail::shape_string(x.rows(), x.cols()));
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  const auto ix = x.id(), ib = bias.id();
  return x.tape().record("add_bias", std::move(out), {x, bias}, [ix, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ix, g);
    t.accumulate(ib, g.colwise().sum());
  });
}

inline Tensor relu(const Tensor& x) {
  const auto ix = x.id();
  return x.tape().record("relu", x.value().cwiseMax(0.0), {x}, [ix](Tape& t, std::size_t self) {
    const Matrix mask = (t.value(ix).array() > 0.0).cast<double>().matrix();
    t.accumulate(ix, t.grad(self).cwiseProduct(mask));
  });
}

inline Tensor leaky_relu(const Tensor& x, double slope) {
  const auto ix = x.id();
  Matrix out = x.value().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return x.tape().record("leaky_relu", std::move(out), {x}, [ix, slope](Tape& t, std::size_t self) {
    const Matrix d = t.value(ix).unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    t.accumulate(ix, t.grad(self).cwiseProduct(d));
  });
}

inline Tensor elu(const Tensor& x, double alpha = 1.0) {
  const auto ix = x.id();
  Matrix out = x.value().unaryExpr([alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); });
  return x.tape().record("elu", std::move(out), {x}, [ix, alpha](Tape& t, std::size_t self) {
    const Matrix d = t.value(ix).unaryExpr([alpha](double v) { return v > 0.0 ? 1.0 : alpha * std::exp(v); });
    t.accumulate(ix, t.grad(self).cwiseProduct(d));
  });
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw PreconditionError("concat_cols: no inputs");
  const Eigen::Index n = parts[0].rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  Tape& tape = parts[0].tape();
  return tape.record("concat_cols", std::move(out), parts,
                     [ids, offsets](Tape& t, std::size_t self) {
                       const Matrix& g = t.grad(self);
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         const auto cols = t.value(ids[k]).cols();
                         t.accumulate(ids[k], g.middleCols(offsets[k], cols));
                       }
                     });
}

inline Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

inline Tensor softmax_rows(const Tensor& x) {
  const auto ix = x.id();
  Matrix s = detail::softmax_rows(x.value());
  return x.tape().record("softmax_rows", std::move(s), {x}, [ix](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& s = t.value(self);
    const Eigen::VectorXd dot = g.cwiseProduct(s).rowwise().sum();
    Matrix dx = s.cwiseProduct(g - dot.replicate(1, g.cols()));
    t.accumulate(ix, dx);
  });
}

inline Tensor log_softmax_rows(const Tensor& x) {
  const auto ix = x.id();
  return x.tape().record("log_softmax_rows", detail::log_softmax_rows(x.value()), {x},
                         [ix](Tape& t, std::size_t self) {
                           const Matrix& g = t.grad(self);
                           const Matrix s = t.value(self).array().exp().matrix();
                           const Eigen::VectorXd gs = g.rowwise().sum();
                           t.accumulate(ix, g - s.cwiseProduct(gs.replicate(1, g.cols())));
                         });
}

inline Tensor sum(const Tensor& x) {
  const auto ix = x.id();
  return x.tape().record("sum", detail::scalar(x.value().sum()), {x}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    t.accumulate(ix, Matrix::Constant(t.value(ix).rows(), t.value(ix).cols(), g));
  });
}

/// KL(teacher ‖ student) per row, averaged over rows. The teacher side is a
/// constant target; logs are clamped at kLogClamp.
inline Tensor kl_rows(const Tensor& teacher_probs, const Tensor& student_probs) {
  detail::require_same_shape("kl_rows", teacher_probs, student_probs);
  const Matrix& t = teacher_probs.value();
  const Matrix& s = student_probs.value();
  const double n = static_cast<double>(t.rows());
  double total = 0.0;
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      const double tv = t(r, c);
      if (tv > 0.0) total += tv * (std::log(std::max(tv, kLogClamp)) - std::log(std::max(s(r, c), kLogClamp)));
    }
  Matrix teacher = t;
  const auto is = student_probs.id();
  return student_probs.tape().record(
      "kl_rows", detail::scalar(total / n), {student_probs},
      [is, teacher = std::move(teacher), n](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)(0, 0);
        const Matrix& s = tp.value(is);
        Matrix ds = Matrix::Zero(s.rows(), s.cols());
        for (Eigen::Index r = 0; r < s.rows(); ++r)
          for (Eigen::Index c = 0; c < s.cols(); ++c)
            if (s(r, c) > kLogClamp) ds(r, c) = -g * teacher(r, c) / (n * s(r, c));
        tp.accumulate(is, ds);
      });
}

/// Mean negative log-likelihood of `labels` under row-softmax(logits),
/// restricted to the rows listed in `mask`.
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const std::uint32_t> mask) {
  if (mask.empty()) throw PreconditionError("cross_entropy: empty mask");
  if (labels.size() != static_cast<std::size_t>(logits.rows()))
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
  const Eigen::Index classes = logits.cols();
  std::vector<std::uint32_t> rows(mask.begin(), mask.end());
  std::vector<int> targets;
  targets.reserve(rows.size());
  for (auto r : rows) {
    if (r >= labels.size()) throw DimensionError("cross_entropy: mask index out of range");
    const int y = labels[r];
    if (y < 0 || y >= classes) throw PreconditionError("cross_entropy: label out of range");
    targets.push_back(y);
  }
  const Matrix& x = logits.value();
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto row = x.row(rows[k]);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(targets[k]);
  }
  const double m = static_cast<double>(rows.size());
  const auto il = logits.id();
  return logits.tape().record(
      "cross_entropy", detail::scalar(total / m), {logits},
      [il, rows = std::move(rows), targets = std::move(targets), m](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        const Matrix& x = t.value(il);
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) {
          const auto row = x.row(rows[k]);
          const double mx = row.maxCoeff();
          RowVector p = (row.array() - mx).exp().matrix();
          p /= p.sum();
          p(targets[k]) -= 1.0;
          dx.row(rows[k]) += (g / m) * p;
        }
        t.accumulate(il, dx);
      });
}

inline Tensor mse(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mse", a, b);
  const double count = static_cast<double>(a.value().size());
  const double v = (a.value() - b.value()).squaredNorm() / count;
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mse", detail::scalar(v), {a, b}, [ia, ib, count](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    const Matrix d = (2.0 * g / count) * (t.value(ia) - t.value(ib));
    t.accumulate(ia, d);
    t.accumulate(ib, -d);
  });
}

}  // namespace fedgkc
