#pragma once

// Reverse-mode autodiff over dense row-major tensors. Eigen does the math;
// a Tape records applied operations in topological order and replays their
// backward rules exactly once per node. Scalar-templated in the Eigen style;
// the rest of the project uses the double instantiation (vqr::Tensor).

#include <Eigen/Dense>

#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vqr/errors.hpp"

namespace vqr::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <class S>
using VecA = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatMap = Eigen::Map<RowMat<S>>;
template <class S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

inline Index numel_of(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

template <class S>
class TapeT;

template <class S>
struct NodeT {
  Shape shape;
  VecA<S> values;
  VecA<S> grad;  // size 0 until first accumulation; absent means zero
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad or any ancestor requires it
  TapeT<S>* tape = nullptr;  // nullptr for leaves
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  void ensure_grad() {
    if (grad.size() == 0) grad = VecA<S>::Zero(values.size());
  }
};

/// Handle to a tensor node. Copies share the node (value semantics over a
/// shared dense buffer, like an Eigen::Ref). Leaves own their storage and
/// survive across tapes; op results belong to the tape that recorded them.
template <class S>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(std::shared_ptr<NodeT<S>> node) : node_(std::move(node)) {}

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return leaf(std::move(shape), requires_grad, [](VecA<S>& v) { v.setZero(); });
  }

  static TensorT constant(Shape shape, S value) {
    return leaf(std::move(shape), false, [value](VecA<S>& v) { v.setConstant(value); });
  }

  static TensorT scalar(S value) { return constant({1}, value); }

  static TensorT from_values(Shape shape, const std::vector<S>& values, bool requires_grad = false) {
    if (numel_of(shape) != static_cast<Index>(values.size()))
      throw DimensionError("from_values: shape " + shape_str(shape) + " does not hold " +
                           std::to_string(values.size()) + " values");
    return leaf(std::move(shape), requires_grad, [&](VecA<S>& v) {
      std::copy(values.begin(), values.end(), v.data());
    });
  }

  /// Leaf from a row-major copy of an Eigen matrix.
  static TensorT from_matrix(const Eigen::Ref<const RowMat<S>>& m, bool requires_grad = false) {
    return leaf({m.rows(), m.cols()}, requires_grad, [&](VecA<S>& v) {
      MatMap<S>(v.data(), m.rows(), m.cols()) = m;
    });
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Index numel() const { return node_->values.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const VecA<S>& values() const { return node_->values; }
  VecA<S>& values_mut() { return node_->values; }
  S operator[](Index i) const { return node_->values(i); }

  /// The single entry of a scalar tensor.
  S value() const {
    if (numel() != 1) throw ContractError("value(): tensor " + shape_str(shape()) + " is not scalar");
    return node_->values(0);
  }

  std::vector<S> to_vector() const {
    return std::vector<S>(node_->values.data(), node_->values.data() + numel());
  }

  /// Rank-2 view of the flat buffer.
  ConstMatMap<S> matrix() const {
    if (rank() != 2) throw ContractError("matrix(): tensor " + shape_str(shape()) + " is not rank 2");
    return ConstMatMap<S>(node_->values.data(), dim(0), dim(1));
  }

  bool has_grad() const { return node_->grad.size() != 0; }

  /// Accumulated gradient; zeros when nothing reached this tensor.
  std::vector<S> grad() const {
    if (!has_grad()) return std::vector<S>(static_cast<std::size_t>(numel()), S(0));
    return std::vector<S>(node_->grad.data(), node_->grad.data() + numel());
  }

  const VecA<S>& grad_array() const {
    if (!has_grad()) throw ContractError("grad_array(): no gradient accumulated");
    return node_->grad;
  }

  void zero_grad() { node_->grad.resize(0); }

  const std::shared_ptr<NodeT<S>>& node() const { return node_; }

 private:
  template <class Fill>
  static TensorT leaf(Shape shape, bool requires_grad, Fill fill) {
    auto n = std::make_shared<NodeT<S>>();
    n->shape = std::move(shape);
    for (Index d : n->shape)
      if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(n->shape));
    n->values.resize(numel_of(n->shape));
    fill(n->values);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return TensorT(std::move(n));
  }

  std::shared_ptr<NodeT<S>> node_;
};

/// Ordered record of applied operations. Single-use: one backward pass per
/// tape, and recording past that point is rejected. A tape and its op nodes
/// belong to one logical thread.
template <class S>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  Index num_ops() const { return static_cast<Index>(ops_.size()); }
  bool consumed() const { return consumed_; }

  TensorT<S> record(Shape shape, VecA<S> values, std::vector<std::shared_ptr<NodeT<S>>> parents,
                    std::function<void(NodeT<S>&)> backward_fn) {
    if (consumed_) throw ContractError("tape is single-use: cannot record after backward");
    auto n = std::make_shared<NodeT<S>>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->tape = this;
    bool needs = false;
    for (const auto& p : parents) {
      if (p->tape != nullptr && p->tape != this)
        throw ContractError("operand belongs to a different tape");
      needs = needs || p->needs_grad;
    }
    n->needs_grad = needs;
    n->parents = std::move(parents);
    if (needs) n->backward_fn = std::move(backward_fn);
    ops_.push_back(n);
    return TensorT<S>(std::move(n));
  }

  /// Seeds d(loss)/d(loss) = 1 and replays backward rules in reverse record
  /// order, accumulating (+=) into every grad-requiring tensor reachable from
  /// the loss. Tensors not reached keep a zero gradient.
  void backward(const TensorT<S>& loss) {
    if (consumed_) throw ContractError("tape is single-use: backward already ran");
    if (!loss.defined() || loss.numel() != 1)
      throw ContractError("backward: loss must be a defined scalar tensor");
    if (loss.node()->tape != this)
      throw ContractError("backward: loss was not produced on this tape");
    consumed_ = true;
    loss.node()->ensure_grad();
    loss.node()->grad(0) = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      NodeT<S>& n = **it;
      if (n.grad.size() != 0 && n.backward_fn) n.backward_fn(n);
    }
  }

 private:
  std::vector<std::shared_ptr<NodeT<S>>> ops_;
  bool consumed_ = false;
};

namespace detail {

template <class S, class Expr>
void accum(const std::shared_ptr<NodeT<S>>& p, const Expr& e) {
  if (!p->needs_grad) return;
  p->ensure_grad();
  p->grad += e;
}

template <class S>
void check_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// outer stride / extent / inner stride decomposition for an axis
inline void axis_split(const Shape& shape, Index axis, Index& outer, Index& extent, Index& inner) {
  outer = 1;
  for (Index i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  extent = shape[static_cast<std::size_t>(axis)];
  inner = 1;
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i)
    inner *= shape[static_cast<std::size_t>(i)];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// C[m,n] = A[m,k] * B[k,n]. Backward: dA += dC Bt, dB += At dC.
template <class S>
TensorT<S> matmul(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  VecA<S> out(m * n);
  MatMap<S>(out.data(), m, n).noalias() =
      ConstMatMap<S>(a.values().data(), m, k) * ConstMatMap<S>(b.values().data(), k, n);
  auto an = a.node(), bn = b.node();
  return tape.record({m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](NodeT<S>& self) {
    ConstMatMap<S> g(self.grad.data(), m, n);
    if (an->needs_grad) {
      an->ensure_grad();
      MatMap<S>(an->grad.data(), m, k).noalias() += g * ConstMatMap<S>(bn->values.data(), k, n).transpose();
    }
    if (bn->needs_grad) {
      bn->ensure_grad();
      MatMap<S>(bn->grad.data(), k, n).noalias() += ConstMatMap<S>(an->values.data(), m, k).transpose() * g;
    }
  });
}

template <class S>
TensorT<S> add(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("add", a, b);
  auto an = a.node(), bn = b.node();
  return tape.record(a.shape(), a.values() + b.values(), {an, bn}, [an, bn](NodeT<S>& self) {
    detail::accum(an, self.grad);
    detail::accum(bn, self.grad);
  });
}

template <class S>
TensorT<S> sub(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("sub", a, b);
  auto an = a.node(), bn = b.node();
  return tape.record(a.shape(), a.values() - b.values(), {an, bn}, [an, bn](NodeT<S>& self) {
    detail::accum(an, self.grad);
    detail::accum(bn, -self.grad);
  });
}

/// Element-wise product. With a constant mask operand this is exactly
/// dropout-with-given-mask.
template <class S>
TensorT<S> mul(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("mul", a, b);
  auto an = a.node(), bn = b.node();
  return tape.record(a.shape(), a.values() * b.values(), {an, bn}, [an, bn](NodeT<S>& self) {
    detail::accum(an, self.grad * bn->values);
    detail::accum(bn, self.grad * an->values);
  });
}

template <class S>
TensorT<S> scale(TapeT<S>& tape, const TensorT<S>& x, S c) {
  auto xn = x.node();
  return tape.record(x.shape(), x.values() * c, {xn}, [xn, c](NodeT<S>& self) {
    detail::accum(xn, self.grad * c);
  });
}

/// M[n,a] + v[a] broadcast over rows.
template <class S>
TensorT<S> add_rowwise(TapeT<S>& tape, const TensorT<S>& m, const TensorT<S>& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
    throw DimensionError("add_rowwise: incompatible shapes " + shape_str(m.shape()) + " and " +
                         shape_str(v.shape()));
  const Index rows = m.dim(0), cols = m.dim(1);
  VecA<S> out(rows * cols);
  MatMap<S>(out.data(), rows, cols) =
      ConstMatMap<S>(m.values().data(), rows, cols).rowwise() +
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(v.values().data(), cols);
  auto mn = m.node(), vn = v.node();
  return tape.record({rows, cols}, std::move(out), {mn, vn}, [mn, vn, rows, cols](NodeT<S>& self) {
    detail::accum(mn, self.grad);
    if (vn->needs_grad) {
      vn->ensure_grad();
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(vn->grad.data(), cols) +=
          ConstMatMap<S>(self.grad.data(), rows, cols).colwise().sum();
    }
  });
}

template <class S>
TensorT<S> sigmoid(TapeT<S>& tape, const TensorT<S>& x) {
  auto xn = x.node();
  VecA<S> y = S(1) / (S(1) + (-x.values()).exp());
  return tape.record(x.shape(), std::move(y), {xn}, [xn](NodeT<S>& self) {
    detail::accum(xn, self.grad * self.values * (S(1) - self.values));
  });
}

template <class S>
TensorT<S> tanh(TapeT<S>& tape, const TensorT<S>& x) {
  auto xn = x.node();
  return tape.record(x.shape(), x.values().tanh(), {xn}, [xn](NodeT<S>& self) {
    detail::accum(xn, self.grad * (S(1) - self.values.square()));
  });
}

template <class S>
TensorT<S> relu(TapeT<S>& tape, const TensorT<S>& x) {
  auto xn = x.node();
  return tape.record(x.shape(), x.values().max(S(0)), {xn}, [xn](NodeT<S>& self) {
    detail::accum(xn, self.grad * (xn->values > S(0)).template cast<S>());
  });
}

/// Concatenation along axis 0 or 1. All parts must agree on the other axis.
template <class S>
TensorT<S> concat(TapeT<S>& tape, const std::vector<TensorT<S>>& parts, Index axis) {
  if (parts.empty()) throw InputError("concat: no operands");
  const Index rank = parts.front().rank();
  if (axis < 0 || axis >= rank)
    throw ParameterError("concat: axis " + std::to_string(axis) + " invalid for rank " +
                         std::to_string(rank));
  Shape out_shape = parts.front().shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw DimensionError("concat: mixed ranks " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    for (Index d = 0; d < rank; ++d)
      if (d != axis && p.dim(d) != parts.front().dim(d))
        throw DimensionError("concat: shapes disagree off-axis: " + shape_str(parts.front().shape()) +
                             " vs " + shape_str(p.shape()));
    out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
  }
  Index outer, extent, inner;
  detail::axis_split(out_shape, axis, outer, extent, inner);
  VecA<S> out(numel_of(out_shape));
  std::vector<std::shared_ptr<NodeT<S>>> nodes;
  std::vector<Index> extents;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index pe = p.dim(axis);
    for (Index o = 0; o < outer; ++o)
      out.segment(o * extent * inner + offset * inner, pe * inner) =
          p.values().segment(o * pe * inner, pe * inner);
    offset += pe;
    nodes.push_back(p.node());
    extents.push_back(pe);
  }
  return tape.record(out_shape, std::move(out), nodes,
                     [nodes, extents, outer, extent, inner](NodeT<S>& self) {
    Index off = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Index pe = extents[i];
      if (nodes[i]->needs_grad) {
        nodes[i]->ensure_grad();
        for (Index o = 0; o < outer; ++o)
          nodes[i]->grad.segment(o * pe * inner, pe * inner) +=
              self.grad.segment(o * extent * inner + off * inner, pe * inner);
      }
      off += pe;
    }
  });
}

/// Contiguous sub-range [start, start+len) along an axis.
template <class S>
TensorT<S> slice(TapeT<S>& tape, const TensorT<S>& x, Index axis, Index start, Index len) {
  if (axis < 0 || axis >= x.rank())
    throw ParameterError("slice: axis " + std::to_string(axis) + " invalid for rank " +
                         std::to_string(x.rank()));
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    throw IndexError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") outside extent " + std::to_string(x.dim(axis)));
  Index outer, extent, inner;
  detail::axis_split(x.shape(), axis, outer, extent, inner);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  VecA<S> out(numel_of(out_shape));
  for (Index o = 0; o < outer; ++o)
    out.segment(o * len * inner, len * inner) =
        x.values().segment(o * extent * inner + start * inner, len * inner);
  auto xn = x.node();
  return tape.record(out_shape, std::move(out), {xn},
                     [xn, outer, extent, inner, start, len](NodeT<S>& self) {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (Index o = 0; o < outer; ++o)
      xn->grad.segment(o * extent * inner + start * inner, len * inner) +=
          self.grad.segment(o * len * inner, len * inner);
  });
}

/// Row t of a rank-2 tensor as a rank-1 vector.
template <class S>
TensorT<S> row(TapeT<S>& tape, const TensorT<S>& x, Index t) {
  if (x.rank() != 2) throw DimensionError("row: tensor " + shape_str(x.shape()) + " is not rank 2");
  return reshape(tape, slice(tape, x, 0, t, 1), {x.dim(1)});
}

template <class S>
TensorT<S> reshape(TapeT<S>& tape, const TensorT<S>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot view as " + shape_str(shape));
  auto xn = x.node();
  return tape.record(std::move(shape), x.values(), {xn}, [xn](NodeT<S>& self) {
    detail::accum(xn, self.grad);
  });
}

template <class S>
TensorT<S> sum(TapeT<S>& tape, const TensorT<S>& x) {
  auto xn = x.node();
  VecA<S> out(1);
  out(0) = x.values().sum();
  return tape.record({1}, std::move(out), {xn}, [xn](NodeT<S>& self) {
    detail::accum(xn, VecA<S>::Constant(xn->values.size(), self.grad(0)));
  });
}

template <class S>
TensorT<S> mean(TapeT<S>& tape, const TensorT<S>& x) {
  auto xn = x.node();
  const S inv = S(1) / static_cast<S>(x.numel());
  VecA<S> out(1);
  out(0) = x.values().sum() * inv;
  return tape.record({1}, std::move(out), {xn}, [xn, inv](NodeT<S>& self) {
    detail::accum(xn, VecA<S>::Constant(xn->values.size(), self.grad(0) * inv));
  });
}

/// Softmax along one axis with max-subtraction.
template <class S>
TensorT<S> softmax(TapeT<S>& tape, const TensorT<S>& x, Index axis) {
  if (axis < 0 || axis >= x.rank())
    throw ParameterError("softmax: axis " + std::to_string(axis) + " invalid for rank " +
                         std::to_string(x.rank()));
  Index outer, extent, inner;
  detail::axis_split(x.shape(), axis, outer, extent, inner);
  VecA<S> out(x.numel());
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      S mx = x.values()(o * extent * inner + i);
      for (Index e = 1; e < extent; ++e)
        mx = std::max(mx, x.values()(o * extent * inner + e * inner + i));
      S z = S(0);
      for (Index e = 0; e < extent; ++e) {
        const Index at = o * extent * inner + e * inner + i;
        out(at) = std::exp(x.values()(at) - mx);
        z += out(at);
      }
      for (Index e = 0; e < extent; ++e) out(o * extent * inner + e * inner + i) /= z;
    }
  auto xn = x.node();
  return tape.record(x.shape(), std::move(out), {xn},
                     [xn, outer, extent, inner](NodeT<S>& self) {
    if (!xn->needs_grad) return;
    xn->ensure_grad();
    for (Index o = 0; o < outer; ++o)
      for (Index i = 0; i < inner; ++i) {
        S dot = S(0);
        for (Index e = 0; e < extent; ++e) {
          const Index at = o * extent * inner + e * inner + i;
          dot += self.grad(at) * self.values(at);
        }
        for (Index e = 0; e < extent; ++e) {
          const Index at = o * extent * inner + e * inner + i;
          xn->grad(at) += self.values(at) * (self.grad(at) - dot);
        }
      }
  });
}

/// Mean over the batch of -log softmax(logits)[target], fused in log space.
template <class S>
TensorT<S> cross_entropy(TapeT<S>& tape, const TensorT<S>& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " is not rank 2");
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<Index>(targets.size()) != batch)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for batch " +
                         std::to_string(batch));
  for (int t : targets)
    if (t < 0 || t >= classes)
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
  VecA<S> probs(batch * classes);
  S loss = S(0);
  for (Index b = 0; b < batch; ++b) {
    const auto seg = logits.values().segment(b * classes, classes);
    const S mx = seg.maxCoeff();
    const VecA<S> shifted = seg - mx;
    const S lse = std::log(shifted.exp().sum());
    probs.segment(b * classes, classes) = (shifted - lse).exp();
    loss -= shifted(targets[b]) - lse;
  }
  loss /= static_cast<S>(batch);
  auto ln = logits.node();
  VecA<S> out(1);
  out(0) = loss;
  return tape.record({1}, std::move(out), {ln},
                     [ln, probs = std::move(probs), targets, batch, classes](NodeT<S>& self) {
    if (!ln->needs_grad) return;
    ln->ensure_grad();
    const S g = self.grad(0) / static_cast<S>(batch);
    for (Index b = 0; b < batch; ++b) {
      ln->grad.segment(b * classes, classes) += g * probs.segment(b * classes, classes);
      ln->grad(b * classes + targets[b]) -= g;
    }
  });
}

/// Row lookup: out[t] = table[ids[t]]. Gradient scatters into the looked-up
/// rows only.
template <class S>
TensorT<S> embed_rows(TapeT<S>& tape, const TensorT<S>& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw DimensionError("embed_rows: table " + shape_str(table.shape()) + " is not rank 2");
  if (ids.empty()) throw InputError("embed_rows: empty id sequence");
  const Index vocab = table.dim(0), width = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw IndexError("embed_rows: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(vocab) + ")");
  const Index rows = static_cast<Index>(ids.size());
  VecA<S> out(rows * width);
  for (Index t = 0; t < rows; ++t)
    out.segment(t * width, width) = table.values().segment(ids[static_cast<std::size_t>(t)] * width, width);
  auto tn = table.node();
  return tape.record({rows, width}, std::move(out), {tn}, [tn, ids, width](NodeT<S>& self) {
    if (!tn->needs_grad) return;
    tn->ensure_grad();
    for (std::size_t t = 0; t < ids.size(); ++t)
      tn->grad.segment(ids[t] * width, width) += self.grad.segment(static_cast<Index>(t) * width, width);
  });
}

}  // namespace vqr::ad

namespace vqr {
using Tensor = ad::TensorT<double>;
using Tape = ad::TapeT<double>;
}  // namespace vqr
