#pragma once

// Reverse-mode automatic differentiation over dense arrays.
//
// A Tape owns an append-only list of nodes. Every op appends one node whose
// inputs are strictly earlier nodes, so the graph is acyclic by construction
// and a single reverse sweep in tape order yields exact gradients.
//
// Shapes: elementwise binary ops broadcast over rank-2 views (rows and cols
// each either equal or 1). Axis-aware ops (cumsum, cumprod, conv2d, slice)
// work on rank-2 tensors with axis 0 = rows.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ulre/tensor.hpp"

namespace ulre::ad {

enum class OpKind : std::uint8_t {
  Constant,
  Parameter,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  AddScalar,
  MatMul,
  Sin,
  Exp,
  Log,
  Sigmoid,
  Softplus,
  Relu,
  Clamp,
  CumSum,
  CumProd,
  Conv2d,
  Slice,
  Concat,
  Reshape,
  Sum,
  Mean,
  RowSum,
  NormalizeRows,
  SphHarm,
  Kumaraswamy,
};

const char* op_name(OpKind k);

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr && id_ >= 0; }
  const Tensor<T>& value() const;
  const typename Tensor<T>::Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  struct Node;
  /// Accumulates into the input gradients that are non-null (inputs that require grad).
  using BackwardFn = std::function<void(const Tape& tape, const Node& node, const Tensor<T>& grad_out,
                                        std::span<Tensor<T>*> input_grads)>;

  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient. Throws std::invalid_argument on non-finite data.
  Var<T> constant(Tensor<T> value);
  /// Leaf that participates in grad().
  Var<T> parameter(Tensor<T> value);

  /// Appends an op node. Inputs must already be on this tape.
  Var<T> record(OpKind kind, std::vector<int> inputs, Tensor<T> value, BackwardFn backward);

  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::map<OpKind, std::size_t> kind_counts() const;

  /// Exact reverse-mode gradient of a scalar loss. Parameters not reachable
  /// from the loss receive zeros of matching shape.
  std::vector<Tensor<T>> grad(const Var<T>& loss, std::span<const Var<T>> params) const;

 private:
  std::vector<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->node(id_).value;
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->node(id_).requires_grad;
}

// Elementwise arithmetic with rank-2 broadcasting.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> sin(const Var<T>& a);
/// cos(x) = sin(x + pi/2); recorded as a shifted Sin node.
template <typename T> Var<T> cos(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> softplus(const Var<T>& a);
template <typename T> Var<T> relu(const Var<T>& a);
/// Zero gradient outside the open interval (lo, hi); pass-through inside.
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

/// Running sum / product down axis 0. Exclusive variants start from the
/// identity element, so row 0 is 0 (sum) or 1 (product).
template <typename T> Var<T> cumsum(const Var<T>& a, bool exclusive);
template <typename T> Var<T> cumprod(const Var<T>& a, bool exclusive);

/// 2D convolution (true convolution, kernel flipped) with zero padding and
/// "same" output size. Kernel dims must be odd; the centre is the origin.
template <typename T> Var<T> conv2d(const Var<T>& image, const Var<T>& kernel);

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols);
template <typename T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T> Var<T> reshape(const Var<T>& a, typename Tensor<T>::Shape shape);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// Sum across columns: NxC -> Nx1.
template <typename T> Var<T> row_sum(const Var<T>& a);

/// Normalizes each row to unit L2 norm. Rows with zero norm are replaced by
/// `fallback` (length = cols) and pass no gradient.
template <typename T> Var<T> normalize_rows(const Var<T>& a, std::span<const T> fallback);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, T s) { return scale(a, s); }
template <typename T> Var<T> operator*(T s, const Var<T>& a) { return scale(a, s); }
template <typename T> Var<T> operator+(const Var<T>& a, T s) { return add_scalar(a, s); }
template <typename T> Var<T> operator-(const Var<T>& a, T s) { return add_scalar(a, -s); }
template <typename T> Var<T> operator-(T s, const Var<T>& a) { return add_scalar(scale(a, T(-1)), s); }
template <typename T> Var<T> operator-(const Var<T>& a) { return scale(a, T(-1)); }

/// Sums `src` down to the rank-2 shape of `like` (the inverse of broadcasting).
template <typename T> Tensor<T> reduce_to(const Tensor<T>& src, const Tensor<T>& like);

}  // namespace ulre::ad
