#include "ulre/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ulre::ad {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Constant: return "constant";
    case OpKind::Parameter: return "parameter";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::MatMul: return "matmul";
    case OpKind::Sin: return "sin";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Relu: return "relu";
    case OpKind::Clamp: return "clamp";
    case OpKind::CumSum: return "cumsum";
    case OpKind::CumProd: return "cumprod";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Slice: return "slice";
    case OpKind::Concat: return "concat";
    case OpKind::Reshape: return "reshape";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::RowSum: return "row_sum";
    case OpKind::NormalizeRows: return "normalize_rows";
    case OpKind::SphHarm: return "sph_harm";
    case OpKind::Kumaraswamy: return "kumaraswamy";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  if (!value.all_finite()) throw std::invalid_argument("constant contains non-finite values");
  nodes_.push_back(Node{OpKind::Constant, {}, std::move(value), false, {}});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::parameter(Tensor<T> value) {
  if (!value.all_finite()) throw std::invalid_argument("parameter contains non-finite values");
  nodes_.push_back(Node{OpKind::Parameter, {}, std::move(value), true, {}});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(OpKind kind, std::vector<int> inputs, Tensor<T> value, BackwardFn backward) {
  bool rg = false;
  for (int in : inputs) {
    if (in < 0 || static_cast<std::size_t>(in) >= nodes_.size())
      throw std::invalid_argument("op input is not an earlier node on this tape");
    rg = rg || nodes_[static_cast<std::size_t>(in)].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), rg, rg ? std::move(backward) : BackwardFn{}});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
std::map<OpKind, std::size_t> Tape<T>::kind_counts() const {
  std::map<OpKind, std::size_t> counts;
  for (const auto& n : nodes_) ++counts[n.kind];
  return counts;
}

template <typename T>
std::vector<Tensor<T>> Tape<T>::grad(const Var<T>& loss, std::span<const Var<T>> params) const {
  if (&loss.tape() != this) throw std::invalid_argument("loss belongs to a different tape");
  const Node& ln = node(loss.id());
  if (ln.value.size() != 1)
    throw std::invalid_argument("grad() needs a scalar loss, got shape " + shape_string(ln.value.shape()));

  std::vector<Tensor<T>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.id())] = Tensor<T>(ln.value.shape(), T(1));

  std::vector<Tensor<T>*> in_grads;
  for (int i = loss.id(); i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    Tensor<T>& g = grads[static_cast<std::size_t>(i)];
    if (g.empty() || !n.requires_grad || !n.backward) continue;
    in_grads.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const auto in = static_cast<std::size_t>(n.inputs[k]);
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor<T>(nodes_[in].value.shape(), T(0));
      in_grads[k] = &grads[in];
    }
    n.backward(*this, n, g, in_grads);
    // Intermediate gradients are no longer needed once propagated.
    if (n.kind != OpKind::Parameter) g = Tensor<T>();
  }

  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    const auto id = static_cast<std::size_t>(p.id());
    if (grads[id].empty())
      out.emplace_back(nodes_[id].value.shape(), T(0));
    else
      out.push_back(grads[id]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Broadcasting helpers

namespace {

struct Bcast {
  std::size_t rows, cols;
  typename Tensor<double>::Shape shape;
};

template <typename T>
Bcast broadcast_shape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.same_shape(b)) return {a.rows(), a.cols(), a.shape()};
  const std::size_t ra = a.rows(), ca = a.cols(), rb = b.rows(), cb = b.cols();
  if ((ra != rb && ra != 1 && rb != 1) || (ca != cb && ca != 1 && cb != 1)) {
    throw std::invalid_argument("shape mismatch: " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  const std::size_t r = std::max(ra, rb), c = std::max(ca, cb);
  if (a.rows() == r && a.cols() == c) return {r, c, a.shape()};
  if (b.rows() == r && b.cols() == c) return {r, c, b.shape()};
  return {r, c, {r, c}};
}

template <typename T>
inline std::size_t bidx(const Tensor<T>& t, std::size_t i, std::size_t j) {
  return (t.rows() == 1 ? 0 : i) * t.cols() + (t.cols() == 1 ? 0 : j);
}

template <typename T>
void accumulate(Tensor<T>* dst, const Tensor<T>& src) {
  if (!dst) return;
  auto& d = dst->storage();
  const auto& s = src.storage();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
Var<T> unary(const Var<T>& a, OpKind kind, Tensor<T> out,
             std::function<T(T x, T y)> dydx) {
  return a.tape().record(kind, {a.id()}, std::move(out),
                         [dydx](const Tape<T>& tape, const typename Tape<T>::Node& n, const Tensor<T>& g,
                                std::span<Tensor<T>*> ig) {
                           const auto& x = tape.node(n.inputs[0]).value.storage();
                           const auto& y = n.value.storage();
                           auto& gx = ig[0]->storage();
                           for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * dydx(x[i], y[i]);
                         });
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + " needs a rank-2 tensor, got " +
                                                 shape_string(t.shape()));
}

}  // namespace

template <typename T>
Tensor<T> reduce_to(const Tensor<T>& src, const Tensor<T>& like) {
  if (src.same_shape(like)) return src;
  Tensor<T> out(like.shape(), T(0));
  const std::size_t r = src.rows(), c = src.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[bidx(like, i, j)] += src[i * c + j];
  return out;
}

// ---------------------------------------------------------------------------
// Binary elementwise ops

namespace {

enum class Bin { Add, Sub, Mul, Div };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Bin op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const Bcast bc = broadcast_shape(av, bv);
  Tensor<T> out(bc.shape);
  const bool same = av.same_shape(bv);
  for (std::size_t i = 0; i < bc.rows; ++i) {
    for (std::size_t j = 0; j < bc.cols; ++j) {
      const std::size_t o = i * bc.cols + j;
      const T x = same ? av[o] : av[bidx(av, i, j)];
      const T y = same ? bv[o] : bv[bidx(bv, i, j)];
      switch (op) {
        case Bin::Add: out[o] = x + y; break;
        case Bin::Sub: out[o] = x - y; break;
        case Bin::Mul: out[o] = x * y; break;
        case Bin::Div: out[o] = x / y; break;
      }
    }
  }
  const OpKind kind = op == Bin::Add ? OpKind::Add
                      : op == Bin::Sub ? OpKind::Sub
                      : op == Bin::Mul ? OpKind::Mul
                                       : OpKind::Div;
  return a.tape().record(
      kind, {a.id(), b.id()}, std::move(out),
      [op, bc](const Tape<T>& tape, const typename Tape<T>::Node& n, const Tensor<T>& g,
               std::span<Tensor<T>*> ig) {
        const Tensor<T>& x = tape.node(n.inputs[0]).value;
        const Tensor<T>& y = tape.node(n.inputs[1]).value;
        Tensor<T> gx(g.shape()), gy(g.shape());
        for (std::size_t i = 0; i < bc.rows; ++i) {
          for (std::size_t j = 0; j < bc.cols; ++j) {
            const std::size_t o = i * bc.cols + j;
            const T xv = x[bidx(x, i, j)];
            const T yv = y[bidx(y, i, j)];
            switch (op) {
              case Bin::Add: gx[o] = g[o]; gy[o] = g[o]; break;
              case Bin::Sub: gx[o] = g[o]; gy[o] = -g[o]; break;
              case Bin::Mul: gx[o] = g[o] * yv; gy[o] = g[o] * xv; break;
              case Bin::Div: gx[o] = g[o] / yv; gy[o] = -g[o] * xv / (yv * yv); break;
            }
          }
        }
        if (ig[0]) accumulate(ig[0], reduce_to(gx, x));
        if (ig[1]) accumulate(ig[1], reduce_to(gy, y));
      });
}

}  // namespace

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b) { return binary(a, b, Bin::Add); }
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b) { return binary(a, b, Bin::Sub); }
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b) { return binary(a, b, Bin::Mul); }
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b) { return binary(a, b, Bin::Div); }

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return a.tape().record(OpKind::Scale, {a.id()}, map(a.value(), [s](T x) { return x * s; }),
                         [s](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                             std::span<Tensor<T>*> ig) {
                           auto& gx = ig[0]->storage();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * s;
                         });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return a.tape().record(OpKind::AddScalar, {a.id()}, map(a.value(), [s](T x) { return x + s; }),
                         [](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                            std::span<Tensor<T>*> ig) { accumulate(ig[0], g); });
}

// ---------------------------------------------------------------------------
// Matrix product

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const auto m = static_cast<Eigen::Index>(av.rows());
  const auto k = static_cast<Eigen::Index>(av.cols());
  const auto n = static_cast<Eigen::Index>(bv.cols());
  if (static_cast<Eigen::Index>(bv.rows()) != k)
    throw std::invalid_argument("matmul shape mismatch: " + shape_string(av.shape()) + " x " +
                                shape_string(bv.shape()));
  Tensor<T> out = Tensor<T>::matrix(av.rows(), bv.cols());
  Eigen::Map<RowMat>(out.data(), m, n).noalias() =
      Eigen::Map<const RowMat>(av.data(), m, k) * Eigen::Map<const RowMat>(bv.data(), k, n);
  return a.tape().record(
      OpKind::MatMul, {a.id(), b.id()}, std::move(out),
      [m, k, n](const Tape<T>& tape, const typename Tape<T>::Node& node, const Tensor<T>& g,
                std::span<Tensor<T>*> ig) {
        Eigen::Map<const RowMat> G(g.data(), m, n);
        if (ig[0]) {
          Eigen::Map<RowMat>(ig[0]->data(), m, k).noalias() +=
              G * Eigen::Map<const RowMat>(tape.node(node.inputs[1]).value.data(), k, n).transpose();
        }
        if (ig[1]) {
          Eigen::Map<RowMat>(ig[1]->data(), k, n).noalias() +=
              Eigen::Map<const RowMat>(tape.node(node.inputs[0]).value.data(), m, k).transpose() * G;
        }
      });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename T>
Var<T> sin(const Var<T>& a) {
  return unary<T>(a, OpKind::Sin, map(a.value(), [](T x) { return std::sin(x); }),
                  [](T x, T) { return std::cos(x); });
}

template <typename T>
Var<T> cos(const Var<T>& a) {
  return sin(add_scalar(a, static_cast<T>(std::numbers::pi / 2)));
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary<T>(a, OpKind::Exp, map(a.value(), [](T x) { return std::exp(x); }),
                  [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return unary<T>(a, OpKind::Log, map(a.value(), [](T x) { return std::log(x); }),
                  [](T x, T) { return T(1) / x; });
}

namespace {
template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}
template <typename T>
T stable_softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}
}  // namespace

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary<T>(a, OpKind::Sigmoid, map(a.value(), [](T x) { return stable_sigmoid(x); }),
                  [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  return unary<T>(a, OpKind::Softplus, map(a.value(), [](T x) { return stable_softplus(x); }),
                  [](T x, T) { return stable_sigmoid(x); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary<T>(a, OpKind::Relu, map(a.value(), [](T x) { return x > T(0) ? x : T(0); }),
                  [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp needs lo <= hi");
  return unary<T>(a, OpKind::Clamp, map(a.value(), [lo, hi](T x) { return std::clamp(x, lo, hi); }),
                  [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Cumulative ops along axis 0

template <typename T>
Var<T> cumsum(const Var<T>& a, bool exclusive) {
  const Tensor<T>& x = a.value();
  require_rank2(x, "cumsum");
  const std::size_t R = x.rows(), C = x.cols();
  Tensor<T> out(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    T acc = T(0);
    for (std::size_t r = 0; r < R; ++r) {
      if (exclusive) {
        out(r, c) = acc;
        acc += x(r, c);
      } else {
        acc += x(r, c);
        out(r, c) = acc;
      }
    }
  }
  return a.tape().record(OpKind::CumSum, {a.id()}, std::move(out),
                         [R, C, exclusive](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                                           std::span<Tensor<T>*> ig) {
                           Tensor<T>& gx = *ig[0];
                           for (std::size_t c = 0; c < C; ++c) {
                             // Reverse running sum of the output gradient.
                             T acc = T(0);
                             for (std::size_t r = R; r-- > 0;) {
                               if (exclusive) {
                                 gx(r, c) += acc;
                                 acc += g(r, c);
                               } else {
                                 acc += g(r, c);
                                 gx(r, c) += acc;
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> cumprod(const Var<T>& a, bool exclusive) {
  const Tensor<T>& x = a.value();
  require_rank2(x, "cumprod");
  const std::size_t R = x.rows(), C = x.cols();
  Tensor<T> out(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    T acc = T(1);
    for (std::size_t r = 0; r < R; ++r) {
      if (exclusive) {
        out(r, c) = acc;
        acc *= x(r, c);
      } else {
        acc *= x(r, c);
        out(r, c) = acc;
      }
    }
  }
  // Division-free backward: for factor n, d out[t] / d x[n] is the product of
  // all other factors in out[t]. With P(<n) the prefix product and
  // Q[n] = g[first t that includes n] + x[n+1] * Q[n+1], the gradient is
  // P(<n) * Q[n]. Exact in the presence of zero factors.
  return a.tape().record(
      OpKind::CumProd, {a.id()}, std::move(out),
      [R, C, exclusive](const Tape<T>& tape, const typename Tape<T>::Node& n, const Tensor<T>& g,
                        std::span<Tensor<T>*> ig) {
        const Tensor<T>& xv = tape.node(n.inputs[0]).value;
        Tensor<T>& gx = *ig[0];
        std::vector<T> prefix(R);
        for (std::size_t c = 0; c < C; ++c) {
          T p = T(1);
          for (std::size_t r = 0; r < R; ++r) {
            prefix[r] = p;
            p *= xv(r, c);
          }
          T q = T(0);
          for (std::size_t r = R; r-- > 0;) {
            if (exclusive) {
              // out[t] includes x[n] for t > n.
              q = (r + 1 < R) ? g(r + 1, c) + ((r + 2 < R) ? xv(r + 1, c) * q : T(0)) : T(0);
            } else {
              q = g(r, c) + ((r + 1 < R) ? xv(r + 1, c) * q : T(0));
            }
            gx(r, c) += prefix[r] * q;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

// out[i][j] = sum_{p,q} in[i-p][j-q] * k[p+cr][q+cc], zero outside `in`.
template <typename T>
void conv_same(const Tensor<T>& in, const Tensor<T>& k, Tensor<T>& out) {
  const auto H = static_cast<long>(in.rows()), W = static_cast<long>(in.cols());
  const auto KR = static_cast<long>(k.rows()), KC = static_cast<long>(k.cols());
  const long cr = KR / 2, cc = KC / 2;
  for (long i = 0; i < H; ++i) {
    for (long j = 0; j < W; ++j) {
      T acc = T(0);
      for (long p = -cr; p <= cr; ++p) {
        const long si = i - p;
        if (si < 0 || si >= H) continue;
        for (long q = -cc; q <= cc; ++q) {
          const long sj = j - q;
          if (sj < 0 || sj >= W) continue;
          acc += in[static_cast<std::size_t>(si * W + sj)] * k[static_cast<std::size_t>((p + cr) * KC + q + cc)];
        }
      }
      out[static_cast<std::size_t>(i * W + j)] = acc;
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& image, const Var<T>& kernel) {
  const Tensor<T>& in = image.value();
  const Tensor<T>& k = kernel.value();
  require_rank2(in, "conv2d");
  require_rank2(k, "conv2d");
  if (k.rows() % 2 == 0 || k.cols() % 2 == 0)
    throw std::invalid_argument("conv2d kernel dims must be odd, got " + shape_string(k.shape()));
  Tensor<T> out(in.shape());
  conv_same(in, k, out);
  return image.tape().record(
      OpKind::Conv2d, {image.id(), kernel.id()}, std::move(out),
      [](const Tape<T>& tape, const typename Tape<T>::Node& n, const Tensor<T>& g, std::span<Tensor<T>*> ig) {
        const Tensor<T>& in = tape.node(n.inputs[0]).value;
        const Tensor<T>& k = tape.node(n.inputs[1]).value;
        const auto H = static_cast<long>(in.rows()), W = static_cast<long>(in.cols());
        const auto KR = static_cast<long>(k.rows()), KC = static_cast<long>(k.cols());
        const long cr = KR / 2, cc = KC / 2;
        // d out[i][j] / d in[si][sj] = k[i-si][j-sj]: correlation of g with k.
        if (ig[0]) {
          Tensor<T>& gi = *ig[0];
          for (long si = 0; si < H; ++si)
            for (long sj = 0; sj < W; ++sj) {
              T acc = T(0);
              for (long p = -cr; p <= cr; ++p) {
                const long i = si + p;
                if (i < 0 || i >= H) continue;
                for (long q = -cc; q <= cc; ++q) {
                  const long j = sj + q;
                  if (j < 0 || j >= W) continue;
                  acc += g[static_cast<std::size_t>(i * W + j)] * k[static_cast<std::size_t>((p + cr) * KC + q + cc)];
                }
              }
              gi[static_cast<std::size_t>(si * W + sj)] += acc;
            }
        }
        if (ig[1]) {
          Tensor<T>& gk = *ig[1];
          for (long p = -cr; p <= cr; ++p)
            for (long q = -cc; q <= cc; ++q) {
              T acc = T(0);
              for (long i = 0; i < H; ++i) {
                const long si = i - p;
                if (si < 0 || si >= H) continue;
                for (long j = 0; j < W; ++j) {
                  const long sj = j - q;
                  if (sj < 0 || sj >= W) continue;
                  acc += g[static_cast<std::size_t>(i * W + j)] * in[static_cast<std::size_t>(si * W + sj)];
                }
              }
              gk[static_cast<std::size_t>((p + cr) * KC + q + cc)] += acc;
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural ops

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) {
  const Tensor<T>& x = a.value();
  require_rank2(x, "slice");
  if (row0 + nrows > x.rows() || col0 + ncols > x.cols())
    throw std::invalid_argument("slice out of range for " + shape_string(x.shape()));
  Tensor<T> out = Tensor<T>::matrix(nrows, ncols);
  for (std::size_t r = 0; r < nrows; ++r)
    for (std::size_t c = 0; c < ncols; ++c) out(r, c) = x(row0 + r, col0 + c);
  return a.tape().record(OpKind::Slice, {a.id()}, std::move(out),
                         [row0, nrows, col0, ncols](const Tape<T>&, const typename Tape<T>::Node&,
                                                    const Tensor<T>& g, std::span<Tensor<T>*> ig) {
                           Tensor<T>& gx = *ig[0];
                           for (std::size_t r = 0; r < nrows; ++r)
                             for (std::size_t c = 0; c < ncols; ++c) gx(row0 + r, col0 + c) += g(r, c);
                         });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const std::size_t R = parts[0].value().rows();
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  std::size_t C = 0;
  for (const auto& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != R) throw std::invalid_argument("concat_cols row mismatch");
    ids.push_back(p.id());
    offsets.push_back(C);
    C += p.value().cols();
  }
  Tensor<T> out = Tensor<T>::matrix(R, C);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& x = parts[k].value();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, offsets[k] + c) = x(r, c);
  }
  return parts[0].tape().record(
      OpKind::Concat, std::move(ids), std::move(out),
      [offsets, R](const Tape<T>& tape, const typename Tape<T>::Node& n, const Tensor<T>& g,
                   std::span<Tensor<T>*> ig) {
        for (std::size_t k = 0; k < ig.size(); ++k) {
          if (!ig[k]) continue;
          const std::size_t w = tape.node(n.inputs[k]).value.cols();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < w; ++c) (*ig[k])(r, c) += g(r, offsets[k] + c);
        }
      });
}

template <typename T>
Var<T> reshape(const Var<T>& a, typename Tensor<T>::Shape shape) {
  return a.tape().record(OpKind::Reshape, {a.id()}, a.value().reshaped(std::move(shape)),
                         [](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                            std::span<Tensor<T>*> ig) {
                           auto& gx = ig[0]->storage();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                         });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = T(0);
  for (T v : a.value().values()) s += v;
  return a.tape().record(OpKind::Sum, {a.id()}, Tensor<T>::scalar(s),
                         [](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                            std::span<Tensor<T>*> ig) {
                           const T gv = g[0];
                           for (T& v : ig[0]->storage()) v += gv;
                         });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const auto n = static_cast<T>(a.value().size());
  T s = T(0);
  for (T v : a.value().values()) s += v;
  return a.tape().record(OpKind::Mean, {a.id()}, Tensor<T>::scalar(s / n),
                         [n](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                             std::span<Tensor<T>*> ig) {
                           const T gv = g[0] / n;
                           for (T& v : ig[0]->storage()) v += gv;
                         });
}

template <typename T>
Var<T> row_sum(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  require_rank2(x, "row_sum");
  const std::size_t R = x.rows(), C = x.cols();
  Tensor<T> out = Tensor<T>::matrix(R, 1);
  for (std::size_t r = 0; r < R; ++r) {
    T s = T(0);
    for (std::size_t c = 0; c < C; ++c) s += x(r, c);
    out[r] = s;
  }
  return a.tape().record(OpKind::RowSum, {a.id()}, std::move(out),
                         [R, C](const Tape<T>&, const typename Tape<T>::Node&, const Tensor<T>& g,
                                std::span<Tensor<T>*> ig) {
                           for (std::size_t r = 0; r < R; ++r)
                             for (std::size_t c = 0; c < C; ++c) (*ig[0])(r, c) += g[r];
                         });
}

template <typename T>
Var<T> normalize_rows(const Var<T>& a, std::span<const T> fallback) {
  const Tensor<T>& x = a.value();
  require_rank2(x, "normalize_rows");
  const std::size_t R = x.rows(), C = x.cols();
  if (fallback.size() != C) throw std::invalid_argument("normalize_rows fallback width mismatch");
  Tensor<T> out(x.shape());
  std::vector<T> norms(R);
  for (std::size_t r = 0; r < R; ++r) {
    T s = T(0);
    for (std::size_t c = 0; c < C; ++c) s += x(r, c) * x(r, c);
    norms[r] = std::sqrt(s);
    for (std::size_t c = 0; c < C; ++c) out(r, c) = norms[r] > T(0) ? x(r, c) / norms[r] : fallback[c];
  }
  return a.tape().record(OpKind::NormalizeRows, {a.id()}, std::move(out),
                         [R, C, norms = std::move(norms)](const Tape<T>&, const typename Tape<T>::Node& n,
                                                          const Tensor<T>& g, std::span<Tensor<T>*> ig) {
                           // d(x/|x|) = (I - u u^T) / |x|
                           const Tensor<T>& u = n.value;
                           for (std::size_t r = 0; r < R; ++r) {
                             if (!(norms[r] > T(0))) continue;
                             T dot = T(0);
                             for (std::size_t c = 0; c < C; ++c) dot += u(r, c) * g(r, c);
                             for (std::size_t c = 0; c < C; ++c)
                               (*ig[0])(r, c) += (g(r, c) - u(r, c) * dot) / norms[r];
                           }
                         });
}

// ---------------------------------------------------------------------------
// Explicit instantiation

#define ULRE_INSTANTIATE_AD(T)                                                                 \
  template class Tape<T>;                                                                      \
  template Tensor<T> reduce_to<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                  \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                             \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> sin<T>(const Var<T>&);                                                       \
  template Var<T> cos<T>(const Var<T>&);                                                       \
  template Var<T> exp<T>(const Var<T>&);                                                       \
  template Var<T> log<T>(const Var<T>&);                                                       \
  template Var<T> sigmoid<T>(const Var<T>&);                                                   \
  template Var<T> softplus<T>(const Var<T>&);                                                  \
  template Var<T> relu<T>(const Var<T>&);                                                      \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                               \
  template Var<T> cumsum<T>(const Var<T>&, bool);                                              \
  template Var<T> cumprod<T>(const Var<T>&, bool);                                             \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> slice<T>(const Var<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                                     \
  template Var<T> reshape<T>(const Var<T>&, typename Tensor<T>::Shape);                        \
  template Var<T> sum<T>(const Var<T>&);                                                       \
  template Var<T> mean<T>(const Var<T>&);                                                      \
  template Var<T> row_sum<T>(const Var<T>&);                                                   \
  template Var<T> normalize_rows<T>(const Var<T>&, std::span<const T>);

ULRE_INSTANTIATE_AD(float)
ULRE_INSTANTIATE_AD(double)

}  // namespace ulre::ad
