#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dwvit/error.hpp"
#include "dwvit/tensor.hpp"

// Value-level kernels. Every reduction runs in a fixed order (ascending over
// the contracted axis), so results are bit-reproducible across runs. All
// outputs pass through the Tensor constructor, which enforces the finiteness
// contract.
namespace dwvit::ops {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

inline int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  check(a >= 0 && a < rank, "axis " + std::to_string(axis) + " out of range for rank " +
                                std::to_string(rank));
  return a;
}

// ---------------------------------------------------------------------------
// shape inference (shared with the FLOP meter)
// ---------------------------------------------------------------------------

inline Shape matmul_shape(const Shape& a, const Shape& b) {
  check(a.size() == 2 && b.size() == 2, "matmul: expects rank-2 operands");
  check(a[1] == b[0], "matmul: inner dims disagree " + shape_str(a) + " x " + shape_str(b));
  return {a[0], b[1]};
}

inline Shape bmm_shape(const Shape& a, const Shape& b, bool ta, bool tb) {
  check(a.size() == 3 && b.size() == 3, "bmm: expects rank-3 operands");
  check(a[0] == b[0], "bmm: batch dims disagree");
  int64_t m = ta ? a[2] : a[1];
  int64_t k = ta ? a[1] : a[2];
  int64_t kb = tb ? b[2] : b[1];
  int64_t n = tb ? b[1] : b[2];
  check(k == kb, "bmm: inner dims disagree " + shape_str(a) + " x " + shape_str(b));
  return {a[0], m, n};
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  int r = std::max(ra, rb);
  Shape out(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    int64_t da = i >= r - ra ? a[static_cast<size_t>(i - (r - ra))] : 1;
    int64_t db = i >= r - rb ? b[static_cast<size_t>(i - (r - rb))] : 1;
    check(da == db || da == 1 || db == 1,
          "broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    out[static_cast<size_t>(i)] = std::max(da, db);
  }
  return out;
}

inline Shape concat_shape(const std::vector<Shape>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  Shape out = parts[0];
  int ax = normalize_axis(axis, static_cast<int>(out.size()));
  for (size_t p = 1; p < parts.size(); ++p) {
    check(parts[p].size() == out.size(), "concat: rank mismatch");
    for (size_t i = 0; i < out.size(); ++i)
      if (static_cast<int>(i) != ax)
        check(parts[p][i] == out[i], "concat: ragged inputs along non-concat axis");
    out[static_cast<size_t>(ax)] += parts[p][static_cast<size_t>(ax)];
  }
  return out;
}

// Spatial ops treat the two axes preceding the innermost (channel) axis as
// (H, W): rank-3 [H,W,C] or rank-4 [g,H,W,C].
struct SpatialDims {
  int64_t outer, h, w, inner;
};

inline SpatialDims spatial_dims(const Shape& s) {
  check(s.size() == 3 || s.size() == 4, "spatial op: expects rank 3 or 4, got " + shape_str(s));
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  return {s[0], s[1], s[2], s[3]};
}

inline Shape with_spatial(const Shape& s, int64_t h, int64_t w) {
  Shape out = s;
  out[s.size() - 3] = h;
  out[s.size() - 2] = w;
  return out;
}

// ---------------------------------------------------------------------------
// matmul / bmm
// ---------------------------------------------------------------------------

// Batched matrix product with optional operand transposes. Per output element
// the contraction always accumulates in ascending index order.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
  Shape os = bmm_shape(a.shape(), b.shape(), ta, tb);
  const int64_t B = os[0], m = os[1], n = os[2];
  const int64_t k = ta ? a.dim(1) : a.dim(2);
  std::vector<T> out(static_cast<size_t>(B * m * n), T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  const int64_t sa = a.dim(1) * a.dim(2);
  const int64_t sb = b.dim(1) * b.dim(2);
  for (int64_t bi = 0; bi < B; ++bi) {
    const T* A = pa + bi * sa;
    const T* Bp = pb + bi * sb;
    T* C = out.data() + bi * m * n;
    if (!ta && !tb) {
      for (int64_t i = 0; i < m; ++i) {
        T* Cr = C + i * n;
        for (int64_t l = 0; l < k; ++l) {
          const T av = A[i * k + l];
          const T* Br = Bp + l * n;
          for (int64_t j = 0; j < n; ++j) Cr[j] += av * Br[j];
        }
      }
    } else if (!ta && tb) {
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          T s = T(0);
          const T* Ar = A + i * k;
          const T* Br = Bp + j * k;
          for (int64_t l = 0; l < k; ++l) s += Ar[l] * Br[l];
          C[i * n + j] = s;
        }
    } else if (ta && !tb) {
      for (int64_t l = 0; l < k; ++l) {
        const T* Ar = A + l * m;
        const T* Br = Bp + l * n;
        for (int64_t i = 0; i < m; ++i) {
          const T av = Ar[i];
          T* Cr = C + i * n;
          for (int64_t j = 0; j < n; ++j) Cr[j] += av * Br[j];
        }
      }
    } else {
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          T s = T(0);
          for (int64_t l = 0; l < k; ++l) s += A[l * m + i] * Bp[j * k + l];
          C[i * n + j] = s;
        }
    }
  }
  return Tensor<T>(std::move(os), std::move(out), "bmm");
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  Shape os = matmul_shape(a.shape(), b.shape());
  Tensor<T> r = bmm(a.reshaped({1, a.dim(0), a.dim(1)}), b.reshaped({1, b.dim(0), b.dim(1)}));
  return r.reshaped(os);
}

// dC * B^T and A^T * dC; used by backward rules.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> r = bmm(a.reshaped({1, a.dim(0), a.dim(1)}), b.reshaped({1, b.dim(0), b.dim(1)}),
                    false, true);
  return r.reshaped({r.dim(1), r.dim(2)});
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> r = bmm(a.reshaped({1, a.dim(0), a.dim(1)}), b.reshaped({1, b.dim(0), b.dim(1)}),
                    true, false);
  return r.reshaped({r.dim(1), r.dim(2)});
}

// ---------------------------------------------------------------------------
// elementwise with numpy-style broadcasting
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  int r = static_cast<int>(out.size());
  int ri = static_cast<int>(in.size());
  std::vector<int64_t> st(static_cast<size_t>(r), 0);
  int64_t acc = 1;
  for (int i = ri - 1; i >= 0; --i) {
    int oi = i + (r - ri);
    st[static_cast<size_t>(oi)] = (in[static_cast<size_t>(i)] == 1 &&
                                   out[static_cast<size_t>(oi)] != 1)
                                      ? 0
                                      : acc;
    acc *= in[static_cast<size_t>(i)];
  }
  return st;
}

}  // namespace detail

template <typename T, typename F>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, F&& f, const char* op) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  const auto stA = detail::bcast_strides(a.shape(), os);
  const auto stB = detail::bcast_strides(b.shape(), os);
  const int r = static_cast<int>(os.size());
  const int64_t n = numel(os);
  std::vector<T> out(static_cast<size_t>(n));
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  int64_t offa = 0, offb = 0;
  for (int64_t i = 0;; ++i) {
    out[static_cast<size_t>(i)] = f(pa[offa], pb[offb]);
    if (i + 1 == n) break;
    for (int ax = r - 1; ax >= 0; --ax) {
      auto u = static_cast<size_t>(ax);
      ++idx[u];
      offa += stA[u];
      offb += stB[u];
      if (idx[u] < os[u]) break;
      idx[u] = 0;
      offa -= stA[u] * os[u];
      offb -= stB[u] * os[u];
    }
  }
  return Tensor<T>(std::move(os), std::move(out), op);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double c) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = static_cast<T>(static_cast<double>(v) * c);
  return Tensor<T>(x.shape(), std::move(out), "scale");
}

// Sum a tensor down to a broadcast-compatible target shape; accumulation runs
// in row-major source order (into a double accumulator).
template <typename T>
Tensor<T> reduce_to_shape(const Tensor<T>& t, const Shape& target) {
  if (t.shape() == target) return t;
  Shape os = broadcast_shape(t.shape(), target);
  check(os == t.shape(), "reduce_to_shape: target not broadcastable to source");
  const auto stT = detail::bcast_strides(target, t.shape());
  const int r = t.rank();
  const int64_t n = t.size();
  std::vector<double> acc(static_cast<size_t>(numel(target)), 0.0);
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  const T* p = t.data().data();
  int64_t off = 0;
  for (int64_t i = 0;; ++i) {
    acc[static_cast<size_t>(off)] += static_cast<double>(p[i]);
    if (i + 1 == n) break;
    for (int ax = r - 1; ax >= 0; --ax) {
      auto u = static_cast<size_t>(ax);
      ++idx[u];
      off += stT[u];
      if (idx[u] < t.shape()[u]) break;
      idx[u] = 0;
      off -= stT[u] * t.shape()[u];
    }
  }
  std::vector<T> out(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  return Tensor<T>(target, std::move(out), "reduce_to_shape");
}

// ---------------------------------------------------------------------------
// softmax / layer_norm / gelu
// ---------------------------------------------------------------------------

// Numerically stable softmax along an axis. Exponentials and the row sum are
// evaluated in double, then each element is rounded once to T, which keeps
// row sums within ~1 ulp of 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  int64_t A = s[static_cast<size_t>(ax)];
  int64_t inner = 1, outer = 1;
  for (int i = ax + 1; i < x.rank(); ++i) inner *= s[static_cast<size_t>(i)];
  for (int i = 0; i < ax; ++i) outer *= s[static_cast<size_t>(i)];
  const T* p = x.data().data();
  std::vector<T> out(static_cast<size_t>(x.size()));
  std::vector<double> e(static_cast<size_t>(A));
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * A * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t a = 0; a < A; ++a)
        mx = std::max(mx, static_cast<double>(p[base + a * inner]));
      double sum = 0.0;
      for (int64_t a = 0; a < A; ++a) {
        e[static_cast<size_t>(a)] = std::exp(static_cast<double>(p[base + a * inner]) - mx);
        sum += e[static_cast<size_t>(a)];
      }
      for (int64_t a = 0; a < A; ++a)
        out[static_cast<size_t>(base + a * inner)] = static_cast<T>(e[static_cast<size_t>(a)] / sum);
    }
  return Tensor<T>(s, std::move(out), "softmax");
}

// dx = y * (dy - sum(y*dy)) along the softmax axis.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, int axis) {
  const int ax = normalize_axis(axis, y.rank());
  const Shape& s = y.shape();
  int64_t A = s[static_cast<size_t>(ax)];
  int64_t inner = 1, outer = 1;
  for (int i = ax + 1; i < y.rank(); ++i) inner *= s[static_cast<size_t>(i)];
  for (int i = 0; i < ax; ++i) outer *= s[static_cast<size_t>(i)];
  const T* py = y.data().data();
  const T* pd = dy.data().data();
  std::vector<T> out(static_cast<size_t>(y.size()));
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * A * inner + i;
      double dot = 0.0;
      for (int64_t a = 0; a < A; ++a) {
        const int64_t ix = base + a * inner;
        dot += static_cast<double>(py[ix]) * static_cast<double>(pd[ix]);
      }
      for (int64_t a = 0; a < A; ++a) {
        const int64_t ix = base + a * inner;
        out[static_cast<size_t>(ix)] =
            static_cast<T>(static_cast<double>(py[ix]) * (static_cast<double>(pd[ix]) - dot));
      }
    }
  return Tensor<T>(s, std::move(out), "softmax_backward");
}

// Per-position normalization over the trailing (channel) axis, then affine.
// Mean and biased variance accumulate in double, channel-ascending.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  const int64_t C = x.shape().back();
  check(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
        "layer_norm: gamma/beta must be [C] with C = trailing dim");
  const int64_t P = x.size() / C;
  const T* p = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  std::vector<T> out(static_cast<size_t>(x.size()));
  for (int64_t pos = 0; pos < P; ++pos) {
    const T* row = p + pos * C;
    double mean = 0.0;
    for (int64_t c = 0; c < C; ++c) mean += static_cast<double>(row[c]);
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double d = static_cast<double>(row[c]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double inv = 1.0 / std::sqrt(var + eps);
    T* orow = out.data() + pos * C;
    for (int64_t c = 0; c < C; ++c) {
      const double xhat = (static_cast<double>(row[c]) - mean) * inv;
      orow[c] = static_cast<T>(xhat * static_cast<double>(pg[c]) + static_cast<double>(pb[c]));
    }
  }
  return Tensor<T>(x.shape(), std::move(out), "layer_norm");
}

template <typename T>
struct LayerNormGrads {
  Tensor<T> dx, dgamma, dbeta;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                                      const Tensor<T>& dy, double eps) {
  const int64_t C = x.shape().back();
  const int64_t P = x.size() / C;
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pd = dy.data().data();
  std::vector<T> dx(static_cast<size_t>(x.size()));
  std::vector<double> dgamma(static_cast<size_t>(C), 0.0);
  std::vector<double> dbeta(static_cast<size_t>(C), 0.0);
  for (int64_t pos = 0; pos < P; ++pos) {
    const T* row = px + pos * C;
    const T* drow = pd + pos * C;
    double mean = 0.0;
    for (int64_t c = 0; c < C; ++c) mean += static_cast<double>(row[c]);
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double d = static_cast<double>(row[c]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double inv = 1.0 / std::sqrt(var + eps);
    double s1 = 0.0, s2 = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double xhat = (static_cast<double>(row[c]) - mean) * inv;
      const double gd = static_cast<double>(pg[c]) * static_cast<double>(drow[c]);
      s1 += gd;
      s2 += gd * xhat;
      dgamma[static_cast<size_t>(c)] += static_cast<double>(drow[c]) * xhat;
      dbeta[static_cast<size_t>(c)] += static_cast<double>(drow[c]);
    }
    T* dxrow = dx.data() + pos * C;
    for (int64_t c = 0; c < C; ++c) {
      const double xhat = (static_cast<double>(row[c]) - mean) * inv;
      const double gd = static_cast<double>(pg[c]) * static_cast<double>(drow[c]);
      dxrow[c] = static_cast<T>(inv * (gd - (s1 + xhat * s2) / static_cast<double>(C)));
    }
  }
  std::vector<T> dg(static_cast<size_t>(C)), db(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    dg[static_cast<size_t>(c)] = static_cast<T>(dgamma[static_cast<size_t>(c)]);
    db[static_cast<size_t>(c)] = static_cast<T>(dbeta[static_cast<size_t>(c)]);
  }
  return {Tensor<T>(x.shape(), std::move(dx), "layer_norm_backward"),
          Tensor<T>({C}, std::move(dg), "layer_norm_backward"),
          Tensor<T>({C}, std::move(db), "layer_norm_backward")};
}

// Exact erf-based GELU: x * Phi(x).
inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad_scalar(double x) {
  const double phi = std::exp(-0.5 * x * x) * 0.3989422804014327;  // 1/sqrt(2*pi)
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(static_cast<size_t>(x.size()));
  const T* p = x.data().data();
  for (int64_t i = 0; i < x.size(); ++i)
    out[static_cast<size_t>(i)] = static_cast<T>(gelu_scalar(static_cast<double>(p[i])));
  return Tensor<T>(x.shape(), std::move(out), "gelu");
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  std::vector<T> out(static_cast<size_t>(x.size()));
  const T* p = x.data().data();
  const T* pd = dy.data().data();
  for (int64_t i = 0; i < x.size(); ++i)
    out[static_cast<size_t>(i)] = static_cast<T>(static_cast<double>(pd[i]) *
                                                 gelu_grad_scalar(static_cast<double>(p[i])));
  return Tensor<T>(x.shape(), std::move(out), "gelu_backward");
}

// Affine map applied at every leading position: x[...,Cin] -> [...,Cout].
// Composed from reshape + matmul + broadcast add so all execution paths share
// one arithmetic sequence.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(w.rank() == 2, "linear: weight must be [Cin,Cout]");
  const int64_t cin = x.shape().back();
  check(cin == w.dim(0), "linear: trailing dim " + std::to_string(cin) + " != Cin " +
                             std::to_string(w.dim(0)));
  const int64_t L = x.size() / cin;
  Tensor<T> y = matmul(x.reshaped({L, cin}), w);
  if (b.defined()) {
    check(b.rank() == 1 && b.dim(0) == w.dim(1), "linear: bias must be [Cout]");
    y = add(y, b);
  }
  Shape os = x.shape();
  os.back() = w.dim(1);
  return y.reshaped(os);
}

// ---------------------------------------------------------------------------
// data movement
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  std::vector<Shape> ss;
  ss.reserve(parts.size());
  for (const auto& p : parts) ss.push_back(p.shape());
  Shape os = concat_shape(ss, axis);
  const int ax = normalize_axis(axis, static_cast<int>(os.size()));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= os[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(ax) + 1; i < os.size(); ++i) inner *= os[i];
  std::vector<T> out(static_cast<size_t>(numel(os)));
  const int64_t ostep = os[static_cast<size_t>(ax)] * inner;
  int64_t written = 0;
  for (const auto& part : parts) {
    const int64_t pstep = part.dim(ax) * inner;
    const T* p = part.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(p + o * pstep, p + (o + 1) * pstep, out.data() + o * ostep + written);
    written += pstep;
  }
  return Tensor<T>(std::move(os), std::move(out), "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  const int ax = normalize_axis(axis, x.rank());
  check(start >= 0 && len >= 1 && start + len <= x.dim(ax), "slice: range out of bounds");
  Shape os = x.shape();
  os[static_cast<size_t>(ax)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= x.dim(i);
  for (int i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<size_t>(numel(os)));
  const T* p = x.data().data();
  const int64_t istep = x.dim(ax) * inner;
  const int64_t ostep = len * inner;
  for (int64_t o = 0; o < outer; ++o)
    std::copy(p + o * istep + start * inner, p + o * istep + (start + len) * inner,
              out.data() + o * ostep);
  return Tensor<T>(std::move(os), std::move(out), "slice");
}

// Scatter a slice gradient back into a zero tensor of the parent shape.
template <typename T>
Tensor<T> embed_slice(const Tensor<T>& dy, const Shape& parent, int axis, int64_t start) {
  const int ax = normalize_axis(axis, static_cast<int>(parent.size()));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= parent[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(ax) + 1; i < parent.size(); ++i) inner *= parent[i];
  const int64_t len = dy.dim(ax);
  std::vector<T> out(static_cast<size_t>(numel(parent)), T(0));
  const T* p = dy.data().data();
  const int64_t pstep = parent[static_cast<size_t>(ax)] * inner;
  const int64_t dstep = len * inner;
  for (int64_t o = 0; o < outer; ++o)
    std::copy(p + o * dstep, p + (o + 1) * dstep, out.data() + o * pstep + start * inner);
  return Tensor<T>(parent, std::move(out), "embed_slice");
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, int n) {
  const int ax = normalize_axis(axis, x.rank());
  check(n >= 1 && x.dim(ax) % n == 0,
        "split: axis extent " + std::to_string(x.dim(ax)) + " not divisible by " + std::to_string(n));
  const int64_t len = x.dim(ax) / n;
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(slice(x, ax, i * len, len));
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  check(static_cast<int>(perm.size()) == r, "permute: perm rank mismatch");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape os(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    check(p >= 0 && p < r && !seen[static_cast<size_t>(p)], "permute: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
    os[static_cast<size_t>(i)] = x.dim(p);
  }
  const auto in_strides = row_major_strides(x.shape());
  std::vector<int64_t> st(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) st[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  const int64_t n = x.size();
  std::vector<T> out(static_cast<size_t>(n));
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  const T* p = x.data().data();
  int64_t off = 0;
  for (int64_t i = 0;; ++i) {
    out[static_cast<size_t>(i)] = p[off];
    if (i + 1 == n) break;
    for (int ax = r - 1; ax >= 0; --ax) {
      auto u = static_cast<size_t>(ax);
      ++idx[u];
      off += st[u];
      if (idx[u] < os[u]) break;
      idx[u] = 0;
      off -= st[u] * os[u];
    }
  }
  return Tensor<T>(std::move(os), std::move(out), "permute");
}

inline std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

// Index-mapped gather: out[i] = x[map[i]], map entry -1 fills zero. Backward
// is a sequential scatter-add, so repeated indices accumulate in a fixed order.
struct IndexMap {
  Shape out_shape;
  std::shared_ptr<const std::vector<int64_t>> idx;
};

template <typename T>
Tensor<T> gather(const Tensor<T>& x, const IndexMap& map) {
  const auto& m = *map.idx;
  check(static_cast<int64_t>(m.size()) == numel(map.out_shape), "gather: map size mismatch");
  std::vector<T> out(m.size());
  const T* p = x.data().data();
  const int64_t n = x.size();
  for (size_t i = 0; i < m.size(); ++i) {
    const int64_t s = m[i];
    check(s >= -1 && s < n, "gather: map index out of range");
    out[i] = s < 0 ? T(0) : p[s];
  }
  return Tensor<T>(map.out_shape, std::move(out), "gather");
}

template <typename T>
Tensor<T> scatter_add(const Tensor<T>& dy, const IndexMap& map, const Shape& parent) {
  const auto& m = *map.idx;
  std::vector<T> out(static_cast<size_t>(numel(parent)), T(0));
  const T* p = dy.data().data();
  for (size_t i = 0; i < m.size(); ++i)
    if (m[i] >= 0) out[static_cast<size_t>(m[i])] += p[i];
  return Tensor<T>(parent, std::move(out), "scatter_add");
}

// ---------------------------------------------------------------------------
// spatial ops (rank 3 [H,W,C] or rank 4 [g,H,W,C])
// ---------------------------------------------------------------------------

// Zero-pad on the bottom/right up to (h2, w2).
template <typename T>
Tensor<T> pad_hw(const Tensor<T>& x, int64_t h2, int64_t w2) {
  const auto d = spatial_dims(x.shape());
  check(h2 >= d.h && w2 >= d.w, "pad_hw: target smaller than input");
  Shape os = with_spatial(x.shape(), h2, w2);
  std::vector<T> out(static_cast<size_t>(numel(os)), T(0));
  const T* p = x.data().data();
  for (int64_t o = 0; o < d.outer; ++o)
    for (int64_t y = 0; y < d.h; ++y)
      std::copy(p + (o * d.h + y) * d.w * d.inner, p + (o * d.h + y + 1) * d.w * d.inner,
                out.data() + (o * h2 + y) * w2 * d.inner);
  return Tensor<T>(std::move(os), std::move(out), "pad_hw");
}

// Keep the top-left (h, w) region.
template <typename T>
Tensor<T> crop_hw(const Tensor<T>& x, int64_t h, int64_t w) {
  const auto d = spatial_dims(x.shape());
  check(h <= d.h && w <= d.w, "crop_hw: target larger than input");
  Shape os = with_spatial(x.shape(), h, w);
  std::vector<T> out(static_cast<size_t>(numel(os)));
  const T* p = x.data().data();
  for (int64_t o = 0; o < d.outer; ++o)
    for (int64_t y = 0; y < h; ++y)
      std::copy(p + ((o * d.h + y) * d.w) * d.inner, p + ((o * d.h + y) * d.w + w) * d.inner,
                out.data() + (o * h + y) * w * d.inner);
  return Tensor<T>(std::move(os), std::move(out), "crop_hw");
}

// Toroidal roll: out(y,x) = in((y-dy) mod H, (x-dx) mod W).
template <typename T>
Tensor<T> roll_hw(const Tensor<T>& x, int64_t dy, int64_t dx) {
  const auto d = spatial_dims(x.shape());
  const int64_t sy = ((dy % d.h) + d.h) % d.h;
  const int64_t sx = ((dx % d.w) + d.w) % d.w;
  std::vector<T> out(static_cast<size_t>(x.size()));
  const T* p = x.data().data();
  for (int64_t o = 0; o < d.outer; ++o)
    for (int64_t y = 0; y < d.h; ++y) {
      const int64_t ys = (y - sy + d.h) % d.h;
      const T* src = p + (o * d.h + ys) * d.w * d.inner;
      T* dst = out.data() + (o * d.h + y) * d.w * d.inner;
      // row splits into two contiguous source segments
      const int64_t tail = d.w - sx;
      std::copy(src + tail * d.inner, src + d.w * d.inner, dst);
      std::copy(src, src + tail * d.inner, dst + sx * d.inner);
    }
  return Tensor<T>(x.shape(), std::move(out), "roll_hw");
}

// [g,H,W,d] -> [nW, g, M*M, d]; windows and in-window tokens are row-major.
template <typename T>
Tensor<T> window_partition4(const Tensor<T>& x, int64_t m) {
  const auto d = spatial_dims(x.shape());
  check(x.rank() == 4, "window_partition4: expects rank 4");
  check(m >= 1 && d.h % m == 0 && d.w % m == 0,
        "window_partition: spatial dims " + std::to_string(d.h) + "x" + std::to_string(d.w) +
            " not divisible by window " + std::to_string(m));
  const int64_t wy = d.h / m, wx = d.w / m, nw = wy * wx;
  Shape os = {nw, d.outer, m * m, d.inner};
  std::vector<T> out(static_cast<size_t>(x.size()));
  const T* p = x.data().data();
  T* q = out.data();
  for (int64_t w = 0; w < nw; ++w) {
    const int64_t y0 = (w / wx) * m, x0 = (w % wx) * m;
    for (int64_t g = 0; g < d.outer; ++g)
      for (int64_t t = 0; t < m * m; ++t) {
        const int64_t y = y0 + t / m, xx = x0 + t % m;
        const T* src = p + ((g * d.h + y) * d.w + xx) * d.inner;
        std::copy(src, src + d.inner, q);
        q += d.inner;
      }
  }
  return Tensor<T>(std::move(os), std::move(out), "window_partition");
}

// Exact inverse of window_partition4.
template <typename T>
Tensor<T> window_reverse4(const Tensor<T>& x, int64_t h, int64_t w) {
  check(x.rank() == 4, "window_reverse4: expects rank 4");
  const int64_t nw = x.dim(0), g = x.dim(1), mm = x.dim(2), inner = x.dim(3);
  const int64_t m = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(mm))));
  check(m * m == mm, "window_reverse: token count is not a square");
  check(h % m == 0 && w % m == 0 && nw == (h / m) * (w / m),
        "window_reverse: inconsistent dims nW=" + std::to_string(nw) + " H=" + std::to_string(h) +
            " W=" + std::to_string(w));
  const int64_t wx = w / m;
  Shape os = {g, h, w, inner};
  std::vector<T> out(static_cast<size_t>(x.size()));
  const T* p = x.data().data();
  for (int64_t gi = 0; gi < g; ++gi)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx) {
        const int64_t win = (y / m) * wx + (xx / m);
        const int64_t t = (y % m) * m + (xx % m);
        const T* src = p + (((win * g + gi) * mm) + t) * inner;
        std::copy(src, src + inner,
                  out.data() + ((gi * h + y) * w + xx) * inner);
      }
  return Tensor<T>(std::move(os), std::move(out), "window_reverse");
}

// Channel-wise spatial mean: [H,W,C] -> [1,1,C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  check(x.rank() == 3, "global_avg_pool: expects rank-3 [H,W,C]");
  const int64_t hw = x.dim(0) * x.dim(1), c = x.dim(2);
  std::vector<double> acc(static_cast<size_t>(c), 0.0);
  const T* p = x.data().data();
  for (int64_t i = 0; i < hw; ++i)
    for (int64_t j = 0; j < c; ++j) acc[static_cast<size_t>(j)] += static_cast<double>(p[i * c + j]);
  std::vector<T> out(static_cast<size_t>(c));
  for (int64_t j = 0; j < c; ++j)
    out[static_cast<size_t>(j)] = static_cast<T>(acc[static_cast<size_t>(j)] / static_cast<double>(hw));
  return Tensor<T>({1, 1, c}, std::move(out), "global_avg_pool");
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int64_t h, int64_t w) {
  const int64_t c = dy.shape().back();
  std::vector<T> out(static_cast<size_t>(h * w * c));
  const T* p = dy.data().data();
  const double inv = 1.0 / static_cast<double>(h * w);
  for (int64_t i = 0; i < h * w; ++i)
    for (int64_t j = 0; j < c; ++j)
      out[static_cast<size_t>(i * c + j)] = static_cast<T>(static_cast<double>(p[j]) * inv);
  return Tensor<T>({h, w, c}, std::move(out), "global_avg_pool_backward");
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  return Tensor<T>({1}, {static_cast<T>(acc)}, "reduce_sum");
}

}  // namespace dwvit::ops
