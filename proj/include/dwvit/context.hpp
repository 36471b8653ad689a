#pragma once

#include <string_view>
#include <vector>

#include "dwvit/ops.hpp"
#include "dwvit/tensor.hpp"
#include "dwvit/window.hpp"

namespace dwvit {

// The forward pass is written once against a small context interface and runs
// under three interchangeable contexts:
//   EvalCtx  - immediate value execution (inference),
//   Graph    - recorded execution with reverse-mode gradients (graph.hpp),
//   MeterCtx - shape propagation with FLOP accounting (meter.hpp).

struct NoScope {};

// Immediate evaluation: Val is a Tensor, every op calls the shared kernels.
template <typename T>
struct EvalCtx {
  using Scalar = T;
  using Val = Tensor<T>;

  Val param(const Tensor<T>& t, std::string_view) { return t; }
  Val constant(const Tensor<T>& t) { return t; }
  const Shape& shape(const Val& v) const { return v.shape(); }

  Val matmul(const Val& a, const Val& b) { return ops::matmul(a, b); }
  Val bmm(const Val& a, const Val& b, bool tb = false) { return ops::bmm(a, b, false, tb); }
  Val softmax(const Val& x, int axis) { return ops::softmax(x, axis); }
  Val layer_norm(const Val& x, const Val& g, const Val& b, double eps) {
    return ops::layer_norm(x, g, b, eps);
  }
  Val gelu(const Val& x) { return ops::gelu(x); }
  Val add(const Val& a, const Val& b) { return ops::add(a, b); }
  Val mul(const Val& a, const Val& b) { return ops::mul(a, b); }
  Val scale(const Val& x, double c) { return ops::scale(x, c); }
  Val concat(const std::vector<Val>& parts, int axis) { return ops::concat(parts, axis); }
  Val slice(const Val& x, int axis, int64_t start, int64_t len) {
    return ops::slice(x, axis, start, len);
  }
  Val reshape(const Val& x, Shape s) { return x.reshaped(std::move(s)); }
  Val permute(const Val& x, const std::vector<int>& perm) { return ops::permute(x, perm); }
  Val gather(const Val& x, const ops::IndexMap& map) { return ops::gather(x, map); }
  Val pad_hw(const Val& x, int64_t h2, int64_t w2) { return ops::pad_hw(x, h2, w2); }
  Val crop_hw(const Val& x, int64_t h, int64_t w) { return ops::crop_hw(x, h, w); }
  Val roll_hw(const Val& x, int64_t dy, int64_t dx) { return ops::roll_hw(x, dy, dx); }
  Val window_partition(const Val& x, int64_t m) { return ops::window_partition4(x, m); }
  Val window_reverse(const Val& x, int64_t h, int64_t w) { return ops::window_reverse4(x, h, w); }
  Val global_avg_pool(const Val& x) { return ops::global_avg_pool(x); }
  Val reduce_sum(const Val& x) { return ops::reduce_sum(x); }

  NoScope scope(std::string_view) { return {}; }
  template <typename... A>
  void note_layer(A&&...) {}
};

}  // namespace dwvit
