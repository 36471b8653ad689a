#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dwvit/context.hpp"
#include "dwvit/ops.hpp"
#include "dwvit/tensor.hpp"

namespace dwvit {

struct VarId {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode gradient tape. Nodes are appended in execution order, so the
// tape is a DAG whose reverse creation order is a reverse topological order;
// backward() visits each node exactly once. Gradient accumulators always match
// the forward value shape. Single-threaded per tape.
template <typename T>
class Graph {
 public:
  using Scalar = T;
  using Val = VarId;

  Val constant(const Tensor<T>& v) { return add_leaf(v, false, {}); }

  Val param(const Tensor<T>& v, std::string_view name) {
    Val id = add_leaf(v, true, std::string(name));
    if (!name.empty()) {
      auto [it, inserted] = params_.emplace(std::string(name), id);
      if (!inserted) throw ShapeError("graph: duplicate parameter name '" + std::string(name) + "'");
    }
    return id;
  }

  const Tensor<T>& value(Val v) const { return node(v).value; }
  const Shape& shape(Val v) const { return node(v).value.shape(); }
  const std::map<std::string, Val>& params() const { return params_; }

  // Gradient of the last backward() loss w.r.t. v; zeros if v was untouched.
  Tensor<T> grad(Val v) const {
    const Node& n = node(v);
    if (n.grad.empty()) return Tensor<T>::zeros(n.value.shape());
    return Tensor<T>(n.value.shape(), n.grad, "grad");
  }

  // Gradients for every registered parameter.
  std::map<std::string, Tensor<T>> backward(Val loss) {
    if (numel(shape(loss)) != 1) throw ShapeError("backward: loss must be scalar");
    for (auto& n : nodes_) n.grad.clear();
    nodes_[static_cast<size_t>(loss.id)].grad.assign(1, T(1));
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, Val{i});
    }
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, id] : params_) out.emplace(name, grad(id));
    return out;
  }

  // ---- ops ----------------------------------------------------------------

  Val matmul(Val a, Val b) {
    return add_node(ops::matmul(value(a), value(b)), {a, b}, [a, b](Graph& g, Val self) {
      Tensor<T> dy = g.grad(self);
      g.accumulate(a, [&] { return ops::matmul_nt(dy, g.value(b)); });
      g.accumulate(b, [&] { return ops::matmul_tn(g.value(a), dy); });
    });
  }

  Val bmm(Val a, Val b, bool tb = false) {
    return add_node(ops::bmm(value(a), value(b), false, tb), {a, b},
                    [a, b, tb](Graph& g, Val self) {
                      Tensor<T> dy = g.grad(self);
                      if (!tb) {
                        g.accumulate(a, [&] { return ops::bmm(dy, g.value(b), false, true); });
                        g.accumulate(b, [&] { return ops::bmm(g.value(a), dy, true, false); });
                      } else {
                        g.accumulate(a, [&] { return ops::bmm(dy, g.value(b), false, false); });
                        g.accumulate(b, [&] { return ops::bmm(dy, g.value(a), true, false); });
                      }
                    });
  }

  Val softmax(Val x, int axis) {
    return add_node(ops::softmax(value(x), axis), {x}, [x, axis](Graph& g, Val self) {
      Tensor<T> dy = g.grad(self);
      g.accumulate(x, [&] { return ops::softmax_backward(g.value(self), dy, axis); });
    });
  }

  Val layer_norm(Val x, Val gamma, Val beta, double eps) {
    return add_node(ops::layer_norm(value(x), value(gamma), value(beta), eps), {x, gamma, beta},
                    [x, gamma, beta, eps](Graph& g, Val self) {
                      Tensor<T> dy = g.grad(self);
                      auto grads = ops::layer_norm_backward(g.value(x), g.value(gamma), dy, eps);
                      g.accumulate(x, [&] { return grads.dx; });
                      g.accumulate(gamma, [&] { return grads.dgamma; });
                      g.accumulate(beta, [&] { return grads.dbeta; });
                    });
  }

  Val gelu(Val x) {
    return add_node(ops::gelu(value(x)), {x}, [x](Graph& g, Val self) {
      Tensor<T> dy = g.grad(self);
      g.accumulate(x, [&] { return ops::gelu_backward(g.value(x), dy); });
    });
  }

  Val add(Val a, Val b) {
    return add_node(ops::add(value(a), value(b)), {a, b}, [a, b](Graph& g, Val self) {
      Tensor<T> dy = g.grad(self);
      g.accumulate(a, [&] { return ops::reduce_to_shape(dy, g.shape(a)); });
      g.accumulate(b, [&] { return ops::reduce_to_shape(dy, g.shape(b)); });
    });
  }

  Val mul(Val a, Val b) {
    return add_node(ops::mul(value(a), value(b)), {a, b}, [a, b](Graph& g, Val self) {
      Tensor<T> dy = g.grad(self);
      g.accumulate(a, [&] { return ops::reduce_to_shape(ops::mul(dy, g.value(b)), g.shape(a)); });
      g.accumulate(b, [&] { return ops::reduce_to_shape(ops::mul(dy, g.value(a)), g.shape(b)); });
    });
  }

  Val scale(Val x, double c) {
    return add_node(ops::scale(value(x), c), {x}, [x, c](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::scale(g.grad(self), c); });
    });
  }

  Val concat(const std::vector<Val>& parts, int axis) {
    std::vector<Tensor<T>> vs;
    vs.reserve(parts.size());
    for (Val p : parts) vs.push_back(value(p));
    const int ax = ops::normalize_axis(axis, static_cast<int>(vs[0].rank()));
    return add_node(ops::concat(vs, ax), parts, [parts, ax](Graph& g, Val self) {
      Tensor<T> dy = g.grad(self);
      int64_t start = 0;
      for (Val p : parts) {
        const int64_t len = g.shape(p)[static_cast<size_t>(ax)];
        g.accumulate(p, [&] { return ops::slice(dy, ax, start, len); });
        start += len;
      }
    });
  }

  Val slice(Val x, int axis, int64_t start, int64_t len) {
    const int ax = ops::normalize_axis(axis, static_cast<int>(shape(x).size()));
    return add_node(ops::slice(value(x), ax, start, len), {x},
                    [x, ax, start](Graph& g, Val self) {
                      g.accumulate(x, [&] {
                        return ops::embed_slice(g.grad(self), g.shape(x), ax, start);
                      });
                    });
  }

  Val reshape(Val x, Shape s) {
    return add_node(value(x).reshaped(std::move(s)), {x}, [x](Graph& g, Val self) {
      g.accumulate(x, [&] { return g.grad(self).reshaped(g.shape(x)); });
    });
  }

  Val permute(Val x, const std::vector<int>& perm) {
    return add_node(ops::permute(value(x), perm), {x}, [x, perm](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::permute(g.grad(self), ops::inverse_perm(perm)); });
    });
  }

  Val gather(Val x, const ops::IndexMap& map) {
    return add_node(ops::gather(value(x), map), {x}, [x, map](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::scatter_add(g.grad(self), map, g.shape(x)); });
    });
  }

  Val pad_hw(Val x, int64_t h2, int64_t w2) {
    return add_node(ops::pad_hw(value(x), h2, w2), {x}, [x](Graph& g, Val self) {
      const Shape& s = g.shape(x);
      g.accumulate(x, [&] {
        return ops::crop_hw(g.grad(self), s[s.size() - 3], s[s.size() - 2]);
      });
    });
  }

  Val crop_hw(Val x, int64_t h, int64_t w) {
    return add_node(ops::crop_hw(value(x), h, w), {x}, [x](Graph& g, Val self) {
      const Shape& s = g.shape(x);
      g.accumulate(x, [&] {
        return ops::pad_hw(g.grad(self), s[s.size() - 3], s[s.size() - 2]);
      });
    });
  }

  Val roll_hw(Val x, int64_t dy, int64_t dx) {
    return add_node(ops::roll_hw(value(x), dy, dx), {x}, [x, dy, dx](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::roll_hw(g.grad(self), -dy, -dx); });
    });
  }

  Val window_partition(Val x, int64_t m) {
    const Shape& s = shape(x);
    const int64_t h = s[1], w = s[2];
    return add_node(ops::window_partition4(value(x), m), {x}, [x, h, w](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::window_reverse4(g.grad(self), h, w); });
    });
  }

  Val window_reverse(Val x, int64_t h, int64_t w) {
    const int64_t mm = shape(x)[2];
    const auto m = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(mm))));
    return add_node(ops::window_reverse4(value(x), h, w), {x}, [x, m](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::window_partition4(g.grad(self), m); });
    });
  }

  Val global_avg_pool(Val x) {
    const Shape& s = shape(x);
    const int64_t h = s[0], w = s[1];
    return add_node(ops::global_avg_pool(value(x)), {x}, [x, h, w](Graph& g, Val self) {
      g.accumulate(x, [&] { return ops::global_avg_pool_backward(g.grad(self), h, w); });
    });
  }

  Val reduce_sum(Val x) {
    return add_node(ops::reduce_sum(value(x)), {x}, [x](Graph& g, Val self) {
      g.accumulate(x, [&] { return Tensor<T>::full(g.shape(x), g.grad(self)[0]); });
    });
  }

  NoScope scope(std::string_view) { return {}; }
  template <typename... A>
  void note_layer(A&&...) {}

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;  // empty until touched by backward
    bool requires_grad = false;
    std::string name;
    std::function<void(Graph&, Val)> backward;
  };

  const Node& node(Val v) const { return nodes_.at(static_cast<size_t>(v.id)); }

  Val add_leaf(const Tensor<T>& v, bool requires_grad, std::string name) {
    Node n;
    n.value = v;
    n.requires_grad = requires_grad;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return Val{static_cast<int32_t>(nodes_.size()) - 1};
  }

  Val add_node(Tensor<T> v, const std::vector<Val>& parents,
               std::function<void(Graph&, Val)> bw) {
    Node n;
    n.value = std::move(v);
    for (Val p : parents)
      if (node(p).requires_grad) {
        n.requires_grad = true;
        break;
      }
    if (n.requires_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Val{static_cast<int32_t>(nodes_.size()) - 1};
  }

  // Lazily computes the contribution only when the parent participates in the
  // gradient flow.
  template <typename F>
  void accumulate(Val p, F&& make_contrib) {
    Node& n = nodes_.at(static_cast<size_t>(p.id));
    if (!n.requires_grad) return;
    Tensor<T> c = make_contrib();
    if (c.shape() != n.value.shape())
      throw ShapeError("backward: gradient shape " + shape_str(c.shape()) +
                       " does not match value shape " + shape_str(n.value.shape()));
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.value.size()), T(0));
    auto src = c.data();
    for (size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += src[i];
  }

  std::vector<Node> nodes_;
  std::map<std::string, Val> params_;
};

}  // namespace dwvit
