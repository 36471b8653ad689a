#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "dwvit/ops.hpp"
#include "dwvit/tensor.hpp"

// Spatial window machinery: partition/reverse, cyclic shift, padding,
// shifted-window attention masks and relative-position indexing.
// One convention everywhere: windows and in-window tokens are row-major.
namespace dwvit {

// Additive mask value for disallowed attention pairs. Finite by design so the
// tensor NaN/Inf contract holds through softmax.
inline constexpr double kMaskedLogit = -1e9;

// Per-stage ordered window sizes, nominal and after clamping to the feature
// extent.
struct WindowSet {
  std::vector<int64_t> nominal;
  std::vector<int64_t> effective;

  int n_win() const { return static_cast<int>(nominal.size()); }
};

// effective[i] = min(nominal[i], H, W).
inline WindowSet clamp_windows(const std::vector<int64_t>& nominal, int64_t feature_h,
                               int64_t feature_w) {
  if (nominal.empty()) throw ShapeError("clamp_windows: empty window list");
  WindowSet ws;
  ws.nominal = nominal;
  ws.effective.reserve(nominal.size());
  for (int64_t w : nominal) {
    if (w < 1) throw ShapeError("clamp_windows: window size must be positive");
    ws.effective.push_back(std::min({w, feature_h, feature_w}));
  }
  return ws;
}

// Relative-position index table for an MxM window. Entry for a token pair
// (p, q) depends only on their coordinate difference:
//   idx = (dy + M - 1) * (2M - 1) + (dx + M - 1),  d = coord(p) - coord(q).
struct RelPosIndex {
  int64_t window;                      // M
  std::vector<int64_t> idx;            // M^2 x M^2, row-major
  int64_t table_size() const { return (2 * window - 1) * (2 * window - 1); }
};

inline RelPosIndex rel_pos_index(int64_t m) {
  if (m < 1) throw ShapeError("rel_pos_index: window must be >= 1");
  RelPosIndex r;
  r.window = m;
  const int64_t n = m * m;
  r.idx.resize(static_cast<size_t>(n * n));
  for (int64_t p = 0; p < n; ++p) {
    const int64_t py = p / m, px = p % m;
    for (int64_t q = 0; q < n; ++q) {
      const int64_t dy = py - q / m, dx = px - q % m;
      r.idx[static_cast<size_t>(p * n + q)] = (dy + m - 1) * (2 * m - 1) + (dx + m - 1);
    }
  }
  return r;
}

// Map expanding a bias table [(2M-1)^2, g] into per-head bias [g, M^2, M^2].
inline ops::IndexMap bias_gather_map(const RelPosIndex& rp, int64_t g) {
  const int64_t n = rp.window * rp.window;
  auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(g * n * n));
  for (int64_t gi = 0; gi < g; ++gi)
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = 0; q < n; ++q)
        (*idx)[static_cast<size_t>((gi * n + p) * n + q)] =
            rp.idx[static_cast<size_t>(p * n + q)] * g + gi;
  return ops::IndexMap{{g, n, n}, std::move(idx)};
}

// ---------------------------------------------------------------------------
// tensor-level window ops ([H,W,C])
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int64_t win) {
  ops::check(x.rank() == 3, "window_partition: expects [H,W,C]");
  Tensor<T> r = ops::window_partition4(x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}), win);
  return r.reshaped({r.dim(0), r.dim(2), r.dim(3)});
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& w, int64_t h, int64_t width) {
  ops::check(w.rank() == 3, "window_reverse: expects [nW,win^2,C]");
  Tensor<T> r = ops::window_reverse4(w.reshaped({w.dim(0), 1, w.dim(1), w.dim(2)}), h, width);
  return r.reshaped({h, width, w.dim(2)});
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, int64_t dy, int64_t dx) {
  ops::check(x.rank() == 3, "cyclic_shift: expects [H,W,C]");
  return ops::roll_hw(x, dy, dx);
}

struct PadRecord {
  int64_t orig_h = 0;
  int64_t orig_w = 0;
  bool padded() const { return orig_h > 0; }
};

inline int64_t round_up(int64_t v, int64_t m) { return ((v + m - 1) / m) * m; }

// Zero-pad bottom/right to the least multiple of win; crop() inverts exactly.
template <typename T>
std::pair<Tensor<T>, PadRecord> pad_to_multiple(const Tensor<T>& x, int64_t win) {
  ops::check(x.rank() == 3, "pad_to_multiple: expects [H,W,C]");
  PadRecord rec{x.dim(0), x.dim(1)};
  const int64_t h2 = round_up(x.dim(0), win), w2 = round_up(x.dim(1), win);
  if (h2 == x.dim(0) && w2 == x.dim(1)) return {x, rec};
  return {ops::pad_hw(x, h2, w2), rec};
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, const PadRecord& rec) {
  if (x.dim(0) == rec.orig_h && x.dim(1) == rec.orig_w) return x;
  return ops::crop_hw(x, rec.orig_h, rec.orig_w);
}

// ---------------------------------------------------------------------------
// shifted-window attention mask
// ---------------------------------------------------------------------------

// Region label of each padded-grid position in the post-shift frame, using
// the three bands [0, H-win), [H-win, H-shift), [H-shift, H) per axis. Tokens
// with equal labels originate from the same contiguous pre-shift region.
inline std::vector<int> shift_region_labels(int64_t h, int64_t w, int64_t win, int64_t shift) {
  std::vector<int> lbl(static_cast<size_t>(h * w));
  auto band = [&](int64_t v, int64_t extent) {
    if (v < extent - win) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      lbl[static_cast<size_t>(y * w + x)] = band(y, h) * 3 + band(x, w);
  return lbl;
}

// Additive attention mask [nW, win^2, win^2]: 0 where both tokens come from
// the same pre-shift region, kMaskedLogit otherwise. shift == 0 is all-zero.
template <typename T>
Tensor<T> shift_attention_mask(int64_t h, int64_t w, int64_t win, int64_t shift) {
  ops::check(shift >= 0 && shift < win,
             "shift_attention_mask: require 0 <= shift < win, got shift=" + std::to_string(shift) +
                 " win=" + std::to_string(win));
  ops::check(h % win == 0 && w % win == 0, "shift_attention_mask: H,W must be divisible by win");
  const int64_t nw = (h / win) * (w / win), n = win * win;
  if (shift == 0) return Tensor<T>::zeros({nw, n, n});
  const auto lbl = shift_region_labels(h, w, win, shift);
  const int64_t wx = w / win;
  std::vector<T> out(static_cast<size_t>(nw * n * n), T(0));
  for (int64_t wi = 0; wi < nw; ++wi) {
    const int64_t y0 = (wi / wx) * win, x0 = (wi % wx) * win;
    for (int64_t p = 0; p < n; ++p) {
      const int lp = lbl[static_cast<size_t>((y0 + p / win) * w + (x0 + p % win))];
      for (int64_t q = 0; q < n; ++q) {
        const int lq = lbl[static_cast<size_t>((y0 + q / win) * w + (x0 + q % win))];
        if (lp != lq)
          out[static_cast<size_t>((wi * n + p) * n + q)] = static_cast<T>(kMaskedLogit);
      }
    }
  }
  return Tensor<T>({nw, n, n}, std::move(out), "shift_attention_mask");
}

}  // namespace dwvit
