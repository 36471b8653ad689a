#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dwvit/tensor.hpp"

namespace dwvit {

enum class InitKind {
  TruncNormal,  // truncated normal, std 0.02, clipped at 2 std
  Zeros,        // structure-only build; used when only shapes/counts matter
};

// Deterministic generator for parameter initialization. A model build consumes
// a single stream in construction order, so a (seed, config) pair fully pins
// every weight.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double normal01() { return dist_(gen_); }

  double trunc_normal(double stddev, double clip_std = 2.0) {
    double z = normal01();
    while (std::abs(z) > clip_std) z = normal01();
    return z * stddev;
  }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

template <typename T>
Tensor<T> trunc_normal_tensor(Shape shape, Rng& rng, double stddev = 0.02) {
  std::vector<T> d(static_cast<size_t>(numel(shape)));
  for (auto& v : d) v = static_cast<T>(rng.trunc_normal(stddev));
  return Tensor<T>(std::move(shape), std::move(d));
}

template <typename T>
Tensor<T> init_weight(Shape shape, Rng& rng, InitKind kind) {
  if (kind == InitKind::Zeros) return Tensor<T>::zeros(std::move(shape));
  return trunc_normal_tensor<T>(std::move(shape), rng);
}

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]; may be undefined (e.g. patch-merge reduction)

  bool defined() const { return weight.defined(); }
  bool has_bias() const { return bias.defined(); }
  int64_t in_features() const { return weight.dim(0); }
  int64_t out_features() const { return weight.dim(1); }
};

template <typename T>
LinearParams<T> make_linear(int64_t in, int64_t out, bool bias, Rng& rng, InitKind kind) {
  LinearParams<T> p;
  p.weight = init_weight<T>({in, out}, rng, kind);
  if (bias) p.bias = Tensor<T>::zeros({out});
  return p;
}

template <typename T>
struct NormParams {
  Tensor<T> gamma;  // [C]
  Tensor<T> beta;   // [C]
};

template <typename T>
NormParams<T> make_norm(int64_t c) {
  return {Tensor<T>::full({c}, T(1)), Tensor<T>::zeros({c})};
}

}  // namespace dwvit
