#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dwvit/error.hpp"

namespace dwvit {

using Shape = std::vector<int64_t>;

enum class Precision : uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() {
  return Precision::F32;
}
template <>
constexpr Precision precision_of<double>() {
  return Precision::F64;
}

inline const char* precision_name(Precision p) {
  return p == Precision::F32 ? "f32" : "f64";
}

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Dense row-major tensor with a shared, logically immutable element buffer.
// Copies are cheap (buffer is shared); every operation returns a fresh tensor.
// Construction enforces the library-wide finiteness contract: any NaN or Inf
// in the buffer raises NumericError tagged with the producing operation.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor supports f32/f64 only");

 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, const char* op = "tensor")
      : shape_(std::move(shape)),
        buf_(std::make_shared<const std::vector<T>>(std::move(data))) {
    validate(op);
  }

  static Tensor zeros(Shape shape) {
    std::vector<T> d(static_cast<size_t>(numel(shape)), T(0));
    return Tensor(std::move(shape), std::move(d));
  }

  static Tensor full(Shape shape, T v) {
    std::vector<T> d(static_cast<size_t>(numel(shape)), v);
    return Tensor(std::move(shape), std::move(d));
  }

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  bool defined() const { return buf_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return buf_ ? static_cast<int64_t>(buf_->size()) : 0; }
  std::span<const T> data() const {
    return buf_ ? std::span<const T>(*buf_) : std::span<const T>();
  }
  T operator[](int64_t flat) const { return (*buf_)[static_cast<size_t>(flat)]; }

  // Bounds-checked multi-index access; intended for tests and small code.
  T at(std::initializer_list<int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw ShapeError("at(): index rank mismatch for shape " + shape_str(shape_));
    int64_t flat = 0;
    int i = 0;
    for (int64_t v : idx) {
      if (v < 0 || v >= shape_[static_cast<size_t>(i)])
        throw ShapeError("at(): index out of bounds");
      flat = flat * shape_[static_cast<size_t>(i)] + v;
      ++i;
    }
    return (*buf_)[static_cast<size_t>(flat)];
  }

  // Same buffer, new shape. Element count must match.
  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size())
      throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " +
                       shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  std::vector<T> to_vector() const { return buf_ ? *buf_ : std::vector<T>(); }

 private:
  void validate(const char* op) const {
    for (int64_t d : shape_)
      if (d < 1) throw ShapeError(std::string(op) + ": dimension < 1 in " + shape_str(shape_));
    if (numel(shape_) != static_cast<int64_t>(buf_->size()))
      throw ShapeError(std::string(op) + ": buffer size " + std::to_string(buf_->size()) +
                       " does not match shape " + shape_str(shape_));
    for (T v : *buf_)
      if (!std::isfinite(v))
        throw NumericError(std::string(op) + ": produced a non-finite value");
  }

  Shape shape_;
  std::shared_ptr<const std::vector<T>> buf_;
};

}  // namespace dwvit
