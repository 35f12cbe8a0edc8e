// Dense row-major tensors and named parameters with gradient buffers.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dscore::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<int>;

// 64-byte aligned storage. Vectorized reductions peel a prefix that depends on
// the start address, so a fixed alignment keeps sums bitwise reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename T>
struct Tensor {
  Shape shape;
  AlignedVec<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  int rank() const { return static_cast<int>(shape.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename T>
inline void require_shape(const Tensor<T>& t, const Shape& expected, const char* what) {
  if (t.shape != expected)
    throw ShapeError(std::string(what) + ": expected shape " + shape_str(expected) + ", got " + shape_str(t.shape));
}

#ifndef NDEBUG
template <typename T>
inline void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw std::runtime_error(std::string(what) + ": non-finite values");
}
#else
template <typename T>
inline void check_finite(const Tensor<T>&, const char*) {}
#endif

/// A trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.fill(T(0)); }

  template <typename U>
  Param<U> cast() const {
    Param<U> p;
    p.name = name;
    p.value = value.template cast<U>();
    p.grad = grad.template cast<U>();
    return p;
  }
};

}  // namespace dscore::nn
