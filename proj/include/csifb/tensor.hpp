// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace csifb {

using emat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using emap = Eigen::Map<emat>;
using cemap = Eigen::Map<const emat>;

// std::allocator variant that leaves doubles default-initialized (i.e.
// unwritten) on resize, so buffers that are fully overwritten right after
// construction skip the zero fill. Allocations are 64-byte aligned so SIMD
// reductions split head/body/tail identically on every run; with the default
// allocator the split follows the heap pointer and the low bits of sums
// change between otherwise identical runs.
template <class T>
struct uninit_allocator : std::allocator<T> {
  static constexpr std::size_t alignment = 64;
  template <class U>
  struct rebind {
    using other = uninit_allocator<U>;
  };
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{alignment}));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    ::operator delete(p, n * sizeof(T), std::align_val_t{alignment});
  }
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using dvec = std::vector<double, uninit_allocator<double>>;

inline bool operator==(const dvec& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}
inline bool operator==(const std::vector<double>& a, const dvec& b) { return b == a; }

// Dense row-major real tensor. Rank 1..3 is what the models need; the last
// dimension is always the contiguous one.
struct tensor {
  std::vector<std::size_t> shape;
  dvec v;

  tensor() = default;
  explicit tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(count(shape), 0.0);
  }
  tensor(std::vector<std::size_t> s, dvec data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != count(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }
  tensor(std::vector<std::size_t> s, const std::vector<double>& data)
      : shape(std::move(s)), v(data.begin(), data.end()) {
    if (v.size() != count(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }
  tensor(std::vector<std::size_t> s, std::initializer_list<double> data)
      : shape(std::move(s)), v(data.begin(), data.end()) {
    if (v.size() != count(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static tensor zeros(std::vector<std::size_t> s) { return tensor(std::move(s)); }

  // Storage is allocated but deliberately left unwritten; the caller must
  // overwrite every element before reading any.
  static tensor raw(std::vector<std::size_t> s) {
    tensor t;
    t.shape = std::move(s);
    t.v.resize(count(t.shape));
    return t;
  }

  std::size_t numel() const { return v.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  // Leading dims collapsed; for rank-1 this is numel x 1.
  std::size_t rows() const {
    if (shape.empty()) return 0;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return shape.size() == 1 ? shape[0] : r;
  }
  std::size_t cols() const {
    if (shape.empty()) return 0;
    return shape.size() == 1 ? 1 : shape.back();
  }

  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  emap mat() {
    return emap(v.data(), static_cast<Eigen::Index>(rows()),
                static_cast<Eigen::Index>(cols()));
  }
  cemap mat() const {
    return cemap(v.data(), static_cast<Eigen::Index>(rows()),
                 static_cast<Eigen::Index>(cols()));
  }
  // 2-D view of a rank-3 slice [i, :, :].
  emap slice(std::size_t i) {
    const std::size_t r = shape.at(1), c = shape.at(2);
    return emap(v.data() + i * r * c, static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
  }
  cemap slice(std::size_t i) const {
    const std::size_t r = shape.at(1), c = shape.at(2);
    return cemap(v.data() + i * r * c, static_cast<Eigen::Index>(r),
                 static_cast<Eigen::Index>(c));
  }

  bool same_shape(const tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
};

}  // namespace csifb
