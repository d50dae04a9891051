#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "genrecnn/errors.hpp"

namespace genrecnn {

/// Dense row-major N-d array. The single numeric carrier for audio features,
/// activations, weights, and gradients. `T` is float in production; the
/// gradient-check harness instantiates the same code in double.
template <typename T>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(element_count(shape), T(0));
  }

  TensorT(std::vector<std::size_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != element_count(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape product " +
                       std::to_string(element_count(shape)));
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // Rank-specific accessors; bounds are the caller's responsibility.
  T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const {
    return data[i * shape[1] + j];
  }
  T& at3(std::size_t c, std::size_t i, std::size_t j) {
    return data[(c * shape[1] + i) * shape[2] + j];
  }
  const T& at3(std::size_t c, std::size_t i, std::size_t j) const {
    return data[(c * shape[1] + i) * shape[2] + j];
  }
  T& at4(std::size_t o, std::size_t c, std::size_t i, std::size_t j) {
    return data[((o * shape[1] + c) * shape[2] + i) * shape[3] + j];
  }
  const T& at4(std::size_t o, std::size_t c, std::size_t i,
               std::size_t j) const {
    return data[((o * shape[1] + c) * shape[2] + i) * shape[3] + j];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  /// Reshapes in place without touching storage; new shape must preserve size.
  void reshape(std::vector<std::size_t> s) {
    if (element_count(s) != data.size()) {
      throw ShapeError("reshape changes element count");
    }
    shape = std::move(s);
  }

  /// Reallocates (if needed) to the given shape; contents unspecified after.
  void resize(const std::vector<std::size_t>& s) {
    shape = s;
    data.resize(element_count(s));
  }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << "x";
      os << shape[i];
    }
    os << "]";
    return os.str();
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
void check_rank(const TensorT<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + ", got " + t.shape_str());
  }
}

}  // namespace genrecnn
