// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SELG_TENSOR_H_
#define SELG_TENSOR_H_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace selg {

// Dense row-major tensor. Contiguous storage, value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)), data_(numel_of(shape_)) {}
  Tensor(std::vector<int64_t> shape, T fill)
      : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}
  Tensor(std::vector<int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != numel_of(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor full(std::vector<int64_t> shape, T v) { return Tensor(std::move(shape), v); }

  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(i); }

  // Rows = product of all dims except the last; cols = last dim.
  int64_t cols() const { return shape_.empty() ? 0 : shape_.back(); }
  int64_t rows() const { return shape_.empty() ? 0 : numel() / cols(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }
  T& at2(int64_t i, int64_t j) { return data_[i * cols() + j]; }
  const T& at2(int64_t i, int64_t j) const { return data_[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  Tensor reshaped(std::vector<int64_t> shape) const {
    if (numel_of(shape) != numel())
      throw std::invalid_argument("Tensor::reshaped: numel mismatch");
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

// Uniform fill in [lo, hi) from the given generator. Fixed iteration order,
// so identical seeds give identical tensors.
template <typename T>
void fill_uniform(Tensor<T>* t, std::mt19937_64* rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = static_cast<T>(dist(*rng));
}

template <typename T>
void fill_normal(Tensor<T>* t, std::mt19937_64* rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = static_cast<T>(dist(*rng));
}

}  // namespace selg

#endif  // SELG_TENSOR_H_
