#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace anmt {

using Shape = std::vector<long>;

inline long shape_numel(const Shape& shape) {
  long n = 1;
  for (long d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

/// Dense row-major array with explicit shape. The universal numeric value:
/// vectors are [n], matrices are [rows x cols].
template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), Real(0)) {}
  Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<long>(data_.size()) != shape_numel(shape_))
      throw std::invalid_argument("tensor data length does not match shape " + shape_to_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Real v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  long rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : shape_[0]); }
  long cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

  Real& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  Real operator[](long i) const { return data_[static_cast<size_t>(i)]; }
  Real& at(long r, long c) { return data_[static_cast<size_t>(r * cols() + c)]; }
  Real at(long r, long c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// Uniform double in [0,1) from the top 53 bits of the generator output.
/// Used instead of std::uniform_real_distribution so that seeded runs are
/// reproducible independent of the standard library implementation.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Real>
Tensor<Real> uniform_init(Shape shape, Real low, Real high, std::mt19937_64& rng) {
  if (!(low < high)) throw std::invalid_argument("uniform_init requires low < high");
  Tensor<Real> t(std::move(shape));
  for (long i = 0; i < t.size(); ++i)
    t[i] = low + static_cast<Real>(unit_uniform(rng)) * (high - low);
  return t;
}

/// Max-subtracted softmax. Masked entries (mask value 0) receive exact 0 in
/// the output and do not participate in the normalization.
template <typename Real>
Tensor<Real> softmax_stable(const Tensor<Real>& x, const Tensor<Real>* mask = nullptr) {
  if (mask && !mask->same_shape(x))
    throw std::invalid_argument("softmax mask shape " + shape_to_string(mask->shape()) +
                                " does not match input " + shape_to_string(x.shape()));
  const long n = x.size();
  Real mx = 0;
  bool any = false;
  for (long i = 0; i < n; ++i) {
    if (mask && (*mask)[i] == Real(0)) continue;
    if (!any || x[i] > mx) mx = x[i];
    any = true;
  }
  if (!any) throw std::invalid_argument("attention over empty set");
  Tensor<Real> y(x.shape());
  Real z = 0;
  for (long i = 0; i < n; ++i) {
    if (mask && (*mask)[i] == Real(0)) continue;
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (long i = 0; i < n; ++i)
    if (!mask || (*mask)[i] != Real(0)) y[i] /= z;
  return y;
}

/// Inverted dropout: zero with probability `rate`, survivors scaled by
/// 1/(1-rate) so that inference needs no rescaling. Identity when not
/// training or when rate is 0.
template <typename Real>
Tensor<Real> dropout_apply(const Tensor<Real>& x, Real rate, bool training, std::mt19937_64& rng) {
  if (rate < Real(0) || rate >= Real(1)) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (!training || rate == Real(0)) return x;
  Tensor<Real> y(x.shape());
  const Real scale = Real(1) / (Real(1) - rate);
  for (long i = 0; i < x.size(); ++i) {
    const bool keep = unit_uniform(rng) >= static_cast<double>(rate);
    y[i] = keep ? x[i] * scale : Real(0);
  }
  return y;
}

}  // namespace anmt
