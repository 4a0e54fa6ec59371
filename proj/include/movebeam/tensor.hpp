#pragma once

#include <complex>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace movebeam {

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
  long n = 1;
  for (long d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor of doubles. Complex data uses a trailing axis of
// size 2 holding (real, imag) pairs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if ((long)data_.size() != shape_numel(shape_))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }

  const Shape& shape() const { return shape_; }
  long rank() const { return (long)shape_.size(); }
  long dim(long i) const { return shape_[(size_t)(i < 0 ? i + rank() : i)]; }
  long size() const { return (long)data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](long i) { return data_[(size_t)i]; }
  double operator[](long i) const { return data_[(size_t)i]; }

  // Complex accessors over the flat (real, imag) pair index.
  std::complex<double> cplx(long pair) const {
    return {data_[(size_t)(2 * pair)], data_[(size_t)(2 * pair + 1)]};
  }
  void set_cplx(long pair, std::complex<double> z) {
    data_[(size_t)(2 * pair)] = z.real();
    data_[(size_t)(2 * pair + 1)] = z.imag();
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size())
      throw std::invalid_argument("reshape changes element count: " +
                                  shape_str(shape_) + " -> " + shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace movebeam
