#pragma once

// Dense row-major complex tensor and the numerical kernels shared by every
// other module (elementwise arithmetic, polar decomposition, matrix product,
// 2-D cross-correlation).

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cvnn {

using cplx = std::complex<double>;

/// Complex product without the C99 Annex G inf/nan recovery path.
constexpr cplx cmul(cplx a, cplx b) noexcept {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

/// a * conj(b)
constexpr cplx cmul_conj(cplx a, cplx b) noexcept {
  return {a.real() * b.real() + a.imag() * b.imag(), a.imag() * b.real() - a.real() * b.imag()};
}

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::size_t& operator[](std::size_t axis) { return dims_.at(axis); }
  std::size_t back() const { return dims_.back(); }
  /// Product of extents; 1 for a rank-0 shape.
  std::size_t elements() const noexcept;
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  /// Shape without the leading (batch) axis.
  Shape tail() const;
  /// Shape with `extent` prepended.
  Shape with_leading(std::size_t extent) const;

  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

class CTensor {
 public:
  CTensor() = default;
  explicit CTensor(Shape shape, cplx fill = {});
  CTensor(Shape shape, std::vector<cplx> data);

  /// Tensor with zero imaginary parts, flagged real_only.
  static CTensor from_real(Shape shape, std::span<const double> values);
  static CTensor zeros_like(const CTensor& other) { return CTensor(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const cplx> data() const noexcept { return data_; }
  /// Mutable view; clears the real_only flag since the caller may write imaginary parts.
  std::span<cplx> data() noexcept {
    real_only_ = false;
    return data_;
  }

  const cplx& operator[](std::size_t i) const { return data_[i]; }
  cplx& operator[](std::size_t i) {
    real_only_ = false;
    return data_[i];
  }

  /// Multi-index access with bounds checking.
  const cplx& at(std::initializer_list<std::size_t> index) const;
  cplx& at(std::initializer_list<std::size_t> index);
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  bool real_only() const noexcept { return real_only_; }
  /// Sets the real_only flag; throws ContractError if any imaginary part is nonzero.
  CTensor& mark_real_only();
  /// Copy with every imaginary part dropped, flagged real_only.
  CTensor real_part() const;
  CTensor imag_part() const;

  CTensor reshaped(Shape shape) const;
  /// Copy of rows [begin, end) along the leading axis.
  CTensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Rows selected by index along the leading axis.
  CTensor gather_rows(std::span<const std::size_t> rows) const;

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<cplx> data_;
  bool real_only_ = false;
};

enum class ElementwiseOp { add, sub, mul, div, conj, neg, exp, scale };

/// Binary or unary elementwise op. Unary ops (conj, neg, exp) ignore `b`.
/// `scale` multiplies by a scalar `b`, which must then have a single element.
CTensor elementwise(ElementwiseOp op, const CTensor& a, const CTensor& b);
CTensor elementwise(ElementwiseOp op, const CTensor& a, cplx b);
CTensor elementwise(ElementwiseOp op, const CTensor& a);

CTensor operator+(const CTensor& a, const CTensor& b);
CTensor operator-(const CTensor& a, const CTensor& b);
CTensor operator*(const CTensor& a, const CTensor& b);
CTensor operator/(const CTensor& a, const CTensor& b);
CTensor operator*(const CTensor& a, cplx s);
CTensor conj(const CTensor& a);

/// Principal argument in (-pi, pi]; arg(0) is 0.
double arg0(cplx z) noexcept;

/// Per-element (|z|, arg z), both flagged real_only.
std::pair<CTensor, CTensor> modulus_arg(const CTensor& a);

/// [m x k] * [k x n].
CTensor matmul(const CTensor& a, const CTensor& b);

enum class Padding { valid, same };

struct Stride2 {
  std::size_t rows = 1;
  std::size_t cols = 1;
};

/// Leading padding and output extent along one spatial axis.
struct PadPlan {
  std::size_t before = 0;
  std::size_t out = 0;
};
PadPlan plan_padding(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

/// Complex cross-correlation (no kernel flip) of an H x W x Cin image with
/// kh x kw x Cin x Cout kernels.
CTensor conv2d(const CTensor& input, const CTensor& kernels, Stride2 stride, Padding padding);

/// Sum of a[i] * conj(b[i]) over every element.
cplx inner(const CTensor& a, const CTensor& b);

double max_abs_diff(const CTensor& a, const CTensor& b);

}  // namespace cvnn
