#include "cvnn/ctensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cvnn/error.hpp"

namespace cvnn {

std::size_t Shape::elements() const noexcept {
  std::size_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

Shape Shape::tail() const {
  if (dims_.empty()) throw DimensionError("tail() of a rank-0 shape");
  return Shape(std::vector<std::size_t>(dims_.begin() + 1, dims_.end()));
}

Shape Shape::with_leading(std::size_t extent) const {
  std::vector<std::size_t> d;
  d.reserve(dims_.size() + 1);
  d.push_back(extent);
  d.insert(d.end(), dims_.begin(), dims_.end());
  return Shape(std::move(d));
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ')';
  return os.str();
}

CTensor::CTensor(Shape shape, cplx fill) : shape_(std::move(shape)), data_(shape_.elements(), fill) {}

CTensor::CTensor(Shape shape, std::vector<cplx> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.elements()) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_.to_string());
  }
}

CTensor CTensor::from_real(Shape shape, std::span<const double> values) {
  if (values.size() != shape.elements()) {
    throw DimensionError("data length " + std::to_string(values.size()) + " does not match shape " +
                         shape.to_string());
  }
  CTensor t(std::move(shape));
  std::transform(values.begin(), values.end(), t.data_.begin(), [](double v) { return cplx(v, 0.0); });
  t.real_only_ = true;
  return t;
}

std::size_t CTensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.rank()) throw DimensionError("index rank does not match " + shape_.to_string());
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw DimensionError("index out of range for " + shape_.to_string());
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

const cplx& CTensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

cplx& CTensor::at(std::initializer_list<std::size_t> index) {
  real_only_ = false;
  return data_[offset(index)];
}

CTensor& CTensor::mark_real_only() {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i].imag() != 0.0) {
      throw ContractError("real_only tensor has nonzero imaginary part at index " + std::to_string(i));
    }
  }
  real_only_ = true;
  return *this;
}

CTensor CTensor::real_part() const {
  CTensor out(shape_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i].real();
  out.real_only_ = true;
  return out;
}

CTensor CTensor::imag_part() const {
  CTensor out(shape_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i].imag();
  out.real_only_ = true;
  return out;
}

CTensor CTensor::reshaped(Shape shape) const {
  if (shape.elements() != data_.size()) {
    throw DimensionError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  CTensor out(std::move(shape), data_);
  out.real_only_ = real_only_;
  return out;
}

CTensor CTensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.rank() == 0 || begin > end || end > shape_[0]) {
    throw DimensionError("row slice out of range for " + shape_.to_string());
  }
  const std::size_t row = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = end - begin;
  CTensor out(s, std::vector<cplx>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                   data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
  out.real_only_ = real_only_;
  return out;
}

CTensor CTensor::gather_rows(std::span<const std::size_t> rows) const {
  if (shape_.rank() == 0) throw DimensionError("gather_rows on a rank-0 tensor");
  const std::size_t row = shape_[0] ? data_.size() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = rows.size();
  CTensor out(s);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= shape_[0]) throw DimensionError("gather index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[r] * row), row,
                out.data_.begin() + static_cast<std::ptrdiff_t>(r * row));
  }
  out.real_only_ = real_only_;
  return out;
}

bool CTensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

namespace {

cplx apply_binary(ElementwiseOp op, cplx a, cplx b, std::size_t index) {
  switch (op) {
    case ElementwiseOp::add:
      return a + b;
    case ElementwiseOp::sub:
      return a - b;
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      return cmul(a, b);
    case ElementwiseOp::div:
      if (b == cplx{}) throw SingularityError("division by zero at index " + std::to_string(index), index);
      return a / b;
    case ElementwiseOp::conj:
      return std::conj(a);
    case ElementwiseOp::neg:
      return -a;
    case ElementwiseOp::exp:
      return std::exp(a);
  }
  return {};
}

bool is_unary(ElementwiseOp op) {
  return op == ElementwiseOp::conj || op == ElementwiseOp::neg || op == ElementwiseOp::exp;
}

}  // namespace

CTensor elementwise(ElementwiseOp op, const CTensor& a, const CTensor& b) {
  if (is_unary(op)) return elementwise(op, a);
  if (op == ElementwiseOp::scale || b.shape() != a.shape()) {
    if (b.size() == 1 && (op == ElementwiseOp::scale || b.shape().rank() == 0)) return elementwise(op, a, b[0]);
    if (op == ElementwiseOp::scale) throw DimensionError("scale expects a single-element factor");
    throw DimensionError("elementwise shape mismatch: " + a.shape().to_string() + " vs " +
                         b.shape().to_string());
  }
  CTensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = apply_binary(op, a[i], b[i], i);
  if (a.real_only() && b.real_only() && op != ElementwiseOp::div) out.mark_real_only();
  return out;
}

CTensor elementwise(ElementwiseOp op, const CTensor& a, cplx b) {
  if (is_unary(op)) return elementwise(op, a);
  if (op == ElementwiseOp::div && b == cplx{}) throw SingularityError("division by zero scalar", 0);
  CTensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = apply_binary(op, a[i], b, i);
  return out;
}

CTensor elementwise(ElementwiseOp op, const CTensor& a) {
  if (!is_unary(op)) throw DimensionError("binary elementwise op called without a second operand");
  CTensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = apply_binary(op, a[i], {}, i);
  if (a.real_only() && op != ElementwiseOp::exp) out.mark_real_only();
  return out;
}

CTensor operator+(const CTensor& a, const CTensor& b) { return elementwise(ElementwiseOp::add, a, b); }
CTensor operator-(const CTensor& a, const CTensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
CTensor operator*(const CTensor& a, const CTensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
CTensor operator/(const CTensor& a, const CTensor& b) { return elementwise(ElementwiseOp::div, a, b); }
CTensor operator*(const CTensor& a, cplx s) { return elementwise(ElementwiseOp::scale, a, s); }
CTensor conj(const CTensor& a) { return elementwise(ElementwiseOp::conj, a); }

double arg0(cplx z) noexcept {
  if (z.real() == 0.0 && z.imag() == 0.0) return 0.0;
  const double a = std::atan2(z.imag(), z.real());
  // atan2(-0.0, x<0) returns -pi; the range is (-pi, pi].
  return a == -std::numbers::pi ? std::numbers::pi : a;
}

std::pair<CTensor, CTensor> modulus_arg(const CTensor& a) {
  CTensor mod(a.shape());
  CTensor ang(a.shape());
  auto m = mod.data();
  auto g = ang.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    m[i] = std::abs(a[i]);
    g[i] = arg0(a[i]);
  }
  mod.mark_real_only();
  ang.mark_real_only();
  return {std::move(mod), std::move(ang)};
}

CTensor matmul(const CTensor& a, const CTensor& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul expects [m x k] * [k x n], got " + a.shape().to_string() + " * " +
                         b.shape().to_string());
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  CTensor out(Shape{m, n});
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    cplx* row = o.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const cplx s = ad[i * k + p];
      const cplx* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += cmul(s, brow[j]);
    }
  }
  if (a.real_only() && b.real_only()) out.mark_real_only();
  return out;
}

PadPlan plan_padding(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (stride == 0) throw DimensionError("stride must be >= 1");
  if (padding == Padding::valid) {
    if (kernel > in) {
      throw DimensionError("kernel extent " + std::to_string(kernel) + " exceeds input extent " +
                           std::to_string(in));
    }
    return {0, (in - kernel) / stride + 1};
  }
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t total = needed > in ? needed - in : 0;
  if (kernel > in + total) {
    throw DimensionError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent");
  }
  return {total / 2, out};
}

CTensor conv2d(const CTensor& input, const CTensor& kernels, Stride2 stride, Padding padding) {
  const auto& is = input.shape();
  const auto& ks = kernels.shape();
  if (is.rank() != 3 || ks.rank() != 4 || ks[2] != is[2]) {
    throw DimensionError("conv2d expects H x W x Cin input and kh x kw x Cin x Cout kernels, got " +
                         is.to_string() + " and " + ks.to_string());
  }
  const std::size_t H = is[0], W = is[1], C = is[2];
  const std::size_t kh = ks[0], kw = ks[1], F = ks[3];
  const PadPlan pr = plan_padding(H, kh, stride.rows, padding);
  const PadPlan pc = plan_padding(W, kw, stride.cols, padding);
  CTensor out(Shape{pr.out, pc.out, F});
  auto o = out.data();
  auto x = input.data();
  auto k = kernels.data();
  for (std::size_t oh = 0; oh < pr.out; ++oh) {
    for (std::size_t ow = 0; ow < pc.out; ++ow) {
      cplx* acc = o.data() + (oh * pc.out + ow) * F;
      for (std::size_t a = 0; a < kh; ++a) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride.rows + a) - static_cast<std::ptrdiff_t>(pr.before);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::size_t b = 0; b < kw; ++b) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride.cols + b) - static_cast<std::ptrdiff_t>(pc.before);
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
          const cplx* px = x.data() + (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * C;
          const cplx* pk = k.data() + (a * kw + b) * C * F;
          for (std::size_t c = 0; c < C; ++c) {
            const cplx xv = px[c];
            const cplx* kr = pk + c * F;
            for (std::size_t f = 0; f < F; ++f) acc[f] += cmul(xv, kr[f]);
          }
        }
      }
    }
  }
  return out;
}

cplx inner(const CTensor& a, const CTensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("inner product shape mismatch");
  cplx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += cmul_conj(a[i], b[i]);
  return s;
}

double max_abs_diff(const CTensor& a, const CTensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace cvnn
