#include "cvnn/activations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "cvnn/error.hpp"

namespace cvnn {

namespace {

// Real scalar nonlinearities with their derivatives.
struct Real1 {
  double f;
  double df;
};

constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kSeluScale = 1.0507009873554804934193349852946;

Real1 r_sigmoid(double x) {
  // Split on sign so exp never overflows.
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return {s, s * (1.0 - s)};
}

Real1 r_tanh(double x) {
  const double t = std::tanh(x);
  return {t, 1.0 - t * t};
}

Real1 r_relu(double x) { return x >= 0 ? Real1{x, 1.0} : Real1{0.0, 0.0}; }

Real1 r_leaky(double x, double slope) { return x >= 0 ? Real1{x, 1.0} : Real1{slope * x, slope}; }

Real1 r_elu(double x) {
  if (x >= 0) return {x, 1.0};
  const double e = std::expm1(x);
  return {e, e + 1.0};
}

Real1 r_selu(double x) {
  if (x >= 0) return {kSeluScale * x, kSeluScale};
  const double e = std::exp(x);
  return {kSeluScale * kSeluAlpha * (e - 1.0), kSeluScale * kSeluAlpha * e};
}

Real1 r_softplus(double x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
  const double f = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return {f, r_sigmoid(x).f};
}

Pointwise lift_a(cplx z, Real1 (*g)(double)) {
  const Real1 re = g(z.real());
  const Real1 im = g(z.imag());
  return {{re.f, im.f}, 0.5 * (re.df + im.df), 0.5 * (re.df - im.df)};
}

// sigma_r(rho) * z / rho. With u = z / rho:
//   d/dz    = (g' + g / rho) / 2
//   d/dzbar = u^2 (g' - g / rho) / 2
Pointwise lift_b(cplx z, Real1 g) {
  const double rho = std::abs(z);
  if (rho == 0.0) return {{g.f, 0.0}, 0.0, 0.0};
  const cplx u = z / rho;
  const double q = g.f / rho;
  return {g.f * u, 0.5 * (g.df + q), 0.5 * (g.df - q) * cmul(u, u)};
}

double param_or(std::span<const double> p, std::size_t i, double fallback) { return i < p.size() ? p[i] : fallback; }

Pointwise p_linear(cplx z, std::span<const double>) { return {z, 1.0, 0.0}; }
Pointwise p_cart_relu(cplx z, std::span<const double>) { return lift_a(z, r_relu); }
Pointwise p_cart_sigmoid(cplx z, std::span<const double>) { return lift_a(z, r_sigmoid); }
Pointwise p_cart_tanh(cplx z, std::span<const double>) { return lift_a(z, r_tanh); }
Pointwise p_cart_selu(cplx z, std::span<const double>) { return lift_a(z, r_selu); }
Pointwise p_cart_elu(cplx z, std::span<const double>) { return lift_a(z, r_elu); }
Pointwise p_cart_softplus(cplx z, std::span<const double>) { return lift_a(z, r_softplus); }
Pointwise p_cart_leaky(cplx z, std::span<const double> p) {
  const double slope = param_or(p, 0, 0.2);
  const Real1 re = r_leaky(z.real(), slope);
  const Real1 im = r_leaky(z.imag(), slope);
  return {{re.f, im.f}, 0.5 * (re.df + im.df), 0.5 * (re.df - im.df)};
}

Pointwise p_pol_tanh(cplx z, std::span<const double>) { return lift_b(z, r_tanh(std::abs(z))); }
Pointwise p_pol_sigmoid(cplx z, std::span<const double>) { return lift_b(z, r_sigmoid(std::abs(z))); }
Pointwise p_pol_selu(cplx z, std::span<const double>) { return lift_b(z, r_selu(std::abs(z))); }

Pointwise p_modrelu(cplx z, std::span<const double> p) {
  const double b = param_or(p, 0, 0.0);
  const double rho = std::abs(z);
  if (rho == 0.0) return {0.0, 0.0, 0.0};
  return lift_b(z, r_relu(rho + b));
}

Pointwise p_zrelu(cplx z, std::span<const double>) {
  if (z.real() > 0 && z.imag() > 0) return {z, 1.0, 0.0};
  return {0.0, 0.0, 0.0};
}

// f = (1 + x/rho) z / 2, c = x/rho:
//   dc/dz    = 1/(2 rho) - x zbar / (2 rho^3)
//   dc/dzbar = 1/(2 rho) - x z    / (2 rho^3)
Pointwise p_cardioid(cplx z, std::span<const double>) {
  const double rho = std::abs(z);
  if (rho == 0.0) return {0.0, 0.0, 0.0};
  const double x = z.real();
  const double c = x / rho;
  const double r3 = rho * rho * rho;
  const cplx dc_dz = 1.0 / (2.0 * rho) - x * std::conj(z) / (2.0 * r3);
  const cplx dc_dzbar = 1.0 / (2.0 * rho) - x * z / (2.0 * r3);
  return {0.5 * (1.0 + c) * z, 0.5 * (1.0 + c) + 0.5 * cmul(z, dc_dz), 0.5 * cmul(z, dc_dzbar)};
}

// Row-wise maps. The first seven mirror RealOutputKind.
enum class RowKind {
  cast_to_real,
  abs,
  softmax_abs,
  softmax_avg_parts,
  softmax_mult_parts,
  softmax_polar,
  sigmoid_real,
  cart_softmax,
};

using PointFn = Pointwise (*)(cplx, std::span<const double>);

}  // namespace

struct ActivationEntry {
  const char* name;
  PointFn point;  // null for row-wise entries
  RowKind row;
  bool real_counterpart;
};

namespace {

constexpr std::array kTable = {
    ActivationEntry{"linear", p_linear, {}, true},
    ActivationEntry{"cart_relu", p_cart_relu, {}, true},
    ActivationEntry{"crelu", p_cart_relu, {}, true},
    ActivationEntry{"cart_sigmoid", p_cart_sigmoid, {}, true},
    ActivationEntry{"cart_tanh", p_cart_tanh, {}, true},
    ActivationEntry{"cart_selu", p_cart_selu, {}, true},
    ActivationEntry{"cart_elu", p_cart_elu, {}, true},
    ActivationEntry{"cart_leaky_relu", p_cart_leaky, {}, true},
    ActivationEntry{"cart_softplus", p_cart_softplus, {}, true},
    ActivationEntry{"pol_tanh", p_pol_tanh, {}, true},
    ActivationEntry{"pol_sigmoid", p_pol_sigmoid, {}, true},
    ActivationEntry{"pol_selu", p_pol_selu, {}, true},
    ActivationEntry{"modrelu", p_modrelu, {}, true},
    ActivationEntry{"zrelu", p_zrelu, {}, false},
    ActivationEntry{"complex_cardioid", p_cardioid, {}, true},
    ActivationEntry{"cart_softmax", nullptr, RowKind::cart_softmax, true},
    ActivationEntry{"cast_to_real", nullptr, RowKind::cast_to_real, true},
    ActivationEntry{"convert_to_real_with_abs", nullptr, RowKind::abs, true},
    ActivationEntry{"sigmoid_real", nullptr, RowKind::sigmoid_real, true},
    ActivationEntry{"softmax_real_with_abs", nullptr, RowKind::softmax_abs, true},
    ActivationEntry{"softmax_real_with_avg", nullptr, RowKind::softmax_avg_parts, true},
    ActivationEntry{"softmax_real_with_mult", nullptr, RowKind::softmax_mult_parts, true},
    ActivationEntry{"softmax_real_with_polar", nullptr, RowKind::softmax_polar, true},
};

const ActivationEntry* find_entry(std::string_view name) {
  for (const auto& e : kTable)
    if (name == e.name) return &e;
  return nullptr;
}

// dL/din for out = softmax(in), given g = dL/dout.
void softmax_vjp(std::span<const double> s, std::span<const double> g, std::span<double> out) {
  double dot = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) dot += s[k] * g[k];
  for (std::size_t k = 0; k < s.size(); ++k) out[k] = s[k] * (g[k] - dot);
}

std::size_t row_width(const CTensor& z) {
  if (z.shape().rank() == 0 || z.shape().back() == 0)
    throw DimensionError("softmax activation needs a class axis of extent >= 1, got " + z.shape().to_string());
  return z.shape().back();
}

// Forward of a row-wise map. In real mode the input is real and the
// complex-to-real maps reduce to their plain real versions.
CTensor row_forward(RowKind kind, const CTensor& z, bool real_mode) {
  CTensor out(z.shape());
  auto o = out.data();
  auto in = z.data();
  if (real_mode) {
    switch (kind) {
      case RowKind::cast_to_real:
      case RowKind::abs:
        for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i].real();
        return out.mark_real_only();
      case RowKind::sigmoid_real:
        for (std::size_t i = 0; i < in.size(); ++i) o[i] = r_sigmoid(in[i].real()).f;
        return out.mark_real_only();
      default: {
        const std::size_t w = row_width(z);
        std::vector<double> a(w), s(w);
        for (std::size_t r = 0; r < in.size() / w; ++r) {
          for (std::size_t k = 0; k < w; ++k) a[k] = in[r * w + k].real();
          softmax_row(a, s);
          for (std::size_t k = 0; k < w; ++k) o[r * w + k] = s[k];
        }
        return out.mark_real_only();
      }
    }
  }

  switch (kind) {
    case RowKind::cast_to_real:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i].real();
      return out.mark_real_only();
    case RowKind::abs:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::abs(in[i]);
      return out.mark_real_only();
    case RowKind::sigmoid_real:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = r_sigmoid(in[i].real() + in[i].imag()).f;
      return out.mark_real_only();
    default:
      break;
  }

  const std::size_t w = row_width(z);
  std::vector<double> a(w), b(w), sa(w), sb(w);
  for (std::size_t r = 0; r < in.size() / w; ++r) {
    const cplx* zr = in.data() + r * w;
    cplx* orow = o.data() + r * w;
    switch (kind) {
      case RowKind::softmax_abs:
        for (std::size_t k = 0; k < w; ++k) a[k] = std::abs(zr[k]);
        softmax_row(a, sa);
        for (std::size_t k = 0; k < w; ++k) orow[k] = sa[k];
        break;
      case RowKind::softmax_mult_parts:
        for (std::size_t k = 0; k < w; ++k) a[k] = zr[k].real() * zr[k].imag();
        softmax_row(a, sa);
        for (std::size_t k = 0; k < w; ++k) orow[k] = sa[k];
        break;
      case RowKind::softmax_avg_parts:
      case RowKind::softmax_polar:
      case RowKind::cart_softmax:
        for (std::size_t k = 0; k < w; ++k) {
          if (kind == RowKind::softmax_polar) {
            a[k] = std::abs(zr[k]);
            b[k] = arg0(zr[k]);
          } else {
            a[k] = zr[k].real();
            b[k] = zr[k].imag();
          }
        }
        softmax_row(a, sa);
        softmax_row(b, sb);
        for (std::size_t k = 0; k < w; ++k)
          orow[k] = kind == RowKind::cart_softmax ? cplx(sa[k], sb[k]) : cplx(0.5 * (sa[k] + sb[k]), 0.0);
        break;
      default:
        break;
    }
  }
  if (kind != RowKind::cart_softmax) out.mark_real_only();
  return out;
}

// Wirtinger gradient of the input given the upstream gradient 2 dL/d(conj y).
// For a real output y the upstream value is dL/dy; its imaginary part is
// discarded.
CTensor row_backward(RowKind kind, const CTensor& z, const CTensor& grad_y, bool real_mode) {
  CTensor gz(z.shape());
  auto o = gz.data();
  auto in = z.data();
  auto gy = grad_y.data();

  if (real_mode) {
    switch (kind) {
      case RowKind::cast_to_real:
      case RowKind::abs:
        for (std::size_t i = 0; i < in.size(); ++i) o[i] = gy[i].real();
        return gz;
      case RowKind::sigmoid_real:
        for (std::size_t i = 0; i < in.size(); ++i) o[i] = gy[i].real() * r_sigmoid(in[i].real()).df;
        return gz;
      default: {
        const std::size_t w = row_width(z);
        std::vector<double> a(w), s(w), g(w), d(w);
        for (std::size_t r = 0; r < in.size() / w; ++r) {
          for (std::size_t k = 0; k < w; ++k) {
            a[k] = in[r * w + k].real();
            g[k] = gy[r * w + k].real();
          }
          softmax_row(a, s);
          softmax_vjp(s, g, d);
          for (std::size_t k = 0; k < w; ++k) o[r * w + k] = d[k];
        }
        return gz;
      }
    }
  }

  switch (kind) {
    case RowKind::cast_to_real:
      for (std::size_t i = 0; i < in.size(); ++i) o[i] = gy[i].real();
      return gz;
    case RowKind::abs:
      for (std::size_t i = 0; i < in.size(); ++i) {
        const double rho = std::abs(in[i]);
        o[i] = rho == 0.0 ? cplx{} : gy[i].real() * in[i] / rho;
      }
      return gz;
    case RowKind::sigmoid_real:
      for (std::size_t i = 0; i < in.size(); ++i) {
        const double d = gy[i].real() * r_sigmoid(in[i].real() + in[i].imag()).df;
        o[i] = {d, d};
      }
      return gz;
    default:
      break;
  }

  const std::size_t w = row_width(z);
  std::vector<double> a(w), b(w), sa(w), sb(w), ga(w), gb(w), da(w), db(w);
  for (std::size_t r = 0; r < in.size() / w; ++r) {
    const cplx* zr = in.data() + r * w;
    const cplx* gr = gy.data() + r * w;
    cplx* orow = o.data() + r * w;
    switch (kind) {
      case RowKind::softmax_abs:
        for (std::size_t k = 0; k < w; ++k) {
          a[k] = std::abs(zr[k]);
          ga[k] = gr[k].real();
        }
        softmax_row(a, sa);
        softmax_vjp(sa, ga, da);
        for (std::size_t k = 0; k < w; ++k) orow[k] = a[k] == 0.0 ? cplx{} : da[k] * zr[k] / a[k];
        break;
      case RowKind::softmax_mult_parts:
        for (std::size_t k = 0; k < w; ++k) {
          a[k] = zr[k].real() * zr[k].imag();
          ga[k] = gr[k].real();
        }
        softmax_row(a, sa);
        softmax_vjp(sa, ga, da);
        // grad of x*y is y + i x
        for (std::size_t k = 0; k < w; ++k) orow[k] = da[k] * cplx(zr[k].imag(), zr[k].real());
        break;
      case RowKind::softmax_avg_parts:
        for (std::size_t k = 0; k < w; ++k) {
          a[k] = zr[k].real();
          b[k] = zr[k].imag();
          ga[k] = 0.5 * gr[k].real();
        }
        softmax_row(a, sa);
        softmax_row(b, sb);
        softmax_vjp(sa, ga, da);
        softmax_vjp(sb, ga, db);
        for (std::size_t k = 0; k < w; ++k) orow[k] = {da[k], db[k]};
        break;
      case RowKind::softmax_polar:
        for (std::size_t k = 0; k < w; ++k) {
          a[k] = std::abs(zr[k]);
          b[k] = arg0(zr[k]);
          ga[k] = 0.5 * gr[k].real();
        }
        softmax_row(a, sa);
        softmax_row(b, sb);
        softmax_vjp(sa, ga, da);
        softmax_vjp(sb, ga, db);
        // grad |z| = z/|z|, grad arg z = i z / |z|^2
        for (std::size_t k = 0; k < w; ++k) {
          if (a[k] == 0.0) {
            orow[k] = {};
          } else {
            orow[k] = da[k] * zr[k] / a[k] + db[k] * cplx(-zr[k].imag(), zr[k].real()) / (a[k] * a[k]);
          }
        }
        break;
      case RowKind::cart_softmax:
        for (std::size_t k = 0; k < w; ++k) {
          a[k] = zr[k].real();
          b[k] = zr[k].imag();
          ga[k] = gr[k].real();
          gb[k] = gr[k].imag();
        }
        softmax_row(a, sa);
        softmax_row(b, sb);
        softmax_vjp(sa, ga, da);
        softmax_vjp(sb, gb, db);
        for (std::size_t k = 0; k < w; ++k) orow[k] = {da[k], db[k]};
        break;
      default:
        break;
    }
  }
  return gz;
}

template <class F>
CTensor map_each(const CTensor& z, F&& f) {
  CTensor out(z.shape());
  auto o = out.data();
  auto in = z.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

}  // namespace

void softmax_row(std::span<const double> in, std::span<double> out) {
  if (in.empty()) return;
  const double m = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    out[k] = std::exp(in[k] - m);
    sum += out[k];
  }
  for (std::size_t k = 0; k < in.size(); ++k) out[k] /= sum;
}

CTensor type_a(const RealFn& sigma_re, const RealFn& sigma_im, const CTensor& z) {
  return map_each(z, [&](cplx v) { return cplx(sigma_re(v.real()), sigma_im(v.imag())); });
}

CTensor type_b(const RealFn& sigma_r, const RealFn& sigma_phi, const CTensor& z) {
  return map_each(z, [&](cplx v) { return std::polar(sigma_r(std::abs(v)), sigma_phi(arg0(v))); });
}

CTensor zrelu(const CTensor& z) {
  return map_each(z, [](cplx v) { return p_zrelu(v, {}).value; });
}

CTensor modrelu(const CTensor& z, double b) {
  const std::array<double, 1> p{b};
  return map_each(z, [&](cplx v) { return p_modrelu(v, p).value; });
}

CTensor cardioid(const CTensor& z) {
  return map_each(z, [](cplx v) { return p_cardioid(v, {}).value; });
}

CTensor real_output(RealOutputKind kind, const CTensor& z) {
  return row_forward(static_cast<RowKind>(kind), z, false);
}

Activation::Activation(ActivationSpec spec) : spec_(std::move(spec)), entry_(find_entry(spec_.name)) {
  if (entry_ == nullptr) throw ConfigError("unknown activation '" + spec_.name + "'");
}

bool Activation::elementwise() const noexcept { return entry_->point != nullptr; }

bool Activation::real_output() const noexcept { return !elementwise() && entry_->row != RowKind::cart_softmax; }

bool Activation::has_real_counterpart() const noexcept { return entry_->real_counterpart; }

Pointwise Activation::pointwise(cplx z) const {
  if (!elementwise()) throw UnsupportedOpError("activation '" + spec_.name + "' is not elementwise");
  return entry_->point(z, spec_.params);
}

Pointwise Activation::pointwise_real(double x) const {
  const Pointwise p = pointwise({x, 0.0});
  const double d = 0.5 * (p.d_z + p.d_zbar).real();
  return {p.value.real(), d, d};
}

CTensor Activation::forward(const CTensor& z, bool real_mode) const {
  if (!elementwise()) return row_forward(entry_->row, z, real_mode);
  const PointFn f = entry_->point;
  const std::span<const double> p = spec_.params;
  if (real_mode) {
    CTensor out = map_each(z, [&](cplx v) { return cplx(f({v.real(), 0.0}, p).value.real(), 0.0); });
    return out.mark_real_only();
  }
  return map_each(z, [&](cplx v) { return f(v, p).value; });
}

CTensor Activation::backward(const CTensor& z, const CTensor& grad_y, bool real_mode) const {
  if (z.shape() != grad_y.shape())
    throw DimensionError("activation gradient shape " + grad_y.shape().to_string() + " != input shape " +
                         z.shape().to_string());
  if (!elementwise()) return row_backward(entry_->row, z, grad_y, real_mode);
  const PointFn f = entry_->point;
  const std::span<const double> p = spec_.params;
  CTensor gz(z.shape());
  auto o = gz.data();
  auto in = z.data();
  auto gy = grad_y.data();
  if (real_mode) {
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Pointwise q = f({in[i].real(), 0.0}, p);
      o[i] = gy[i].real() * (q.d_z + q.d_zbar).real();
    }
    return gz;
  }
  // grad_x = grad_y * conj(df/dz) + conj(grad_y) * df/dzbar
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Pointwise q = f(in[i], p);
    o[i] = cmul_conj(gy[i], q.d_z) + cmul(std::conj(gy[i]), q.d_zbar);
  }
  return gz;
}

std::vector<std::string> activation_names() {
  std::vector<std::string> out;
  for (const auto& e : kTable) out.emplace_back(e.name);
  return out;
}

bool is_activation(std::string_view name) { return find_entry(name) != nullptr; }

}  // namespace cvnn
