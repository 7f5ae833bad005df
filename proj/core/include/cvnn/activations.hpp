#pragma once

// Complex activation functions.
//
// Elementwise activations are described by a pointwise rule returning the
// value together with its two Wirtinger partials (df/dz, df/dzbar); the same
// rule drives the forward pass, layer backpropagation and the scalar autodiff
// primitives. Complex-to-real output activations act on rows along the last
// axis and provide their own vector-Jacobian product.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvnn/ctensor.hpp"

namespace cvnn {

/// Value of an elementwise map plus its Wirtinger partials at one point.
struct Pointwise {
  cplx value;
  cplx d_z;
  cplx d_zbar;
};

using RealFn = std::function<double(double)>;

/// sigma_re(Re z) + i sigma_im(Im z)
CTensor type_a(const RealFn& sigma_re, const RealFn& sigma_im, const CTensor& z);
/// sigma_r(|z|) * exp(i sigma_phi(arg z)), with arg(0) = 0.
CTensor type_b(const RealFn& sigma_r, const RealFn& sigma_phi, const CTensor& z);

/// z where 0 < arg z < pi/2 (strict), else 0.
CTensor zrelu(const CTensor& z);
/// ReLU(|z| + b) z / |z|; 0 at the origin.
CTensor modrelu(const CTensor& z, double b);
/// (1 + cos arg z) z / 2
CTensor cardioid(const CTensor& z);

enum class RealOutputKind {
  cast_to_real,
  abs,
  softmax_abs,
  softmax_avg_parts,
  softmax_mult_parts,
  softmax_polar,
  sigmoid_real,
};

/// Complex-to-real map; softmax variants normalize along the last axis.
CTensor real_output(RealOutputKind kind, const CTensor& z);

/// Numerically stable softmax of one row.
void softmax_row(std::span<const double> in, std::span<double> out);

/// Name from the dispatch table plus optional scalar parameters
/// (modrelu: {b}; cart_leaky_relu: {slope}).
struct ActivationSpec {
  std::string name = "linear";
  std::vector<double> params;

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

struct ActivationEntry;

/// A resolved dispatch-table entry bound to its parameters.
class Activation {
 public:
  /// Throws ConfigError for names missing from the table.
  explicit Activation(ActivationSpec spec);

  const ActivationSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }
  bool elementwise() const noexcept;
  bool real_output() const noexcept;
  /// False for activations that collapse on the real axis (zrelu).
  bool has_real_counterpart() const noexcept;

  /// Elementwise activations only.
  Pointwise pointwise(cplx z) const;
  /// Pointwise rule restricted to the real axis: Re sigma(x), with both
  /// partials equal to d/dx Re sigma(x) / 2.
  Pointwise pointwise_real(double x) const;

  /// In real mode the input is real-valued and the output keeps im == 0.
  CTensor forward(const CTensor& z, bool real_mode = false) const;

  /// Maps the upstream gradient 2 dL/d(conj y) to 2 dL/d(conj z).
  CTensor backward(const CTensor& z, const CTensor& grad_y, bool real_mode = false) const;

 private:
  ActivationSpec spec_;
  const ActivationEntry* entry_;
};

/// Registered names in table order.
std::vector<std::string> activation_names();
bool is_activation(std::string_view name);

}  // namespace cvnn
