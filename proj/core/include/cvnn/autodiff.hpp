#pragma once

// Wirtinger-calculus differentiation of recorded scalar functions.
//
// Every primitive is described once by its value and the pair
// (d out / d arg, d out / d conj(arg)) for each argument. Forward mode pushes
// a dual tangent t through A*t + B*conj(t); reverse mode propagates adjoint
// pairs with the complex chain rule. Leaves receive the gradient
// 2 df/dzbar = df/dx + i df/dy.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cvnn/ctensor.hpp"

namespace cvnn {

/// a + b*eps with eps^2 = 0. The tangent is the derivative along a real step.
struct Dual {
  cplx primal;
  cplx tangent;

  friend Dual operator+(Dual a, Dual b) { return {a.primal + b.primal, a.tangent + b.tangent}; }
  friend Dual operator-(Dual a, Dual b) { return {a.primal - b.primal, a.tangent - b.tangent}; }
  friend Dual operator-(Dual a) { return {-a.primal, -a.tangent}; }
  /// (a, b)(c, d) = (ac, ad + bc)
  friend Dual operator*(Dual a, Dual b) {
    return {cmul(a.primal, b.primal), cmul(a.primal, b.tangent) + cmul(a.tangent, b.primal)};
  }
  /// Throws SingularityError when the divisor's primal is zero.
  friend Dual operator/(Dual a, Dual b);
  friend bool operator==(const Dual&, const Dual&) = default;
};

Dual conj(Dual a);
/// Image of `a` under a map with value v and partials (df/dz, df/dzbar) = (A, B).
Dual chain(Dual a, cplx value, cplx d_z, cplx d_zbar);

/// Unit direction of a forward-mode derivative.
class Epsilon {
 public:
  /// Throws ContractError unless |direction| == 1 (within 1e-12).
  explicit Epsilon(cplx direction);
  static Epsilon real_axis() { return Epsilon(1.0); }
  static Epsilon imag_axis() { return Epsilon(cplx(0.0, 1.0)); }
  cplx direction() const noexcept { return direction_; }

 private:
  cplx direction_;
};

class Program;

/// Handle to a node of a Program.
struct Var {
  Program* program = nullptr;
  std::size_t id = 0;
};

/// A scalar function recorded as a straight-line list of primitive calls.
///
/// Primitive names are resolved when the program is evaluated; an unknown
/// name raises UnsupportedOpError there. Registered names: add, sub, mul, div,
/// neg, conj, scale, pow, abs, exp, log, sin, cos, re, im, max, plus every
/// elementwise activation name.
class Program {
 public:
  struct Node {
    enum class Kind { input, constant, op };
    Kind kind = Kind::op;
    std::string op;
    std::vector<std::size_t> args;
    std::vector<double> params;
    cplx constant{};
    std::size_t input_index = 0;
  };

  Var input();
  Var constant(cplx value);
  Var apply(std::string op, std::vector<Var> args, std::vector<double> params = {});

  std::size_t num_inputs() const noexcept { return num_inputs_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  Var push(Node node);

  std::vector<Node> nodes_;
  std::size_t num_inputs_ = 0;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, cplx b);
Var operator*(Var a, cplx b);
Var operator*(cplx a, Var b);

namespace ad {
Var conj(Var a);
Var abs(Var a);
Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var cos(Var a);
Var re(Var a);
Var im(Var a);
Var pow(Var a, int n);
/// max(Re a, threshold); right-sided derivative at the threshold.
Var max(Var a, double threshold);
Var activation(const std::string& name, Var a, std::vector<double> params = {});
}  // namespace ad

/// Value and the two local Wirtinger partials per argument of one primitive.
struct LocalPartials {
  cplx value;
  std::vector<cplx> d_z;
  std::vector<cplx> d_zbar;
};

/// Evaluates a registered primitive; throws UnsupportedOpError for unknown names.
LocalPartials evaluate_primitive(const std::string& op, std::span<const cplx> args, std::span<const double> params);

struct DirectionalDerivative {
  cplx value;
  cplx derivative;
};

/// f(point) and d/dh f(point + h * eps * e_wrt) at h = 0 (h real). The output
/// of the program is its last node.
DirectionalDerivative forward_derivative(const Program& f, std::span<const cplx> point, std::size_t wrt_index,
                                         Epsilon epsilon);

/// Evaluated program: node values and local partials per parent.
struct Tape {
  struct Entry {
    std::vector<std::size_t> parents;
    std::vector<cplx> d_z;
    std::vector<cplx> d_zbar;
    cplx value;
    bool leaf = false;
    std::size_t input_index = 0;
  };
  std::vector<Entry> nodes;
  std::size_t num_inputs = 0;
};

Tape record(const Program& f, std::span<const cplx> point);

struct AdjointPair {
  cplx d_z;
  cplx d_zbar;
};

struct ReverseResult {
  /// Per node: (df/dnode, df/dconj(node)).
  std::vector<AdjointPair> adjoints;
  /// Per program input: 2 df/dzbar.
  std::vector<cplx> gradient;
};

/// Reverse sweep from `output`. The output must be real within 1e-9, else
/// ContractError. The seed is the pair of Re(out), (1/2, 1/2), so every node
/// satisfies d_zbar == conj(d_z).
ReverseResult reverse_gradient(const Tape& tape, std::size_t output);

using RealScalarFn = std::function<double(std::span<const cplx>)>;

/// Central differences along both axes: df/dx + i df/dy per coordinate.
std::vector<cplx> finite_difference_gradient(const RealScalarFn& f, std::span<const cplx> point, double h);

namespace detail {
/// Gradient reported for a C -> C map by the conj(df/dz + d conj(f)/dz)
/// convention, which equals 2 dRe(f)/dzbar.
cplx conjugate_sum_gradient(cplx d_z, cplx d_zbar) noexcept;
}  // namespace detail

}  // namespace cvnn
