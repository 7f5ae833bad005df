#include "cvnn/autodiff.hpp"

#include <cmath>

#include "cvnn/activations.hpp"
#include "cvnn/error.hpp"

namespace cvnn {

Dual operator/(Dual a, Dual b) {
  if (b.primal == cplx{}) throw SingularityError("dual division by zero", 0);
  const cplx inv = 1.0 / b.primal;
  const cplx q = cmul(a.primal, inv);
  return {q, cmul(a.tangent - cmul(q, b.tangent), inv)};
}

Dual conj(Dual a) { return {std::conj(a.primal), std::conj(a.tangent)}; }

Dual chain(Dual a, cplx value, cplx d_z, cplx d_zbar) {
  return {value, cmul(d_z, a.tangent) + cmul(d_zbar, std::conj(a.tangent))};
}

Epsilon::Epsilon(cplx direction) : direction_(direction) {
  if (std::abs(std::abs(direction) - 1.0) > 1e-12) throw ContractError("epsilon direction must have unit modulus");
}

Var Program::push(Node node) {
  for (std::size_t a : node.args)
    if (a >= nodes_.size()) throw ContractError("program argument refers to a later node");
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Program::input() {
  Node n;
  n.kind = Node::Kind::input;
  n.input_index = num_inputs_++;
  return push(std::move(n));
}

Var Program::constant(cplx value) {
  Node n;
  n.kind = Node::Kind::constant;
  n.constant = value;
  return push(std::move(n));
}

Var Program::apply(std::string op, std::vector<Var> args, std::vector<double> params) {
  Node n;
  n.op = std::move(op);
  n.params = std::move(params);
  for (const Var& v : args) {
    if (v.program != this) throw ContractError("variable belongs to another program");
    n.args.push_back(v.id);
  }
  return push(std::move(n));
}

namespace {
Program* owner(Var a, Var b) {
  if (a.program != b.program) throw ContractError("variables from different programs");
  return a.program;
}
}  // namespace

Var operator+(Var a, Var b) { return owner(a, b)->apply("add", {a, b}); }
Var operator-(Var a, Var b) { return owner(a, b)->apply("sub", {a, b}); }
Var operator*(Var a, Var b) { return owner(a, b)->apply("mul", {a, b}); }
Var operator/(Var a, Var b) { return owner(a, b)->apply("div", {a, b}); }
Var operator-(Var a) { return a.program->apply("neg", {a}); }
Var operator+(Var a, cplx b) { return a + a.program->constant(b); }
Var operator*(Var a, cplx b) { return a.program->apply("scale", {a}, {b.real(), b.imag()}); }
Var operator*(cplx a, Var b) { return b * a; }

namespace ad {
Var conj(Var a) { return a.program->apply("conj", {a}); }
Var abs(Var a) { return a.program->apply("abs", {a}); }
Var exp(Var a) { return a.program->apply("exp", {a}); }
Var log(Var a) { return a.program->apply("log", {a}); }
Var sin(Var a) { return a.program->apply("sin", {a}); }
Var cos(Var a) { return a.program->apply("cos", {a}); }
Var re(Var a) { return a.program->apply("re", {a}); }
Var im(Var a) { return a.program->apply("im", {a}); }
Var pow(Var a, int n) { return a.program->apply("pow", {a}, {static_cast<double>(n)}); }
Var max(Var a, double threshold) { return a.program->apply("max", {a}, {threshold}); }
Var activation(const std::string& name, Var a, std::vector<double> params) {
  return a.program->apply(name, {a}, std::move(params));
}
}  // namespace ad

namespace {

void expect_arity(const std::string& op, std::span<const cplx> args, std::size_t n) {
  if (args.size() != n)
    throw ContractError("primitive '" + op + "' takes " + std::to_string(n) + " argument(s), got " +
                        std::to_string(args.size()));
}

LocalPartials unary(cplx value, cplx a, cplx b) { return {value, {a}, {b}}; }

}  // namespace

LocalPartials evaluate_primitive(const std::string& op, std::span<const cplx> x, std::span<const double> p) {
  if (op == "add" || op == "sub" || op == "mul" || op == "div") {
    expect_arity(op, x, 2);
    const cplx a = x[0], b = x[1];
    if (op == "add") return {a + b, {1.0, 1.0}, {0.0, 0.0}};
    if (op == "sub") return {a - b, {1.0, -1.0}, {0.0, 0.0}};
    if (op == "mul") return {cmul(a, b), {b, a}, {0.0, 0.0}};
    if (b == cplx{}) throw SingularityError("division by zero in 'div'", 1);
    const cplx inv = 1.0 / b;
    const cplx q = cmul(a, inv);
    return {q, {inv, -cmul(q, inv)}, {0.0, 0.0}};
  }

  expect_arity(op, x, 1);
  const cplx z = x[0];
  if (op == "neg") return unary(-z, -1.0, 0.0);
  if (op == "conj") return unary(std::conj(z), 0.0, 1.0);
  if (op == "scale") {
    const cplx s(p.size() > 0 ? p[0] : 1.0, p.size() > 1 ? p[1] : 0.0);
    return unary(cmul(s, z), s, 0.0);
  }
  if (op == "pow") {
    const int n = p.empty() ? 1 : static_cast<int>(p[0]);
    if (n == 0) return unary(1.0, 0.0, 0.0);
    if (n < 0 && z == cplx{}) throw SingularityError("negative power of zero", 0);
    cplx pm1 = 1.0;  // z^(n-1)
    for (int k = 0; k < std::abs(n - 1); ++k) pm1 = cmul(pm1, z);
    if (n - 1 < 0) pm1 = 1.0 / pm1;
    return unary(cmul(pm1, z), static_cast<double>(n) * pm1, 0.0);
  }
  if (op == "abs") {
    const double r = std::abs(z);
    if (r == 0.0) return unary(0.0, 0.0, 0.0);
    return unary(r, std::conj(z) / (2.0 * r), z / (2.0 * r));
  }
  if (op == "exp") {
    const cplx e = std::exp(z);
    return unary(e, e, 0.0);
  }
  if (op == "log") {
    if (z == cplx{}) throw SingularityError("log of zero", 0);
    return unary(std::log(z), 1.0 / z, 0.0);
  }
  if (op == "sin") return unary(std::sin(z), std::cos(z), 0.0);
  if (op == "cos") return unary(std::cos(z), -std::sin(z), 0.0);
  if (op == "re") return unary(z.real(), 0.5, 0.5);
  if (op == "im") return unary(z.imag(), cplx(0.0, -0.5), cplx(0.0, 0.5));
  if (op == "max") {
    const double t = p.empty() ? 0.0 : p[0];
    if (z.real() >= t) return unary(z.real(), 0.5, 0.5);
    return unary(t, 0.0, 0.0);
  }
  if (is_activation(op)) {
    const Activation act(ActivationSpec{op, std::vector<double>(p.begin(), p.end())});
    if (act.elementwise()) {
      const Pointwise q = act.pointwise(z);
      return unary(q.value, q.d_z, q.d_zbar);
    }
  }
  throw UnsupportedOpError("primitive '" + op + "' is not registered for differentiation");
}

DirectionalDerivative forward_derivative(const Program& f, std::span<const cplx> point, std::size_t wrt_index,
                                         Epsilon epsilon) {
  const auto& nodes = f.nodes();
  if (nodes.empty()) throw ContractError("empty program");
  if (point.size() != f.num_inputs())
    throw DimensionError("program takes " + std::to_string(f.num_inputs()) + " inputs, got " +
                         std::to_string(point.size()));
  if (wrt_index >= point.size()) throw DimensionError("wrt index out of range");

  std::vector<Dual> v(nodes.size());
  std::vector<cplx> args;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    switch (n.kind) {
      case Program::Node::Kind::input:
        v[i] = {point[n.input_index], n.input_index == wrt_index ? epsilon.direction() : cplx{}};
        break;
      case Program::Node::Kind::constant:
        v[i] = {n.constant, {}};
        break;
      case Program::Node::Kind::op: {
        args.clear();
        for (std::size_t a : n.args) args.push_back(v[a].primal);
        const LocalPartials lp = evaluate_primitive(n.op, args, n.params);
        cplx t{};
        for (std::size_t k = 0; k < n.args.size(); ++k) {
          const cplx ta = v[n.args[k]].tangent;
          t += cmul(lp.d_z[k], ta) + cmul(lp.d_zbar[k], std::conj(ta));
        }
        v[i] = {lp.value, t};
        break;
      }
    }
  }
  return {v.back().primal, v.back().tangent};
}

Tape record(const Program& f, std::span<const cplx> point) {
  const auto& nodes = f.nodes();
  if (point.size() != f.num_inputs())
    throw DimensionError("program takes " + std::to_string(f.num_inputs()) + " inputs, got " +
                         std::to_string(point.size()));
  Tape tape;
  tape.num_inputs = f.num_inputs();
  tape.nodes.resize(nodes.size());
  std::vector<cplx> args;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    auto& e = tape.nodes[i];
    switch (n.kind) {
      case Program::Node::Kind::input:
        e.value = point[n.input_index];
        e.leaf = true;
        e.input_index = n.input_index;
        break;
      case Program::Node::Kind::constant:
        e.value = n.constant;
        break;
      case Program::Node::Kind::op: {
        args.clear();
        for (std::size_t a : n.args) args.push_back(tape.nodes[a].value);
        LocalPartials lp = evaluate_primitive(n.op, args, n.params);
        e.value = lp.value;
        e.parents = n.args;
        e.d_z = std::move(lp.d_z);
        e.d_zbar = std::move(lp.d_zbar);
        break;
      }
    }
  }
  return tape;
}

ReverseResult reverse_gradient(const Tape& tape, std::size_t output) {
  if (output >= tape.nodes.size()) throw DimensionError("output node out of range");
  const cplx out = tape.nodes[output].value;
  if (std::abs(out.imag()) >= 1e-9)
    throw ContractError("reverse_gradient needs a real-valued output, got imaginary part " +
                        std::to_string(out.imag()));

  ReverseResult r;
  r.adjoints.assign(tape.nodes.size(), AdjointPair{});
  r.gradient.assign(tape.num_inputs, cplx{});
  r.adjoints[output] = {0.5, 0.5};

  for (std::size_t i = output + 1; i-- > 0;) {
    const auto& e = tape.nodes[i];
    const AdjointPair g = r.adjoints[i];
    if (g.d_z == cplx{} && g.d_zbar == cplx{}) continue;
    for (std::size_t k = 0; k < e.parents.size(); ++k) {
      AdjointPair& pa = r.adjoints[e.parents[k]];
      // df/dp    += df/dc dc/dp    + df/dcbar conj(dc/dpbar)
      // df/dpbar += df/dc dc/dpbar + df/dcbar conj(dc/dp)
      pa.d_z += cmul(g.d_z, e.d_z[k]) + cmul_conj(g.d_zbar, e.d_zbar[k]);
      pa.d_zbar += cmul(g.d_z, e.d_zbar[k]) + cmul_conj(g.d_zbar, e.d_z[k]);
    }
  }
  for (std::size_t i = 0; i < tape.nodes.size(); ++i)
    if (tape.nodes[i].leaf) r.gradient[tape.nodes[i].input_index] += 2.0 * r.adjoints[i].d_zbar;
  return r;
}

std::vector<cplx> finite_difference_gradient(const RealScalarFn& f, std::span<const cplx> point, double h) {
  if (!(h > 0)) throw ContractError("finite difference step must be positive");
  std::vector<cplx> x(point.begin(), point.end());
  std::vector<cplx> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const cplx x0 = x[i];
    x[i] = x0 + h;
    const double fxp = f(x);
    x[i] = x0 - h;
    const double fxm = f(x);
    x[i] = x0 + cplx(0.0, h);
    const double fyp = f(x);
    x[i] = x0 - cplx(0.0, h);
    const double fym = f(x);
    x[i] = x0;
    g[i] = {(fxp - fxm) / (2.0 * h), (fyp - fym) / (2.0 * h)};
  }
  return g;
}

namespace detail {
cplx conjugate_sum_gradient(cplx d_z, cplx d_zbar) noexcept {
  // d conj(f)/dz = conj(df/dzbar)
  return std::conj(d_z + std::conj(d_zbar));
}
}  // namespace detail

}  // namespace cvnn
