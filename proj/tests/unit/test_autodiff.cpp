#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cvnn/activations.hpp"
#include "cvnn/autodiff.hpp"
#include "cvnn/error.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace cvnn;
using cvnn::test::random_vector;

namespace {

// f(x, y) = x^2 y + y + 2
Program golden_program() {
  Program p;
  Var x = p.input(), y = p.input();
  (void)(x * x * y + y + cplx(2.0));
  return p;
}

// Re(z1 z2) + Im(z1 z2) = ac - bd + ad + bc
Program product_program() {
  Program p;
  Var z1 = p.input(), z2 = p.input();
  Var m = z1 * z2;
  (void)(ad::re(m) + ad::im(m));
  return p;
}

std::vector<cplx> reverse(const Program& p, std::span<const cplx> point) { return test::reverse_at(p, point); }

double program_value(const Program& p, std::span<const cplx> point) { return test::program_value(p, point); }

}  // namespace

TEST(ForwardMode, GoldenPolynomialWrtX) {
  const Program f = golden_program();
  const cplx pt[] = {3.0, 4.0};
  const auto r = forward_derivative(f, pt, 0, Epsilon::real_axis());
  EXPECT_EQ(r.value, cplx(42.0));
  EXPECT_EQ(r.derivative, cplx(24.0));
}

TEST(ForwardMode, GoldenPolynomialWrtY) {
  const Program f = golden_program();
  const cplx pt[] = {3.0, 4.0};
  const auto r = forward_derivative(f, pt, 1, Epsilon::real_axis());
  EXPECT_EQ(r.value, cplx(42.0));
  EXPECT_EQ(r.derivative, cplx(10.0));
}

TEST(ForwardMode, ReluAtZeroIsRightSided) {
  Program p;
  Var x = p.input();
  (void)ad::max(x, 0.0);
  const cplx pt[] = {0.0};
  const auto r = forward_derivative(p, pt, 0, Epsilon::real_axis());
  EXPECT_EQ(r.value, cplx(0.0));
  EXPECT_EQ(r.derivative, cplx(1.0));

  Program q;
  Var y = q.input();
  (void)ad::re(ad::activation("cart_relu", y));
  const auto s = forward_derivative(q, pt, 0, Epsilon::real_axis());
  EXPECT_EQ(s.value, cplx(0.0));
  EXPECT_EQ(s.derivative, cplx(1.0));
}

TEST(ForwardMode, EpsilonMustBeUnit) {
  EXPECT_THROW(Epsilon(cplx(2.0, 0.0)), ContractError);
  EXPECT_NO_THROW(Epsilon(cplx(1.0, 1.0) / std::sqrt(2.0)));
}

TEST(ForwardMode, UnknownPrimitiveThrowsAtEvaluation) {
  Program p;
  Var x = p.input();
  (void)p.apply("etf_tanh", {x});
  const cplx pt[] = {1.0};
  EXPECT_THROW(forward_derivative(p, pt, 0, Epsilon::real_axis()), UnsupportedOpError);
  EXPECT_THROW(record(p, pt), UnsupportedOpError);
}

TEST(Dual, ProductRuleIsExact) {
  CounterRng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto v = random_vector(4, rng, 5.0);
    const Dual a{v[0], v[1]}, b{v[2], v[3]};
    const Dual c = a * b;
    EXPECT_EQ(c.primal, cmul(v[0], v[2]));
    EXPECT_EQ(c.tangent, cmul(v[0], v[3]) + cmul(v[1], v[2]));
  }
}

TEST(Dual, DivisionByZeroThrows) { EXPECT_THROW(Dual({1.0, 0.0}) / Dual({0.0, 1.0}), SingularityError); }

TEST(ReverseMode, ComplexMultiplicationPartials) {
  CounterRng rng(12);
  const Program f = product_program();
  for (int i = 0; i < 5; ++i) {
    const auto pt = random_vector(2, rng, 3.0);
    const double a = pt[0].real(), b = pt[0].imag(), c = pt[1].real(), d = pt[1].imag();
    const auto g = reverse(f, pt);
    EXPECT_NEAR(std::abs(g[0] - cplx(c + d, c - d)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(g[1] - cplx(a + b, a - b)), 0.0, 1e-12);
  }
}

TEST(ReverseMode, ModulusSquared) {
  Program p;
  Var z = p.input();
  (void)ad::re(z * ad::conj(z));
  const cplx pt[] = {{1.0, 1.0}};
  const auto g = reverse(p, pt);
  EXPECT_NEAR(std::abs(g[0] - cplx(2, 2)), 0.0, 1e-14);
  const auto fd = finite_difference_gradient([&](std::span<const cplx> z) { return program_value(p, z); }, pt, 1e-6);
  EXPECT_NEAR(std::abs(g[0] - fd[0]), 0.0, 1e-7);
}

TEST(ReverseMode, RealPartOfSquare) {
  Program p;
  Var z = p.input();
  (void)ad::re(ad::pow(z, 2));
  const cplx pt[] = {2.0};
  const Tape t = record(p, pt);
  const auto r = reverse_gradient(t, t.nodes.size() - 1);
  EXPECT_NEAR(std::abs(r.adjoints[0].d_zbar - cplx(2.0)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(r.gradient[0] - cplx(4.0)), 0.0, 1e-14);
}

TEST(ReverseMode, ComplexOutputIsRejected) {
  Program p;
  Var z = p.input();
  (void)(z * cplx(0.0, 1.0));
  const cplx pt[] = {1.0};
  const Tape t = record(p, pt);
  EXPECT_THROW(reverse_gradient(t, t.nodes.size() - 1), ContractError);
}

TEST(FiniteDifference, Examples) {
  const cplx pt[] = {{1.0, 1.0}, {-2.0, 0.5}};
  const auto sq = finite_difference_gradient([](std::span<const cplx> z) { return std::norm(z[0]); }, pt, 1e-5);
  EXPECT_NEAR(std::abs(sq[0] - cplx(2, 2)), 0.0, 1e-7);
  const auto c = finite_difference_gradient([](std::span<const cplx>) { return 3.0; }, pt, 1e-5);
  EXPECT_EQ(c[0], cplx(0.0));
  EXPECT_EQ(c[1], cplx(0.0));
  const auto re = finite_difference_gradient([](std::span<const cplx> z) { return z[1].real(); }, pt, 1e-5);
  EXPECT_NEAR(std::abs(re[1] - cplx(1.0)), 0.0, 1e-10);
  EXPECT_EQ(re[0], cplx(0.0));
}

TEST(Primitives, HolomorphicHaveZeroConjugatePartial) {
  CounterRng rng(13);
  for (int i = 0; i < 50; ++i) {
    const auto v = random_vector(2, rng, 2.0);
    const double two[] = {2.0}, three[] = {3.0}, sc[] = {0.5, -1.5};
    EXPECT_EQ(evaluate_primitive("add", v, {}).d_zbar, (std::vector<cplx>{0.0, 0.0}));
    EXPECT_EQ(evaluate_primitive("sub", v, {}).d_zbar, (std::vector<cplx>{0.0, 0.0}));
    EXPECT_EQ(evaluate_primitive("mul", v, {}).d_zbar, (std::vector<cplx>{0.0, 0.0}));
    const std::span<const cplx> one(v.data(), 1);
    EXPECT_EQ(evaluate_primitive("exp", one, {}).d_zbar[0], cplx(0.0));
    EXPECT_EQ(evaluate_primitive("pow", one, two).d_zbar[0], cplx(0.0));
    EXPECT_EQ(evaluate_primitive("pow", one, three).d_zbar[0], cplx(0.0));
    EXPECT_EQ(evaluate_primitive("scale", one, sc).d_zbar[0], cplx(0.0));
    EXPECT_EQ(evaluate_primitive("neg", one, {}).d_zbar[0], cplx(0.0));
  }
}

namespace {

struct PrimitiveCase {
  std::string op;
  std::size_t arity;
  std::vector<double> params;
};

std::vector<PrimitiveCase> all_primitives() {
  std::vector<PrimitiveCase> out = {{"add", 2, {}},  {"sub", 2, {}},        {"mul", 2, {}}, {"div", 2, {}},
                                    {"neg", 1, {}},  {"conj", 1, {}},       {"scale", 1, {0.5, -2.0}},
                                    {"pow", 1, {3}}, {"abs", 1, {}},        {"exp", 1, {}}, {"log", 1, {}},
                                    {"sin", 1, {}},  {"cos", 1, {}},        {"re", 1, {}},  {"im", 1, {}},
                                    {"max", 1, {0.1}}};
  for (const auto& name : activation_names()) {
    const Activation a(ActivationSpec{name, name == "modrelu" ? std::vector<double>{-0.3} : std::vector<double>{}});
    if (a.elementwise()) out.push_back({name, 1, a.spec().params});
  }
  return out;
}

}  // namespace

// For each primitive g, f = Re g + 0.7 Im g is real; forward derivatives along
// 1 and i must assemble the reverse-mode gradient.
TEST(Primitives, ForwardDirectionsComposeToReverseGradient) {
  CounterRng rng(14);
  for (const auto& c : all_primitives()) {
    Program p;
    std::vector<Var> in;
    for (std::size_t k = 0; k < c.arity; ++k) in.push_back(p.input());
    Var g = p.apply(c.op, in, c.params);
    (void)(ad::re(g) + ad::im(g) * cplx(0.7));
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<cplx> pt = random_vector(c.arity, rng, 2.0);
      for (auto& z : pt)
        if (std::abs(z) < 0.2) z += cplx(0.5, 0.5);
      // stay away from the kinks of the ReLU family and max
      bool near_kink = false;
      for (auto z : pt) near_kink |= std::abs(z.real()) < 1e-3 || std::abs(z.imag()) < 1e-3 ||
                                     std::abs(z.real() - 0.1) < 1e-3 || std::abs(std::abs(z) - 0.3) < 1e-3;
      if (near_kink) continue;
      const auto rev = reverse(p, pt);
      for (std::size_t k = 0; k < c.arity; ++k) {
        const auto dx = forward_derivative(p, pt, k, Epsilon::real_axis());
        const auto dy = forward_derivative(p, pt, k, Epsilon::imag_axis());
        const cplx assembled = dx.derivative.real() + cplx(0, 1) * dy.derivative.real();
        EXPECT_LE(std::abs(assembled - rev[k]), 1e-9 * std::max(1.0, std::abs(rev[k]))) << c.op;
      }
    }
  }
}

TEST(ReverseMode, MatchesFiniteDifferencesOnRandomCompositions) {
  CounterRng rng(15);
  for (int i = 0; i < 200; ++i) {
    const Program p = test::random_composition(rng);
    const auto pt = random_vector(3, rng, 1.0);
    EXPECT_LT(test::composition_fd_error(p, pt), 1e-5) << "composition " << i;
  }
}

TEST(ReverseMode, ConjugationRuleHoldsAtEveryNode) {
  CounterRng rng(16);
  for (int i = 0; i < 100; ++i) {
    const Program p = test::random_composition(rng);
    const auto pt = random_vector(3, rng, 1.0);
    const Tape t = record(p, pt);
    const auto r = reverse_gradient(t, t.nodes.size() - 1);
    for (const auto& adj : r.adjoints) EXPECT_LT(std::abs(adj.d_zbar - std::conj(adj.d_z)), 1e-10);
  }
}

TEST(Tape, ParentsPrecedeChildren) {
  CounterRng rng(17);
  const Program p = test::random_composition(rng);
  const auto pt = random_vector(3, rng);
  const Tape t = record(p, pt);
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    for (auto parent : t.nodes[i].parents) EXPECT_LT(parent, i);
}

TEST(ConjugateSumConvention, MatchesTwiceRealPartDerivative) {
  // f(z) = z^2 at 1 + 2i: df/dz = 2z, d conj(f)/dz = 0.
  const cplx z(1.0, 2.0);
  const cplx g = detail::conjugate_sum_gradient(2.0 * z, 0.0);
  EXPECT_EQ(g, cplx(2.0, -4.0));
  Program p;
  Var v = p.input();
  (void)ad::re(ad::pow(v, 2));
  const cplx pt[] = {z};
  EXPECT_NEAR(std::abs(reverse(p, pt)[0] - g), 0.0, 1e-14);
}
