#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cvnn/ctensor.hpp"
#include "cvnn/error.hpp"
#include "oracles.hpp"

using namespace cvnn;
using cvnn::test::random_tensor;

namespace {

CTensor scalar(cplx z) { return CTensor(Shape{1}, {z}); }

CTensor naive_matmul(const CTensor& a, const CTensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  CTensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cplx acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += a.at({i, t}) * b.at({t, j});
      c.at({i, j}) = acc;
    }
  return c;
}

// Valid cross-correlation with explicit zero padding of `pad` cells on top/left.
CTensor naive_conv(const CTensor& x, const CTensor& k, std::size_t sh, std::size_t sw, std::size_t pad_r,
                   std::size_t pad_c, std::size_t oh, std::size_t ow) {
  const std::size_t h = x.shape()[0], w = x.shape()[1], cin = x.shape()[2];
  const std::size_t kh = k.shape()[0], kw = k.shape()[1], cout = k.shape()[3];
  CTensor y(Shape{oh, ow, cout});
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c)
      for (std::size_t o = 0; o < cout; ++o) {
        cplx acc = 0;
        for (std::size_t i = 0; i < kh; ++i)
          for (std::size_t j = 0; j < kw; ++j)
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const auto rr = static_cast<long>(r * sh + i) - static_cast<long>(pad_r);
              const auto cc = static_cast<long>(c * sw + j) - static_cast<long>(pad_c);
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
              acc += x.at({std::size_t(rr), std::size_t(cc), ci}) * k.at({i, j, ci, o});
            }
        y.at({r, c, o}) = acc;
      }
  return y;
}

double max_rel(const CTensor& a, const CTensor& b) {
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) scale = std::max(scale, std::abs(b[i]));
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst / std::max(scale, 1e-300);
}

}  // namespace

TEST(Elementwise, ConjIsInvolution) {
  const CTensor z = scalar({3, -2});
  EXPECT_EQ(conj(conj(z))[0], cplx(3, -2));
}

TEST(Elementwise, ProductByHand) {
  EXPECT_EQ((scalar({1, 2}) * scalar({3, 4}))[0], cplx(-5, 10));
}

TEST(Elementwise, ModulusSquaredIsReal) {
  EXPECT_EQ((scalar({3, 4}) * conj(scalar({3, 4})))[0], cplx(25, 0));
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(CTensor(Shape{2}) + CTensor(Shape{3}), DimensionError);
}

TEST(Elementwise, DivisionByZeroNamesIndex) {
  CTensor a(Shape{3}, cplx(1, 0));
  CTensor b(Shape{3}, {cplx(1, 0), cplx(2, 0), cplx(0, 0)});
  try {
    (void)(a / b);
    FAIL() << "expected SingularityError";
  } catch (const SingularityError& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(Elementwise, ScaleAndNeg) {
  CTensor a(Shape{2}, {cplx(1, 1), cplx(-2, 0.5)});
  const CTensor s = elementwise(ElementwiseOp::scale, a, cplx(0, 2));
  EXPECT_EQ(s[0], cplx(-2, 2));
  EXPECT_EQ(elementwise(ElementwiseOp::neg, a)[1], cplx(2, -0.5));
  EXPECT_EQ(elementwise(ElementwiseOp::exp, CTensor(Shape{1}))[0], cplx(1, 0));
}

TEST(ModulusArg, Examples) {
  CTensor a(Shape{3}, {cplx(0, 1), cplx(1, 1), cplx(0, 0)});
  const auto [m, p] = modulus_arg(a);
  EXPECT_TRUE(m.real_only());
  EXPECT_TRUE(p.real_only());
  EXPECT_DOUBLE_EQ(m[0].real(), 1.0);
  EXPECT_DOUBLE_EQ(p[0].real(), std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(m[1].real(), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(p[1].real(), std::numbers::pi / 4);
  EXPECT_EQ(m[2].real(), 0.0);
  EXPECT_EQ(p[2].real(), 0.0);
}

TEST(ModulusArg, NegativeRealAxisIsPi) { EXPECT_DOUBLE_EQ(arg0(cplx(-1, 0)), std::numbers::pi); }

TEST(RealOnly, MarkRejectsImaginaryParts) {
  CTensor a(Shape{2}, {cplx(1, 0), cplx(0, 1)});
  EXPECT_THROW(a.mark_real_only(), ContractError);
  EXPECT_TRUE(a.real_part().real_only());
  const double v[] = {1.0, 2.0};
  EXPECT_TRUE(CTensor::from_real(Shape{2}, v).real_only());
}

TEST(Matmul, IdentityAndImaginaryUnit) {
  CounterRng rng(1);
  const CTensor a = random_tensor(Shape{2, 3}, rng);
  CTensor eye(Shape{2, 2});
  eye.at({0, 0}) = eye.at({1, 1}) = 1.0;
  EXPECT_EQ(max_abs_diff(matmul(eye, a), a), 0.0);
  const CTensor i(Shape{1, 1}, {cplx(0, 1)});
  EXPECT_EQ(matmul(i, i)[0], cplx(-1, 0));
}

TEST(Matmul, MatchesTripleLoop) {
  CounterRng rng(2);
  const CTensor a = random_tensor(Shape{3, 4}, rng), b = random_tensor(Shape{4, 2}, rng);
  EXPECT_LE(max_rel(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, RandomSizesUpTo16) {
  CounterRng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = std::size_t(rng.uniform_int(1, 16)), k = std::size_t(rng.uniform_int(1, 16)),
               n = std::size_t(rng.uniform_int(1, 16));
    const CTensor a = random_tensor(Shape{m, k}, rng), b = random_tensor(Shape{k, n}, rng);
    EXPECT_LE(max_rel(matmul(a, b), naive_matmul(a, b)), 1e-12);
  }
}

TEST(Matmul, InnerMismatchThrows) { EXPECT_THROW(matmul(CTensor(Shape{2, 3}), CTensor(Shape{2, 3})), DimensionError); }

TEST(Conv2d, OneByOneIdentity) {
  CounterRng rng(4);
  const CTensor x = random_tensor(Shape{4, 5, 1}, rng);
  const CTensor k(Shape{1, 1, 1, 1}, cplx(1, 0));
  EXPECT_EQ(max_abs_diff(conv2d(x, k, {}, Padding::valid), x), 0.0);
}

TEST(Conv2d, HandSum) {
  const CTensor x(Shape{2, 2, 1}, cplx(1, 0));
  const CTensor k(Shape{2, 2, 1, 1}, cplx(0, 1));
  const CTensor y = conv2d(x, k, {}, Padding::valid);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], cplx(0, 4));
}

TEST(Conv2d, MatchesNaiveLoops) {
  CounterRng rng(5);
  const CTensor x = random_tensor(Shape{5, 5, 2}, rng), k = random_tensor(Shape{3, 3, 2, 1}, rng);
  EXPECT_LE(max_rel(conv2d(x, k, {}, Padding::valid), naive_conv(x, k, 1, 1, 0, 0, 3, 3)), 1e-12);
}

TEST(Conv2d, RandomStridesAndPadding) {
  CounterRng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto h = std::size_t(rng.uniform_int(3, 16)), w = std::size_t(rng.uniform_int(3, 16));
    const auto kh = std::size_t(rng.uniform_int(1, 3)), kw = std::size_t(rng.uniform_int(1, 3));
    const auto sh = std::size_t(rng.uniform_int(1, 3)), sw = std::size_t(rng.uniform_int(1, 3));
    const auto cin = std::size_t(rng.uniform_int(1, 3)), cout = std::size_t(rng.uniform_int(1, 3));
    const CTensor x = random_tensor(Shape{h, w, cin}, rng), k = random_tensor(Shape{kh, kw, cin, cout}, rng);
    const Padding pad = trial % 2 ? Padding::same : Padding::valid;
    const PadPlan pr = plan_padding(h, kh, sh, pad), pc = plan_padding(w, kw, sw, pad);
    const CTensor y = conv2d(x, k, {sh, sw}, pad);
    if (pad == Padding::valid) {
      EXPECT_EQ(pr.out, (h - kh) / sh + 1);
      EXPECT_EQ(pr.before, 0u);
    }
    EXPECT_LE(max_rel(y, naive_conv(x, k, sh, sw, pr.before, pc.before, pr.out, pc.out)), 1e-12);
  }
}

TEST(Conv2d, SamePaddingPreservesShape) {
  CounterRng rng(7);
  for (std::size_t n = 1; n <= 6; ++n)
    for (std::size_t kh = 1; kh <= n; ++kh) {
      const CTensor x = random_tensor(Shape{n, n + 1, 1}, rng), k = random_tensor(Shape{kh, kh, 1, 2}, rng);
      EXPECT_EQ(conv2d(x, k, {}, Padding::same).shape(), (Shape{n, n + 1, 2}));
    }
}

TEST(Conv2d, KernelLargerThanInputThrows) {
  EXPECT_THROW(conv2d(CTensor(Shape{2, 2, 1}), CTensor(Shape{3, 3, 1, 1}), {}, Padding::valid), DimensionError);
}

TEST(ConjugateProperties, DistributesOverArithmetic) {
  CounterRng rng(8);
  const CTensor z = random_tensor(Shape{1000}, rng, 10.0), w = random_tensor(Shape{1000}, rng, 10.0);
  const CTensor prod = conj(z * w), prod2 = conj(z) * conj(w);
  const CTensor sum = conj(z + w), sum2 = conj(z) + conj(w);
  const CTensor diff = conj(z - w), diff2 = conj(z) - conj(w);
  const CTensor zz = z * conj(z);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_EQ(conj(conj(z))[i], z[i]);
    EXPECT_LE(std::abs(prod[i] - prod2[i]), 4 * std::numeric_limits<double>::epsilon() * std::abs(prod[i]));
    EXPECT_EQ(sum[i], sum2[i]);
    EXPECT_EQ(diff[i], diff2[i]);
    EXPECT_LE(std::abs(zz[i].imag()), 1e-12 * std::max(1.0, zz[i].real()));
  }
}

TEST(Shape, Basics) {
  const Shape s{2, 3, 4};
  EXPECT_EQ(s.elements(), 24u);
  EXPECT_EQ(s.tail(), (Shape{3, 4}));
  EXPECT_EQ(s.tail().with_leading(5), (Shape{5, 3, 4}));
  EXPECT_EQ(Shape{}.elements(), 1u);
  EXPECT_THROW(CTensor(Shape{2, 2}, std::vector<cplx>(3)), DimensionError);
}

TEST(Slicing, RowsAndGather) {
  CounterRng rng(9);
  const CTensor a = random_tensor(Shape{4, 3}, rng);
  const CTensor s = a.slice_rows(1, 3);
  EXPECT_EQ(s.shape(), (Shape{2, 3}));
  EXPECT_EQ(s.at({0, 2}), a.at({1, 2}));
  const std::size_t rows[] = {3, 0};
  const CTensor g = a.gather_rows(rows);
  EXPECT_EQ(g.at({0, 1}), a.at({3, 1}));
  EXPECT_EQ(g.at({1, 1}), a.at({0, 1}));
}
