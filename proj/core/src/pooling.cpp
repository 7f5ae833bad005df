#include <algorithm>
#include <cmath>

#include "cvnn/error.hpp"
#include "cvnn/layers.hpp"
#include "image.hpp"

namespace cvnn {

using detail::image_dims;
using detail::ImageDims;

namespace {

std::size_t pooled_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw DimensionError("pool window and stride must be >= 1");
  if (window > in)
    throw DimensionError("pool window " + std::to_string(window) + " exceeds input extent " + std::to_string(in));
  return (in - window) / stride + 1;
}

}  // namespace

CTensor dropout_forward(const CTensor& x, double rate, bool training, CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  CTensor out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = rng.bernoulli(keep) ? in[i] / keep : cplx{};
  return out;
}

MaxPoolResult max_pool2d(const CTensor& x, const PoolSpec& spec) {
  const ImageDims d = image_dims(x.shape(), "max_pool2d");
  const std::size_t ho = pooled_extent(d.h, spec.ph, spec.sh);
  const std::size_t wo = pooled_extent(d.w, spec.pw, spec.sw);
  MaxPoolResult r{CTensor(d.shape(ho, wo, d.c)), ArgmaxMap{x.shape(), {}}};
  r.argmax.indices.resize(r.values.size());
  auto o = r.values.data();
  auto in = x.data();
  std::size_t k = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t c = 0; c < d.c; ++c, ++k) {
          std::size_t best = d.index(n, oy * spec.sh, ox * spec.sw, c);
          double best_norm = std::norm(in[best]);
          for (std::size_t a = 0; a < spec.ph; ++a)
            for (std::size_t b = 0; b < spec.pw; ++b) {
              const std::size_t idx = d.index(n, oy * spec.sh + a, ox * spec.sw + b, c);
              const double v = std::norm(in[idx]);
              if (v > best_norm) {
                best_norm = v;
                best = idx;
              }
            }
          o[k] = in[best];
          r.argmax.indices[k] = best;
        }
  return r;
}

CTensor avg_pool2d(const CTensor& x, const PoolSpec& spec) {
  if (spec.mode == PoolMode::max_modulus) return max_pool2d(x, spec).values;
  const ImageDims d = image_dims(x.shape(), "avg_pool2d");
  const std::size_t ho = pooled_extent(d.h, spec.ph, spec.sh);
  const std::size_t wo = pooled_extent(d.w, spec.pw, spec.sw);
  CTensor out(d.shape(ho, wo, d.c));
  auto o = out.data();
  auto in = x.data();
  const double count = static_cast<double>(spec.ph * spec.pw);
  std::size_t k = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t c = 0; c < d.c; ++c, ++k) {
          cplx sum{}, unit{};
          double mod = 0.0;
          std::size_t nonzero = 0;
          for (std::size_t a = 0; a < spec.ph; ++a)
            for (std::size_t b = 0; b < spec.pw; ++b) {
              const cplx z = in[d.index(n, oy * spec.sh + a, ox * spec.sw + b, c)];
              sum += z;
              const double r = std::abs(z);
              mod += r;
              if (r > 0.0) {
                unit += z / r;
                ++nonzero;
              }
            }
          switch (spec.mode) {
            case PoolMode::avg_arithmetic:
              o[k] = sum / count;
              break;
            case PoolMode::avg_circular:
              o[k] = nonzero ? unit / static_cast<double>(nonzero) : cplx{};
              break;
            case PoolMode::avg_circular_norm: {
              const double r = std::abs(unit);
              o[k] = r > 0.0 ? (mod / count) * unit / r : cplx{};
              break;
            }
            default:
              break;
          }
        }
  return out;
}

CTensor unpool2d(const CTensor& values, const ArgmaxMap& argmax) {
  if (values.size() != argmax.indices.size())
    throw IntegrityError("argmax map has " + std::to_string(argmax.indices.size()) + " entries for " +
                         std::to_string(values.size()) + " values");
  CTensor out(argmax.input_shape);
  auto o = out.data();
  auto v = values.data();
  std::vector<bool> seen(out.size(), false);
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::size_t idx = argmax.indices[k];
    if (idx >= out.size())
      throw IntegrityError("argmax index " + std::to_string(idx) + " outside output of " +
                           std::to_string(out.size()) + " elements");
    if (seen[idx]) throw IntegrityError("duplicate argmax index " + std::to_string(idx));
    seen[idx] = true;
    o[idx] = v[k];
  }
  return out;
}

CTensor unpool2d(const CTensor& values, const ArgmaxMap& argmax, std::size_t fh, std::size_t fw) {
  const ImageDims d = image_dims(values.shape(), "unpool2d");
  if (fh == 0 || fw == 0) throw DimensionError("unpool factor must be >= 1");
  ArgmaxMap m{d.shape(d.h * fh, d.w * fw, d.c), argmax.indices};
  return unpool2d(values, m);
}

namespace {

// Source taps along one axis for half-pixel bilinear interpolation.
struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5);
    const auto i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

CTensor upsample2d(const CTensor& x, std::size_t fh, std::size_t fw, Interpolation mode) {
  if (fh == 0 || fw == 0) throw DimensionError("upsampling factor must be >= 1");
  const ImageDims d = image_dims(x.shape(), "upsample2d");
  const std::size_t ho = d.h * fh, wo = d.w * fw;
  CTensor out(d.shape(ho, wo, d.c));
  auto o = out.data();
  auto in = x.data();
  if (mode == Interpolation::nearest) {
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx)
          for (std::size_t c = 0; c < d.c; ++c)
            o[((n * ho + y) * wo + xx) * d.c + c] = in[d.index(n, y / fh, xx / fw, c)];
  } else {
    const auto ty = bilinear_taps(d.h, fh);
    const auto tx = bilinear_taps(d.w, fw);
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx)
          for (std::size_t c = 0; c < d.c; ++c) {
            const Tap& a = ty[y];
            const Tap& b = tx[xx];
            const cplx top = (1.0 - b.w1) * in[d.index(n, a.i0, b.i0, c)] + b.w1 * in[d.index(n, a.i0, b.i1, c)];
            const cplx bot = (1.0 - b.w1) * in[d.index(n, a.i1, b.i0, c)] + b.w1 * in[d.index(n, a.i1, b.i1, c)];
            o[((n * ho + y) * wo + xx) * d.c + c] = (1.0 - a.w1) * top + a.w1 * bot;
          }
  }
  if (x.real_only()) out.mark_real_only();
  return out;
}

CTensor conv2d_transpose(const CTensor& x, const CTensor& kernels, Stride2 stride) {
  const ImageDims d = image_dims(x.shape(), "conv2d_transpose");
  const auto& ks = kernels.shape();
  if (ks.rank() != 4 || ks[3] != d.c)
    throw DimensionError("conv2d_transpose expects kh x kw x Cout x Cin kernels with Cin = " + std::to_string(d.c) +
                         ", got " + ks.to_string());
  if (stride.rows == 0 || stride.cols == 0) throw DimensionError("stride must be >= 1");
  const std::size_t kh = ks[0], kw = ks[1], co = ks[2];
  const std::size_t ho = (d.h - 1) * stride.rows + kh;
  const std::size_t wo = (d.w - 1) * stride.cols + kw;
  CTensor out(d.shape(ho, wo, co));
  auto o = out.data();
  auto in = x.data();
  auto k = kernels.data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t i = 0; i < d.h; ++i)
      for (std::size_t j = 0; j < d.w; ++j)
        for (std::size_t a = 0; a < kh; ++a)
          for (std::size_t b = 0; b < kw; ++b) {
            cplx* dst = o.data() + ((n * ho + i * stride.rows + a) * wo + j * stride.cols + b) * co;
            const cplx* kab = k.data() + (a * kw + b) * co * d.c;
            const cplx* src = in.data() + d.index(n, i, j, 0);
            for (std::size_t f = 0; f < co; ++f)
              for (std::size_t c = 0; c < d.c; ++c) dst[f] += cmul(src[c], kab[f * d.c + c]);
          }
  return out;
}

std::array<double, 3> inverse_sqrt_2x2(double a, double b, double c) {
  const double det = a * c - b * b;
  if (!(det > 0.0) || !(a > 0.0))
    throw SingularityError("2x2 matrix is not positive definite (det " + std::to_string(det) + ")", 0);
  const double s = std::sqrt(det);
  const double t = std::sqrt(a + c + 2.0 * s);
  const double den = s * t;
  return {(c + s) / den, -b / den, (a + s) / den};
}

}  // namespace cvnn
