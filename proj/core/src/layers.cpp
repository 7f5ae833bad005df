#include "cvnn/layers.hpp"

#include <cmath>

#include "cvnn/error.hpp"
#include "image.hpp"

namespace cvnn {

using detail::image_dims;
using detail::ImageDims;

void Layer::check_input(const CTensor& x) const {
  if (x.shape().rank() != in_shape_.rank() + 1 || x.shape().tail() != in_shape_)
    throw DimensionError(type() + " expects batches of " + in_shape_.to_string() + ", got " + x.shape().to_string());
}

std::vector<std::pair<std::string, CTensor*>> Layer::state() {
  std::vector<std::pair<std::string, CTensor*>> out;
  for (const Parameter& p : parameters()) out.emplace_back(p.name, p.value);
  return out;
}

std::unique_ptr<Layer> Layer::real_equivalent(double, bool) const {
  auto out = clone();
  out->set_real_mode(true);
  return out;
}

namespace {

std::size_t scaled_width(std::size_t width, double multiplier, bool is_output) {
  if (is_output) return width;
  const double w = std::round(static_cast<double>(width) * multiplier);
  return w < 1.0 ? 1 : static_cast<std::size_t>(w);
}

void check_real_counterpart(const Activation& act, const InitializerSpec& init) {
  if (!act.has_real_counterpart()) throw ConfigError("activation '" + act.name() + "' has no real-valued counterpart");
  if (!init.real && init.scheme == InitScheme::rayleigh_polar)
    throw ConfigError("initializer ComplexRayleighPolar has no real-valued counterpart");
}

InitializerSpec effective_init(const InitializerSpec& spec, bool real_mode) {
  if (real_mode && !spec.real) return real_equivalent_spec(spec);
  return spec;
}

nlohmann::json activation_json(const Activation& act) {
  nlohmann::json j = act.name();
  return j;
}

// Split-plane scratch so the inner loops are plain real arithmetic that the
// compiler vectorizes. Every output sums its terms in ascending index order.
struct Planes {
  std::vector<double> re, im;
  void resize(std::size_t n) {
    re.assign(n, 0.0);
    im.assign(n, 0.0);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(std::size_t units, ActivationSpec activation, InitializerSpec init, bool use_bias)
    : units_(units), act_(std::move(activation)), init_(init), use_bias_(use_bias) {
  if (units_ == 0) throw ConfigError("ComplexDense units must be >= 1");
  if (!act_.elementwise() && !act_.spec().params.empty()) throw ConfigError("row-wise activations take no parameters");
}

Shape Dense::build(const Shape& input_shape, std::uint64_t seed) {
  if (input_shape.rank() != 1) throw DimensionError("ComplexDense expects flat inputs, got " + input_shape.to_string());
  in_shape_ = input_shape;
  out_shape_ = Shape{units_};
  const std::size_t fan_in = input_shape[0];
  CounterRng rng(derive_key(seed, init_.seed));
  w_ = sample_weights(effective_init(init_, real_mode_), Shape{units_, fan_in}, FanPair{fan_in, units_}, rng);
  b_ = CTensor(Shape{units_});
  gw_ = CTensor(w_.shape());
  gb_ = CTensor(b_.shape());
  if (real_mode_) b_.mark_real_only();
  return out_shape_;
}

CTensor Dense::forward(const CTensor& x, bool) {
  check_input(x);
  const std::size_t n = x.shape()[0], fi = in_shape_[0], fo = units_;
  auto xd = x.data();
  auto wd = w_.data();
  auto bd = b_.data();

  // W transposed to [fan_in x fan_out]
  Planes wt;
  wt.resize(fi * fo);
  for (std::size_t o = 0; o < fo; ++o)
    for (std::size_t i = 0; i < fi; ++i) {
      wt.re[i * fo + o] = wd[o * fi + i].real();
      wt.im[i * fo + o] = wd[o * fi + i].imag();
    }

  CTensor v(Shape{n, fo});
  auto vd = v.data();
  std::vector<double> vr(fo), vi(fo);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(vr.begin(), vr.end(), 0.0);
    std::fill(vi.begin(), vi.end(), 0.0);
    const cplx* xs = xd.data() + s * fi;
    if (real_mode_) {
      for (std::size_t i = 0; i < fi; ++i) {
        const double xr = xs[i].real();
        const double* wr = wt.re.data() + i * fo;
        for (std::size_t o = 0; o < fo; ++o) vr[o] += xr * wr[o];
      }
    } else {
      for (std::size_t i = 0; i < fi; ++i) {
        const double xr = xs[i].real(), xi = xs[i].imag();
        const double* wr = wt.re.data() + i * fo;
        const double* wi = wt.im.data() + i * fo;
        for (std::size_t o = 0; o < fo; ++o) {
          vr[o] += wr[o] * xr - wi[o] * xi;
          vi[o] += wr[o] * xi + wi[o] * xr;
        }
      }
    }
    cplx* vs = vd.data() + s * fo;
    for (std::size_t o = 0; o < fo; ++o) vs[o] = use_bias_ ? cplx(vr[o], vi[o]) + bd[o] : cplx(vr[o], vi[o]);
  }
  if (real_mode_) v.mark_real_only();
  x_cache_ = x;
  v_cache_ = std::move(v);
  return act_.forward(v_cache_, real_mode_);
}

CTensor Dense::backward(const CTensor& grad_out) {
  if (v_cache_.empty()) throw ContractError("ComplexDense backward before forward");
  const CTensor gv = act_.backward(v_cache_, grad_out, real_mode_);
  const std::size_t n = x_cache_.shape()[0], fi = in_shape_[0], fo = units_;
  auto gvd = gv.data();
  auto xd = x_cache_.data();
  auto wd = w_.data();

  Planes x, w, gw;
  x.resize(n * fi);
  w.resize(fo * fi);
  gw.resize(fo * fi);
  for (std::size_t k = 0; k < n * fi; ++k) {
    x.re[k] = xd[k].real();
    x.im[k] = xd[k].imag();
  }
  for (std::size_t k = 0; k < fo * fi; ++k) {
    w.re[k] = wd[k].real();
    w.im[k] = wd[k].imag();
  }

  CTensor gx(x_cache_.shape());
  auto gxd = gx.data();
  std::vector<double> gxr(fi), gxi(fi);
  std::vector<cplx> gb(fo);

  for (std::size_t s = 0; s < n; ++s) {
    std::fill(gxr.begin(), gxr.end(), 0.0);
    std::fill(gxi.begin(), gxi.end(), 0.0);
    const double* xr = x.re.data() + s * fi;
    const double* xi = x.im.data() + s * fi;
    for (std::size_t o = 0; o < fo; ++o) {
      const double gr = gvd[s * fo + o].real();
      const double gi = real_mode_ ? 0.0 : gvd[s * fo + o].imag();
      gb[o] += gvd[s * fo + o];
      double* gwr = gw.re.data() + o * fi;
      double* gwi = gw.im.data() + o * fi;
      const double* wr = w.re.data() + o * fi;
      const double* wi = w.im.data() + o * fi;
      if (real_mode_) {
        for (std::size_t i = 0; i < fi; ++i) {
          gwr[i] += gr * xr[i];
          gxr[i] += gr * wr[i];
        }
      } else {
        // dW += g conj(x);  dx += g conj(W)
        for (std::size_t i = 0; i < fi; ++i) {
          gwr[i] += gr * xr[i] + gi * xi[i];
          gwi[i] += gi * xr[i] - gr * xi[i];
          gxr[i] += gr * wr[i] + gi * wi[i];
          gxi[i] += gi * wr[i] - gr * wi[i];
        }
      }
    }
    cplx* gxs = gxd.data() + s * fi;
    for (std::size_t i = 0; i < fi; ++i) gxs[i] = {gxr[i], gxi[i]};
  }

  auto gwd = gw_.data();
  for (std::size_t k = 0; k < fo * fi; ++k) gwd[k] = {gw.re[k], gw.im[k]};
  auto gbd = gb_.data();
  for (std::size_t o = 0; o < fo; ++o) gbd[o] = use_bias_ ? gb[o] : cplx{};
  return gx;
}

std::vector<Parameter> Dense::parameters() {
  std::vector<Parameter> p{{"kernel", &w_, &gw_, real_mode_}};
  if (use_bias_) p.push_back({"bias", &b_, &gb_, real_mode_});
  return p;
}

nlohmann::json Dense::config() const {
  return {{"type", type()},
          {"units", units_},
          {"activation", activation_json(act_)},
          {"activation_params", act_.spec().params},
          {"initializer", init_scheme_name(init_.scheme)},
          {"init_scale", init_.scale},
          {"init_seed", init_.seed},
          {"use_bias", use_bias_}};
}

std::unique_ptr<Layer> Dense::real_equivalent(double multiplier, bool is_output) const {
  check_real_counterpart(act_, init_);
  auto out = std::make_unique<Dense>(scaled_width(units_, multiplier, is_output), act_.spec(),
                                     init_.real ? init_ : real_equivalent_spec(init_), use_bias_);
  out->set_real_mode(true);
  return out;
}

// ---------------------------------------------------------------------------
// Conv2D

Conv2D::Conv2D(std::size_t filters, std::size_t kh, std::size_t kw, Stride2 stride, Padding padding,
               ActivationSpec activation, InitializerSpec init, bool use_bias)
    : filters_(filters),
      kh_(kh),
      kw_(kw),
      stride_(stride),
      padding_(padding),
      act_(std::move(activation)),
      init_(init),
      use_bias_(use_bias) {
  if (filters_ == 0 || kh_ == 0 || kw_ == 0) throw ConfigError("ComplexConv2D filters and kernel size must be >= 1");
  if (stride_.rows == 0 || stride_.cols == 0) throw ConfigError("ComplexConv2D strides must be >= 1");
  if (!act_.elementwise()) throw ConfigError("ComplexConv2D needs an elementwise activation");
}

Shape Conv2D::build(const Shape& input_shape, std::uint64_t seed) {
  if (input_shape.rank() != 3)
    throw DimensionError("ComplexConv2D expects H x W x C inputs, got " + input_shape.to_string());
  in_shape_ = input_shape;
  plan_r_ = plan_padding(input_shape[0], kh_, stride_.rows, padding_);
  plan_c_ = plan_padding(input_shape[1], kw_, stride_.cols, padding_);
  out_shape_ = Shape{plan_r_.out, plan_c_.out, filters_};
  const std::size_t cin = input_shape[2];
  CounterRng rng(derive_key(seed, init_.seed));
  k_ = sample_weights(effective_init(init_, real_mode_), Shape{kh_, kw_, cin, filters_},
                      FanPair{kh_ * kw_ * cin, kh_ * kw_ * filters_}, rng);
  b_ = CTensor(Shape{filters_});
  gk_ = CTensor(k_.shape());
  gb_ = CTensor(b_.shape());
  return out_shape_;
}

CTensor Conv2D::forward(const CTensor& x, bool) {
  check_input(x);
  const std::size_t n = x.shape()[0];
  CTensor v(out_shape_.with_leading(n));
  auto vd = v.data();
  auto bd = b_.data();
  const std::size_t per_in = in_shape_.elements(), per_out = out_shape_.elements();
  for (std::size_t s = 0; s < n; ++s) {
    const CTensor y = conv2d(x.slice_rows(s, s + 1).reshaped(in_shape_), k_, stride_, padding_);
    auto yd = y.data();
    for (std::size_t k = 0; k < per_out; ++k) vd[s * per_out + k] = use_bias_ ? yd[k] + bd[k % filters_] : yd[k];
  }
  (void)per_in;
  if (real_mode_) v.mark_real_only();
  x_cache_ = x;
  v_cache_ = std::move(v);
  return act_.forward(v_cache_, real_mode_);
}

CTensor Conv2D::backward(const CTensor& grad_out) {
  if (v_cache_.empty()) throw ContractError("ComplexConv2D backward before forward");
  const CTensor gv = act_.backward(v_cache_, grad_out, real_mode_);
  const std::size_t n = x_cache_.shape()[0];
  const std::size_t H = in_shape_[0], W = in_shape_[1], C = in_shape_[2];
  const std::size_t ho = out_shape_[0], wo = out_shape_[1], F = filters_;
  CTensor gx(x_cache_.shape());
  auto gxd = gx.data();
  auto gvd = gv.data();
  auto xd = x_cache_.data();
  auto kd = k_.data();
  auto gkd = gk_.data();
  auto gbd = gb_.data();
  std::fill(gkd.begin(), gkd.end(), cplx{});
  std::fill(gbd.begin(), gbd.end(), cplx{});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const cplx* g = gvd.data() + ((s * ho + oy) * wo + ox) * F;
        if (use_bias_)
          for (std::size_t f = 0; f < F; ++f) gbd[f] += g[f];
        for (std::size_t a = 0; a < kh_; ++a) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_.rows + a) - static_cast<std::ptrdiff_t>(plan_r_.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t b = 0; b < kw_; ++b) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * stride_.cols + b) - static_cast<std::ptrdiff_t>(plan_c_.before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t base = ((s * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * C;
            for (std::size_t c = 0; c < C; ++c) {
              const cplx xv = xd[base + c];
              cplx acc{};
              const std::size_t kb = ((a * kw_ + b) * C + c) * F;
              for (std::size_t f = 0; f < F; ++f) {
                gkd[kb + f] += cmul_conj(g[f], xv);
                acc += cmul_conj(g[f], kd[kb + f]);
              }
              gxd[base + c] += acc;
            }
          }
        }
      }
  return gx;
}

std::vector<Parameter> Conv2D::parameters() {
  std::vector<Parameter> p{{"kernel", &k_, &gk_, real_mode_}};
  if (use_bias_) p.push_back({"bias", &b_, &gb_, real_mode_});
  return p;
}

nlohmann::json Conv2D::config() const {
  return {{"type", type()},
          {"filters", filters_},
          {"kernel_size", {kh_, kw_}},
          {"strides", {stride_.rows, stride_.cols}},
          {"padding", padding_ == Padding::same ? "same" : "valid"},
          {"activation", activation_json(act_)},
          {"activation_params", act_.spec().params},
          {"initializer", init_scheme_name(init_.scheme)},
          {"init_scale", init_.scale},
          {"init_seed", init_.seed},
          {"use_bias", use_bias_}};
}

std::unique_ptr<Layer> Conv2D::real_equivalent(double multiplier, bool is_output) const {
  check_real_counterpart(act_, init_);
  auto out = std::make_unique<Conv2D>(scaled_width(filters_, multiplier, is_output), kh_, kw_, stride_, padding_,
                                      act_.spec(), init_.real ? init_ : real_equivalent_spec(init_), use_bias_);
  out->set_real_mode(true);
  return out;
}

// ---------------------------------------------------------------------------
// Conv2DTranspose

Conv2DTranspose::Conv2DTranspose(std::size_t filters, std::size_t kh, std::size_t kw, Stride2 stride,
                                 ActivationSpec activation, InitializerSpec init, bool use_bias)
    : filters_(filters), kh_(kh), kw_(kw), stride_(stride), act_(std::move(activation)), init_(init), use_bias_(use_bias) {
  if (filters_ == 0 || kh_ == 0 || kw_ == 0)
    throw ConfigError("ComplexConv2DTranspose filters and kernel size must be >= 1");
  if (stride_.rows == 0 || stride_.cols == 0) throw ConfigError("ComplexConv2DTranspose strides must be >= 1");
  if (!act_.elementwise()) throw ConfigError("ComplexConv2DTranspose needs an elementwise activation");
}

Shape Conv2DTranspose::build(const Shape& input_shape, std::uint64_t seed) {
  if (input_shape.rank() != 3)
    throw DimensionError("ComplexConv2DTranspose expects H x W x C inputs, got " + input_shape.to_string());
  in_shape_ = input_shape;
  out_shape_ = Shape{(input_shape[0] - 1) * stride_.rows + kh_, (input_shape[1] - 1) * stride_.cols + kw_, filters_};
  const std::size_t cin = input_shape[2];
  CounterRng rng(derive_key(seed, init_.seed));
  k_ = sample_weights(effective_init(init_, real_mode_), Shape{kh_, kw_, filters_, cin},
                      FanPair{kh_ * kw_ * cin, kh_ * kw_ * filters_}, rng);
  b_ = CTensor(Shape{filters_});
  gk_ = CTensor(k_.shape());
  gb_ = CTensor(b_.shape());
  return out_shape_;
}

CTensor Conv2DTranspose::forward(const CTensor& x, bool) {
  check_input(x);
  CTensor v = conv2d_transpose(x, k_, stride_);
  if (use_bias_) {
    auto vd = v.data();
    auto bd = b_.data();
    for (std::size_t k = 0; k < vd.size(); ++k) vd[k] += bd[k % filters_];
  }
  if (real_mode_) v.mark_real_only();
  x_cache_ = x;
  v_cache_ = std::move(v);
  return act_.forward(v_cache_, real_mode_);
}

CTensor Conv2DTranspose::backward(const CTensor& grad_out) {
  if (v_cache_.empty()) throw ContractError("ComplexConv2DTranspose backward before forward");
  const CTensor gv = act_.backward(v_cache_, grad_out, real_mode_);
  const std::size_t n = x_cache_.shape()[0];
  const std::size_t H = in_shape_[0], W = in_shape_[1], C = in_shape_[2];
  const std::size_t ho = out_shape_[0], wo = out_shape_[1], F = filters_;
  CTensor gx(x_cache_.shape());
  auto gxd = gx.data();
  auto gvd = gv.data();
  auto xd = x_cache_.data();
  auto kd = k_.data();
  auto gkd = gk_.data();
  auto gbd = gb_.data();
  std::fill(gkd.begin(), gkd.end(), cplx{});
  std::fill(gbd.begin(), gbd.end(), cplx{});
  if (use_bias_)
    for (std::size_t k = 0; k < gvd.size(); ++k) gbd[k % F] += gvd[k];
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t xb = ((s * H + i) * W + j) * C;
        for (std::size_t a = 0; a < kh_; ++a)
          for (std::size_t b = 0; b < kw_; ++b) {
            const cplx* g = gvd.data() + ((s * ho + i * stride_.rows + a) * wo + j * stride_.cols + b) * F;
            const std::size_t kb = (a * kw_ + b) * F * C;
            for (std::size_t f = 0; f < F; ++f)
              for (std::size_t c = 0; c < C; ++c) {
                gxd[xb + c] += cmul_conj(g[f], kd[kb + f * C + c]);
                gkd[kb + f * C + c] += cmul_conj(g[f], xd[xb + c]);
              }
          }
      }
  return gx;
}

std::vector<Parameter> Conv2DTranspose::parameters() {
  std::vector<Parameter> p{{"kernel", &k_, &gk_, real_mode_}};
  if (use_bias_) p.push_back({"bias", &b_, &gb_, real_mode_});
  return p;
}

nlohmann::json Conv2DTranspose::config() const {
  return {{"type", type()},
          {"filters", filters_},
          {"kernel_size", {kh_, kw_}},
          {"strides", {stride_.rows, stride_.cols}},
          {"activation", activation_json(act_)},
          {"activation_params", act_.spec().params},
          {"initializer", init_scheme_name(init_.scheme)},
          {"init_scale", init_.scale},
          {"init_seed", init_.seed},
          {"use_bias", use_bias_}};
}

std::unique_ptr<Layer> Conv2DTranspose::real_equivalent(double multiplier, bool is_output) const {
  check_real_counterpart(act_, init_);
  auto out = std::make_unique<Conv2DTranspose>(scaled_width(filters_, multiplier, is_output), kh_, kw_, stride_,
                                               act_.spec(), init_.real ? init_ : real_equivalent_spec(init_),
                                               use_bias_);
  out->set_real_mode(true);
  return out;
}

// ---------------------------------------------------------------------------
// Flatten

Shape Flatten::build(const Shape& input_shape, std::uint64_t) {
  in_shape_ = input_shape;
  out_shape_ = Shape{input_shape.elements()};
  return out_shape_;
}

CTensor Flatten::forward(const CTensor& x, bool) {
  check_input(x);
  return x.reshaped(out_shape_.with_leading(x.shape()[0]));
}

CTensor Flatten::backward(const CTensor& grad_out) {
  return grad_out.reshaped(in_shape_.with_leading(grad_out.shape()[0]));
}

nlohmann::json Flatten::config() const { return {{"type", type()}}; }

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(double rate, std::optional<std::uint64_t> seed) : rate_(rate), seed_(seed) {
  if (!(rate_ >= 0.0 && rate_ < 1.0)) throw ConfigError("ComplexDropout rate must be in [0, 1)");
}

Shape Dropout::build(const Shape& input_shape, std::uint64_t seed) {
  in_shape_ = out_shape_ = input_shape;
  rng_ = CounterRng(derive_key(seed_.value_or(seed), 0xD0));
  return out_shape_;
}

CTensor Dropout::forward(const CTensor& x, bool training) {
  check_input(x);
  mask_.clear();
  if (!training || rate_ == 0.0) return x;
  const double keep = 1.0 - rate_;
  mask_.resize(x.size());
  CTensor out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask_[i] = rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
    o[i] = in[i] * mask_[i];
  }
  if (x.real_only()) out.mark_real_only();
  return out;
}

CTensor Dropout::backward(const CTensor& grad_out) {
  if (mask_.empty()) return grad_out;
  CTensor g(grad_out.shape());
  auto o = g.data();
  auto in = grad_out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] * mask_[i];
  return g;
}

nlohmann::json Dropout::config() const {
  nlohmann::json j{{"type", type()}, {"rate", rate_}};
  if (seed_) j["seed"] = *seed_;
  return j;
}

// ---------------------------------------------------------------------------
// Pooling

namespace {

Shape pooled_shape(const Shape& in, const PoolSpec& s, const char* what) {
  if (in.rank() != 3) throw DimensionError(std::string(what) + " expects H x W x C inputs, got " + in.to_string());
  if (s.ph == 0 || s.pw == 0 || s.sh == 0 || s.sw == 0) throw ConfigError("pool window and strides must be >= 1");
  if (s.ph > in[0] || s.pw > in[1]) throw DimensionError(std::string(what) + " window larger than input");
  return Shape{(in[0] - s.ph) / s.sh + 1, (in[1] - s.pw) / s.sw + 1, in[2]};
}

const char* pool_mode_name(PoolMode m) {
  switch (m) {
    case PoolMode::avg_arithmetic: return "arithmetic";
    case PoolMode::avg_circular: return "circular";
    case PoolMode::avg_circular_norm: return "circular_norm";
    default: return "max";
  }
}

}  // namespace

MaxPooling2D::MaxPooling2D(PoolSpec spec, bool with_argmax) : spec_(spec), with_argmax_(with_argmax) {
  spec_.mode = PoolMode::max_modulus;
}

Shape MaxPooling2D::build(const Shape& input_shape, std::uint64_t) {
  in_shape_ = input_shape;
  out_shape_ = pooled_shape(input_shape, spec_, "ComplexMaxPooling2D");
  return out_shape_;
}

CTensor MaxPooling2D::forward(const CTensor& x, bool) {
  check_input(x);
  if (!real_mode_) {
    MaxPoolResult r = max_pool2d(x, spec_);
    argmax_ = std::move(r.argmax);
    return std::move(r.values);
  }
  // Real counterpart: ordinary max pooling on the values.
  const ImageDims d = image_dims(x.shape(), "max_pool2d");
  const std::size_t ho = out_shape_[0], wo = out_shape_[1];
  CTensor out(d.shape(ho, wo, d.c));
  argmax_ = ArgmaxMap{x.shape(), std::vector<std::size_t>(out.size())};
  auto o = out.data();
  auto in = x.data();
  std::size_t k = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t c = 0; c < d.c; ++c, ++k) {
          std::size_t best = d.index(n, oy * spec_.sh, ox * spec_.sw, c);
          for (std::size_t a = 0; a < spec_.ph; ++a)
            for (std::size_t b = 0; b < spec_.pw; ++b) {
              const std::size_t idx = d.index(n, oy * spec_.sh + a, ox * spec_.sw + b, c);
              if (in[idx].real() > in[best].real()) best = idx;
            }
          o[k] = in[best];
          argmax_.indices[k] = best;
        }
  return out.mark_real_only();
}

CTensor MaxPooling2D::backward(const CTensor& grad_out) {
  CTensor g(argmax_.input_shape);
  auto o = g.data();
  auto in = grad_out.data();
  for (std::size_t k = 0; k < in.size(); ++k) o[argmax_.indices[k]] += in[k];
  return g;
}

nlohmann::json MaxPooling2D::config() const {
  return {{"type", type()},
          {"pool_size", {spec_.ph, spec_.pw}},
          {"strides", {spec_.sh, spec_.sw}},
          {"with_argmax", with_argmax_}};
}

AvgPooling2D::AvgPooling2D(PoolSpec spec) : spec_(spec) {
  if (spec_.mode == PoolMode::max_modulus) throw ConfigError("ComplexAvgPooling2D needs an averaging mode");
}

Shape AvgPooling2D::build(const Shape& input_shape, std::uint64_t) {
  in_shape_ = input_shape;
  out_shape_ = pooled_shape(input_shape, spec_, "ComplexAvgPooling2D");
  return out_shape_;
}

CTensor AvgPooling2D::forward(const CTensor& x, bool) {
  check_input(x);
  x_cache_ = x;
  CTensor out = avg_pool2d(x, spec_);
  if (real_mode_) out.mark_real_only();
  return out;
}

CTensor AvgPooling2D::backward(const CTensor& grad_out) {
  const ImageDims d = image_dims(x_cache_.shape(), "avg_pool2d");
  const std::size_t ho = out_shape_[0], wo = out_shape_[1];
  const double count = static_cast<double>(spec_.ph * spec_.pw);
  CTensor gx(x_cache_.shape());
  auto o = gx.data();
  auto in = x_cache_.data();
  auto g = grad_out.data();
  std::size_t k = 0;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t c = 0; c < d.c; ++c, ++k) {
          auto at = [&](std::size_t a, std::size_t b) { return d.index(n, oy * spec_.sh + a, ox * spec_.sw + b, c); };
          if (spec_.mode == PoolMode::avg_arithmetic) {
            for (std::size_t a = 0; a < spec_.ph; ++a)
              for (std::size_t b = 0; b < spec_.pw; ++b) o[at(a, b)] += g[k] / count;
            continue;
          }
          cplx unit{};
          double mod = 0.0;
          std::size_t nonzero = 0;
          for (std::size_t a = 0; a < spec_.ph; ++a)
            for (std::size_t b = 0; b < spec_.pw; ++b) {
              const cplx z = in[at(a, b)];
              const double r = std::abs(z);
              mod += r;
              if (r > 0.0) {
                unit += z / r;
                ++nonzero;
              }
            }
          if (nonzero == 0) continue;
          // Gradient reaching the circular mean c = unit / m.
          cplx gc = g[k];
          double g_mod = 0.0;  // dL/d(mean modulus)
          if (spec_.mode == PoolMode::avg_circular_norm) {
            const double rc = std::abs(unit);
            if (rc == 0.0) continue;
            const cplx u = unit / rc;
            const double mean_mod = mod / count;
            g_mod = (std::conj(g[k]) * u).real();
            // u = c/|c|: A = 1/(2|c|), B = -c^2/(2|c|^3), with gu = mean_mod * g
            const cplx c = unit / static_cast<double>(nonzero);
            const double r = std::abs(c);
            const cplx gu = mean_mod * g[k];
            gc = gu / (2.0 * r) + std::conj(gu) * (-c * c / (2.0 * r * r * r));
          }
          for (std::size_t a = 0; a < spec_.ph; ++a)
            for (std::size_t b = 0; b < spec_.pw; ++b) {
              const cplx z = in[at(a, b)];
              const double r = std::abs(z);
              if (r == 0.0) continue;
              // z/|z|: A = 1/(2|z|), B = -z^2/(2|z|^3)
              const cplx gz = gc / (2.0 * r) + std::conj(gc) * (-z * z / (2.0 * r * r * r));
              o[at(a, b)] += gz / static_cast<double>(nonzero) + g_mod * (z / r) / count;
            }
        }
  return gx;
}

nlohmann::json AvgPooling2D::config() const {
  return {{"type", type()},
          {"pool_size", {spec_.ph, spec_.pw}},
          {"strides", {spec_.sh, spec_.sw}},
          {"mode", pool_mode_name(spec_.mode)}};
}

std::unique_ptr<Layer> AvgPooling2D::real_equivalent(double, bool) const {
  if (spec_.mode != PoolMode::avg_arithmetic)
    throw ConfigError(std::string("ComplexAvgPooling2D mode '") + pool_mode_name(spec_.mode) +
                      "' has no real-valued counterpart");
  auto out = std::make_unique<AvgPooling2D>(spec_);
  out->set_real_mode(true);
  return out;
}

// ---------------------------------------------------------------------------
// UpSampling2D

UpSampling2D::UpSampling2D(std::size_t fh, std::size_t fw, Interpolation mode) : fh_(fh), fw_(fw), mode_(mode) {
  if (fh_ == 0 || fw_ == 0) throw ConfigError("ComplexUpSampling2D size must be >= 1");
}

Shape UpSampling2D::build(const Shape& input_shape, std::uint64_t) {
  if (input_shape.rank() != 3)
    throw DimensionError("ComplexUpSampling2D expects H x W x C inputs, got " + input_shape.to_string());
  in_shape_ = input_shape;
  out_shape_ = Shape{input_shape[0] * fh_, input_shape[1] * fw_, input_shape[2]};
  return out_shape_;
}

CTensor UpSampling2D::forward(const CTensor& x, bool) {
  check_input(x);
  return upsample2d(x, fh_, fw_, mode_);
}

CTensor UpSampling2D::backward(const CTensor& grad_out) {
  const std::size_t n = grad_out.shape()[0];
  const std::size_t H = in_shape_[0], W = in_shape_[1], C = in_shape_[2];
  const std::size_t ho = out_shape_[0], wo = out_shape_[1];
  CTensor gx(in_shape_.with_leading(n));
  auto o = gx.data();
  auto g = grad_out.data();
  // The forward map is linear with real weights; scatter with the same weights.
  auto idx = [&](std::size_t s, std::size_t y, std::size_t x, std::size_t c) { return ((s * H + y) * W + x) * C + c; };
  if (mode_ == Interpolation::nearest) {
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x)
          for (std::size_t c = 0; c < C; ++c) o[idx(s, y / fh_, x / fw_, c)] += g[((s * ho + y) * wo + x) * C + c];
    return gx;
  }
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t y = 0; y < ho; ++y) {
      const double sy = std::max(0.0, (static_cast<double>(y) + 0.5) / static_cast<double>(fh_) - 0.5);
      const auto y0 = std::min(static_cast<std::size_t>(std::floor(sy)), H - 1);
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      const double wy = sy - static_cast<double>(y0);
      for (std::size_t x = 0; x < wo; ++x) {
        const double sx = std::max(0.0, (static_cast<double>(x) + 0.5) / static_cast<double>(fw_) - 0.5);
        const auto x0 = std::min(static_cast<std::size_t>(std::floor(sx)), W - 1);
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double wx = sx - static_cast<double>(x0);
        for (std::size_t c = 0; c < C; ++c) {
          const cplx v = g[((s * ho + y) * wo + x) * C + c];
          o[idx(s, y0, x0, c)] += (1.0 - wy) * (1.0 - wx) * v;
          o[idx(s, y0, x1, c)] += (1.0 - wy) * wx * v;
          o[idx(s, y1, x0, c)] += wy * (1.0 - wx) * v;
          o[idx(s, y1, x1, c)] += wy * wx * v;
        }
      }
    }
  return gx;
}

nlohmann::json UpSampling2D::config() const {
  return {{"type", type()},
          {"size", {fh_, fw_}},
          {"interpolation", mode_ == Interpolation::bilinear ? "bilinear" : "nearest"}};
}

// ---------------------------------------------------------------------------
// UnPooling2D

Shape UnPooling2D::build(const Shape& input_shape, std::uint64_t) {
  if (source_ == nullptr || !source_->with_argmax())
    throw ConfigError("ComplexUnPooling2D needs a preceding ComplexMaxPooling2D with with_argmax = true");
  if (input_shape != source_->output_shape())
    throw DimensionError("ComplexUnPooling2D input " + input_shape.to_string() + " does not match pooled shape " +
                         source_->output_shape().to_string());
  in_shape_ = input_shape;
  out_shape_ = source_->input_shape();
  return out_shape_;
}

CTensor UnPooling2D::forward(const CTensor& x, bool) {
  check_input(x);
  used_ = source_->last_argmax();
  if (used_.input_shape.rank() == 0 || used_.input_shape[0] != x.shape()[0])
    throw IntegrityError("ComplexUnPooling2D argmax map does not match the batch");
  CTensor out = unpool2d(x, used_);
  if (real_mode_) out.mark_real_only();
  return out;
}

CTensor UnPooling2D::backward(const CTensor& grad_out) {
  CTensor g(in_shape_.with_leading(grad_out.shape()[0]));
  auto o = g.data();
  auto in = grad_out.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = in[used_.indices[k]];
  return g;
}

nlohmann::json UnPooling2D::config() const { return {{"type", type()}}; }

// ---------------------------------------------------------------------------
// Factory

namespace {

template <class T>
T field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return field<T>(j, key, T{});
}

std::pair<std::size_t, std::size_t> pair_field(const nlohmann::json& j, const char* key,
                                               std::pair<std::size_t, std::size_t> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number_unsigned() || v.is_number_integer()) {
    const auto k = v.get<std::int64_t>();
    if (k < 1) throw ConfigError(std::string("field '") + key + "' must be >= 1");
    return {static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
  }
  if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
    const auto a = v[0].get<std::int64_t>(), b = v[1].get<std::int64_t>();
    if (a < 1 || b < 1) throw ConfigError(std::string("field '") + key + "' must be >= 1");
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
  }
  throw ConfigError(std::string("field '") + key + "' must be an integer or a pair of integers");
}

ActivationSpec activation_field(const nlohmann::json& j) {
  ActivationSpec spec{field<std::string>(j, "activation", "linear"),
                      field<std::vector<double>>(j, "activation_params", {})};
  if (!is_activation(spec.name)) throw ConfigError("field 'activation': unknown activation '" + spec.name + "'");
  return spec;
}

InitializerSpec init_field(const nlohmann::json& j) {
  InitializerSpec spec;
  try {
    spec.scheme = parse_init_scheme(field<std::string>(j, "initializer", "ComplexGlorotUniform"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("field 'initializer': ") + e.what());
  }
  spec.scale = field<double>(j, "init_scale", 1.0);
  if (!(spec.scale > 0.0)) throw ConfigError("field 'init_scale' must be > 0");
  spec.seed = field<std::uint64_t>(j, "init_seed", 0);
  return spec;
}

Padding padding_field(const nlohmann::json& j) {
  const auto p = field<std::string>(j, "padding", "valid");
  if (p == "valid") return Padding::valid;
  if (p == "same") return Padding::same;
  throw ConfigError("field 'padding' must be 'valid' or 'same'");
}

}  // namespace

std::unique_ptr<Layer> make_layer(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("layer config must be a table");
  const auto type = required<std::string>(j, "type");
  if (type == "ComplexDense") {
    const auto units = required<std::int64_t>(j, "units");
    if (units < 1) throw ConfigError("field 'units' must be >= 1");
    return std::make_unique<Dense>(static_cast<std::size_t>(units), activation_field(j), init_field(j),
                                   field<bool>(j, "use_bias", true));
  }
  if (type == "ComplexConv2D" || type == "ComplexConv2DTranspose") {
    const auto filters = required<std::int64_t>(j, "filters");
    if (filters < 1) throw ConfigError("field 'filters' must be >= 1");
    if (!j.contains("kernel_size")) throw ConfigError("missing field 'kernel_size'");
    const auto [kh, kw] = pair_field(j, "kernel_size", {1, 1});
    const auto [sh, sw] = pair_field(j, "strides", {1, 1});
    if (type == "ComplexConv2D")
      return std::make_unique<Conv2D>(static_cast<std::size_t>(filters), kh, kw, Stride2{sh, sw}, padding_field(j),
                                      activation_field(j), init_field(j), field<bool>(j, "use_bias", true));
    return std::make_unique<Conv2DTranspose>(static_cast<std::size_t>(filters), kh, kw, Stride2{sh, sw},
                                             activation_field(j), init_field(j), field<bool>(j, "use_bias", true));
  }
  if (type == "ComplexFlatten") return std::make_unique<Flatten>();
  if (type == "ComplexDropout") {
    std::optional<std::uint64_t> seed;
    if (j.contains("seed")) seed = field<std::uint64_t>(j, "seed", 0);
    return std::make_unique<Dropout>(required<double>(j, "rate"), seed);
  }
  if (type == "ComplexMaxPooling2D" || type == "ComplexAvgPooling2D") {
    const auto [ph, pw] = pair_field(j, "pool_size", {2, 2});
    const auto [sh, sw] = pair_field(j, "strides", {ph, pw});
    PoolSpec spec{ph, pw, sh, sw, PoolMode::max_modulus};
    if (type == "ComplexMaxPooling2D") return std::make_unique<MaxPooling2D>(spec, field<bool>(j, "with_argmax", false));
    const auto mode = field<std::string>(j, "mode", "arithmetic");
    if (mode == "arithmetic") spec.mode = PoolMode::avg_arithmetic;
    else if (mode == "circular") spec.mode = PoolMode::avg_circular;
    else if (mode == "circular_norm") spec.mode = PoolMode::avg_circular_norm;
    else throw ConfigError("field 'mode' must be arithmetic, circular or circular_norm");
    return std::make_unique<AvgPooling2D>(spec);
  }
  if (type == "ComplexUpSampling2D") {
    const auto [fh, fw] = pair_field(j, "size", {2, 2});
    const auto interp = field<std::string>(j, "interpolation", "nearest");
    if (interp != "nearest" && interp != "bilinear")
      throw ConfigError("field 'interpolation' must be 'nearest' or 'bilinear'");
    return std::make_unique<UpSampling2D>(fh, fw, interp == "bilinear" ? Interpolation::bilinear : Interpolation::nearest);
  }
  if (type == "ComplexUnPooling2D") return std::make_unique<UnPooling2D>();
  if (type == "ComplexBatchNormalization")
    return std::make_unique<BatchNormalization>(field<double>(j, "momentum", 0.99), field<double>(j, "epsilon", 1e-5));
  throw ConfigError("field 'type': unknown layer type '" + type + "'");
}

}  // namespace cvnn
