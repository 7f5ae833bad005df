#include <cmath>
#include <numbers>

#include "cvnn/error.hpp"
#include "cvnn/layers.hpp"

namespace cvnn {

namespace {

// Gradient of L(W) with respect to (a, b, c), W = [[a, b], [b, c]]^(-1/2).
// p00, p01, p11 are dL/dw00, dL/dw01 (both off-diagonal slots summed), dL/dw11.
std::array<double, 3> inverse_sqrt_2x2_grad(double a, double b, double c, double p00, double p01, double p11) {
  const double s = std::sqrt(a * c - b * b);
  const double t = std::sqrt(a + c + 2.0 * s);
  const double den = s * t;
  const double w00 = (c + s) / den, w01 = -b / den, w11 = (a + s) / den;

  const double s_a = c / (2.0 * s), s_b = -b / s, s_c = a / (2.0 * s);
  const double t_a = (1.0 + 2.0 * s_a) / (2.0 * t), t_b = s_b / t, t_c = (1.0 + 2.0 * s_c) / (2.0 * t);
  const double d_a = s_a * t + s * t_a, d_b = s_b * t + s * t_b, d_c = s_c * t + s * t_c;

  auto grad = [&](double num00, double num01, double num11, double dd) {
    return p00 * (num00 - w00 * dd) / den + p01 * (num01 - w01 * dd) / den + p11 * (num11 - w11 * dd) / den;
  };
  return {grad(s_a, 0.0, 1.0 + s_a, d_a), grad(s_b, -1.0, s_b, d_b), grad(1.0 + s_c, 0.0, s_c, d_c)};
}

}  // namespace

BatchNormalization::BatchNormalization(double momentum, double epsilon) : momentum_(momentum), epsilon_(epsilon) {
  if (!(momentum_ >= 0.0 && momentum_ < 1.0)) throw ConfigError("ComplexBatchNormalization momentum must be in [0, 1)");
  if (!(epsilon_ >= 0.0)) throw ConfigError("ComplexBatchNormalization epsilon must be >= 0");
}

Shape BatchNormalization::build(const Shape& input_shape, std::uint64_t) {
  if (input_shape.rank() == 0) throw DimensionError("ComplexBatchNormalization needs a feature axis");
  in_shape_ = out_shape_ = input_shape;
  features_ = input_shape.back();
  const std::size_t F = features_;
  if (real_mode_) {
    gamma_ = CTensor(Shape{F}, 1.0);
    beta_ = CTensor(Shape{F});
    mov_mean_ = CTensor(Shape{F});
    mov_cov_ = CTensor(Shape{F}, 1.0);
  } else {
    const double r = 1.0 / std::numbers::sqrt2;
    gamma_ = CTensor(Shape{F, 2, 2});
    mov_cov_ = CTensor(Shape{F, 2, 2});
    for (std::size_t f = 0; f < F; ++f) {
      gamma_[f * 4 + 0] = gamma_[f * 4 + 3] = r;
      mov_cov_[f * 4 + 0] = mov_cov_[f * 4 + 3] = r;
    }
    beta_ = CTensor(Shape{F, 2});
    mov_mean_ = CTensor(Shape{F, 2});
  }
  for (CTensor* t : {&gamma_, &beta_, &mov_mean_, &mov_cov_}) t->mark_real_only();
  g_gamma_ = CTensor(gamma_.shape());
  g_beta_ = CTensor(beta_.shape());
  return out_shape_;
}

CTensor BatchNormalization::forward(const CTensor& x, bool training) {
  check_input(x);
  const std::size_t F = features_;
  const std::size_t M = x.size() / F;
  auto in = x.data();
  CTensor out(x.shape());
  auto o = out.data();
  x_cache_ = x;
  cached_training_ = training;
  if (training && x.shape()[0] < 2) throw DegenerateBatchError("batch normalization needs a batch of at least 2 in training");

  const double m = momentum_;
  const auto inv_m = 1.0 / static_cast<double>(M);

  if (real_mode_) {
    xc_.assign(x.size(), 0.0);
    xhat_.assign(x.size(), 0.0);
    cov_.assign(F, {});
    for (std::size_t f = 0; f < F; ++f) {
      double mu, var;
      if (training) {
        double s = 0.0;
        for (std::size_t k = 0; k < M; ++k) s += in[k * F + f].real();
        mu = s * inv_m;
        double v = 0.0;
        for (std::size_t k = 0; k < M; ++k) {
          const double d = in[k * F + f].real() - mu;
          v += d * d;
        }
        var = v * inv_m;
        mov_mean_[f] = m * mov_mean_[f].real() + (1.0 - m) * mu;
        mov_cov_[f] = m * mov_cov_[f].real() + (1.0 - m) * var;
      } else {
        mu = mov_mean_[f].real();
        var = mov_cov_[f].real();
      }
      const double inv = 1.0 / std::sqrt(var + epsilon_);
      cov_[f] = {var, 0.0, inv};
      const double g = gamma_[f].real(), b = beta_[f].real();
      for (std::size_t k = 0; k < M; ++k) {
        const std::size_t i = k * F + f;
        xc_[i] = in[i].real() - mu;
        xhat_[i] = xc_[i] * inv;
        o[i] = g * xhat_[i] + b;
      }
    }
    for (CTensor* t : {&mov_mean_, &mov_cov_}) t->mark_real_only();
    return out.mark_real_only();
  }

  xc_.assign(2 * x.size(), 0.0);
  xhat_.assign(2 * x.size(), 0.0);
  whiten_.assign(F, {});
  cov_.assign(F, {});
  for (std::size_t f = 0; f < F; ++f) {
    double mr, mi, a, b, c;
    if (training) {
      double sr = 0.0, si = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        sr += in[k * F + f].real();
        si += in[k * F + f].imag();
      }
      mr = sr * inv_m;
      mi = si * inv_m;
      double saa = 0.0, sab = 0.0, scc = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        const double dr = in[k * F + f].real() - mr, di = in[k * F + f].imag() - mi;
        saa += dr * dr;
        sab += dr * di;
        scc += di * di;
      }
      a = saa * inv_m;
      b = sab * inv_m;
      c = scc * inv_m;
      mov_mean_[f * 2 + 0] = m * mov_mean_[f * 2 + 0].real() + (1.0 - m) * mr;
      mov_mean_[f * 2 + 1] = m * mov_mean_[f * 2 + 1].real() + (1.0 - m) * mi;
      mov_cov_[f * 4 + 0] = m * mov_cov_[f * 4 + 0].real() + (1.0 - m) * a;
      mov_cov_[f * 4 + 1] = m * mov_cov_[f * 4 + 1].real() + (1.0 - m) * b;
      mov_cov_[f * 4 + 2] = m * mov_cov_[f * 4 + 2].real() + (1.0 - m) * b;
      mov_cov_[f * 4 + 3] = m * mov_cov_[f * 4 + 3].real() + (1.0 - m) * c;
    } else {
      mr = mov_mean_[f * 2 + 0].real();
      mi = mov_mean_[f * 2 + 1].real();
      a = mov_cov_[f * 4 + 0].real();
      b = mov_cov_[f * 4 + 1].real();
      c = mov_cov_[f * 4 + 3].real();
    }
    const std::array<double, 3> W = inverse_sqrt_2x2(a + epsilon_, b, c + epsilon_);
    whiten_[f] = W;
    cov_[f] = {a + epsilon_, b, c + epsilon_};
    const double g00 = gamma_[f * 4 + 0].real(), g01 = gamma_[f * 4 + 1].real();
    const double g10 = gamma_[f * 4 + 2].real(), g11 = gamma_[f * 4 + 3].real();
    const double b0 = beta_[f * 2 + 0].real(), b1 = beta_[f * 2 + 1].real();
    for (std::size_t k = 0; k < M; ++k) {
      const std::size_t i = k * F + f;
      const double dr = in[i].real() - mr, di = in[i].imag() - mi;
      const double hr = W[0] * dr + W[1] * di;
      const double hi = W[1] * dr + W[2] * di;
      xc_[2 * i] = dr;
      xc_[2 * i + 1] = di;
      xhat_[2 * i] = hr;
      xhat_[2 * i + 1] = hi;
      o[i] = {g00 * hr + g01 * hi + b0, g10 * hr + g11 * hi + b1};
    }
  }
  for (CTensor* t : {&mov_mean_, &mov_cov_}) t->mark_real_only();
  return out;
}

CTensor BatchNormalization::backward(const CTensor& grad_out) {
  if (x_cache_.empty()) throw ContractError("ComplexBatchNormalization backward before forward");
  if (grad_out.shape() != x_cache_.shape()) throw DimensionError("batch normalization gradient shape mismatch");
  return real_mode_ ? backward_real(grad_out) : backward_complex(grad_out);
}

CTensor BatchNormalization::backward_real(const CTensor& grad_out) {
  const std::size_t F = features_;
  const std::size_t M = grad_out.size() / F;
  auto g = grad_out.data();
  CTensor gx(grad_out.shape());
  auto o = gx.data();
  const auto inv_m = 1.0 / static_cast<double>(M);
  for (std::size_t f = 0; f < F; ++f) {
    const double gam = gamma_[f].real();
    const double inv = cov_[f][2];
    double sg = 0.0, sgx = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      const std::size_t i = k * F + f;
      sg += g[i].real();
      sgx += g[i].real() * xhat_[i];
    }
    g_beta_[f] = sg;
    g_gamma_[f] = sgx;
    for (std::size_t k = 0; k < M; ++k) {
      const std::size_t i = k * F + f;
      const double gh = gam * g[i].real();
      if (cached_training_)
        o[i] = inv * (gh - gam * sg * inv_m - xhat_[i] * gam * sgx * inv_m);
      else
        o[i] = inv * gh;
    }
  }
  return gx;
}

CTensor BatchNormalization::backward_complex(const CTensor& grad_out) {
  const std::size_t F = features_;
  const std::size_t M = grad_out.size() / F;
  auto g = grad_out.data();
  CTensor gx(grad_out.shape());
  auto o = gx.data();
  const auto inv_m = 1.0 / static_cast<double>(M);
  std::vector<double> dr(M), di(M);

  for (std::size_t f = 0; f < F; ++f) {
    const double g00 = gamma_[f * 4 + 0].real(), g01 = gamma_[f * 4 + 1].real();
    const double g10 = gamma_[f * 4 + 2].real(), g11 = gamma_[f * 4 + 3].real();
    const auto& W = whiten_[f];
    double gb0 = 0.0, gb1 = 0.0, gg00 = 0.0, gg01 = 0.0, gg10 = 0.0, gg11 = 0.0;
    double p00 = 0.0, p01 = 0.0, p10 = 0.0, p11 = 0.0;  // dL/dW as a general matrix
    for (std::size_t k = 0; k < M; ++k) {
      const std::size_t i = k * F + f;
      const double Gr = g[i].real(), Gi = g[i].imag();
      const double hr = xhat_[2 * i], hi = xhat_[2 * i + 1];
      gb0 += Gr;
      gb1 += Gi;
      gg00 += Gr * hr;
      gg01 += Gr * hi;
      gg10 += Gi * hr;
      gg11 += Gi * hi;
      // dL/dxhat = Gamma^T G
      const double ur = g00 * Gr + g10 * Gi;
      const double ui = g01 * Gr + g11 * Gi;
      const double xr = xc_[2 * i], xi = xc_[2 * i + 1];
      p00 += ur * xr;
      p01 += ur * xi;
      p10 += ui * xr;
      p11 += ui * xi;
      // W is symmetric: dL/dxc (through W x) = W dL/dxhat
      dr[k] = W[0] * ur + W[1] * ui;
      di[k] = W[1] * ur + W[2] * ui;
    }
    g_beta_[f * 2 + 0] = gb0;
    g_beta_[f * 2 + 1] = gb1;
    g_gamma_[f * 4 + 0] = gg00;
    g_gamma_[f * 4 + 1] = gg01;
    g_gamma_[f * 4 + 2] = gg10;
    g_gamma_[f * 4 + 3] = gg11;

    if (!cached_training_) {
      for (std::size_t k = 0; k < M; ++k) o[k * F + f] = {dr[k], di[k]};
      continue;
    }

    const auto& C = cov_[f];
    const auto [ga, gb, gc] = inverse_sqrt_2x2_grad(C[0], C[1], C[2], p00, p01 + p10, p11);
    double mr = 0.0, mi = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      const std::size_t i = k * F + f;
      const double xr = xc_[2 * i], xi = xc_[2 * i + 1];
      dr[k] += inv_m * (2.0 * ga * xr + gb * xi);
      di[k] += inv_m * (gb * xr + 2.0 * gc * xi);
      mr += dr[k];
      mi += di[k];
    }
    mr *= inv_m;
    mi *= inv_m;
    for (std::size_t k = 0; k < M; ++k) o[k * F + f] = {dr[k] - mr, di[k] - mi};
  }
  for (CTensor* t : {&g_gamma_, &g_beta_}) t->mark_real_only();
  return gx;
}

std::vector<Parameter> BatchNormalization::parameters() {
  return {{"gamma", &gamma_, &g_gamma_, true}, {"beta", &beta_, &g_beta_, true}};
}

std::vector<std::pair<std::string, CTensor*>> BatchNormalization::state() {
  return {{"gamma", &gamma_}, {"beta", &beta_}, {"moving_mean", &mov_mean_}, {"moving_cov", &mov_cov_}};
}

nlohmann::json BatchNormalization::config() const {
  return {{"type", type()}, {"momentum", momentum_}, {"epsilon", epsilon_}};
}

std::unique_ptr<Layer> BatchNormalization::real_equivalent(double, bool) const {
  auto out = std::make_unique<BatchNormalization>(momentum_, epsilon_);
  out->set_real_mode(true);
  return out;
}

}  // namespace cvnn
