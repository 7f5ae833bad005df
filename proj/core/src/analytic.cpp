#include "cvnn/analytic.hpp"

#include "cvnn/error.hpp"

namespace cvnn {

namespace {

// (dE/dRe y, dE/dIm y) for one sample, already divided by the batch size.
void loss_partials(LossKind kind, const cplx* y, const cplx* d, std::size_t k, double inv_n, std::vector<double>& dx,
                   std::vector<double>& dy) {
  for (std::size_t j = 0; j < k; ++j) {
    switch (kind) {
      case LossKind::complex_quadratic:
        dx[j] = (y[j].real() - d[j].real()) * inv_n;
        dy[j] = (y[j].imag() - d[j].imag()) * inv_n;
        break;
      case LossKind::ace:
        dx[j] = -0.5 * d[j].real() / y[j].real() * inv_n;
        dy[j] = y[j].imag() == 0.0 ? 0.0 : -0.5 * d[j].real() / y[j].imag() * inv_n;
        break;
      case LossKind::cce_real:
        dx[j] = -d[j].real() / y[j].real() * inv_n;
        dy[j] = 0.0;
        break;
      default:
        throw UnsupportedOpError("analytic gradients support ace, cce_real and complex_quadratic only");
    }
  }
}

}  // namespace

std::vector<DenseGradients> mlp_analytic_gradients(const Model& model, const CTensor& batch, const CTensor& targets) {
  std::vector<const Dense*> dense;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto* d = dynamic_cast<const Dense*>(&model.layer(i));
    if (d == nullptr) throw UnsupportedOpError("analytic gradients need a pure MLP, found " + model.layer(i).type());
    if (!d->activation().elementwise())
      throw UnsupportedOpError("activation '" + d->activation().name() + "' is not elementwise");
    dense.push_back(d);
  }
  if (model.data_shape().rank() != 1) throw UnsupportedOpError("analytic gradients need rank-1 samples");
  const bool real = model.dtype() == DType::real;
  const CTensor x0 = model.prepare_input(batch);
  const std::size_t n = x0.shape()[0];
  const std::size_t k = model.output_shape()[0];
  if (targets.shape() != Shape{n, k}) throw DimensionError("targets must be " + Shape{n, k}.to_string());
  const std::size_t depth = dense.size();

  std::vector<DenseGradients> grads;
  for (const Dense* d : dense) grads.push_back({CTensor(d->weights().shape()), CTensor(d->bias().shape())});

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> dx(k), dy(k);
  for (std::size_t p = 0; p < n; ++p) {
    // Forward: xs[l] is the input of layer l, vs[l] its pre-activation.
    std::vector<std::vector<cplx>> xs(depth + 1), vs(depth);
    const std::size_t in0 = x0.shape()[1];
    xs[0].assign(x0.data().begin() + static_cast<std::ptrdiff_t>(p * in0),
                 x0.data().begin() + static_cast<std::ptrdiff_t>((p + 1) * in0));
    for (std::size_t l = 0; l < depth; ++l) {
      const Dense& layer = *dense[l];
      const std::size_t fo = layer.units(), fi = xs[l].size();
      vs[l].assign(fo, 0.0);
      xs[l + 1].assign(fo, 0.0);
      for (std::size_t a = 0; a < fo; ++a) {
        cplx v = 0.0;
        for (std::size_t m = 0; m < fi; ++m) v += layer.weights()[a * fi + m] * xs[l][m];
        if (layer.use_bias()) v += layer.bias()[a];
        if (real) v = v.real();
        vs[l][a] = v;
        xs[l + 1][a] = real ? cplx(layer.activation().pointwise_real(v.real()).value.real())
                            : layer.activation().pointwise(v).value;
      }
    }

    std::vector<cplx> yrow(xs[depth]);
    loss_partials(model.loss().kind, yrow.data(), targets.data().data() + p * k, k, inv_n, dx, dy);

    // g holds dE/d(conj X) for complex models and dE/dX for real ones.
    std::vector<cplx> g(k);
    for (std::size_t j = 0; j < k; ++j) g[j] = real ? cplx(dx[j]) : 0.5 * cplx(dx[j], dy[j]);

    for (std::size_t l = depth; l-- > 0;) {
      const Dense& layer = *dense[l];
      const std::size_t fo = layer.units(), fi = xs[l].size();
      std::vector<cplx> delta(fo);
      for (std::size_t a = 0; a < fo; ++a) {
        if (real) {
          const Pointwise pw = layer.activation().pointwise_real(vs[l][a].real());
          delta[a] = g[a].real() * (pw.d_z + pw.d_zbar).real();
        } else {
          // dE/d(conj V) = dE/dX * dX/d(conj V) + dE/d(conj X) * d(conj X)/d(conj V)
          const Pointwise pw = layer.activation().pointwise(vs[l][a]);
          delta[a] = std::conj(g[a]) * pw.d_zbar + g[a] * std::conj(pw.d_z);
        }
      }
      auto gw = grads[l].weights.data();
      auto gb = grads[l].bias.data();
      const double factor = real ? 1.0 : 2.0;
      for (std::size_t a = 0; a < fo; ++a) {
        for (std::size_t m = 0; m < fi; ++m) gw[a * fi + m] += factor * delta[a] * std::conj(xs[l][m]);
        if (layer.use_bias()) gb[a] += factor * delta[a];
      }
      if (l == 0) break;
      std::vector<cplx> prev(fi, 0.0);
      for (std::size_t m = 0; m < fi; ++m)
        for (std::size_t a = 0; a < fo; ++a)
          prev[m] += real ? delta[a] * layer.weights()[a * fi + m].real()
                          : delta[a] * std::conj(layer.weights()[a * fi + m]);
      g = std::move(prev);
    }
  }
  return grads;
}

}  // namespace cvnn
