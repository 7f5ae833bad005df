#include "cvnn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cvnn/error.hpp"

namespace cvnn {

namespace {

struct Rows {
  std::size_t n, k;
};

Rows rows_of(const CTensor& y, const CTensor& d) {
  if (y.shape() != d.shape())
    throw DimensionError("loss expects matching shapes, got " + y.shape().to_string() + " and " +
                         d.shape().to_string());
  if (y.shape().rank() == 1) return {1, y.shape()[0]};
  if (y.shape().rank() == 2) return {y.shape()[0], y.shape()[1]};
  throw DimensionError("loss expects [batch x classes], got " + y.shape().to_string());
}

std::size_t label_of(const cplx* d, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (d[j].real() > d[best].real()) best = j;
  return best;
}

// -sum d log(clamp(q)) and, optionally, its derivative with respect to q.
double cce_term(const cplx* y, const cplx* d, std::size_t k, bool imag, double* grad, double scale) {
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double q = imag ? y[j].imag() : y[j].real();
    const double t = d[j].real();
    const double qc = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
    s -= t * std::log(qc);
    if (grad != nullptr && q == qc) grad[j] = -scale * t / qc;
  }
  return s;
}

LossResult ace_impl(const CTensor& y, const CTensor& d, const std::vector<double>* weights,
                    std::optional<std::size_t> ignore, bool with_grad) {
  const Rows r = rows_of(y, d);
  if (weights != nullptr && weights->size() != r.k)
    throw DimensionError("class weights have " + std::to_string(weights->size()) + " entries for " +
                         std::to_string(r.k) + " classes");
  auto yd = y.data();
  auto dd = d.data();

  std::size_t count = 0;
  for (std::size_t p = 0; p < r.n; ++p)
    if (!ignore || label_of(dd.data() + p * r.k, r.k) != *ignore) ++count;

  LossResult out;
  if (with_grad) out.grad = CTensor(y.shape());
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<double> gr(r.k), gi(r.k);
  double total = 0.0;
  for (std::size_t p = 0; p < r.n; ++p) {
    const cplx* yp = yd.data() + p * r.k;
    const cplx* dp = dd.data() + p * r.k;
    const std::size_t label = label_of(dp, r.k);
    if (ignore && label == *ignore) continue;
    const double w = weights ? (*weights)[label] : 1.0;
    std::fill(gr.begin(), gr.end(), 0.0);
    std::fill(gi.begin(), gi.end(), 0.0);
    const double scale = 0.5 * w * inv;
    const double term = 0.5 * (cce_term(yp, dp, r.k, false, with_grad ? gr.data() : nullptr, scale) +
                               cce_term(yp, dp, r.k, true, with_grad ? gi.data() : nullptr, scale));
    total += w * term;
    if (with_grad) {
      auto g = out.grad.data();
      for (std::size_t j = 0; j < r.k; ++j) g[p * r.k + j] = {gr[j], gi[j]};
    }
  }
  out.value = total * inv;
  return out;
}

LossResult quadratic_impl(const CTensor& y, const CTensor& d, bool with_grad) {
  const Rows r = rows_of(y, d);
  auto yd = y.data();
  auto dd = d.data();
  const double inv = 1.0 / static_cast<double>(r.n);
  LossResult out;
  if (with_grad) out.grad = CTensor(y.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < yd.size(); ++i) {
    const cplx e = yd[i] - dd[i];
    s += std::norm(e);
    // d(|e|^2 / 2)/d conj(y) = e / 2, so the Wirtinger gradient is e.
    if (with_grad) out.grad[i] = e * inv;
  }
  out.value = 0.5 * s * inv;
  return out;
}

LossResult cce_impl(const CTensor& y, const CTensor& d, bool with_grad) {
  const Rows r = rows_of(y, d);
  auto yd = y.data();
  auto dd = d.data();
  const double inv = 1.0 / static_cast<double>(r.n);
  LossResult out;
  if (with_grad) out.grad = CTensor(y.shape());
  std::vector<double> g(r.k);
  double total = 0.0;
  for (std::size_t p = 0; p < r.n; ++p) {
    std::fill(g.begin(), g.end(), 0.0);
    total += cce_term(yd.data() + p * r.k, dd.data() + p * r.k, r.k, false, with_grad ? g.data() : nullptr, inv);
    if (with_grad)
      for (std::size_t j = 0; j < r.k; ++j) out.grad[p * r.k + j] = g[j];
  }
  out.value = total * inv;
  return out;
}

}  // namespace

double ace(const CTensor& y, const CTensor& d) { return ace_impl(y, d, nullptr, std::nullopt, false).value; }

double weighted_masked_ace(const CTensor& y, const CTensor& d, const LossSpec& spec) {
  return ace_impl(y, d, spec.class_weights.empty() ? nullptr : &spec.class_weights, spec.ignore_label, false).value;
}

double complex_quadratic(const CTensor& y, const CTensor& d) { return quadratic_impl(y, d, false).value; }

double cce_real(const CTensor& y, const CTensor& d) { return cce_impl(y, d, false).value; }

LossResult evaluate_loss(const LossSpec& spec, const CTensor& y, const CTensor& d) {
  switch (spec.kind) {
    case LossKind::ace:
      return ace_impl(y, d, nullptr, std::nullopt, true);
    case LossKind::weighted_ace:
    case LossKind::masked_ace:
      return ace_impl(y, d, spec.class_weights.empty() ? nullptr : &spec.class_weights, spec.ignore_label, true);
    case LossKind::complex_quadratic:
      return quadratic_impl(y, d, true);
    case LossKind::cce_real:
      return cce_impl(y, d, true);
  }
  throw ConfigError("unknown loss kind");
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "ace") return LossKind::ace;
  if (name == "weighted_ace") return LossKind::weighted_ace;
  if (name == "masked_ace") return LossKind::masked_ace;
  if (name == "complex_quadratic") return LossKind::complex_quadratic;
  if (name == "cce_real") return LossKind::cce_real;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::ace: return "ace";
    case LossKind::weighted_ace: return "weighted_ace";
    case LossKind::masked_ace: return "masked_ace";
    case LossKind::complex_quadratic: return "complex_quadratic";
    case LossKind::cce_real: return "cce_real";
  }
  return "unknown";
}

bool loss_needs_real_output(LossKind kind) { return kind == LossKind::cce_real; }

}  // namespace cvnn
