#include "cvnn/initializers.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <utility>

#include "cvnn/error.hpp"

namespace cvnn {

namespace {

constexpr std::array<std::pair<InitScheme, std::pair<const char*, const char*>>, 6> kNames = {{
    {InitScheme::glorot_uniform, {"ComplexGlorotUniform", "glorot_uniform"}},
    {InitScheme::glorot_normal, {"ComplexGlorotNormal", "glorot_normal"}},
    {InitScheme::he_uniform, {"ComplexHeUniform", "he_uniform"}},
    {InitScheme::he_normal, {"ComplexHeNormal", "he_normal"}},
    {InitScheme::rayleigh_polar, {"ComplexRayleighPolar", "rayleigh_polar"}},
    {InitScheme::glorot_uniform_alt_tradeoff, {"ComplexGlorotUniformAlt", "glorot_uniform_alt_tradeoff"}},
}};

}  // namespace

double glorot_limit_complex(FanPair fans) {
  return std::sqrt(3.0) / std::sqrt(static_cast<double>(fans.fan_in + fans.fan_out));
}

double glorot_limit_real(FanPair fans) {
  return std::sqrt(6.0) / std::sqrt(static_cast<double>(fans.fan_in + fans.fan_out));
}

CTensor sample_weights(const InitializerSpec& spec, const Shape& shape, FanPair fans, CounterRng& rng) {
  if (!(spec.scale > 0.0) || !std::isfinite(spec.scale))
    throw ConfigError("initializer scale must be > 0, got " + std::to_string(spec.scale));
  if (fans.fan_in == 0 || fans.fan_out == 0) throw ConfigError("initializer fans must be >= 1");
  if (shape.rank() == 0 || shape.elements() == 0)
    throw DimensionError("cannot initialize an empty shape " + shape.to_string());

  const double fi = static_cast<double>(fans.fan_in);
  const double fo = static_cast<double>(fans.fan_out);
  const double s = spec.scale;
  const std::size_t n = shape.elements();

  if (spec.real) {
    // One real component carries the whole complex variance.
    double var = 0.0;
    bool uniform = true;
    switch (spec.scheme) {
      case InitScheme::glorot_uniform: var = 2.0 / (fi + fo); break;
      case InitScheme::glorot_normal: var = 2.0 / (fi + fo); uniform = false; break;
      case InitScheme::he_uniform: var = 2.0 / fi; break;
      case InitScheme::he_normal: var = 2.0 / fi; uniform = false; break;
      case InitScheme::glorot_uniform_alt_tradeoff: var = 0.5 / fi + 0.5 / fo; break;
      case InitScheme::rayleigh_polar: throw ConfigError("rayleigh_polar has no real-valued form");
    }
    std::vector<double> w(n);
    if (uniform) {
      const double lim = s * std::sqrt(3.0 * var);
      for (auto& v : w) v = rng.uniform(-lim, lim);
    } else {
      const double sd = s * std::sqrt(var);
      for (auto& v : w) v = sd * rng.normal();
    }
    return CTensor::from_real(shape, w);
  }

  CTensor out(shape);
  auto d = out.data();
  switch (spec.scheme) {
    case InitScheme::glorot_uniform: {
      const double lim = s * std::sqrt(3.0) / std::sqrt(fi + fo);
      for (auto& v : d) {
        const double re = rng.uniform(-lim, lim);
        v = {re, rng.uniform(-lim, lim)};
      }
      break;
    }
    case InitScheme::glorot_normal: {
      const double sd = s / std::sqrt(fi + fo);
      for (auto& v : d) {
        const double re = sd * rng.normal();
        v = {re, sd * rng.normal()};
      }
      break;
    }
    case InitScheme::he_uniform: {
      const double lim = s * std::sqrt(3.0 / fi);
      for (auto& v : d) {
        const double re = rng.uniform(-lim, lim);
        v = {re, rng.uniform(-lim, lim)};
      }
      break;
    }
    case InitScheme::he_normal: {
      const double sd = s / std::sqrt(fi);
      for (auto& v : d) {
        const double re = sd * rng.normal();
        v = {re, sd * rng.normal()};
      }
      break;
    }
    case InitScheme::rayleigh_polar: {
      const double sigma = s / std::sqrt(fi + fo);
      for (auto& v : d) {
        const double rho = sigma * std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
        v = std::polar(rho, 2.0 * std::numbers::pi * rng.uniform());
      }
      break;
    }
    case InitScheme::glorot_uniform_alt_tradeoff: {
      const double lim_re = s * std::sqrt(1.5 / fi);
      const double lim_im = s * std::sqrt(1.5 / fo);
      for (auto& v : d) {
        const double re = rng.uniform(-lim_re, lim_re);
        v = {re, rng.uniform(-lim_im, lim_im)};
      }
      break;
    }
  }
  return out;
}

InitializerSpec real_equivalent_spec(const InitializerSpec& spec) {
  if (spec.real) throw ConfigError("initializer spec is already real-valued");
  if (spec.scheme == InitScheme::rayleigh_polar) throw ConfigError("rayleigh_polar has no real equivalent");
  InitializerSpec out = spec;
  out.real = true;
  return out;
}

InitScheme parse_init_scheme(std::string_view name) {
  for (const auto& [scheme, names] : kNames)
    if (name == names.first || name == names.second) return scheme;
  throw ConfigError("unknown initializer '" + std::string(name) + "'");
}

std::string init_scheme_name(InitScheme scheme) {
  for (const auto& [s, names] : kNames)
    if (s == scheme) return names.first;
  return "unknown";
}

}  // namespace cvnn
