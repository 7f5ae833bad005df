#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "cvnn/ctensor.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

enum class InitScheme {
  glorot_uniform,
  glorot_normal,
  he_uniform,
  he_normal,
  rayleigh_polar,
  glorot_uniform_alt_tradeoff,
};

struct FanPair {
  std::size_t fan_in = 1;
  std::size_t fan_out = 1;
};

struct InitializerSpec {
  InitScheme scheme = InitScheme::glorot_uniform;
  /// Multiplier on the per-component limit or standard deviation.
  double scale = 1.0;
  std::uint64_t seed = 0;
  /// Draw real weights for a real-valued layer (see real_equivalent_spec).
  bool real = false;

  friend bool operator==(const InitializerSpec&, const InitializerSpec&) = default;
};

/// sqrt(3) / sqrt(fan_in + fan_out): per-component uniform limit giving a
/// total complex variance of 2 / (fan_in + fan_out).
double glorot_limit_complex(FanPair fans);
/// sqrt(6) / sqrt(fan_in + fan_out).
double glorot_limit_real(FanPair fans);

/// Weights drawn element by element in row-major order (Re before Im).
/// Throws ConfigError for scale <= 0 or zero fans, DimensionError for an empty shape.
CTensor sample_weights(const InitializerSpec& spec, const Shape& shape, FanPair fans, CounterRng& rng);

/// Spec a real layer uses to match the complex per-weight variance. Throws
/// ConfigError for rayleigh_polar or an already-real spec.
InitializerSpec real_equivalent_spec(const InitializerSpec& spec);

/// Accepts the config names (ComplexGlorotUniform, ...) and the scheme names
/// (glorot_uniform, ...). Throws ConfigError otherwise.
InitScheme parse_init_scheme(std::string_view name);
/// Config name of a scheme.
std::string init_scheme_name(InitScheme scheme);

}  // namespace cvnn
