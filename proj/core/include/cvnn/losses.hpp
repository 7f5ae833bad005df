#pragma once

// Real-valued losses of complex predictions. Inputs are [batch x classes]
// (or a single rank-1 sample) and every loss is the mean of per-sample terms.
// Gradients follow the Wirtinger convention: 2 dL/d conj(y).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvnn/ctensor.hpp"

namespace cvnn {

enum class LossKind { ace, weighted_ace, masked_ace, complex_quadratic, cce_real };

struct LossSpec {
  LossKind kind = LossKind::cce_real;
  /// One weight per class (weighted_ace).
  std::vector<double> class_weights;
  /// Samples with this label are skipped (masked_ace).
  std::optional<std::size_t> ignore_label;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

struct LossResult {
  double value = 0.0;
  CTensor grad;
};

/// Probability clamp applied before every log.
inline constexpr double kProbClamp = 1e-7;

/// Mean over samples of (CCE(Re y, d) + CCE(Im y, d)) / 2.
double ace(const CTensor& y, const CTensor& d);
/// ACE with per-class weights and an ignored label (either optional). The
/// label of a sample is the argmax of its target row.
double weighted_masked_ace(const CTensor& y, const CTensor& d, const LossSpec& spec);
/// Mean over samples of sum |y - d|^2 / 2.
double complex_quadratic(const CTensor& y, const CTensor& d);
/// Mean over samples of CCE(Re y, d).
double cce_real(const CTensor& y, const CTensor& d);

/// Value and Wirtinger gradient with respect to y.
LossResult evaluate_loss(const LossSpec& spec, const CTensor& y, const CTensor& d);

LossKind parse_loss_kind(std::string_view name);
std::string loss_kind_name(LossKind kind);

/// Whether the loss reads only the real part of y.
bool loss_needs_real_output(LossKind kind);

}  // namespace cvnn
