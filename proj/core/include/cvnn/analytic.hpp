#pragma once

// Closed-form MLP gradients from the per-neuron layered recursion. Shares
// nothing with Layer::backward beyond the activation's pointwise partials,
// so it serves as an oracle for the training path.

#include <vector>

#include "cvnn/model.hpp"

namespace cvnn {

struct DenseGradients {
  CTensor weights;  // [fan_out x fan_in], 2 dE/d(conj w) (real models: dE/dw)
  CTensor bias;     // [fan_out]
};

/// One entry per Dense layer. The model must contain only ComplexDense layers
/// with elementwise activations on rank-1 samples and use ace, cce_real or
/// complex_quadratic; anything else throws UnsupportedOpError. Real models
/// use the real recursion.
std::vector<DenseGradients> mlp_analytic_gradients(const Model& model, const CTensor& batch, const CTensor& targets);

}  // namespace cvnn
