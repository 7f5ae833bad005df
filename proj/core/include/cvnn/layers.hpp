#pragma once

// Complex-valued layers.
//
// Tensors carry a leading batch axis; layer shapes exclude it. forward()
// caches what backward() needs. backward() takes the Wirtinger gradient of
// the output (2 dL/d conj(y)), overwrites the parameter gradients and returns
// the gradient of the input. A layer in real mode holds real parameters and
// expects real inputs; its gradients stay real.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvnn/activations.hpp"
#include "cvnn/ctensor.hpp"
#include "cvnn/initializers.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

// ---------------------------------------------------------------------------
// Functional ops. Image tensors are H x W x C or N x H x W x C.

/// Input dropout: one Bernoulli keep-mask per complex element, shared by Re
/// and Im, survivors scaled by 1 / (1 - rate). Identity when not training.
CTensor dropout_forward(const CTensor& x, double rate, bool training, CounterRng& rng);

enum class PoolMode { max_modulus, avg_arithmetic, avg_circular, avg_circular_norm };

struct PoolSpec {
  std::size_t ph = 2, pw = 2;
  std::size_t sh = 2, sw = 2;
  PoolMode mode = PoolMode::max_modulus;
};

/// Flat indices into the pooled input, one per pooled output element.
struct ArgmaxMap {
  Shape input_shape;
  std::vector<std::size_t> indices;
};

struct MaxPoolResult {
  CTensor values;
  ArgmaxMap argmax;
};

/// Largest modulus per window; ties go to the lowest flat index.
MaxPoolResult max_pool2d(const CTensor& x, const PoolSpec& spec);
CTensor avg_pool2d(const CTensor& x, const PoolSpec& spec);

/// Scatters `values` to argmax.input_shape (zeros elsewhere). Throws
/// IntegrityError on out-of-range or duplicate indices.
CTensor unpool2d(const CTensor& values, const ArgmaxMap& argmax);
/// Same, with the output shape given as the pooled shape times (fh, fw).
CTensor unpool2d(const CTensor& values, const ArgmaxMap& argmax, std::size_t fh, std::size_t fw);

enum class Interpolation { nearest, bilinear };

/// Bilinear uses half-pixel centers (corners not aligned), Re and Im separately.
CTensor upsample2d(const CTensor& x, std::size_t fh, std::size_t fw, Interpolation mode);

/// Scatter of kernel copies weighted by the input; kernels are
/// kh x kw x Cout x Cin and the output is ((H-1)sh + kh) x ((W-1)sw + kw) x Cout.
CTensor conv2d_transpose(const CTensor& x, const CTensor& kernels, Stride2 stride);

/// Inverse square root of a symmetric positive-definite 2x2 matrix
/// [[a, b], [b, c]], returned as {w00, w01, w11}.
std::array<double, 3> inverse_sqrt_2x2(double a, double b, double c);

// ---------------------------------------------------------------------------
// Layer objects.

struct Parameter {
  std::string name;
  CTensor* value;
  CTensor* grad;
  /// Real parameter (BatchNorm affine terms, real-mode weights).
  bool real;
};

class Layer {
 public:
  virtual ~Layer() = default;

  /// Config type name, e.g. "ComplexDense".
  virtual std::string type() const = 0;

  /// Allocates and initializes parameters for a per-sample input shape and
  /// returns the per-sample output shape.
  virtual Shape build(const Shape& input_shape, std::uint64_t seed) = 0;
  virtual CTensor forward(const CTensor& x, bool training) = 0;
  virtual CTensor backward(const CTensor& grad_out) = 0;

  virtual std::vector<Parameter> parameters() { return {}; }
  /// Every tensor a saved model must restore: parameters, then buffers.
  virtual std::vector<std::pair<std::string, CTensor*>> state();
  /// Layer configuration (no weights).
  virtual nlohmann::json config() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  /// Real-valued counterpart; by default a real-mode copy. Widths scale by
  /// `multiplier` unless `is_output`. Throws ConfigError if there is none.
  virtual std::unique_ptr<Layer> real_equivalent(double multiplier, bool is_output) const;

  /// Whether the layer owns a width that real_equivalent scales.
  virtual bool has_width() const { return false; }

  bool real_mode() const noexcept { return real_mode_; }
  void set_real_mode(bool on) noexcept { real_mode_ = on; }

  const Shape& input_shape() const noexcept { return in_shape_; }
  const Shape& output_shape() const noexcept { return out_shape_; }

 protected:
  void check_input(const CTensor& x) const;

  bool real_mode_ = false;
  Shape in_shape_;
  Shape out_shape_;
};

class Dense final : public Layer {
 public:
  explicit Dense(std::size_t units, ActivationSpec activation = {}, InitializerSpec init = {}, bool use_bias = true);

  std::string type() const override { return "ComplexDense"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  std::vector<Parameter> parameters() override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  std::unique_ptr<Layer> real_equivalent(double multiplier, bool is_output) const override;
  bool has_width() const override { return true; }

  std::size_t units() const noexcept { return units_; }
  const Activation& activation() const noexcept { return act_; }
  const InitializerSpec& initializer() const noexcept { return init_; }
  bool use_bias() const noexcept { return use_bias_; }

  /// [fan_out x fan_in]
  CTensor& weights() noexcept { return w_; }
  const CTensor& weights() const noexcept { return w_; }
  /// [fan_out]
  CTensor& bias() noexcept { return b_; }
  const CTensor& bias() const noexcept { return b_; }
  const CTensor& weights_grad() const noexcept { return gw_; }
  const CTensor& bias_grad() const noexcept { return gb_; }

 private:
  std::size_t units_;
  Activation act_;
  InitializerSpec init_;
  bool use_bias_;
  CTensor w_, b_, gw_, gb_;
  CTensor x_cache_, v_cache_;
};

class Conv2D final : public Layer {
 public:
  Conv2D(std::size_t filters, std::size_t kh, std::size_t kw, Stride2 stride = {}, Padding padding = Padding::valid,
         ActivationSpec activation = {}, InitializerSpec init = {}, bool use_bias = true);

  std::string type() const override { return "ComplexConv2D"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  std::vector<Parameter> parameters() override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }
  std::unique_ptr<Layer> real_equivalent(double multiplier, bool is_output) const override;
  bool has_width() const override { return true; }

  /// kh x kw x Cin x Cout
  CTensor& kernels() noexcept { return k_; }
  CTensor& bias() noexcept { return b_; }

 private:
  std::size_t filters_, kh_, kw_;
  Stride2 stride_;
  Padding padding_;
  Activation act_;
  InitializerSpec init_;
  bool use_bias_;
  PadPlan plan_r_, plan_c_;
  CTensor k_, b_, gk_, gb_;
  CTensor x_cache_, v_cache_;
};

class Conv2DTranspose final : public Layer {
 public:
  Conv2DTranspose(std::size_t filters, std::size_t kh, std::size_t kw, Stride2 stride = {},
                  ActivationSpec activation = {}, InitializerSpec init = {}, bool use_bias = true);

  std::string type() const override { return "ComplexConv2DTranspose"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  std::vector<Parameter> parameters() override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2DTranspose>(*this); }
  std::unique_ptr<Layer> real_equivalent(double multiplier, bool is_output) const override;
  bool has_width() const override { return true; }

  /// kh x kw x Cout x Cin
  CTensor& kernels() noexcept { return k_; }
  CTensor& bias() noexcept { return b_; }

 private:
  std::size_t filters_, kh_, kw_;
  Stride2 stride_;
  Activation act_;
  InitializerSpec init_;
  bool use_bias_;
  CTensor k_, b_, gk_, gb_;
  CTensor x_cache_, v_cache_;
};

class Flatten final : public Layer {
 public:
  std::string type() const override { return "ComplexFlatten"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
};

class Dropout final : public Layer {
 public:
  explicit Dropout(double rate, std::optional<std::uint64_t> seed = std::nullopt);

  std::string type() const override { return "ComplexDropout"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  std::optional<std::uint64_t> seed_;
  CounterRng rng_;
  std::vector<double> mask_;  // empty when the last forward was identity
};

class MaxPooling2D final : public Layer {
 public:
  explicit MaxPooling2D(PoolSpec spec = {}, bool with_argmax = false);

  std::string type() const override { return "ComplexMaxPooling2D"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPooling2D>(*this); }

  bool with_argmax() const noexcept { return with_argmax_; }
  /// Map from the most recent forward pass (batch-level indices).
  const ArgmaxMap& last_argmax() const noexcept { return argmax_; }

 private:
  PoolSpec spec_;
  bool with_argmax_;
  ArgmaxMap argmax_;
};

class AvgPooling2D final : public Layer {
 public:
  explicit AvgPooling2D(PoolSpec spec);

  std::string type() const override { return "ComplexAvgPooling2D"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPooling2D>(*this); }
  std::unique_ptr<Layer> real_equivalent(double multiplier, bool is_output) const override;

 private:
  PoolSpec spec_;
  CTensor x_cache_;
};

class UpSampling2D final : public Layer {
 public:
  UpSampling2D(std::size_t fh, std::size_t fw, Interpolation mode = Interpolation::nearest);

  std::string type() const override { return "ComplexUpSampling2D"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<UpSampling2D>(*this); }

 private:
  std::size_t fh_, fw_;
  Interpolation mode_;
};

/// Reverses the nearest preceding MaxPooling2D built with with_argmax.
class UnPooling2D final : public Layer {
 public:
  std::string type() const override { return "ComplexUnPooling2D"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<UnPooling2D>(*this); }

  /// Set by the owning model before build().
  void attach(const MaxPooling2D* source) noexcept { source_ = source; }

 private:
  const MaxPooling2D* source_ = nullptr;
  ArgmaxMap used_;
};

/// Complex batch normalization over the innermost (feature) axis. Each
/// feature is whitened as a vector in R^2 and mapped through a trainable
/// 2x2 Gamma and 2-vector beta. In real mode each feature is a scalar.
class BatchNormalization final : public Layer {
 public:
  explicit BatchNormalization(double momentum = 0.99, double epsilon = 1e-5);

  std::string type() const override { return "ComplexBatchNormalization"; }
  Shape build(const Shape& input_shape, std::uint64_t seed) override;
  CTensor forward(const CTensor& x, bool training) override;
  CTensor backward(const CTensor& grad_out) override;
  std::vector<Parameter> parameters() override;
  std::vector<std::pair<std::string, CTensor*>> state() override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNormalization>(*this); }
  std::unique_ptr<Layer> real_equivalent(double multiplier, bool is_output) const override;

  std::size_t features() const noexcept { return features_; }
  /// Complex mode: [F x 2] and [F x 2 x 2]; real mode: [F] and [F].
  CTensor& gamma() noexcept { return gamma_; }
  CTensor& beta() noexcept { return beta_; }
  const CTensor& moving_mean() const noexcept { return mov_mean_; }
  const CTensor& moving_cov() const noexcept { return mov_cov_; }
  CTensor& moving_mean() noexcept { return mov_mean_; }
  CTensor& moving_cov() noexcept { return mov_cov_; }
  const CTensor& gamma_grad() const noexcept { return g_gamma_; }
  const CTensor& beta_grad() const noexcept { return g_beta_; }

 private:
  CTensor backward_complex(const CTensor& grad_out);
  CTensor backward_real(const CTensor& grad_out);

  double momentum_, epsilon_;
  std::size_t features_ = 0;
  CTensor gamma_, beta_, g_gamma_, g_beta_;
  CTensor mov_mean_, mov_cov_;
  // Training-pass cache: centered input, whitening matrices, whitened values.
  bool cached_training_ = false;
  std::vector<double> xc_, xhat_;
  std::vector<std::array<double, 3>> whiten_;
  std::vector<std::array<double, 3>> cov_;
  CTensor x_cache_;
};

/// Builds a layer from its config object; errors name the offending field.
std::unique_ptr<Layer> make_layer(const nlohmann::json& config);

}  // namespace cvnn
