#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvnn/layers.hpp"
#include "cvnn/losses.hpp"

namespace cvnn {

enum class DType { complex, real };

/// Sequential network with a loss.
///
/// Data are always complex with per-sample shape data_shape(). A real-dtype
/// model feeds its layers Re then Im concatenated on the last axis (unless
/// the data are already real, see real_input()).
class Model {
 public:
  /// Builds every layer; layer i is seeded with derive_key(seed, i).
  Model(Shape data_shape, std::vector<std::unique_ptr<Layer>> layers, LossSpec loss, DType dtype = DType::complex,
        std::uint64_t seed = 0, bool real_input = false);

  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const Shape& data_shape() const noexcept { return data_shape_; }
  /// Per-sample shape seen by the first layer.
  const Shape& layer_input_shape() const noexcept { return layer_in_shape_; }
  const Shape& output_shape() const noexcept { return out_shape_; }
  DType dtype() const noexcept { return dtype_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const LossSpec& loss() const noexcept { return loss_; }
  /// Data that are already real (im == 0) and not split into two halves.
  bool real_input() const noexcept { return real_input_; }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  /// Maps a batch of data to the first layer's input layout.
  CTensor prepare_input(const CTensor& data) const;
  CTensor forward(const CTensor& data, bool training);
  /// Back-propagates the Wirtinger gradient of the output through every layer.
  void backward(const CTensor& grad_out);
  std::vector<Parameter> parameters();

  /// Real-valued model with the same topology. Hidden widths are multiplied
  /// by `multiplier`; the output width is kept. Complex data are split into
  /// Re and Im, doubling the last input axis.
  Model get_real_equivalent(double multiplier) const;

  nlohmann::json config() const;
  /// Rebuilds from config() output; errors name the field ("layers[2].units").
  static Model from_config(const nlohmann::json& config);

  /// Binary model file: "CVMD", u16 version, JSON config, tensors as f64.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  void link();
  void build();

  Shape data_shape_;
  Shape layer_in_shape_;
  Shape out_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  LossSpec loss_;
  DType dtype_;
  std::uint64_t seed_;
  bool real_input_;
};

nlohmann::json loss_to_json(const LossSpec& spec);
LossSpec loss_from_json(const nlohmann::json& j);

}  // namespace cvnn
