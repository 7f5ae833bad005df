#include "cvnn/model.hpp"

#include <fstream>

#include "binio.hpp"
#include "cvnn/error.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'M', 'D'};
constexpr std::uint16_t kVersion = 1;

std::vector<std::unique_ptr<Layer>> clone_all(const std::vector<std::unique_ptr<Layer>>& layers) {
  std::vector<std::unique_ptr<Layer>> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l->clone());
  return out;
}

}  // namespace

nlohmann::json loss_to_json(const LossSpec& spec) {
  nlohmann::json j = {{"kind", loss_kind_name(spec.kind)}};
  if (!spec.class_weights.empty()) j["class_weights"] = spec.class_weights;
  if (spec.ignore_label) j["ignore_label"] = *spec.ignore_label;
  return j;
}

LossSpec loss_from_json(const nlohmann::json& j) {
  LossSpec spec;
  if (j.is_string()) {
    spec.kind = parse_loss_kind(j.get<std::string>());
    return spec;
  }
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("missing field 'loss.kind'");
  try {
    spec.kind = parse_loss_kind(j.at("kind").get<std::string>());
    if (j.contains("class_weights")) spec.class_weights = j.at("class_weights").get<std::vector<double>>();
    if (j.contains("ignore_label")) spec.ignore_label = j.at("ignore_label").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field 'loss' has a value of the wrong type");
  }
  return spec;
}

Model::Model(Shape data_shape, std::vector<std::unique_ptr<Layer>> layers, LossSpec loss, DType dtype,
             std::uint64_t seed, bool real_input)
    : data_shape_(std::move(data_shape)),
      layers_(std::move(layers)),
      loss_(std::move(loss)),
      dtype_(dtype),
      seed_(seed),
      real_input_(real_input) {
  if (layers_.empty()) throw ConfigError("a model needs at least one layer");
  if (data_shape_.rank() == 0) throw ConfigError("data shape must have rank >= 1");
  if (real_input_ && dtype_ != DType::real) throw ConfigError("real_input requires a real dtype");
  build();
}

Model::Model(const Model& other)
    : data_shape_(other.data_shape_),
      layer_in_shape_(other.layer_in_shape_),
      out_shape_(other.out_shape_),
      layers_(clone_all(other.layers_)),
      loss_(other.loss_),
      dtype_(other.dtype_),
      seed_(other.seed_),
      real_input_(other.real_input_) {
  link();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

void Model::link() {
  const MaxPooling2D* last_pool = nullptr;
  for (auto& l : layers_) {
    if (auto* p = dynamic_cast<MaxPooling2D*>(l.get()); p != nullptr && p->with_argmax()) last_pool = p;
    if (auto* u = dynamic_cast<UnPooling2D*>(l.get())) {
      if (last_pool == nullptr) throw ConfigError("ComplexUnPooling2D needs a preceding ComplexMaxPooling2D with_argmax");
      u->attach(last_pool);
    }
  }
}

void Model::build() {
  layer_in_shape_ = data_shape_;
  if (dtype_ == DType::real && !real_input_) {
    std::vector<std::size_t> dims = data_shape_.dims();
    dims.back() *= 2;
    layer_in_shape_ = Shape(std::move(dims));
  }
  link();
  Shape s = layer_in_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->set_real_mode(dtype_ == DType::real);
    try {
      s = layers_[i]->build(s, derive_key(seed_, i));
    } catch (const Error& e) {
      throw ConfigError("layers[" + std::to_string(i) + "] (" + layers_[i]->type() + "): " + e.what());
    }
  }
  out_shape_ = s;
  if (dtype_ == DType::complex && loss_needs_real_output(loss_.kind)) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      if (!(*it)->has_width()) continue;
      if (auto* d = dynamic_cast<Dense*>(it->get()); d != nullptr && !d->activation().real_output())
        throw ConfigError("loss " + loss_kind_name(loss_.kind) + " needs a real-valued output activation, got '" +
                          d->activation().name() + "'");
      break;
    }
  }
}

CTensor Model::prepare_input(const CTensor& data) const {
  if (data.shape().rank() != data_shape_.rank() + 1 || data.shape().tail() != data_shape_)
    throw DimensionError("model expects batches of " + data_shape_.to_string() + ", got " + data.shape().to_string());
  if (dtype_ == DType::complex) return data;
  if (real_input_) return data.real_part();
  const std::size_t c = data_shape_.back();
  const std::size_t rows = data.size() / c;
  std::vector<std::size_t> dims = data.shape().dims();
  dims.back() *= 2;
  CTensor out{Shape(std::move(dims))};
  auto src = data.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < c; ++k) {
      dst[r * 2 * c + k] = src[r * c + k].real();
      dst[r * 2 * c + c + k] = src[r * c + k].imag();
    }
  out.mark_real_only();
  return out;
}

CTensor Model::forward(const CTensor& data, bool training) {
  CTensor x = prepare_input(data);
  for (auto& l : layers_) x = l->forward(x, training);
  return x;
}

void Model::backward(const CTensor& grad_out) {
  CTensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

std::vector<Parameter> Model::parameters() {
  std::vector<Parameter> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Parameter p : layers_[i]->parameters()) {
      p.name = "layers." + std::to_string(i) + "." + p.name;
      out.push_back(std::move(p));
    }
  return out;
}

Model Model::get_real_equivalent(double multiplier) const {
  if (!(multiplier > 0.0)) throw ConfigError("real-equivalent multiplier must be > 0");
  std::size_t output = layers_.size();
  for (std::size_t i = layers_.size(); i-- > 0;)
    if (layers_[i]->has_width()) {
      output = i;
      break;
    }
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      layers.push_back(layers_[i]->real_equivalent(multiplier, i == output));
    } catch (const ConfigError& e) {
      throw ConfigError("layers[" + std::to_string(i) + "] (" + layers_[i]->type() + "): " + e.what());
    }
  }
  return Model(data_shape_, std::move(layers), loss_, DType::real, seed_, real_input_);
}

nlohmann::json Model::config() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) layers.push_back(l->config());
  return {{"dtype", dtype_ == DType::complex ? "complex" : "real"},
          {"data_shape", data_shape_.dims()},
          {"real_input", real_input_},
          {"seed", seed_},
          {"loss", loss_to_json(loss_)},
          {"layers", std::move(layers)}};
}

Model Model::from_config(const nlohmann::json& config) {
  if (!config.is_object()) throw ConfigError("model config must be a table");
  for (const char* key : {"data_shape", "layers"})
    if (!config.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  DType dtype = DType::complex;
  std::vector<std::size_t> dims;
  std::uint64_t seed = 0;
  bool real_input = false;
  try {
    const auto name = config.value("dtype", std::string("complex"));
    if (name == "real") {
      dtype = DType::real;
    } else if (name != "complex") {
      throw ConfigError("field 'dtype' must be 'complex' or 'real'");
    }
    dims = config.at("data_shape").get<std::vector<std::size_t>>();
    seed = config.value("seed", std::uint64_t{0});
    real_input = config.value("real_input", false);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("model config field has the wrong type");
  }
  const LossSpec loss = config.contains("loss") ? loss_from_json(config.at("loss")) : LossSpec{};
  const auto& lj = config.at("layers");
  if (!lj.is_array()) throw ConfigError("field 'layers' must be an array");
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t i = 0; i < lj.size(); ++i) {
    try {
      layers.push_back(make_layer(lj[i]));
    } catch (const Error& e) {
      throw ConfigError("layers[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return Model(Shape(std::move(dims)), std::move(layers), loss, dtype, seed, real_input);
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string json = config().dump();
  os.write(kMagic, 4);
  detail::put<std::uint16_t>(os, kVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(json.size()));
  os.write(json.data(), static_cast<std::streamsize>(json.size()));
  auto& self = const_cast<Model&>(*this);
  std::vector<std::pair<std::string, CTensor*>> tensors;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto& [name, t] : self.layers_[i]->state()) tensors.emplace_back(std::to_string(i) + "." + name, t);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint64_t>(os, t->size());
    for (const cplx& v : std::as_const(*t).data()) {
      detail::put<double>(os, v.real());
      detail::put<double>(os, v.imag());
    }
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  if (detail::get_bytes(is, 4, "magic") != std::string(kMagic, 4))
    throw IntegrityError("'" + path.string() + "' is not a model file");
  if (const auto v = detail::get<std::uint16_t>(is, "version"); v != kVersion)
    throw IntegrityError("unsupported model file version " + std::to_string(v));
  const auto json_len = detail::get<std::uint32_t>(is, "config length");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(detail::get_bytes(is, json_len, "config"));
  } catch (const nlohmann::json::parse_error&) {
    throw IntegrityError("model config in '" + path.string() + "' is not valid JSON");
  }
  Model m = from_config(cfg);
  std::vector<std::pair<std::string, CTensor*>> tensors;
  for (std::size_t i = 0; i < m.layers_.size(); ++i)
    for (auto& [name, t] : m.layers_[i]->state()) tensors.emplace_back(std::to_string(i) + "." + name, t);
  const auto count = detail::get<std::uint32_t>(is, "tensor count");
  if (count != tensors.size())
    throw IntegrityError("model file holds " + std::to_string(count) + " tensors, config expects " +
                         std::to_string(tensors.size()));
  for (auto& [name, t] : tensors) {
    const auto name_len = detail::get<std::uint32_t>(is, "tensor name");
    const auto stored = detail::get_bytes(is, name_len, "tensor name");
    if (stored != name) throw IntegrityError("expected tensor '" + name + "', found '" + stored + "'");
    const auto n = detail::get<std::uint64_t>(is, "tensor size");
    if (n != t->size()) throw IntegrityError("tensor '" + name + "' has the wrong size");
    auto d = t->data();
    for (auto& v : d) {
      const double re = detail::get<double>(is, "tensor data");
      const double im = detail::get<double>(is, "tensor data");
      v = {re, im};
    }
  }
  return m;
}

}  // namespace cvnn
