#include "cvnn_cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cvnn/error.hpp"
#include "cvnn/rng.hpp"

namespace cvnn::cli {

using json = nlohmann::json;

namespace {

template <class T>
T get_field(const json& j, const std::string& prefix, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + prefix + key + "' has the wrong type");
  }
}

double get_real_or_inf(const json& j, const std::string& prefix, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kNoNoise;
    throw ConfigError("field '" + prefix + key + "' must be a number or \"inf\"");
  }
  if (!v.is_number()) throw ConfigError("field '" + prefix + key + "' must be a number");
  return v.get<double>();
}

std::size_t positive(const json& j, const std::string& prefix, const char* key, std::size_t fallback) {
  const auto v = get_field<std::int64_t>(j, prefix, key, static_cast<std::int64_t>(fallback));
  if (v < 1) throw ConfigError("field '" + prefix + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<double> mean_curve(const std::vector<RunResult>& runs, bool val) {
  std::vector<double> sum;
  std::vector<std::size_t> count;
  for (const auto& r : runs) {
    if (r.diverged) continue;
    const auto& c = val ? r.history.val_loss : r.history.train_loss;
    if (sum.size() < c.size()) {
      sum.resize(c.size(), 0.0);
      count.resize(c.size(), 0);
    }
    for (std::size_t e = 0; e < c.size(); ++e) {
      sum[e] += c[e];
      ++count[e];
    }
  }
  for (std::size_t e = 0; e < sum.size(); ++e) sum[e] /= static_cast<double>(count[e]);
  return sum;
}

std::vector<double> finite_losses(const RepeatedResult& r) {
  std::vector<double> v;
  for (const auto& run : r.runs) v.push_back(run.diverged ? std::nan("") : run.test.loss);
  return v;
}

}  // namespace

json merge_json(json base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      base[it.key()] = merge_json(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

DatasetSpec dataset_spec_from_json(const json& j) {
  const std::string p = "dataset.";
  if (!j.is_object()) throw ConfigError("field 'dataset' must be a table");
  DatasetSpec s;
  s.n_per_class = positive(j, p, "n_per_class", s.n_per_class);
  s.length = positive(j, p, "length", s.length);
  s.snr_db = get_real_or_inf(j, p, "snr_db", s.snr_db);
  s.seed = get_field<std::uint64_t>(j, p, "seed", s.seed);
  if (j.contains("classes")) {
    const auto names = get_field<std::vector<std::string>>(j, p, "classes", {});
    s.classes.clear();
    for (const auto& n : names) {
      try {
        s.classes.push_back(parse_signal_class(n));
      } catch (const ConfigError& e) {
        throw ConfigError("field 'dataset.classes': " + std::string(e.what()));
      }
    }
  }
  if (j.contains("split")) {
    const auto v = get_field<std::vector<double>>(j, p, "split", {});
    if (v.size() != 3) throw ConfigError("field 'dataset.split' must have three fractions");
    s.split = {v[0], v[1], v[2]};
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()).replace(0, 7, "field 'dataset."));
  }
  return s;
}

SGDConfig sgd_from_json(const json& j) {
  const std::string p = "sgd.";
  if (!j.is_object()) throw ConfigError("field 'sgd' must be a table");
  SGDConfig c;
  c.learning_rate = get_field<double>(j, p, "learning_rate", c.learning_rate);
  if (!(c.learning_rate >= 0.0)) throw ConfigError("field 'sgd.learning_rate' must be >= 0");
  c.batch_size = positive(j, p, "batch_size", c.batch_size);
  const auto epochs = get_field<std::int64_t>(j, p, "epochs", static_cast<std::int64_t>(c.epochs));
  if (epochs < 0) throw ConfigError("field 'sgd.epochs' must be >= 0");
  c.epochs = static_cast<std::size_t>(epochs);
  return c;
}

json sgd_to_json(const SGDConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size}, {"epochs", cfg.epochs}};
}

RunResult train_once(Model model, const SignalDataset& data, const SGDConfig& sgd, std::uint64_t seed) {
  const LabeledData train = data.split(Split::train);
  const LabeledData val = data.split(Split::val);
  const LabeledData test = data.split(Split::test);
  RunResult r;
  r.history = fit(model, train, sgd, seed, val.size() > 0 ? &val : nullptr, test.size() > 0 ? &test : nullptr);
  r.diverged = r.history.diverged;
  if (r.history.test) r.test = *r.history.test;
  else r.test = {std::nan(""), std::nan("")};
  return r;
}

// ---------------------------------------------------------------------------
// Initializer study

namespace {

std::vector<InitVariant> study_variants(const std::string& study) {
  auto spec = [](InitScheme s, double scale) {
    InitializerSpec i;
    i.scheme = s;
    i.scale = scale;
    return i;
  };
  if (study == "scale")
    return {{"x_sqrt2", spec(InitScheme::glorot_uniform, std::numbers::sqrt2)},
            {"original", spec(InitScheme::glorot_uniform, 1.0)},
            {"div_2", spec(InitScheme::glorot_uniform, 0.5)}};
  if (study == "schemes")
    return {{"GU", spec(InitScheme::glorot_uniform, 1.0)},
            {"GN", spec(InitScheme::glorot_normal, 1.0)},
            {"GU_C", spec(InitScheme::glorot_uniform_alt_tradeoff, 1.0)},
            {"HU", spec(InitScheme::he_uniform, 1.0)},
            {"HN", spec(InitScheme::he_normal, 1.0)}};
  throw ConfigError("field 'study' must be 'scale' or 'schemes'");
}

}  // namespace

ExpInitConfig ExpInitConfig::from_json(const json& j) {
  ExpInitConfig c;
  c.data.n_per_class = 286;
  c.sgd = {0.01, 100, 30};
  if (j.contains("dataset")) c.data = dataset_spec_from_json(merge_json(c.data.to_json(), j.at("dataset")));
  if (j.contains("sgd")) c.sgd = sgd_from_json(merge_json(sgd_to_json(c.sgd), j.at("sgd")));
  c.runs = positive(j, "", "runs", c.runs);
  c.seed = get_field<std::uint64_t>(j, "", "seed", c.seed);
  c.hidden = get_field<std::vector<std::size_t>>(j, "", "hidden", c.hidden);
  c.activation = get_field<std::string>(j, "", "activation", c.activation);
  c.head = get_field<std::string>(j, "", "head", c.head);
  if (!is_activation(c.activation)) throw ConfigError("field 'activation': unknown activation '" + c.activation + "'");
  if (!is_activation(c.head)) throw ConfigError("field 'head': unknown activation '" + c.head + "'");
  if (j.contains("loss")) {
    try {
      c.loss = parse_loss_kind(get_field<std::string>(j, "", "loss", ""));
    } catch (const ConfigError& e) {
      throw ConfigError("field 'loss': " + std::string(e.what()));
    }
  }
  if (j.contains("variants")) {
    const auto& vs = j.at("variants");
    if (!vs.is_array() || vs.empty()) throw ConfigError("field 'variants' must be a non-empty array of tables");
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const std::string p = "variants[" + std::to_string(i) + "].";
      InitVariant v;
      if (!vs[i].contains("name")) throw ConfigError("missing field '" + p + "name'");
      v.name = get_field<std::string>(vs[i], p, "name", "");
      try {
        v.init.scheme = parse_init_scheme(get_field<std::string>(vs[i], p, "initializer", "ComplexGlorotUniform"));
      } catch (const ConfigError& e) {
        throw ConfigError("field '" + p + "initializer': " + e.what());
      }
      v.init.scale = get_field<double>(vs[i], p, "scale", 1.0);
      if (!(v.init.scale > 0.0)) throw ConfigError("field '" + p + "scale' must be > 0");
      c.variants.push_back(v);
    }
  } else {
    c.variants = study_variants(get_field<std::string>(j, "", "study", "scale"));
  }
  return c;
}

json ExpInitConfig::to_json() const {
  json vs = json::array();
  for (const auto& v : variants)
    vs.push_back({{"name", v.name}, {"initializer", init_scheme_name(v.init.scheme)}, {"scale", v.init.scale}});
  return {{"dataset", data.to_json()}, {"sgd", sgd_to_json(sgd)}, {"runs", runs},
          {"seed", seed},              {"hidden", hidden},        {"activation", activation},
          {"head", head},              {"loss", loss_kind_name(loss)}, {"variants", vs}};
}

Model ExpInitConfig::make_model(const InitializerSpec& init, std::uint64_t seed) const {
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t w : hidden) layers.push_back(std::make_unique<Dense>(w, ActivationSpec{activation, {}}, init));
  layers.push_back(std::make_unique<Dense>(data.classes.size(), ActivationSpec{head, {}}, init));
  return Model(Shape{data.length}, std::move(layers), LossSpec{loss, {}, {}}, DType::complex, seed);
}

json ExpInitResult::ordering() const {
  json out = json::array();
  for (std::size_t a = 0; a < variants.size(); ++a)
    for (std::size_t b = a + 1; b < variants.size(); ++b) {
      const double ma = variants[a].result.accuracy.median, mb = variants[b].result.accuracy.median;
      out.push_back({{"a", variants[a].variant.name},
                     {"b", variants[b].variant.name},
                     {"relation", ma > mb ? ">" : (ma < mb ? "<" : "=")},
                     {"median_a", ma},
                     {"median_b", mb}});
    }
  return out;
}

json ExpInitResult::to_json() const {
  json vs = json::array();
  for (const auto& v : variants) {
    json e = v.result.to_json();
    e["name"] = v.variant.name;
    e["initializer"] = init_scheme_name(v.variant.init.scheme);
    e["scale"] = v.variant.init.scale;
    vs.push_back(std::move(e));
  }
  return {{"variants", vs}, {"ordering", ordering()}};
}

ExpInitResult run_exp_init(const ExpInitConfig& cfg, const SignalDataset& data, const ProgressFn& progress) {
  ExpInitResult out;
  for (const auto& v : cfg.variants) {
    VariantResult vr{v, {}};
    vr.result = run_repeated(cfg.runs, cfg.seed, [&](std::size_t i, std::uint64_t run_seed) {
      RunResult r = train_once(cfg.make_model(v.init, derive_key(run_seed, 1)), data, cfg.sgd, derive_key(run_seed, 2));
      if (progress)
        progress("exp-init " + v.name + " run " + std::to_string(i + 1) + "/" + std::to_string(cfg.runs) +
                 (r.diverged ? " diverged" : " test_accuracy=" + format_double(r.test.accuracy)));
      return r;
    });
    out.variants.push_back(std::move(vr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Complex vs real MLP

ExpCvRvConfig ExpCvRvConfig::from_json(const json& j) {
  ExpCvRvConfig c;
  c.task = get_field<std::string>(j, "", "task", c.task);
  if (c.task == "binary") {
    c.data.classes = {SignalClass::LinearChirp, SignalClass::SChirp};
    c.data.n_per_class = 2000;
  } else if (c.task == "full") {
    c.data.n_per_class = 600;
  } else {
    throw ConfigError("field 'task' must be 'binary' or 'full'");
  }
  c.sgd = {0.01, 100, 100};
  if (j.contains("dataset")) c.data = dataset_spec_from_json(merge_json(c.data.to_json(), j.at("dataset")));
  if (j.contains("sgd")) c.sgd = sgd_from_json(merge_json(sgd_to_json(c.sgd), j.at("sgd")));
  c.runs = positive(j, "", "runs", c.runs);
  c.seed = get_field<std::uint64_t>(j, "", "seed", c.seed);
  c.hidden = get_field<std::vector<std::size_t>>(j, "", "hidden", c.hidden);
  c.activation = get_field<std::string>(j, "", "activation", c.activation);
  c.head = get_field<std::string>(j, "", "head", c.head);
  if (!is_activation(c.activation)) throw ConfigError("field 'activation': unknown activation '" + c.activation + "'");
  if (!is_activation(c.head)) throw ConfigError("field 'head': unknown activation '" + c.head + "'");
  c.dropout = get_field<double>(j, "", "dropout", c.dropout);
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("field 'dropout' must be in [0, 1)");
  c.multiplier = get_field<double>(j, "", "multiplier", c.multiplier);
  if (!(c.multiplier > 0.0)) throw ConfigError("field 'multiplier' must be > 0");
  c.bins = positive(j, "", "bins", c.bins);
  return c;
}

json ExpCvRvConfig::to_json() const {
  return {{"task", task},           {"dataset", data.to_json()}, {"sgd", sgd_to_json(sgd)},
          {"runs", runs},           {"seed", seed},              {"hidden", hidden},
          {"activation", activation}, {"head", head},            {"dropout", dropout},
          {"multiplier", multiplier}, {"bins", bins}};
}

Model ExpCvRvConfig::make_complex_model(std::uint64_t seed) const {
  std::vector<std::unique_ptr<Layer>> layers;
  for (std::size_t w : hidden) {
    layers.push_back(std::make_unique<Dense>(w, ActivationSpec{activation, {}}));
    if (dropout > 0.0) layers.push_back(std::make_unique<Dropout>(dropout));
  }
  layers.push_back(std::make_unique<Dense>(data.classes.size(), ActivationSpec{head, {}}));
  return Model(Shape{data.length}, std::move(layers), LossSpec{LossKind::cce_real, {}, {}}, DType::complex, seed);
}

std::vector<double> jackknife_iqr(const std::vector<double>& values) {
  std::vector<double> out;
  if (values.size() < 2) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<double> rest;
    for (std::size_t k = 0; k < values.size(); ++k)
      if (k != i && std::isfinite(values[k])) rest.push_back(values[k]);
    out.push_back(rest.empty() ? std::nan("") : box_stats(rest).iqr());
  }
  return out;
}

json ExpCvRvResult::to_json() const {
  return {{"cv", cv.to_json()},
          {"rv", rv.to_json()},
          {"median_accuracy_difference", cv.accuracy.median - rv.accuracy.median},
          {"cv_loss_iqr", cv.loss.iqr()},
          {"rv_loss_iqr", rv.loss.iqr()},
          {"cv_loss_iqr_jackknife", cv_loss_iqr_jackknife},
          {"rv_loss_iqr_jackknife", rv_loss_iqr_jackknife},
          {"rv_iqr_wins", rv_iqr_wins},
          {"replicates", cv_loss_iqr_jackknife.size()}};
}

ExpCvRvResult run_exp_cv_rv(const ExpCvRvConfig& cfg, const SignalDataset& data, const ProgressFn& progress) {
  ExpCvRvResult out;
  auto runner = [&](bool real) {
    return [&, real](std::size_t i, std::uint64_t run_seed) {
      Model cv = cfg.make_complex_model(derive_key(run_seed, 1));
      Model m = real ? cv.get_real_equivalent(cfg.multiplier) : std::move(cv);
      RunResult r = train_once(std::move(m), data, cfg.sgd, derive_key(run_seed, 2));
      if (progress)
        progress(std::string("exp-cv-rv ") + (real ? "rv" : "cv") + " run " + std::to_string(i + 1) + "/" +
                 std::to_string(cfg.runs) +
                 (r.diverged ? " diverged" : " test_accuracy=" + format_double(r.test.accuracy)));
      return r;
    };
  };
  out.cv = run_repeated(cfg.runs, cfg.seed, runner(false));
  out.rv = run_repeated(cfg.runs, cfg.seed, runner(true));
  out.cv_loss_iqr_jackknife = jackknife_iqr(finite_losses(out.cv));
  out.rv_loss_iqr_jackknife = jackknife_iqr(finite_losses(out.rv));
  for (std::size_t i = 0; i < out.cv_loss_iqr_jackknife.size(); ++i)
    if (out.rv_loss_iqr_jackknife[i] >= out.cv_loss_iqr_jackknife[i]) ++out.rv_iqr_wins;
  out.cv_train_loss = mean_curve(out.cv.runs, false);
  out.cv_val_loss = mean_curve(out.cv.runs, true);
  out.rv_train_loss = mean_curve(out.rv.runs, false);
  out.rv_val_loss = mean_curve(out.rv.runs, true);
  return out;
}

}  // namespace cvnn::cli
