#include "cvnn_cli/commands.hpp"

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cvnn/error.hpp"
#include "cvnn/model.hpp"
#include "cvnn/rng.hpp"
#include "cvnn_cli/artifacts.hpp"
#include "cvnn_cli/toml.hpp"

namespace cvnn::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

json base_manifest(const std::string& command, const json& config) {
  const std::string dump = config.dump();
  return {{"tool", "cvnn"},
          {"version", kToolVersion},
          {"command", command},
          {"seed", config.value("seed", std::uint64_t{0})},
          {"config", config},
          {"config_sha1", git_blob_sha1(dump)}};
}

SignalDataset dataset_from_config(const json& config) {
  const json dj = config.value("dataset", json::object());
  if (dj.contains("path")) {
    if (!dj.at("path").is_string()) throw ConfigError("field 'dataset.path' must be a string");
    return read_cvds(dj.at("path").get<std::string>());
  }
  return build_dataset(dataset_spec_from_json(dj));
}

std::string runs_csv(const std::vector<std::pair<std::string, const RepeatedResult*>>& groups) {
  std::string out = "group,run,test_accuracy,test_loss,diverged\n";
  for (const auto& [name, r] : groups)
    for (std::size_t i = 0; i < r->runs.size(); ++i) {
      const auto& run = r->runs[i];
      out += name + "," + std::to_string(i) + "," + format_double(run.test.accuracy) + "," +
             format_double(run.test.loss) + "," + (run.diverged ? "1" : "0") + "\n";
    }
  return out;
}

std::vector<double> metric_values(const RepeatedResult& r, bool accuracy) {
  std::vector<double> v;
  for (const auto& run : r.runs)
    if (!run.diverged) v.push_back(accuracy ? run.test.accuracy : run.test.loss);
  return v;
}

std::string histogram_csv(const std::vector<std::pair<std::string, std::vector<double>>>& series, std::size_t bins,
                          double lo, double hi) {
  std::string out = "bin_low,bin_high";
  for (const auto& s : series) out += "," + s.first;
  out += "\n";
  std::vector<std::vector<std::size_t>> counts;
  for (const auto& s : series) counts.push_back(histogram(s.second, bins, lo, hi));
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out += format_double(lo + w * static_cast<double>(b)) + "," + format_double(lo + w * static_cast<double>(b + 1));
    for (const auto& c : counts) out += "," + std::to_string(c[b]);
    out += "\n";
  }
  return out;
}

std::pair<double, double> value_range(const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double v : s.second)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

}  // namespace

json gen_data(const json& config, const fs::path& out) {
  const json dj = config.value("dataset", json::object());
  const DatasetSpec spec = dataset_spec_from_json(dj);
  const SignalDataset ds = build_dataset(spec);
  RunDirectory dir(out);
  write_cvds(dir.file("dataset.cvds"), ds);
  if (dj.value("csv", false)) write_csv(dir.file("dataset.csv"), ds);
  json summary = {{"samples", ds.size()},
                  {"length", spec.length},
                  {"classes", spec.to_json()["classes"]},
                  {"split_sizes", ds.split_sizes}};
  dir.write_text("summary.json", summary.dump(2) + "\n");
  json resolved = config;
  resolved["dataset"] = merge_json(spec.to_json(), dj.contains("csv") ? json{{"csv", dj["csv"]}} : json::object());
  dir.commit(base_manifest("gen-data", resolved));
  return summary;
}

json train(const json& config, const fs::path& out) {
  const std::uint64_t seed = config.value("seed", std::uint64_t{0});
  const SGDConfig sgd = sgd_from_json(config.value("sgd", json::object()));
  if (!config.contains("model")) throw ConfigError("missing field 'model'");
  const SignalDataset ds = dataset_from_config(config);
  json mj = config.at("model");
  if (!mj.is_object()) throw ConfigError("field 'model' must be a table");
  if (!mj.contains("data_shape")) mj["data_shape"] = {ds.signals.shape()[1]};
  mj["seed"] = seed;
  Model model = [&] {
    try {
      return Model::from_config(mj);
    } catch (const ConfigError& e) {
      throw ConfigError("model: " + std::string(e.what()));
    }
  }();
  if (mj.contains("real_equivalent")) {
    if (!mj["real_equivalent"].is_number()) throw ConfigError("field 'model.real_equivalent' must be a number");
    model = model.get_real_equivalent(mj["real_equivalent"].get<double>());
  }
  const LabeledData tr = ds.split(Split::train), va = ds.split(Split::val), te = ds.split(Split::test);
  History h = fit(model, tr, sgd, derive_key(seed, 2), va.size() ? &va : nullptr, te.size() ? &te : nullptr);

  RunDirectory dir(out);
  write_cvds(dir.file("dataset.cvds"), ds);
  model.save(dir.file("model.cvmd"));
  dir.write_text("history.csv", h.to_csv());
  dir.write_text("history.json", h.to_json().dump(2) + "\n");
  json summary = {{"epochs", h.epochs()}, {"steps", h.steps}, {"diverged", h.diverged}};
  if (h.diverged) summary["divergence"] = h.divergence;
  if (h.test) summary["test"] = {{"loss", h.test->loss}, {"accuracy", h.test->accuracy}};
  dir.write_text("summary.json", summary.dump(2) + "\n");
  json resolved = config;
  resolved["model"] = model.config();
  resolved["sgd"] = sgd_to_json(sgd);
  dir.commit(base_manifest("train", resolved));
  return summary;
}

json eval(const fs::path& model_path, const fs::path& data_path, const std::string& split) {
  Model model = Model::load(model_path);
  const SignalDataset ds = read_cvds(data_path);
  LabeledData d;
  if (split == "train") d = ds.split(Split::train);
  else if (split == "val") d = ds.split(Split::val);
  else if (split == "test") d = ds.split(Split::test);
  else if (split == "all") d = ds.all();
  else throw ConfigError("--split must be train, val, test or all");
  const Metrics m = evaluate(model, d);
  return {{"split", split}, {"samples", d.size()}, {"loss", m.loss}, {"accuracy", m.accuracy}};
}

json exp_init(const json& config, const fs::path& out, const ProgressFn& progress) {
  const ExpInitConfig cfg = ExpInitConfig::from_json(config);
  const SignalDataset ds = build_dataset(cfg.data);
  const ExpInitResult res = run_exp_init(cfg, ds, progress);
  RunDirectory dir(out);
  json summary = res.to_json();
  dir.write_text("summary.json", summary.dump(2) + "\n");
  std::vector<std::pair<std::string, const RepeatedResult*>> groups;
  std::vector<std::pair<std::string, std::vector<double>>> acc, loss;
  for (const auto& v : res.variants) {
    groups.emplace_back(v.variant.name, &v.result);
    acc.emplace_back(v.variant.name, metric_values(v.result, true));
    loss.emplace_back(v.variant.name, metric_values(v.result, false));
  }
  dir.write_text("runs.csv", runs_csv(groups));
  dir.write_text("histogram_accuracy.csv", histogram_csv(acc, 20, 0.0, 1.0));
  const auto [lo, hi] = value_range(loss);
  dir.write_text("histogram_loss.csv", histogram_csv(loss, 20, lo, hi));
  std::string box = "variant,n,min,whisker_low,q1,median,q3,whisker_high,max,mean\n";
  for (const auto& v : res.variants) {
    const BoxStats& b = v.result.accuracy;
    box += v.variant.name + "," + std::to_string(b.n);
    for (double x : {b.min, b.whisker_low, b.q1, b.median, b.q3, b.whisker_high, b.max, b.mean})
      box += "," + format_double(x);
    box += "\n";
  }
  dir.write_text("box_accuracy.csv", box);
  dir.commit(base_manifest("exp-init", cfg.to_json()));
  return summary;
}

json exp_cv_rv(const json& config, const fs::path& out, const ProgressFn& progress) {
  const ExpCvRvConfig cfg = ExpCvRvConfig::from_json(config);
  const SignalDataset ds = build_dataset(cfg.data);
  const ExpCvRvResult res = run_exp_cv_rv(cfg, ds, progress);
  RunDirectory dir(out);
  json summary = res.to_json();
  dir.write_text("summary.json", summary.dump(2) + "\n");
  dir.write_text("runs.csv", runs_csv({{"cv", &res.cv}, {"rv", &res.rv}}));
  const std::vector<std::pair<std::string, std::vector<double>>> acc = {{"cv", metric_values(res.cv, true)},
                                                                        {"rv", metric_values(res.rv, true)}};
  const std::vector<std::pair<std::string, std::vector<double>>> loss = {{"cv", metric_values(res.cv, false)},
                                                                         {"rv", metric_values(res.rv, false)}};
  dir.write_text("histogram_accuracy.csv", histogram_csv(acc, cfg.bins, 0.0, 1.0));
  const auto [lo, hi] = value_range(loss);
  dir.write_text("histogram_loss.csv", histogram_csv(loss, cfg.bins, lo, hi));
  std::string hist = "epoch,cv_train_loss,cv_val_loss,rv_train_loss,rv_val_loss\n";
  const std::size_t epochs = std::max(res.cv_train_loss.size(), res.rv_train_loss.size());
  auto at = [](const std::vector<double>& v, std::size_t e) { return e < v.size() ? format_double(v[e]) : ""; };
  for (std::size_t e = 0; e < epochs; ++e)
    hist += std::to_string(e + 1) + "," + at(res.cv_train_loss, e) + "," + at(res.cv_val_loss, e) + "," +
            at(res.rv_train_loss, e) + "," + at(res.rv_val_loss, e) + "\n";
  dir.write_text("history.csv", hist);
  dir.commit(base_manifest("exp-cv-rv", cfg.to_json()));
  return summary;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complex-valued neural networks: datasets, training and experiments", "cvnn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path, out_dir, model_path, data_path, split = "test", task, study;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> runs, epochs;

  auto* gen = app.add_subcommand("gen-data", "Synthesize a signal dataset");
  gen->add_option("--config", config_path, "Config file")->required();
  gen->add_option("--seed", seed, "Override the seed");
  gen->add_option("--out", out_dir, "Output directory");

  auto* tr = app.add_subcommand("train", "Train one model");
  tr->add_option("--config", config_path, "Config file")->required();
  tr->add_option("--seed", seed, "Override the seed");
  tr->add_option("--out", out_dir, "Output directory");

  auto* ev = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
  ev->add_option("--model", model_path, "Model file (.cvmd)")->required();
  ev->add_option("--data", data_path, "Dataset file (.cvds)")->required();
  ev->add_option("--split", split, "train, val, test or all");
  ev->add_option("--out", out_dir, "Also write summary.json and a manifest here");

  auto* ei = app.add_subcommand("exp-init", "Initializer scaling study");
  ei->add_option("--config", config_path, "Config file");
  ei->add_option("--runs", runs, "Runs per variant");
  ei->add_option("--epochs", epochs, "Epochs per run");
  ei->add_option("--study", study, "scale or schemes");
  ei->add_option("--seed", seed, "Override the seed");
  ei->add_option("--out", out_dir, "Output directory");

  auto* ecr = app.add_subcommand("exp-cv-rv", "Complex vs real-valued MLP comparison");
  ecr->add_option("--config", config_path, "Config file");
  ecr->add_option("--task", task, "binary or full")->check(CLI::IsMember({"binary", "full"}));
  ecr->add_option("--runs", runs, "Runs per model");
  ecr->add_option("--epochs", epochs, "Epochs per run");
  ecr->add_option("--seed", seed, "Override the seed");
  ecr->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  auto progress = [&err](const std::string& line) { err << line << '\n' << std::flush; };
  try {
    json config = config_path.empty() ? json::object() : parse_toml_file(config_path);
    if (seed) config["seed"] = *seed;
    if (runs) {
      if (*runs < 1) throw ConfigError("--runs must be >= 1");
      config["runs"] = *runs;
    }
    if (epochs) {
      if (*epochs < 0) throw ConfigError("--epochs must be >= 0");
      config["sgd"]["epochs"] = *epochs;
    }
    if (!task.empty()) config["task"] = task;
    if (!study.empty()) config["study"] = study;
    if (gen->parsed() && seed) config["dataset"]["seed"] = *seed;
    if (gen->parsed() || tr->parsed()) {
      if (!config.contains("seed") && config.contains("dataset") && config["dataset"].contains("seed"))
        config["seed"] = config["dataset"]["seed"];
    }

    auto out_path = [&](const char* fallback) -> fs::path {
      if (!out_dir.empty()) return out_dir;
      if (config.contains("out")) {
        if (!config["out"].is_string()) throw ConfigError("field 'out' must be a string");
        return config["out"].get<std::string>();
      }
      return fallback;
    };

    json summary;
    if (gen->parsed()) {
      config.erase("out");
      summary = gen_data(config, out_path("runs/gen-data"));
    } else if (tr->parsed()) {
      const fs::path o = out_path("runs/train");
      config.erase("out");
      summary = train(config, o);
    } else if (ev->parsed()) {
      summary = eval(model_path, data_path, split);
      if (!out_dir.empty()) {
        RunDirectory dir(out_dir);
        dir.write_text("summary.json", summary.dump(2) + "\n");
        json m = base_manifest("eval", json{{"model", model_path}, {"data", data_path}, {"split", split}});
        m["inputs"] = {{"model_sha1", file_blob_sha1(model_path)}, {"data_sha1", file_blob_sha1(data_path)}};
        dir.commit(m);
      }
    } else if (ei->parsed()) {
      const fs::path o = out_path("runs/exp-init");
      config.erase("out");
      summary = exp_init(config, o, progress);
    } else if (ecr->parsed()) {
      const fs::path o = out_path("runs/exp-cv-rv");
      config.erase("out");
      summary = exp_cv_rv(config, o, progress);
    }
    out << summary.dump(2) << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "cvnn: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "cvnn: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cvnn::cli
