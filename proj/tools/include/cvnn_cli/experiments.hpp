#pragma once

// The initializer-scaling study and the complex-vs-real MLP comparison.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvnn/initializers.hpp"
#include "cvnn/signals.hpp"
#include "cvnn/train.hpp"

namespace cvnn::cli {

/// Called after each finished run with a one-line status.
using ProgressFn = std::function<void(const std::string&)>;

/// Recursively overlays `patch` onto `base` (objects merge, other values replace).
nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch);

/// Reads a [dataset] table. Field errors are reported as "dataset.<field>".
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
/// Reads an [sgd] table. Field errors are reported as "sgd.<field>".
SGDConfig sgd_from_json(const nlohmann::json& j);
nlohmann::json sgd_to_json(const SGDConfig& cfg);

/// Trains a copy of `model` on the dataset's train split, validating every
/// epoch and testing at the end.
RunResult train_once(Model model, const SignalDataset& data, const SGDConfig& sgd, std::uint64_t seed);

struct InitVariant {
  std::string name;
  InitializerSpec init;
};

struct ExpInitConfig {
  DatasetSpec data;
  SGDConfig sgd;
  std::size_t runs = 30;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {128, 64, 32, 16};
  std::string activation = "cart_sigmoid";
  std::string head = "softmax_real_with_abs";
  LossKind loss = LossKind::cce_real;
  std::vector<InitVariant> variants;

  /// Defaults overlaid with `j`; "study" = "scale" (x sqrt2, original, /2) or
  /// "schemes" (GU, GN, GU_C, HU, HN) picks the variants unless given.
  static ExpInitConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  Model make_model(const InitializerSpec& init, std::uint64_t seed) const;
};

struct VariantResult {
  InitVariant variant;
  RepeatedResult result;
};

struct ExpInitResult {
  std::vector<VariantResult> variants;
  /// Pairwise comparison of median test accuracy.
  nlohmann::json ordering() const;
  nlohmann::json to_json() const;
};

/// Every variant sees the same per-run seeds, so run i differs across
/// variants only by the initializer.
ExpInitResult run_exp_init(const ExpInitConfig& cfg, const SignalDataset& data, const ProgressFn& progress = {});

struct ExpCvRvConfig {
  std::string task = "binary";
  DatasetSpec data;
  SGDConfig sgd;
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {25, 10};
  std::string activation = "cart_selu";
  std::string head = "softmax_real_with_abs";
  double dropout = 0.5;
  double multiplier = 2.0;
  std::size_t bins = 20;

  /// Defaults for `task` ("binary": two chirp classes, "full": all seven)
  /// overlaid with `j`.
  static ExpCvRvConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  Model make_complex_model(std::uint64_t seed) const;
};

struct ExpCvRvResult {
  RepeatedResult cv, rv;
  /// Leave-one-run-out test-loss IQR, one replicate per run.
  std::vector<double> cv_loss_iqr_jackknife, rv_loss_iqr_jackknife;
  /// Replicates where the RV IQR >= the CV IQR.
  std::size_t rv_iqr_wins = 0;
  /// Per-epoch means over converged runs.
  std::vector<double> cv_train_loss, cv_val_loss, rv_train_loss, rv_val_loss;

  nlohmann::json to_json() const;
};

ExpCvRvResult run_exp_cv_rv(const ExpCvRvConfig& cfg, const SignalDataset& data, const ProgressFn& progress = {});

/// Leave-one-out replicates of the IQR of `values`.
std::vector<double> jackknife_iqr(const std::vector<double>& values);

}  // namespace cvnn::cli
