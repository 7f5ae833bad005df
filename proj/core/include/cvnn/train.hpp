#pragma once

// SGD training, evaluation and repeated-run statistics.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvnn/model.hpp"

namespace cvnn {

struct SGDConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 100;
  std::size_t epochs = 1;
};

/// Samples (leading axis) with integer class labels.
struct LabeledData {
  CTensor x;
  std::vector<std::uint8_t> labels;
  std::size_t n_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  LabeledData subset(std::span<const std::size_t> rows) const;
};

/// [n x n_classes] one-hot targets.
CTensor one_hot(std::span<const std::uint8_t> labels, std::size_t n_classes);

/// Loss above this aborts training.
inline constexpr double kDivergenceThreshold = 1e6;

/// One gradient step on a batch: w <- w - lr * grad, with grad = 2 dE/d(conj w).
/// Returns the batch loss (before the update). Throws DivergenceError, leaving
/// the weights untouched, if the loss is non-finite or > kDivergenceThreshold.
/// The forward output is copied to `output` when given.
double sgd_step(Model& model, const CTensor& x, const CTensor& targets, double learning_rate,
                CTensor* output = nullptr);

/// Predicted class: argmax over Re + Im of each output row.
std::vector<std::size_t> predict_classes(const CTensor& output);

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Inference-mode loss (sample-weighted mean over chunks) and accuracy.
Metrics evaluate(Model& model, const LabeledData& data, std::size_t chunk = 1000);

struct History {
  std::vector<double> train_loss, train_accuracy, val_loss, val_accuracy;
  std::optional<Metrics> test;
  std::size_t steps = 0;
  bool diverged = false;
  std::string divergence;

  std::size_t epochs() const noexcept { return train_loss.size(); }
  nlohmann::json to_json() const;
  /// One row per epoch: epoch,train_loss,train_accuracy,val_loss,val_accuracy.
  std::string to_csv() const;
};

/// Mini-batch SGD. Each epoch visits the training set in a Fisher-Yates order
/// drawn from derive_key(seed, epoch). Train metrics are sample-weighted means
/// over the epoch's batches (training-mode forward passes). Divergence stops
/// training and is reported in the returned partial history.
History fit(Model& model, const LabeledData& train, const SGDConfig& cfg, std::uint64_t seed,
            const LabeledData* val = nullptr, const LabeledData* test = nullptr);

/// Five-number summary as drawn by box plots: quartiles with linear
/// interpolation, whiskers at the most extreme points within 1.5 IQR.
struct BoxStats {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double whisker_low = 0, whisker_high = 0;
  double mean = 0;

  double iqr() const noexcept { return q3 - q1; }
  nlohmann::json to_json() const;
};

/// Linear-interpolation quantile of sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);
/// Throws ContractError on an empty input.
BoxStats box_stats(std::vector<double> values);

struct RunResult {
  Metrics test;
  bool diverged = false;
  History history;
};

struct RepeatedResult {
  std::vector<RunResult> runs;
  /// Over runs whose metrics are finite.
  BoxStats accuracy, loss;
  std::size_t diverged = 0;

  nlohmann::json to_json() const;
};

/// Calls `run(i, derive_key(seed, i))` for i < n_runs. A run that throws a
/// DivergenceError is recorded as diverged rather than aborting the batch.
RepeatedResult run_repeated(std::size_t n_runs, std::uint64_t seed,
                            const std::function<RunResult(std::size_t, std::uint64_t)>& run);

/// Counts of values in `bins` equal-width bins over [lo, hi]; values outside are clamped.
std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

/// Shortest round-trip decimal form, the same on every platform.
std::string format_double(double v);

}  // namespace cvnn
