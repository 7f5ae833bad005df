#include "cvnn/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "cvnn/error.hpp"
#include "cvnn/rng.hpp"

namespace cvnn {

LabeledData LabeledData::subset(std::span<const std::size_t> rows) const {
  LabeledData out;
  out.x = x.gather_rows(rows);
  out.n_classes = n_classes;
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  return out;
}

CTensor one_hot(std::span<const std::uint8_t> labels, std::size_t n_classes) {
  CTensor out(Shape{labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes)
      throw DimensionError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(n_classes) +
                           " classes");
    out[i * n_classes + labels[i]] = 1.0;
  }
  return out.mark_real_only();
}

double sgd_step(Model& model, const CTensor& x, const CTensor& targets, double learning_rate, CTensor* output) {
  CTensor y = model.forward(x, true);
  LossResult r = evaluate_loss(model.loss(), y, targets);
  if (!std::isfinite(r.value) || r.value > kDivergenceThreshold)
    throw DivergenceError("loss diverged (" + format_double(r.value) + ")", -1, -1);
  model.backward(r.grad);
  if (output != nullptr) *output = std::move(y);
  for (Parameter& p : model.parameters()) {
    auto w = p.value->data();
    auto g = std::as_const(*p.grad).data();
    if (p.real) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i].real() - learning_rate * g[i].real();
    } else {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
    }
  }
  return r.value;
}

std::vector<std::size_t> predict_classes(const CTensor& output) {
  if (output.shape().rank() != 2) throw DimensionError("expected [batch x classes], got " + output.shape().to_string());
  const std::size_t n = output.shape()[0], k = output.shape()[1];
  std::vector<std::size_t> out(n);
  auto d = output.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_v = d[i * k].real() + d[i * k].imag();
    for (std::size_t j = 1; j < k; ++j) {
      const double v = d[i * k + j].real() + d[i * k + j].imag();
      if (v > best_v) {
        best = j;
        best_v = v;
      }
    }
    out[i] = best;
  }
  return out;
}

namespace {

std::size_t count_correct(const CTensor& y, std::span<const std::uint8_t> labels) {
  const auto pred = predict_classes(y);
  std::size_t c = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) c += pred[i] == labels[i] ? 1 : 0;
  return c;
}

}  // namespace

Metrics evaluate(Model& model, const LabeledData& data, std::size_t chunk) {
  const std::size_t n = data.size();
  if (n == 0) return {};
  chunk = std::max<std::size_t>(chunk, 1);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    const CTensor y = model.forward(data.x.slice_rows(b, e), false);
    const auto labels = std::span(data.labels).subspan(b, e - b);
    loss += evaluate_loss(model.loss(), y, one_hot(labels, data.n_classes)).value * static_cast<double>(e - b);
    correct += count_correct(y, labels);
  }
  return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::json History::to_json() const {
  nlohmann::json j = {{"train_loss", train_loss},   {"train_accuracy", train_accuracy},
                      {"val_loss", val_loss},       {"val_accuracy", val_accuracy},
                      {"steps", steps},             {"diverged", diverged}};
  if (diverged) j["divergence"] = divergence;
  if (test) j["test"] = {{"loss", test->loss}, {"accuracy", test->accuracy}};
  return j;
}

std::string History::to_csv() const {
  std::string out = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(train_loss[e]) + "," + format_double(train_accuracy[e]) + ",";
    if (e < val_loss.size()) out += format_double(val_loss[e]) + "," + format_double(val_accuracy[e]);
    else out += ",";
    out += "\n";
  }
  return out;
}

History fit(Model& model, const LabeledData& train, const SGDConfig& cfg, std::uint64_t seed, const LabeledData* val,
            const LabeledData* test) {
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  History h;
  const std::size_t n = train.size();
  if (n == 0 && cfg.epochs > 0) throw ConfigError("training set is empty");
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(derive_key(seed, e));
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch = 0;
    try {
      for (std::size_t b = 0; b < n; b += cfg.batch_size, ++batch) {
        const std::size_t end = std::min(n, b + cfg.batch_size);
        const auto rows = std::span(order).subspan(b, end - b);
        const LabeledData mb = train.subset(rows);
        const CTensor targets = one_hot(mb.labels, train.n_classes);
        CTensor y;
        const double loss = sgd_step(model, mb.x, targets, cfg.learning_rate, &y);
        ++h.steps;
        loss_sum += loss * static_cast<double>(mb.size());
        correct += count_correct(y, mb.labels);
      }
    } catch (const DivergenceError& err) {
      h.diverged = true;
      h.divergence = "epoch " + std::to_string(e + 1) + ", batch " + std::to_string(batch + 1) + ": " + err.what();
      break;
    }
    h.train_loss.push_back(loss_sum / static_cast<double>(n));
    h.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(n));
    if (val != nullptr) {
      const Metrics m = evaluate(model, *val);
      h.val_loss.push_back(m.loss);
      h.val_accuracy.push_back(m.accuracy);
    }
  }
  if (test != nullptr && !h.diverged) h.test = evaluate(model, *test);
  return h;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw ContractError("box statistics of an empty sample");
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.n = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  const double lo = s.q1 - 1.5 * s.iqr(), hi = s.q3 + 1.5 * s.iqr();
  s.whisker_low = *std::find_if(values.begin(), values.end(), [&](double v) { return v >= lo; });
  s.whisker_high = *std::find_if(values.rbegin(), values.rend(), [&](double v) { return v <= hi; });
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

nlohmann::json BoxStats::to_json() const {
  return {{"n", n},         {"min", min},      {"q1", q1},
          {"median", median}, {"q3", q3},     {"max", max},
          {"whisker_low", whisker_low}, {"whisker_high", whisker_high}, {"mean", mean}};
}

RepeatedResult run_repeated(std::size_t n_runs, std::uint64_t seed,
                            const std::function<RunResult(std::size_t, std::uint64_t)>& run) {
  if (n_runs == 0) throw ConfigError("n_runs must be >= 1");
  RepeatedResult out;
  std::vector<double> acc, loss;
  for (std::size_t i = 0; i < n_runs; ++i) {
    RunResult r;
    try {
      r = run(i, derive_key(seed, i));
    } catch (const DivergenceError& e) {
      r.diverged = true;
      r.history.diverged = true;
      r.history.divergence = e.what();
    }
    if (r.diverged) ++out.diverged;
    if (!r.diverged && std::isfinite(r.test.accuracy) && std::isfinite(r.test.loss)) {
      acc.push_back(r.test.accuracy);
      loss.push_back(r.test.loss);
    }
    out.runs.push_back(std::move(r));
  }
  if (!acc.empty()) {
    out.accuracy = box_stats(acc);
    out.loss = box_stats(loss);
  }
  return out;
}

nlohmann::json RepeatedResult::to_json() const {
  nlohmann::json runs_j = nlohmann::json::array();
  for (const auto& r : runs)
    runs_j.push_back({{"test_loss", r.test.loss}, {"test_accuracy", r.test.accuracy}, {"diverged", r.diverged}});
  return {{"runs", runs_j}, {"accuracy", accuracy.to_json()}, {"loss", loss.to_json()}, {"diverged", diverged}};
}

std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(hi > lo)) throw ConfigError("histogram range must satisfy hi > lo");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
    const auto b = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(bins - 1)));
    ++counts[b];
  }
  return counts;
}

}  // namespace cvnn
