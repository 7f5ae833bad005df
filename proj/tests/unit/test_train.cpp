#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "cvnn/error.hpp"
#include "cvnn/model.hpp"
#include "cvnn/signals.hpp"
#include "cvnn/train.hpp"
#include "oracles.hpp"

using namespace cvnn;
using cvnn::test::random_tensor;
using cvnn::test::sorted_quantile;

namespace {

Model single_weight(cplx w0) {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(1, ActivationSpec{}, InitializerSpec{}, false));
  Model m(Shape{1}, std::move(ls), LossSpec{LossKind::complex_quadratic});
  dynamic_cast<Dense&>(m.layer(0)).weights()[0] = w0;
  return m;
}

cplx weight_of(Model& m) { return dynamic_cast<Dense&>(m.layer(0)).weights()[0]; }

Model classifier(std::size_t in, std::size_t classes, std::uint64_t seed, std::size_t hidden = 0) {
  std::vector<std::unique_ptr<Layer>> ls;
  if (hidden) ls.push_back(std::make_unique<Dense>(hidden, ActivationSpec{"cart_tanh", {}}));
  ls.push_back(std::make_unique<Dense>(classes, ActivationSpec{"softmax_real_with_abs", {}}));
  return Model(Shape{in}, std::move(ls), LossSpec{LossKind::cce_real}, DType::complex, seed);
}

// Class k has a large entry at coordinate k.
LabeledData separable(std::size_t n, std::size_t classes, CounterRng& rng) {
  LabeledData d;
  d.n_classes = classes;
  d.x = CTensor(Shape{n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint8_t>(i % classes);
    d.labels.push_back(label);
    for (std::size_t j = 0; j < 4; ++j) d.x.at({i, j}) = cplx(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    d.x.at({i, label}) += cplx(1.0, 0.5);
  }
  return d;
}

std::vector<cplx> weights(Model& m) {
  std::vector<cplx> out;
  for (auto& p : m.parameters()) out.insert(out.end(), p.value->data().begin(), p.value->data().end());
  return out;
}

}  // namespace

TEST(SgdStep, QuadraticClosedForm) {
  const cplx c(0.3, -1.2), w0(2.0, 0.5);
  const double lr = 0.1;
  Model m = single_weight(w0);
  const CTensor x(Shape{1, 1}, {cplx(1.0)}), d(Shape{1, 1}, {c});
  // E = |w - c|^2 / 2 so grad = w - c
  const double loss = sgd_step(m, x, d, lr);
  EXPECT_DOUBLE_EQ(loss, 0.5 * std::norm(w0 - c));
  EXPECT_EQ(weight_of(m), w0 - lr * (w0 - c));
  // iterates contract linearly towards c
  cplx prev = weight_of(m) - c;
  for (int i = 0; i < 20; ++i) {
    (void)sgd_step(m, x, d, lr);
    const cplx now = weight_of(m) - c;
    EXPECT_NEAR(std::abs(now), (1 - lr) * std::abs(prev), 1e-14);
    prev = now;
  }
}

TEST(SgdStep, SquaredModulusMovesByTwiceTheError) {
  // x = sqrt2, d = sqrt2 c gives E = |w - c|^2 and grad = 2 (w - c).
  const cplx c(-0.4, 0.9), w0(1.0, 1.0);
  const double lr = 0.05, r2 = std::sqrt(2.0);
  Model m = single_weight(w0);
  (void)sgd_step(m, CTensor(Shape{1, 1}, {cplx(r2)}), CTensor(Shape{1, 1}, {r2 * c}), lr);
  EXPECT_LT(std::abs(weight_of(m) - (w0 - lr * 2.0 * (w0 - c))), 1e-15);
}

TEST(SgdStep, ZeroLearningRateKeepsWeights) {
  CounterRng rng(1);
  Model m = classifier(4, 3, 7, 5);
  const auto before = weights(m);
  const LabeledData d = separable(9, 3, rng);
  (void)sgd_step(m, d.x, one_hot(d.labels, 3), 0.0);
  EXPECT_EQ(weights(m), before);
}

TEST(SgdStep, LossDecreasesOnAFixedBatch) {
  CounterRng rng(2);
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(3));
  Model m(Shape{5}, std::move(ls), LossSpec{LossKind::complex_quadratic}, DType::complex, 3);
  const CTensor x = random_tensor(Shape{8, 5}, rng), d = random_tensor(Shape{8, 3}, rng);
  double prev = sgd_step(m, x, d, 0.01);
  for (int i = 0; i < 10; ++i) {
    const double now = sgd_step(m, x, d, 0.01);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(SgdStep, DivergenceLeavesWeightsUntouched) {
  Model m = single_weight(0.0);
  const auto before = weights(m);
  EXPECT_THROW(sgd_step(m, CTensor(Shape{1, 1}, {cplx(1.0)}), CTensor(Shape{1, 1}, {cplx(1e4)}), 0.1),
               DivergenceError);
  EXPECT_EQ(weights(m), before);
  EXPECT_THROW(sgd_step(m, CTensor(Shape{1, 1}, {cplx(1.0)}), CTensor(Shape{1, 1}, {cplx(NAN)}), 0.1),
               DivergenceError);
}

TEST(Fit, ZeroEpochs) {
  CounterRng rng(3);
  Model m = classifier(4, 2, 1);
  const auto before = weights(m);
  const History h = fit(m, separable(16, 2, rng), {0.1, 4, 0}, 5);
  EXPECT_EQ(h.epochs(), 0u);
  EXPECT_EQ(h.steps, 0u);
  EXPECT_EQ(weights(m), before);
}

TEST(Fit, SeparableToyReachesFullTrainAccuracy) {
  CounterRng rng(4);
  const LabeledData d = separable(16, 2, rng);
  Model m = classifier(4, 2, 11);
  const History h = fit(m, d, {0.1, 4, 200}, 3);
  EXPECT_FALSE(h.diverged);
  EXPECT_EQ(evaluate(m, d).accuracy, 1.0);
  EXPECT_EQ(h.train_loss.size(), 200u);
  EXPECT_LT(h.train_loss.back(), h.train_loss.front());
}

TEST(Fit, FullBatchTakesOneStepPerEpoch) {
  CounterRng rng(5);
  const LabeledData d = separable(12, 3, rng);
  Model m = classifier(4, 3, 2);
  const History h = fit(m, d, {0.05, 12, 7}, 1);
  EXPECT_EQ(h.steps, 7u);
  Model m2 = classifier(4, 3, 2);
  EXPECT_EQ(fit(m2, d, {0.05, 5, 2}, 1).steps, 6u);
}

TEST(Fit, DeterministicHistory) {
  CounterRng rng(6);
  const LabeledData d = separable(30, 3, rng);
  const LabeledData v = separable(9, 3, rng);
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(6, ActivationSpec{"cart_selu", {}}));
  ls.push_back(std::make_unique<Dropout>(0.5));
  ls.push_back(std::make_unique<Dense>(3, ActivationSpec{"softmax_real_with_abs", {}}));
  const Model proto(Shape{4}, std::move(ls), LossSpec{LossKind::cce_real}, DType::complex, 9);
  Model a = proto, b = proto;
  const History ha = fit(a, d, {0.05, 7, 5}, 42, &v, &v);
  const History hb = fit(b, d, {0.05, 7, 5}, 42, &v, &v);
  EXPECT_EQ(ha.to_csv(), hb.to_csv());
  EXPECT_EQ(ha.to_json().dump(), hb.to_json().dump());
  EXPECT_EQ(weights(a), weights(b));
  Model c = proto;
  EXPECT_NE(fit(c, d, {0.05, 7, 5}, 43, &v).to_csv(), ha.to_csv());
  ASSERT_TRUE(ha.test.has_value());
  EXPECT_EQ(ha.val_loss.size(), 5u);
}

TEST(Fit, DivergenceIsReportedNotThrown) {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(2, ActivationSpec{"linear", {}}));
  Model m(Shape{2}, std::move(ls), LossSpec{LossKind::complex_quadratic}, DType::complex, 1);
  LabeledData d;
  d.n_classes = 2;
  d.x = CTensor(Shape{4, 2}, cplx(1e4, 0));
  d.labels = {0, 1, 0, 1};
  const History h = fit(m, d, {1.0, 2, 3}, 1);
  EXPECT_TRUE(h.diverged);
  EXPECT_FALSE(h.divergence.empty());
  EXPECT_LE(h.epochs(), 3u);
}

TEST(History, CsvLayout) {
  History h;
  h.train_loss = {1.0, 0.5};
  h.train_accuracy = {0.25, 0.5};
  h.val_loss = {1.1, 0.75};
  h.val_accuracy = {0.2, 0.4};
  EXPECT_EQ(h.to_csv(),
            "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n1,1,0.25,1.1,0.2\n2,0.5,0.5,0.75,0.4\n");
}

TEST(Evaluate, UntrainedSevenClassModelIsNearChance) {
  DatasetSpec s;
  s.n_per_class = 200;
  s.length = 64;
  s.seed = 8;
  const SignalDataset ds = build_dataset(s);
  Model m = classifier(64, 7, 4, 16);
  const Metrics r = evaluate(m, ds.all());
  EXPECT_NEAR(r.accuracy, 1.0 / 7.0, 0.05);
  EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Evaluate, PerfectPredictorAndPermutationInvariance) {
  LabeledData d;
  d.n_classes = 3;
  d.labels = {0, 2, 1, 1, 0, 2};
  d.x = one_hot(d.labels, 3);
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(3, ActivationSpec{"softmax_real_with_abs", {}}));
  Model m(Shape{3}, std::move(ls), LossSpec{LossKind::cce_real});
  auto& w = dynamic_cast<Dense&>(m.layer(0)).weights();
  w = CTensor(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) w.at({i, i}) = cplx(0, 20);
  EXPECT_EQ(evaluate(m, d).accuracy, 1.0);

  CounterRng rng(9);
  Model u = classifier(3, 3, 5);
  LabeledData noisy = d;
  noisy.x = random_tensor(Shape{6, 3}, rng);
  const std::size_t perm[] = {3, 1, 5, 0, 4, 2};
  const Metrics a = evaluate(u, noisy, 4), b = evaluate(u, noisy.subset(perm), 4);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_NEAR(a.loss, b.loss, 1e-15);
  EXPECT_GE(a.accuracy, 0.0);
  EXPECT_LE(a.accuracy, 1.0);
}

TEST(Predict, ArgmaxOfRealPlusImaginary) {
  const CTensor out(Shape{2, 3}, {cplx(0.1, 0.5), cplx(0.4, 0.0), cplx(0.3, 0.1), cplx(0, 0), cplx(0, 0), cplx(0, 0)});
  EXPECT_EQ(predict_classes(out), (std::vector<std::size_t>{0, 0}));
}

TEST(OneHot, Rows) {
  const std::uint8_t labels[] = {2, 0};
  const CTensor t = one_hot(labels, 3);
  EXPECT_EQ(t.shape(), (Shape{2, 3}));
  EXPECT_EQ(t.at({0, 2}), cplx(1.0));
  EXPECT_EQ(t.at({1, 0}), cplx(1.0));
  EXPECT_EQ(t.at({1, 2}), cplx(0.0));
}

TEST(BoxStats, MatchesSortingOracle) {
  CounterRng rng(10);
  for (std::size_t n : {1u, 2u, 3u, 7u, 30u, 101u}) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    if (n > 5) v[0] = 25.0;  // outlier
    const BoxStats b = box_stats(v);
    EXPECT_DOUBLE_EQ(b.median, sorted_quantile(v, 0.5));
    EXPECT_DOUBLE_EQ(b.q1, sorted_quantile(v, 0.25));
    EXPECT_DOUBLE_EQ(b.q3, sorted_quantile(v, 0.75));
    EXPECT_EQ(b.min, *std::min_element(v.begin(), v.end()));
    EXPECT_EQ(b.max, *std::max_element(v.begin(), v.end()));
    const double lo = b.q1 - 1.5 * b.iqr(), hi = b.q3 + 1.5 * b.iqr();
    double wl = INFINITY, wh = -INFINITY;
    for (double x : v)
      if (x >= lo && x <= hi) {
        wl = std::min(wl, x);
        wh = std::max(wh, x);
      }
    EXPECT_EQ(b.whisker_low, wl);
    EXPECT_EQ(b.whisker_high, wh);
    EXPECT_NEAR(b.mean, std::accumulate(v.begin(), v.end(), 0.0) / double(n), 1e-14);
  }
  EXPECT_DOUBLE_EQ(box_stats({0.1, 0.2, 0.3}).median, 0.2);
  EXPECT_THROW(box_stats({}), ContractError);
}

TEST(RunRepeated, SingleRunAndSeeds) {
  std::vector<std::uint64_t> seeds;
  const RepeatedResult one = run_repeated(1, 77, [&](std::size_t, std::uint64_t s) {
    seeds.push_back(s);
    return RunResult{{0.4, 0.8}, false, {}};
  });
  EXPECT_EQ(one.accuracy.median, 0.8);
  EXPECT_EQ(one.accuracy.q1, 0.8);
  EXPECT_EQ(one.loss.max, 0.4);
  EXPECT_EQ(seeds, (std::vector<std::uint64_t>{derive_key(77, 0)}));
}

TEST(RunRepeated, DivergedRunsAreRecorded) {
  const RepeatedResult r = run_repeated(4, 1, [](std::size_t i, std::uint64_t) -> RunResult {
    if (i == 2) throw DivergenceError("boom", 0, 0);
    return RunResult{{0.1 * double(i), 0.2 * double(i + 1)}, false, {}};
  });
  EXPECT_EQ(r.runs.size(), 4u);
  EXPECT_EQ(r.diverged, 1u);
  EXPECT_TRUE(r.runs[2].diverged);
  EXPECT_EQ(r.accuracy.n, 3u);
  EXPECT_DOUBLE_EQ(r.accuracy.median, 0.4);
}

TEST(Histogram, CountsAndClamping) {
  const double v[] = {0.0, 0.1, 0.5, 0.99, 1.0, -3.0, 7.0};
  const auto h = histogram(v, 4, 0.0, 1.0);
  EXPECT_EQ(h, (std::vector<std::size_t>{3, 0, 1, 3}));
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Model, CceRealNeedsRealOutputHead) {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(3, ActivationSpec{"cart_sigmoid", {}}));
  EXPECT_THROW(Model(Shape{4}, std::move(ls), LossSpec{LossKind::cce_real}), ConfigError);
}

TEST(Model, SaveLoadAndConfigRoundTrip) {
  CounterRng rng(11);
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(5, ActivationSpec{"cart_selu", {}}));
  ls.push_back(std::make_unique<BatchNormalization>());
  ls.push_back(std::make_unique<Dropout>(0.5));
  ls.push_back(std::make_unique<Dense>(3, ActivationSpec{"softmax_real_with_abs", {}}));
  Model m(Shape{6}, std::move(ls), LossSpec{LossKind::cce_real}, DType::complex, 13);
  const LabeledData d = [&] {
    LabeledData t;
    t.n_classes = 3;
    t.x = random_tensor(Shape{12, 6}, rng);
    for (std::uint8_t i = 0; i < 12; ++i) t.labels.push_back(i % 3);
    return t;
  }();
  (void)fit(m, d, {0.05, 4, 2}, 1);
  const auto dir = std::filesystem::temp_directory_path() / "cvnn_train_model";
  std::filesystem::create_directories(dir);
  m.save(dir / "m.cvmd");
  Model back = Model::load(dir / "m.cvmd");
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(max_abs_diff(back.forward(d.x, false), m.forward(d.x, false)), 0.0);
  Model rebuilt = Model::from_config(m.config());
  EXPECT_EQ(rebuilt.config(), m.config());

  const Model rv = m.get_real_equivalent(2.0);
  rv.save(dir / "rv.cvmd");
  EXPECT_EQ(Model::load(dir / "rv.cvmd").config(), rv.config());
}

TEST(Model, ConfigErrorsNameTheLayer) {
  nlohmann::json cfg = classifier(4, 2, 1).config();
  cfg["layers"][0].erase("units");
  try {
    (void)Model::from_config(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("layers[0]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("units"), std::string::npos) << e.what();
  }
}
