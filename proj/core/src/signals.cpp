#include "cvnn/signals.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>

#include <fftw3.h>

#include "binio.hpp"
#include "cvnn/error.hpp"

namespace cvnn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFreqLo = 0.05, kFreqHi = 0.45;
constexpr char kMagic[4] = {'C', 'V', 'D', 'S'};
constexpr char kSplitMagic[4] = {'S', 'P', 'L', 'T'};
constexpr std::uint16_t kVersion = 1;

// FFTW's planner is not re-entrant.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

void normalize_p2p(std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (range <= 0.0) return;
  const double inv = 1.0 / range;
  for (double& v : x) v *= inv;
}

// Phase accumulated sample by sample from an instantaneous-frequency law.
template <class Law>
std::vector<double> chirp(std::size_t length, double phase0, Law freq) {
  std::vector<double> x(length);
  double phase = phase0;
  for (std::size_t n = 0; n < length; ++n) {
    x[n] = std::cos(phase);
    phase += kTwoPi * freq(n);
  }
  return x;
}

std::vector<cplx> constellation(SignalClass c) {
  std::vector<cplx> pts;
  switch (c) {
    case SignalClass::BPSK:
      pts = {{1.0, 0.0}, {-1.0, 0.0}};
      break;
    case SignalClass::QPSK:
      for (int k = 0; k < 4; ++k) pts.push_back(std::polar(1.0, std::numbers::pi / 4 + k * std::numbers::pi / 2));
      break;
    case SignalClass::QAM16:
    case SignalClass::QAM64: {
      const int m = c == SignalClass::QAM16 ? 4 : 8;
      for (int i = 0; i < m; ++i)
        for (int q = 0; q < m; ++q) pts.emplace_back(2 * i - (m - 1), 2 * q - (m - 1));
      break;
    }
    default:
      break;
  }
  return pts;
}

}  // namespace

std::string signal_class_name(SignalClass c) {
  switch (c) {
    case SignalClass::LinearChirp: return "LinearChirp";
    case SignalClass::SChirp: return "SChirp";
    case SignalClass::BPSK: return "BPSK";
    case SignalClass::QPSK: return "QPSK";
    case SignalClass::QAM16: return "QAM16";
    case SignalClass::QAM64: return "QAM64";
    case SignalClass::Null: return "Null";
  }
  return "unknown";
}

SignalClass parse_signal_class(std::string_view name) {
  for (SignalClass c : kAllSignalClasses)
    if (signal_class_name(c) == name) return c;
  throw ConfigError("unknown signal class '" + std::string(name) + "'");
}

RawSignal generate_raw_detailed(SignalClass c, std::size_t length, CounterRng& rng) {
  if (length < 8) throw ConfigError("signal length must be >= 8");
  RawSignal out;
  const double phase0 = 0.0;
  const double len = static_cast<double>(length);
  switch (c) {
    case SignalClass::LinearChirp:
    case SignalClass::SChirp: {
      out.f0 = rng.uniform(kFreqLo, kFreqHi);
      out.f1 = rng.uniform(kFreqLo, kFreqHi);
      const double f0 = out.f0, df = out.f1 - out.f0;
      if (c == SignalClass::LinearChirp) {
        out.samples = chirp(length, phase0, [&](std::size_t n) { return f0 + df * static_cast<double>(n) / (len - 1); });
      } else {
        // Logistic sweep, steepest at the midpoint.
        out.samples = chirp(length, phase0, [&](std::size_t n) {
          const double u = static_cast<double>(n) / (len - 1) - 0.5;
          return f0 + df / (1.0 + std::exp(-10.0 * u));
        });
      }
      break;
    }
    case SignalClass::BPSK:
    case SignalClass::QPSK:
    case SignalClass::QAM16:
    case SignalClass::QAM64: {
      const auto pts = constellation(c);
      const auto n_sym = static_cast<std::size_t>(rng.uniform_int(8, 64));
      out.carrier = rng.uniform(kFreqLo, kFreqHi);
      out.symbols.resize(n_sym);
      for (cplx& s : out.symbols) s = pts[static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(pts.size()) - 1))];
      out.samples.resize(length);
      for (std::size_t n = 0; n < length; ++n) {
        const cplx s = out.symbols[n * n_sym / length];
        const double ph = kTwoPi * out.carrier * static_cast<double>(n) + phase0;
        out.samples[n] = s.real() * std::cos(ph) - s.imag() * std::sin(ph);
      }
      break;
    }
    case SignalClass::Null:
      out.samples.assign(length, 0.0);
      return out;
  }
  normalize_p2p(out.samples);
  return out;
}

std::vector<double> generate_raw(SignalClass c, std::size_t length, CounterRng& rng) {
  return generate_raw_detailed(c, length, rng).samples;
}

std::vector<cplx> hilbert_analytic(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0 || n % 2 != 0) throw ConfigError("analytic signal needs an even, nonzero length, got " + std::to_string(n));
  auto* buf = fftw_alloc_complex(n);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_mutex());
    fwd = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    inv = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = x[i];
    buf[i][1] = 0.0;
  }
  fftw_execute(fwd);
  for (std::size_t k = 1; k < n / 2; ++k) {
    buf[k][0] *= 2.0;
    buf[k][1] *= 2.0;
  }
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k][0] = buf[k][1] = 0.0;
  fftw_execute(inv);
  std::vector<cplx> out(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {buf[i][0] * inv_n, buf[i][1] * inv_n};
  {
    std::lock_guard lock(fftw_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  return out;
}

std::vector<double> hilbert_transform(std::span<const double> x) {
  const auto h = hilbert_analytic(x);
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i].imag();
  return out;
}

std::vector<cplx> add_noise(std::span<const cplx> x, double snr_db, CounterRng& rng, bool unit_power) {
  std::vector<cplx> out(x.begin(), x.end());
  if (snr_db == kNoNoise || x.empty()) return out;
  double noise_power = 1.0;
  if (!unit_power) {
    double p = 0.0;
    for (const cplx& v : x) p += std::norm(v);
    p /= static_cast<double>(x.size());
    noise_power = p / std::pow(10.0, snr_db / 10.0);
  }
  const double sigma = std::sqrt(noise_power / 2.0);
  for (cplx& v : out) {
    const double re = rng.normal(), im = rng.normal();
    v += cplx(sigma * re, sigma * im);
  }
  return out;
}

void DatasetSpec::validate() const {
  if (n_per_class == 0) throw ConfigError("field 'n_per_class' must be >= 1");
  if (length < 8 || length % 2 != 0) throw ConfigError("field 'length' must be even and >= 8");
  if (std::isnan(snr_db)) throw ConfigError("field 'snr_db' must be a number");
  if (classes.empty()) throw ConfigError("field 'classes' must not be empty");
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (std::size_t j = i + 1; j < classes.size(); ++j)
      if (classes[i] == classes[j]) throw ConfigError("field 'classes' lists " + signal_class_name(classes[i]) + " twice");
  for (double f : split)
    if (!(f >= 0.0)) throw ConfigError("field 'split' fractions must be >= 0");
  if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9) throw ConfigError("field 'split' must sum to 1");
}

nlohmann::json DatasetSpec::to_json() const {
  std::vector<std::string> names;
  for (SignalClass c : classes) names.push_back(signal_class_name(c));
  nlohmann::json j = {{"n_per_class", n_per_class}, {"length", length}, {"seed", seed},
                      {"classes", names},          {"split", split}};
  if (std::isinf(snr_db)) j["snr_db"] = "inf";
  else j["snr_db"] = snr_db;
  return j;
}

LabeledData SignalDataset::split(Split s) const {
  const auto i = static_cast<std::size_t>(s);
  std::size_t begin = 0;
  for (std::size_t k = 0; k < i; ++k) begin += split_sizes[k];
  std::vector<std::size_t> rows(split_sizes[i]);
  std::iota(rows.begin(), rows.end(), begin);
  return all().subset(rows);
}

LabeledData SignalDataset::all() const {
  LabeledData d;
  d.x = signals;
  d.labels = labels;
  d.n_classes = n_classes;
  return d;
}

SignalDataset build_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.classes.size() > 255) throw ConfigError("too many classes");
  const std::size_t nc = spec.classes.size();
  const std::size_t len = spec.length;

  // Per-class split counts, the remainder going to test.
  std::array<std::size_t, 3> per_class{};
  per_class[0] = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n_per_class) * spec.split[0]));
  per_class[1] = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n_per_class) * spec.split[1]));
  per_class[0] = std::min(per_class[0], spec.n_per_class);
  per_class[1] = std::min(per_class[1], spec.n_per_class - per_class[0]);
  per_class[2] = spec.n_per_class - per_class[0] - per_class[1];

  std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> blocks;  // (class position, index)
  for (std::size_t c = 0; c < nc; ++c) {
    std::size_t j = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < per_class[s]; ++k) blocks[s].emplace_back(c, j++);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    CounterRng rng(derive_key(spec.seed, 0x5A11'0000ull + s));
    auto& b = blocks[s];
    for (std::size_t i = b.size(); i > 1; --i)
      std::swap(b[i - 1], b[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }

  SignalDataset ds;
  ds.spec = spec;
  ds.n_classes = nc;
  const std::size_t total = nc * spec.n_per_class;
  ds.signals = CTensor(Shape{total, len});
  ds.labels.reserve(total);
  auto out = ds.signals.data();
  std::size_t row = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    ds.split_sizes[s] = blocks[s].size();
    for (const auto& [c, j] : blocks[s]) {
      const SignalClass cls = spec.classes[c];
      CounterRng rng(derive_key(derive_key(spec.seed, static_cast<std::uint64_t>(cls)), j));
      const auto raw = generate_raw(cls, len, rng);
      const auto analytic = hilbert_analytic(raw);
      const auto noisy = add_noise(analytic, spec.snr_db, rng, cls == SignalClass::Null);
      for (std::size_t t = 0; t < len; ++t)
        out[row * len + t] = {static_cast<float>(noisy[t].real()), static_cast<float>(noisy[t].imag())};
      ds.labels.push_back(static_cast<std::uint8_t>(c));
      ++row;
    }
  }
  return ds;
}

void write_cvds(const std::filesystem::path& path, const SignalDataset& ds) {
  if (ds.signals.shape().rank() != 2 || ds.signals.shape()[0] != ds.labels.size())
    throw DimensionError("dataset signals must be [N x length] with N labels");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::size_t n = ds.labels.size(), len = ds.signals.shape()[1];
  os.write(kMagic, 4);
  detail::put<std::uint16_t>(os, kVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(n));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(len));
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(ds.n_classes));
  detail::put<std::uint8_t>(os, 0);
  for (const cplx& v : ds.signals.data()) {
    detail::put<float>(os, static_cast<float>(v.real()));
    detail::put<float>(os, static_cast<float>(v.imag()));
  }
  os.write(reinterpret_cast<const char*>(ds.labels.data()), static_cast<std::streamsize>(n));
  os.write(kSplitMagic, 4);
  for (std::size_t s : ds.split_sizes) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

SignalDataset read_cvds(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  if (detail::get_bytes(is, 4, "magic") != std::string(kMagic, 4))
    throw IntegrityError("'" + path.string() + "' is not a CVDS file");
  if (const auto v = detail::get<std::uint16_t>(is, "version"); v != kVersion)
    throw IntegrityError("unsupported CVDS version " + std::to_string(v));
  const auto n = detail::get<std::uint32_t>(is, "sample count");
  const auto len = detail::get<std::uint32_t>(is, "length");
  const auto classes = detail::get<std::uint8_t>(is, "class count");
  if (const auto tag = detail::get<std::uint8_t>(is, "dtype"); tag != 0)
    throw IntegrityError("unsupported CVDS dtype tag " + std::to_string(tag));
  SignalDataset ds;
  ds.n_classes = classes;
  ds.signals = CTensor(Shape{n, len});
  auto d = ds.signals.data();
  for (auto& v : d) {
    const float re = detail::get<float>(is, "samples");
    const float im = detail::get<float>(is, "samples");
    v = {re, im};
  }
  const auto labels = detail::get_bytes(is, n, "labels");
  ds.labels.assign(labels.begin(), labels.end());
  for (std::uint8_t l : ds.labels)
    if (l >= classes) throw IntegrityError("label " + std::to_string(l) + " out of range in '" + path.string() + "'");
  ds.split_sizes = {n, 0, 0};
  char tag[4];
  if (is.read(tag, 4) && std::string(tag, 4) == std::string(kSplitMagic, 4)) {
    std::size_t sum = 0;
    for (auto& s : ds.split_sizes) sum += (s = detail::get<std::uint32_t>(is, "split sizes"));
    if (sum != n) throw IntegrityError("split sizes do not add up in '" + path.string() + "'");
  }
  ds.spec.length = len;
  return ds;
}

void write_csv(const std::filesystem::path& path, const SignalDataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::size_t len = ds.signals.shape()[1];
  os << "label";
  for (std::size_t t = 0; t < len; ++t) os << ",re_" << t << ",im_" << t;
  os << '\n';
  char buf[32];
  auto put = [&](float v) {
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    os << ',';
    os.write(buf, r.ptr - buf);
  };
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    os << static_cast<unsigned>(ds.labels[i]);
    for (std::size_t t = 0; t < len; ++t) {
      const cplx v = ds.signals[i * len + t];
      put(static_cast<float>(v.real()));
      put(static_cast<float>(v.imag()));
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace cvnn
