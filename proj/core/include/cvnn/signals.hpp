#pragma once

// Synthetic radar signals, discrete analytic signals and the CVDS dataset
// container.

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvnn/ctensor.hpp"
#include "cvnn/rng.hpp"
#include "cvnn/train.hpp"

namespace cvnn {

enum class SignalClass : std::uint8_t { LinearChirp, SChirp, BPSK, QPSK, QAM16, QAM64, Null };

inline constexpr std::size_t kSignalClassCount = 7;
inline constexpr std::array<SignalClass, kSignalClassCount> kAllSignalClasses = {
    SignalClass::LinearChirp, SignalClass::SChirp, SignalClass::BPSK, SignalClass::QPSK,
    SignalClass::QAM16,       SignalClass::QAM64,  SignalClass::Null};

std::string signal_class_name(SignalClass c);
SignalClass parse_signal_class(std::string_view name);

/// Waveform plus the parameters drawn for it. Frequencies are in cycles per
/// sample.
struct RawSignal {
  std::vector<double> samples;
  double f0 = 0.0, f1 = 0.0;          // chirps: start and end frequency
  double carrier = 0.0;               // PSK/QAM
  std::vector<cplx> symbols;          // PSK/QAM: one entry per symbol slot
};

/// Chirps sweep f0 -> f1 (linear, or a logistic S-law for SChirp); PSK/QAM
/// use 8..64 rectangular symbols on a carrier; all frequencies in
/// [0.05, 0.45]. Every non-Null waveform is scaled to a peak-to-peak of 1.
RawSignal generate_raw_detailed(SignalClass c, std::size_t length, CounterRng& rng);
std::vector<double> generate_raw(SignalClass c, std::size_t length, CounterRng& rng);

/// Discrete analytic signal: FFT, keep DC and Nyquist, double positive bins,
/// zero negative bins, inverse FFT. Throws ConfigError on odd or zero length.
std::vector<cplx> hilbert_analytic(std::span<const double> x);
/// Imaginary part of hilbert_analytic.
std::vector<double> hilbert_transform(std::span<const double> x);

/// Positive infinity disables noise.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Circular white Gaussian noise at `snr_db` relative to the mean power of x.
/// With `unit_power` the noise power is 1 whatever x is (Null class).
std::vector<cplx> add_noise(std::span<const cplx> x, double snr_db, CounterRng& rng, bool unit_power = false);

struct DatasetSpec {
  std::size_t n_per_class = 1000;
  std::size_t length = 256;
  double snr_db = 10.0;
  std::uint64_t seed = 0;
  std::vector<SignalClass> classes{kAllSignalClasses.begin(), kAllSignalClasses.end()};
  std::array<double, 3> split = {0.8, 0.1, 0.1};

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
};

enum class Split { train, val, test };

/// Samples stored split by split (train, then val, then test). Labels index
/// into spec.classes.
struct SignalDataset {
  CTensor signals;  // [N x length]
  std::vector<std::uint8_t> labels;
  std::size_t n_classes = 0;
  std::array<std::size_t, 3> split_sizes = {0, 0, 0};
  DatasetSpec spec;

  std::size_t size() const noexcept { return labels.size(); }
  LabeledData split(Split s) const;
  LabeledData all() const;
};

/// Per-class stratified split, deterministic in (spec, seed). Each sample is
/// drawn from its own stream keyed by (seed, class, index) and rounded to f32.
SignalDataset build_dataset(const DatasetSpec& spec);

/// "CVDS" container: u16 version 1, u32 n, u32 length, u8 classes, u8 dtype
/// (0 = f32), interleaved re/im f32 per sample, u8 labels, then a "SPLT"
/// trailer with three u32 split sizes.
void write_cvds(const std::filesystem::path& path, const SignalDataset& ds);
SignalDataset read_cvds(const std::filesystem::path& path);
/// Columns label, re_0, im_0, ...
void write_csv(const std::filesystem::path& path, const SignalDataset& ds);

}  // namespace cvnn
