#include "vdd/features.hpp"

#include "vdd/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cctype>
#include <complex>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <tuple>
#include <vector>

namespace vdd {

std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::MelSpec ? "melspec" : "mfcc";
}

FeatureKind parse_feature_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "melspec") return FeatureKind::MelSpec;
  if (lower == "mfcc") return FeatureKind::Mfcc;
  throw Error(Errc::InvalidArgument,
              "unknown feature kind '" + std::string(text) + "' (valid: melspec, mfcc)");
}

FeatureParams FeatureParams::defaults_for(int rate_hz) {
  FeatureParams p;
  const Eigen::Index window = p.window_samples(rate_hz);
  int fft = 1;
  while (fft < window) fft *= 2;
  p.fft_size = fft;
  p.fmax_hz = rate_hz / 2.0;
  return p;
}

Eigen::Index FeatureParams::window_samples(int rate_hz) const {
  return std::llround(window_ms * rate_hz / 1000.0);
}

Eigen::Index FeatureParams::hop_samples(int rate_hz) const {
  return std::llround(hop_ms * rate_hz / 1000.0);
}

void FeatureParams::validate(int rate_hz) const {
  const auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "FeatureParams: " + why); };
  if (rate_hz <= 0) throw bad("sample rate must be positive");
  if (window_samples(rate_hz) < 1 || hop_samples(rate_hz) < 1) throw bad("window and hop must span at least one sample");
  if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0) throw bad("fft_size must be a power of two");
  if (fft_size < window_samples(rate_hz)) throw bad("fft_size smaller than the window");
  if (n_mels <= 0 || n_mfcc <= 0 || n_mfcc > n_mels) throw bad("need 0 < n_mfcc <= n_mels");
  if (fmin_hz < 0.0 || !(fmin_hz < fmax_hz) || fmax_hz > rate_hz / 2.0) throw bad("need 0 <= fmin < fmax <= rate/2");
}

Eigen::Index frame_count(Eigen::Index len, Eigen::Index window, Eigen::Index hop) {
  if (len < window) return 0;
  return 1 + (len - window) / hop;
}

Eigen::MatrixXd stft_power(const AudioClip& clip, const FeatureParams& params) {
  params.validate(clip.sample_rate_hz);
  const Eigen::Index window = params.window_samples(clip.sample_rate_hz);
  const Eigen::Index hop = params.hop_samples(clip.sample_rate_hz);
  const Eigen::Index frames = frame_count(clip.size(), window, hop);
  if (frames == 0)
    throw Error(Errc::InvalidArgument, "stft_power: clip shorter than one analysis window");

  Eigen::VectorXd hann(window);
  for (Eigen::Index i = 0; i < window; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window);

  const int bins = params.fft_size / 2 + 1;
  Eigen::MatrixXd power(bins, frames);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(params.fft_size, 0.0);
  std::vector<std::complex<double>> spectrum;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index start = t * hop;
    for (Eigen::Index i = 0; i < window; ++i) frame[i] = clip.samples[start + i] * hann[i];
    fft.fwd(spectrum, frame);
    for (int k = 0; k < bins; ++k) power(k, t) = std::norm(spectrum[k]);
  }
  return power;
}

namespace {

using BankKey = std::tuple<double, double, int, int, double, double, int>;

struct BankCache {
  std::shared_mutex mutex;
  std::map<BankKey, std::unique_ptr<const Eigen::MatrixXd>> banks;
};

BankCache& bank_cache() {
  static BankCache cache;
  return cache;
}

Eigen::MatrixXd build_filterbank(const FeatureParams& params, int rate_hz) {
  const int bins = params.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(params.fmin_hz);
  const double mel_hi = hz_to_mel(params.fmax_hz);
  std::vector<double> edges(params.n_mels + 2);
  for (int m = 0; m < params.n_mels + 2; ++m)
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (params.n_mels + 1));

  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(params.n_mels, bins);
  for (int m = 0; m < params.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate_hz / params.fft_size;
      double w = 0.0;
      if (f > lo && f <= centre) w = (f - lo) / (centre - lo);
      else if (f > centre && f < hi) w = (hi - f) / (hi - centre);
      bank(m, k) = w;
    }
    if (!(bank.row(m).sum() > 0.0))
      throw Error(Errc::InvalidArgument, "mel_filterbank: filter " + std::to_string(m) +
                                             " is empty; n_mels too large for fft_size " +
                                             std::to_string(params.fft_size));
  }
  return bank;
}

}  // namespace

const Eigen::MatrixXd& mel_filterbank(const FeatureParams& params, int rate_hz) {
  params.validate(rate_hz);
  const BankKey key{params.window_ms, params.hop_ms, params.fft_size, params.n_mels,
                    params.fmin_hz,   params.fmax_hz, rate_hz};
  auto& cache = bank_cache();
  {
    std::shared_lock lock(cache.mutex);
    if (auto it = cache.banks.find(key); it != cache.banks.end()) return *it->second;
  }
  auto bank = std::make_unique<const Eigen::MatrixXd>(build_filterbank(params, rate_hz));
  std::unique_lock lock(cache.mutex);
  auto [it, inserted] = cache.banks.try_emplace(key, std::move(bank));
  return *it->second;
}

Eigen::MatrixXd log_mel(const AudioClip& clip, const FeatureParams& params) {
  const Eigen::MatrixXd power = stft_power(clip, params);
  const Eigen::MatrixXd& bank = mel_filterbank(params, clip.sample_rate_hz);
  return ((bank * power).array() + 1e-10).log().matrix();
}

Eigen::MatrixXd dct_matrix(int n) {
  Eigen::MatrixXd d(n, n);
  for (int k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) d(k, i) = scale * std::cos(std::numbers::pi * (i + 0.5) * k / n);
  }
  return d;
}

FeatureMap mel_spectrogram(const AudioClip& clip, const FeatureParams& params) {
  Eigen::MatrixXd values = log_mel(clip, params);
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (hi > lo) values = (values.array() - lo) / (hi - lo);
  else values.setZero();
  return {FeatureKind::MelSpec, std::move(values), params, clip.sample_rate_hz};
}

FeatureMap mfcc(const AudioClip& clip, const FeatureParams& params) {
  const Eigen::MatrixXd logmel = log_mel(clip, params);
  const Eigen::MatrixXd dct = dct_matrix(params.n_mels).topRows(params.n_mfcc);
  return {FeatureKind::Mfcc, dct * logmel, params, clip.sample_rate_hz};
}

FeatureMap extract_features(const AudioClip& clip, FeatureKind kind, const FeatureParams& params) {
  return kind == FeatureKind::MelSpec ? mel_spectrogram(clip, params) : mfcc(clip, params);
}

void write_feature_csv(const FeatureMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write feature CSV: " + path.string());
  out.precision(17);
  for (Eigen::Index r = 0; r < map.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.values.cols(); ++c) {
      if (c) out << ',';
      out << map.values(r, c);
    }
    out << '\n';
  }
}

}  // namespace vdd
