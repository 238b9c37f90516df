#pragma once

#include "vdd/audio.hpp"

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>

namespace vdd {

enum class FeatureKind { MelSpec, Mfcc };

std::string_view to_string(FeatureKind kind);
/// Accepts "melspec" / "mfcc" (case-insensitive); throws InvalidArgument listing valid values.
FeatureKind parse_feature_kind(std::string_view text);

/// STFT / mel / cepstrum hyperparameters.
struct FeatureParams {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 0;
  int n_mels = 64;
  int n_mfcc = 13;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;

  /// Default parameters for a sample rate: fft_size is the next power of two
  /// covering the window, fmax is Nyquist.
  static FeatureParams defaults_for(int rate_hz);

  Eigen::Index window_samples(int rate_hz) const;
  Eigen::Index hop_samples(int rate_hz) const;
  /// Throws InvalidArgument when the parameters cannot be used at `rate_hz`.
  void validate(int rate_hz) const;

  bool operator==(const FeatureParams&) const = default;
};

/// Frame count 1 + floor((len - window) / hop); zero when len < window.
Eigen::Index frame_count(Eigen::Index len, Eigen::Index window, Eigen::Index hop);

struct FeatureMap {
  FeatureKind kind = FeatureKind::MelSpec;
  Eigen::MatrixXd values;  // rows = mel bands or coefficients, cols = frames
  FeatureParams params;
  int source_rate_hz = 0;
};

template <typename Scalar>
Scalar hz_to_mel(Scalar hz) {
  using std::log10;
  return Scalar(2595) * log10(Scalar(1) + hz / Scalar(700));
}

template <typename Scalar>
Scalar mel_to_hz(Scalar mel) {
  using std::pow;
  return Scalar(700) * (pow(Scalar(10), mel / Scalar(2595)) - Scalar(1));
}

/// Hann-windowed |FFT|^2, (fft_size/2 + 1) x frames.
Eigen::MatrixXd stft_power(const AudioClip& clip, const FeatureParams& params);

/// Triangular filters (peak 1) with centres equally spaced in mel, n_mels x (fft_size/2 + 1).
/// Results are cached per (params, rate).
const Eigen::MatrixXd& mel_filterbank(const FeatureParams& params, int rate_hz);

/// log(filterbank * power + 1e-10), not normalized.
Eigen::MatrixXd log_mel(const AudioClip& clip, const FeatureParams& params);

/// Orthonormal DCT-II matrix of size n x n (rows are basis vectors).
Eigen::MatrixXd dct_matrix(int n);

/// Log-mel spectrogram min-max scaled to [0, 1] per map; constant maps become zero.
FeatureMap mel_spectrogram(const AudioClip& clip, const FeatureParams& params);

/// Orthonormal DCT-II of the log-mel columns, first n_mfcc coefficients.
FeatureMap mfcc(const AudioClip& clip, const FeatureParams& params);

FeatureMap extract_features(const AudioClip& clip, FeatureKind kind, const FeatureParams& params);

/// Rows x frames CSV, no header.
void write_feature_csv(const FeatureMap& map, const std::filesystem::path& path);

}  // namespace vdd
