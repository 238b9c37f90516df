#pragma once

#include <Eigen/Core>

#include <filesystem>

namespace vdd {

/// Mono waveform. Samples are nominally in [-1, 1].
struct AudioClip {
  Eigen::VectorXd samples;
  int sample_rate_hz = 0;

  Eigen::Index size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// Reads PCM (8/16/24/32-bit) or IEEE-float (32/64-bit) WAV; channels are averaged.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples outside [-1, 1] are clipped to full scale.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Sample-rate conversion: Hamming-windowed sinc low-pass (63 taps) at
/// 0.45 * target when downsampling, then cubic interpolation.
AudioClip resample(const AudioClip& clip, int target_rate_hz);

/// Resamples a raw signal to exactly `out_len` samples spanning the same
/// time interval. `cutoff` is the low-pass cutoff as a fraction of the input
/// sample rate, or <= 0 for no filtering.
Eigen::VectorXd resample_to_length(const Eigen::VectorXd& x, Eigen::Index out_len, double cutoff);

AudioClip synth_sine(double freq_hz, double amplitude, double phase_rad, double duration_s,
                     int rate_hz);

/// Sample-wise sum; the shorter clip is zero-padded. Not clipped.
AudioClip mix(const AudioClip& a, const AudioClip& b);

/// Scales so that max |sample| == target_peak. All-zero clips are returned unchanged.
AudioClip peak_normalize(const AudioClip& clip, double target_peak);

double peak(const AudioClip& clip);

}  // namespace vdd
