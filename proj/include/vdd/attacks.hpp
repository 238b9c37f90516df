#pragma once

#include "vdd/audio.hpp"
#include "vdd/cnn.hpp"
#include "vdd/label.hpp"
#include "vdd/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace vdd {

struct Fgsm {
  double epsilon = 0.01;
};

struct Pgd {
  double epsilon = 0.01;
  double step_size = 0.0025;
  int iterations = 10;
  bool random_start = false;
  uint64_t seed = 0;
};

struct Tone {
  double freq_hz = 100.0;
  double amplitude = 0.2;
  double phase_rad = 0.0;
};

struct PitchShift {
  int steps = -5;
  int steps_per_octave = 12;
};

using AttackConfig = std::variant<Fgsm, Pgd, Tone, PitchShift>;

/// "fgsm", "pgd", "tone", "pitch".
std::string attack_name(const AttackConfig& attack);
bool is_white_box(const AttackConfig& attack);
/// Throws InvalidArgument when a parameter is out of range.
void validate(const AttackConfig& attack);

/// Valid input box for white-box perturbations; unset bounds are unbounded.
struct InputBox {
  std::optional<double> lower;
  std::optional<double> upper;

  static InputBox unit() { return {0.0, 1.0}; }
  static InputBox unbounded() { return {}; }
  double clamp(double v) const;
};

/// Loss and input gradient of a differentiable model for one labeled input.
using LossGradient = std::function<std::pair<double, Tensor>(const Tensor& x, Label y)>;

/// Softmax cross-entropy of the CNN and its input gradient.
LossGradient cnn_loss_gradient(const CnnModel& model);

/// x' = clamp(x + eps * sign(grad)), sign(0) = 0.
Tensor fgsm(const LossGradient& loss, const Tensor& x, Label true_label, const Fgsm& cfg, const InputBox& box);
Tensor fgsm(const CnnModel& model, const Tensor& x, Label true_label, const Fgsm& cfg, const InputBox& box);

/// Called after each PGD iteration with (iteration, iterate, loss of iterate).
using PgdObserver = std::function<void(int, const Tensor&, double)>;

/// Signed-gradient ascent projected onto the eps-ball around x intersected with
/// the box. Returns the iterate with the largest loss.
Tensor pgd(const LossGradient& loss, const Tensor& x, Label true_label, const Pgd& cfg, const InputBox& box,
           const PgdObserver& observer = {});
Tensor pgd(const CnnModel& model, const Tensor& x, Label true_label, const Pgd& cfg, const InputBox& box,
           const PgdObserver& observer = {});

/// Adds a sine spanning the clip; re-normalizes to peak 1.0 if the sum exceeds it.
AudioClip tone_attack(const AudioClip& clip, const Tone& cfg);

/// Phase-vocoder time stretch (window 1024, hop 256) followed by resampling,
/// shifting pitch by 2^(steps/steps_per_octave) at unchanged duration.
AudioClip pitch_shift(const AudioClip& clip, const PitchShift& cfg);

/// Phase-vocoder time stretch: `rate` > 1 shortens the signal.
Eigen::VectorXd time_stretch(const Eigen::VectorXd& x, double rate, int n_fft = 1024, int hop = 256);

double perturbation_linf(const Tensor& x, const Tensor& x_prime);

}  // namespace vdd
