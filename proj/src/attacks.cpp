#include "vdd/attacks.hpp"

#include "vdd/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace vdd {

std::string attack_name(const AttackConfig& attack) {
  struct {
    std::string operator()(const Fgsm&) const { return "fgsm"; }
    std::string operator()(const Pgd&) const { return "pgd"; }
    std::string operator()(const Tone&) const { return "tone"; }
    std::string operator()(const PitchShift&) const { return "pitch"; }
  } name;
  return std::visit(name, attack);
}

bool is_white_box(const AttackConfig& attack) {
  return std::holds_alternative<Fgsm>(attack) || std::holds_alternative<Pgd>(attack);
}

void validate(const AttackConfig& attack) {
  const auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, why); };
  if (const auto* f = std::get_if<Fgsm>(&attack)) {
    if (!(f->epsilon >= 0.0)) throw bad("fgsm: epsilon must be non-negative");
  } else if (const auto* p = std::get_if<Pgd>(&attack)) {
    if (!(p->epsilon >= 0.0)) throw bad("pgd: epsilon must be non-negative");
    if (!(p->step_size >= 0.0) || p->step_size > p->epsilon) throw bad("pgd: need 0 <= step_size <= epsilon");
    if (p->iterations <= 0) throw bad("pgd: iterations must be positive");
  } else if (const auto* t = std::get_if<Tone>(&attack)) {
    if (!(t->amplitude >= 0.0)) throw bad("tone: amplitude must be non-negative");
    if (!(t->freq_hz > 0.0)) throw bad("tone: frequency must be positive");
  } else if (const auto* s = std::get_if<PitchShift>(&attack)) {
    if (s->steps_per_octave < 1) throw bad("pitch: steps_per_octave must be >= 1");
  }
}

double InputBox::clamp(double v) const {
  if (lower && v < *lower) v = *lower;
  if (upper && v > *upper) v = *upper;
  return v;
}

LossGradient cnn_loss_gradient(const CnnModel& model) {
  return [&model](const Tensor& x, Label y) {
    const CnnForward f = cnn_forward(model, x);
    CnnGradients g = cnn_backward(model, f.cache, y, false);
    return std::pair<double, Tensor>{g.loss, std::move(g.input)};
  };
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Tensor checked_gradient(const LossGradient& loss, const Tensor& x, Label y, double* value) {
  auto [l, g] = loss(x, y);
  if (g.shape != x.shape) throw Error(Errc::ShapeMismatch, "attack: gradient shape differs from input");
  if (!g.all_finite() || !std::isfinite(l)) throw Error(Errc::NonFinite, "attack: non-finite loss gradient");
  if (value) *value = l;
  return std::move(g);
}

}  // namespace

Tensor fgsm(const LossGradient& loss, const Tensor& x, Label true_label, const Fgsm& cfg, const InputBox& box) {
  validate(cfg);
  const Tensor g = checked_gradient(loss, x, true_label, nullptr);
  Tensor out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out.values[i] = box.clamp(x.values[i] + cfg.epsilon * sign(g.values[i]));
  return out;
}

Tensor fgsm(const CnnModel& model, const Tensor& x, Label true_label, const Fgsm& cfg, const InputBox& box) {
  return fgsm(cnn_loss_gradient(model), x, true_label, cfg, box);
}

Tensor pgd(const LossGradient& loss, const Tensor& x, Label true_label, const Pgd& cfg, const InputBox& box,
           const PgdObserver& observer) {
  validate(cfg);
  const Eigen::Index n = x.size();
  Eigen::VectorXd lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lo[i] = box.clamp(x.values[i] - cfg.epsilon);
    hi[i] = box.clamp(x.values[i] + cfg.epsilon);
  }
  const auto project = [&](Eigen::Index i, double v) { return std::min(std::max(v, lo[i]), hi[i]); };

  Tensor current = x;
  if (cfg.random_start) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
    for (Eigen::Index i = 0; i < n; ++i) current.values[i] = project(i, x.values[i] + u(rng));
  }

  Tensor best;
  double best_loss = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= cfg.iterations; ++k) {
    double value = 0.0;
    const Tensor g = checked_gradient(loss, current, true_label, &value);
    if (k > 0) {
      if (value > best_loss) {
        best_loss = value;
        best = current;
      }
      if (observer) observer(k, current, value);
    }
    if (k == cfg.iterations) break;
    for (Eigen::Index i = 0; i < n; ++i)
      current.values[i] = project(i, current.values[i] + cfg.step_size * sign(g.values[i]));
  }
  return best;
}

Tensor pgd(const CnnModel& model, const Tensor& x, Label true_label, const Pgd& cfg, const InputBox& box,
           const PgdObserver& observer) {
  return pgd(cnn_loss_gradient(model), x, true_label, cfg, box, observer);
}

AudioClip tone_attack(const AudioClip& clip, const Tone& cfg) {
  validate(cfg);
  if (cfg.freq_hz >= clip.sample_rate_hz / 2.0)
    throw Error(Errc::InvalidArgument, "tone_attack: frequency at or above Nyquist");
  const AudioClip sine = synth_sine(cfg.freq_hz, cfg.amplitude, cfg.phase_rad, clip.duration_s(), clip.sample_rate_hz);
  AudioClip out = mix(clip, sine);
  if (peak(out) > 1.0) out = peak_normalize(out, 1.0);
  return out;
}

Eigen::VectorXd time_stretch(const Eigen::VectorXd& x, double rate, int n_fft, int hop) {
  if (!(rate > 0.0)) throw Error(Errc::InvalidArgument, "time_stretch: rate must be positive");
  const Eigen::Index len = x.size();
  const int half = n_fft / 2;
  const int bins = half + 1;

  Eigen::VectorXd padded = Eigen::VectorXd::Zero(len + n_fft);
  padded.segment(half, len) = x;
  const Eigen::Index frames = 1 + (padded.size() - n_fft) / hop;

  std::vector<double> window(n_fft);
  for (int i = 0; i < n_fft; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::vector<std::complex<double>>> spec(static_cast<size_t>(frames));
  std::vector<double> buf(n_fft);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int i = 0; i < n_fft; ++i) buf[i] = padded[t * hop + i] * window[i];
    fft.fwd(spec[static_cast<size_t>(t)], buf);
  }

  std::vector<double> advance(bins);
  for (int k = 0; k < bins; ++k) advance[k] = 2.0 * std::numbers::pi * k * hop / n_fft;

  std::vector<double> phase(bins);
  for (int k = 0; k < bins; ++k) phase[k] = std::arg(spec[0][k]);

  const std::vector<std::complex<double>> zeros(bins);
  const Eigen::Index out_frames = static_cast<Eigen::Index>(std::ceil(static_cast<double>(frames) / rate));
  const Eigen::Index out_len = std::max<Eigen::Index>(1, std::llround(static_cast<double>(len) / rate));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_frames * hop + n_fft);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(out.size());
  std::vector<std::complex<double>> frame(bins);
  for (Eigen::Index o = 0; o < out_frames; ++o) {
    const double t = o * rate;
    const auto t0 = static_cast<Eigen::Index>(std::floor(t));
    if (t0 >= frames) break;
    const double alpha = t - static_cast<double>(t0);
    const auto& c0 = spec[static_cast<size_t>(t0)];
    const auto& c1 = t0 + 1 < frames ? spec[static_cast<size_t>(t0 + 1)] : zeros;
    for (int k = 0; k < bins; ++k) {
      const double mag = (1.0 - alpha) * std::abs(c0[k]) + alpha * std::abs(c1[k]);
      frame[k] = std::polar(mag, phase[k]);
      double dphi = std::arg(c1[k]) - std::arg(c0[k]) - advance[k];
      dphi -= 2.0 * std::numbers::pi * std::round(dphi / (2.0 * std::numbers::pi));
      phase[k] += advance[k] + dphi;
    }
    fft.inv(buf, frame, n_fft);
    for (int i = 0; i < n_fft; ++i) {
      out[o * hop + i] += buf[i] * window[i];
      norm[o * hop + i] += window[i] * window[i];
    }
  }
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (norm[i] > 1e-8) out[i] /= norm[i];

  Eigen::VectorXd result = Eigen::VectorXd::Zero(out_len);
  const Eigen::Index avail = std::min<Eigen::Index>(out_len, out.size() - half);
  result.head(avail) = out.segment(half, avail);
  return result;
}

AudioClip pitch_shift(const AudioClip& clip, const PitchShift& cfg) {
  validate(cfg);
  constexpr int kWindow = 1024;
  constexpr int kHop = 256;
  if (clip.size() < kWindow)
    throw Error(Errc::InvalidArgument, "pitch_shift: clip shorter than one vocoder window (" +
                                           std::to_string(kWindow) + " samples)");
  if (cfg.steps == 0) return clip;
  const double ratio = std::pow(2.0, static_cast<double>(cfg.steps) / cfg.steps_per_octave);
  const Eigen::VectorXd stretched = time_stretch(clip.samples, 1.0 / ratio, kWindow, kHop);
  const double cutoff = ratio > 1.0 ? 0.45 / ratio : 0.0;
  return {resample_to_length(stretched, clip.size(), cutoff), clip.sample_rate_hz};
}

double perturbation_linf(const Tensor& x, const Tensor& x_prime) {
  if (x.shape != x_prime.shape)
    throw Error(Errc::ShapeMismatch, "perturbation_linf: shapes " + shape_string(x.shape) + " and " +
                                         shape_string(x_prime.shape) + " differ");
  if (x.size() == 0) return 0.0;
  return (x.values - x_prime.values).cwiseAbs().maxCoeff();
}

}  // namespace vdd
