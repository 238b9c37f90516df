#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vdd/attacks.hpp"
#include "vdd/error.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace vdd;

namespace {

// Loss w . x with a fixed gradient w, so the expected perturbation is known.
LossGradient linear_loss(const Eigen::VectorXd& w) {
  return [w](const Tensor& x, Label) { return std::pair{w.dot(x.values), Tensor({1, 1, w.size()}, w)}; };
}

Tensor vec(std::initializer_list<double> v) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) e[i++] = d;
  return Tensor({1, 1, e.size()}, e);
}

}  // namespace

TEST_SUITE("attacks") {
  TEST_CASE("names and kinds") {
    CHECK(attack_name(Fgsm{}) == "fgsm");
    CHECK(attack_name(Pgd{}) == "pgd");
    CHECK(attack_name(Tone{}) == "tone");
    CHECK(attack_name(PitchShift{}) == "pitch");
    CHECK(is_white_box(Fgsm{}));
    CHECK(is_white_box(Pgd{}));
    CHECK_FALSE(is_white_box(Tone{}));
    CHECK_FALSE(is_white_box(PitchShift{}));
  }

  TEST_CASE("parameter validation") {
    CHECK_NOTHROW(validate(Fgsm{0.0}));
    CHECK_THROWS_AS(validate(Fgsm{-0.1}), Error);
    CHECK_THROWS_AS(validate(Pgd{0.1, 0.2, 10}), Error);
    CHECK_THROWS_AS(validate(Pgd{0.1, 0.01, 0}), Error);
    CHECK_THROWS_AS(validate(Tone{100, -0.1, 0}), Error);
    CHECK_THROWS_AS(validate(Tone{0, 0.1, 0}), Error);
    CHECK_THROWS_AS(validate(PitchShift{-5, 0}), Error);
  }

  TEST_CASE("FGSM follows the gradient sign, with sign(0) = 0 and the box") {
    const Eigen::VectorXd w = (Eigen::VectorXd(4) << 2.0, -3.0, 0.0, 1.0).finished();
    const Tensor x = vec({0.5, 0.5, 0.5, 0.98});
    const Tensor adv = fgsm(linear_loss(w), x, Label::Normal, Fgsm{0.1}, InputBox::unit());
    CHECK(adv.values[0] == doctest::Approx(0.6));
    CHECK(adv.values[1] == doctest::Approx(0.4));
    CHECK(adv.values[2] == 0.5);
    CHECK(adv.values[3] == 1.0);
    const Tensor free = fgsm(linear_loss(w), x, Label::Normal, Fgsm{0.1}, InputBox::unbounded());
    CHECK(free.values[3] == doctest::Approx(1.08));
    CHECK(fgsm(linear_loss(w), x, Label::Normal, Fgsm{0.0}, InputBox::unit()).values == x.values);
  }

  TEST_CASE("CNN loss gradient equals the backward pass") {
    std::mt19937_64 rng(8);
    const CnnModel m = gradcheck::random_model(rng);
    const Tensor x = gradcheck::random_input(m, rng);
    const auto [loss, grad] = cnn_loss_gradient(m)(x, Label::Pathol);
    const CnnForward f = cnn_forward(m, x);
    const CnnGradients g = cnn_backward(m, f.cache, Label::Pathol);
    CHECK(loss == doctest::Approx(g.loss));
    CHECK(grad.values == g.input.values);
  }

  TEST_CASE("PGD with one full step is FGSM, bit for bit") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 20; ++i) {
      const CnnModel m = gradcheck::random_model(rng);
      const Tensor x = gradcheck::random_input(m, rng);
      const double eps = 0.05 * (i + 1) / 20.0;
      const Tensor a = fgsm(m, x, Label::Normal, Fgsm{eps}, InputBox::unit());
      const Tensor b = pgd(m, x, Label::Normal, Pgd{eps, eps, 1, false, 0}, InputBox::unit());
      CHECK(a.values == b.values);
    }
  }

  TEST_CASE("PGD iterates stay in the ball and the box; the best iterate is returned") {
    std::mt19937_64 rng(21);
    const CnnModel m = gradcheck::random_model(rng);
    const Tensor x = gradcheck::random_input(m, rng);
    const double eps = 0.08;
    double best_loss = -1e300;
    Tensor best;
    int calls = 0;
    const Tensor out = pgd(m, x, Label::Normal, Pgd{eps, eps / 4, 10, true, 5}, InputBox::unit(),
                           [&](int iter, const Tensor& it, double loss) {
                             CHECK(iter == calls + 1);
                             ++calls;
                             CHECK(perturbation_linf(x, it) <= eps + 1e-12);
                             CHECK(it.values.minCoeff() >= 0.0);
                             CHECK(it.values.maxCoeff() <= 1.0);
                             if (loss > best_loss) {
                               best_loss = loss;
                               best = it;
                             }
                           });
    CHECK(calls == 10);
    CHECK(out.values == best.values);
    CHECK(cross_entropy(cnn_forward(m, out).logits, Label::Normal) == doctest::Approx(best_loss));
    // Seeded random start is reproducible.
    const Tensor again = pgd(m, x, Label::Normal, Pgd{eps, eps / 4, 10, true, 5}, InputBox::unit());
    CHECK(again.values == out.values);
  }

  TEST_CASE("PGD increases the loss over the clean input") {
    std::mt19937_64 rng(31);
    const CnnModel m = gradcheck::random_model(rng);
    const Tensor x = gradcheck::random_input(m, rng);
    const double clean = cross_entropy(cnn_forward(m, x).logits, Label::Normal);
    const Tensor adv = pgd(m, x, Label::Normal, Pgd{0.1, 0.025, 10, false, 0}, InputBox::unbounded());
    CHECK(cross_entropy(cnn_forward(m, adv).logits, Label::Normal) >= clean);
  }

  TEST_CASE("tone injection mixes a sine and renormalizes only above full scale") {
    const AudioClip voice = synth_sine(220.0, 0.3, 0.0, 0.5, 16000);
    const AudioClip quiet = tone_attack(voice, Tone{100.0, 0.2, 0.4});
    const AudioClip sine = synth_sine(100.0, 0.2, 0.4, 0.5, 16000);
    CHECK((quiet.samples - (voice.samples + sine.samples)).cwiseAbs().maxCoeff() < 1e-12);
    const AudioClip loud = tone_attack(voice, Tone{100.0, 0.9, 0.0});
    CHECK(peak(loud) == doctest::Approx(1.0));
    const AudioClip raw = mix(voice, synth_sine(100.0, 0.9, 0.0, 0.5, 16000));
    CHECK((loud.samples - raw.samples / peak(raw)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(tone_attack(voice, Tone{100.0, 0.0, 0.0}).samples == voice.samples);
  }

  TEST_CASE("pitch shift moves a tone and keeps the duration") {
    const AudioClip tone = synth_sine(440.0, 0.5, 0.0, 1.0, 16000);
    const AudioClip shifted = pitch_shift(tone, PitchShift{-5, 12});
    CHECK(shifted.size() == tone.size());
    CHECK(shifted.sample_rate_hz == 16000);
    const double expected_hz = 440.0 * std::pow(2.0, -5.0 / 12.0);
    const int bin = oracle::dominant_bin(shifted.samples.segment(4000, 4096), 4096);
    CHECK(std::abs(bin - expected_hz * 4096 / 16000.0) <= 2.0);
    const AudioClip up = pitch_shift(tone, PitchShift{3, 12});
    const int up_bin = oracle::dominant_bin(up.samples.segment(4000, 4096), 4096);
    CHECK(std::abs(up_bin - 440.0 * std::pow(2.0, 3.0 / 12.0) * 4096 / 16000.0) <= 2.0);
    CHECK(pitch_shift(tone, PitchShift{0, 12}).samples == tone.samples);
    CHECK_THROWS_AS(pitch_shift(AudioClip{Eigen::VectorXd::Zero(500), 16000}, PitchShift{-1, 12}), Error);
  }

  TEST_CASE("time stretch changes length, not frequency") {
    const AudioClip tone = synth_sine(500.0, 0.5, 0.0, 1.0, 16000);
    const Eigen::VectorXd slow = time_stretch(tone.samples, 0.5);
    CHECK(std::abs(static_cast<double>(slow.size()) - 32000.0) <= 512.0);
    CHECK(oracle::dominant_bin(slow.segment(8000, 4096), 4096) == 128);
    CHECK_THROWS_AS(time_stretch(tone.samples, 0.0), Error);
  }
}
