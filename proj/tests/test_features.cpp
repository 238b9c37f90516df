#include "oracles.hpp"
#include "vdd/audio.hpp"
#include "vdd/error.hpp"
#include "vdd/features.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace vdd;

TEST_SUITE("features") {
  TEST_CASE("defaults per rate") {
    const FeatureParams p25 = FeatureParams::defaults_for(25000);
    CHECK(p25.fft_size == 1024);
    CHECK(p25.window_samples(25000) == 625);
    CHECK(p25.hop_samples(25000) == 250);
    CHECK(p25.fmax_hz == 12500.0);
    const FeatureParams p16 = FeatureParams::defaults_for(16000);
    CHECK(p16.fft_size == 512);
    CHECK(p16.window_samples(16000) == 400);
  }

  TEST_CASE("parameter validation") {
    FeatureParams p = FeatureParams::defaults_for(16000);
    CHECK_NOTHROW(p.validate(16000));
    FeatureParams bad = p;
    bad.fft_size = 256;
    CHECK_THROWS_AS(bad.validate(16000), Error);
    bad = p;
    bad.fft_size = 600;
    CHECK_THROWS_AS(bad.validate(16000), Error);
    bad = p;
    bad.fmax_hz = 9000.0;
    CHECK_THROWS_AS(bad.validate(16000), Error);
    bad = p;
    bad.n_mfcc = 65;
    CHECK_THROWS_AS(bad.validate(16000), Error);
  }

  TEST_CASE("feature kind parsing lists valid values") {
    CHECK(parse_feature_kind("MFCC") == FeatureKind::Mfcc);
    CHECK(parse_feature_kind("melspec") == FeatureKind::MelSpec);
    try {
      parse_feature_kind("spectrogram");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InvalidArgument);
      CHECK(std::string(e.what()).find("melspec") != std::string::npos);
      CHECK(std::string(e.what()).find("mfcc") != std::string::npos);
    }
  }

  TEST_CASE("frame count formula over random lengths") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> len(0, 40000);
    const FeatureParams p = FeatureParams::defaults_for(16000);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = len(rng);
      const Eigen::Index expected = n < 400 ? 0 : 1 + (n - 400) / 160;
      CHECK(frame_count(n, 400, 160) == expected);
      if (n >= 400 && trial % 20 == 0) {
        AudioClip clip{Eigen::VectorXd::Zero(n), 16000};
        CHECK(stft_power(clip, p).cols() == expected);
      }
    }
  }

  TEST_CASE("1 kHz tone peaks at bin 32 and matches a direct DFT") {
    FeatureParams p = FeatureParams::defaults_for(16000);
    const AudioClip clip = synth_sine(1000.0, 0.5, 0.2, 0.1, 16000);
    const Eigen::MatrixXd power = stft_power(clip, p);
    REQUIRE(power.rows() == 257);
    for (Eigen::Index f = 0; f < power.cols(); ++f) {
      Eigen::Index best = 0;
      power.col(f).maxCoeff(&best);
      CHECK(best == 32);
    }
    const Eigen::VectorXd frame = clip.samples.segment(3 * 160, 400).cwiseProduct(oracle::periodic_hann(400));
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(512);
    padded.head(400) = frame;
    const Eigen::VectorXd ref = oracle::dft_power(padded, 512);
    CHECK((power.col(3) - ref).cwiseAbs().maxCoeff() <= 1e-9 * ref.maxCoeff());
  }

  TEST_CASE("Parseval: one-sided power sums to the windowed frame energy") {
    std::mt19937 rng(5);
    std::normal_distribution<double> n01;
    AudioClip clip{Eigen::VectorXd(4000), 16000};
    for (auto& v : clip.samples) v = n01(rng);
    FeatureParams p = FeatureParams::defaults_for(16000);
    const Eigen::MatrixXd power = stft_power(clip, p);
    const Eigen::VectorXd w = oracle::periodic_hann(400);
    for (Eigen::Index f = 0; f < power.cols(); f += 5) {
      const double energy = clip.samples.segment(f * 160, 400).cwiseProduct(w).squaredNorm();
      const Eigen::VectorXd col = power.col(f);
      const double spectral = (col[0] + col[256] + 2.0 * col.segment(1, 255).sum()) / 512.0;
      CHECK(std::abs(spectral - energy) <= 1e-6 * energy);
    }
  }

  TEST_CASE("silence gives a zero spectrum, short clips are rejected") {
    FeatureParams p = FeatureParams::defaults_for(16000);
    CHECK(stft_power(AudioClip{Eigen::VectorXd::Zero(1000), 16000}, p).isZero(0.0));
    CHECK_THROWS_AS(stft_power(AudioClip{Eigen::VectorXd::Zero(399), 16000}, p), Error);
  }

  TEST_CASE("mel scale") {
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
    CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));
    for (double f : {0.0, 1.0, 55.5, 440.0, 3999.0, 12500.0}) {
      const double back = mel_to_hz(hz_to_mel(f));
      CHECK(std::abs(back - f) <= 1e-6 * std::max(1.0, f));
    }
  }

  TEST_CASE("filterbank shape properties") {
    const FeatureParams p = FeatureParams::defaults_for(25000);
    const Eigen::MatrixXd& fb = mel_filterbank(p, 25000);
    REQUIRE(fb.rows() == 64);
    REQUIRE(fb.cols() == 513);
    CHECK(fb.minCoeff() >= 0.0);
    Eigen::Index prev = -1;
    for (Eigen::Index m = 0; m < fb.rows(); ++m) {
      const Eigen::VectorXd row = fb.row(m);
      CHECK(row.sum() > 0.0);
      Eigen::Index peak = 0;
      row.maxCoeff(&peak);
      // Unimodal: non-decreasing up to the peak, non-increasing after.
      for (Eigen::Index k = 1; k <= peak; ++k) CHECK(row[k] >= row[k - 1]);
      for (Eigen::Index k = peak + 1; k < row.size(); ++k) CHECK(row[k] <= row[k - 1]);
      CHECK(peak >= prev);
      prev = peak;
    }
    // Centres in Hz are strictly increasing: mel spacing is uniform.
    const double lo = hz_to_mel(0.0), hi = hz_to_mel(12500.0);
    double last = -1.0;
    for (int m = 1; m <= 64; ++m) {
      const double c = mel_to_hz(lo + (hi - lo) * m / 65.0);
      CHECK(c > last);
      last = c;
    }
  }

  TEST_CASE("too many mel bands for the FFT resolution is an error") {
    FeatureParams p = FeatureParams::defaults_for(8000);
    p.n_mels = 200;
    p.n_mfcc = 13;
    CHECK_THROWS_AS(mel_filterbank(p, 8000), Error);
  }

  TEST_CASE("mel spectrogram is min-max scaled per map") {
    const FeatureParams p = FeatureParams::defaults_for(25000);
    std::mt19937 rng(9);
    std::normal_distribution<double> n01;
    AudioClip clip{Eigen::VectorXd(5000), 25000};
    for (auto& v : clip.samples) v = 0.1 * n01(rng);
    const FeatureMap m = mel_spectrogram(clip, p);
    CHECK(m.kind == FeatureKind::MelSpec);
    CHECK(m.values.rows() == 64);
    CHECK(m.values.cols() == 18);  // 200 ms at 25 kHz
    CHECK(m.values.minCoeff() == 0.0);
    CHECK(m.values.maxCoeff() == 1.0);
    AudioClip flipped = clip;
    flipped.samples = -clip.samples;
    CHECK((mel_spectrogram(flipped, p).values - m.values).cwiseAbs().maxCoeff() <= 1e-12);
    const FeatureMap z = mel_spectrogram(AudioClip{Eigen::VectorXd::Zero(5000), 25000}, p);
    CHECK(z.values.isZero(0.0));
  }

  TEST_CASE("log-mel matches filterbank times power") {
    const FeatureParams p = FeatureParams::defaults_for(16000);
    const AudioClip clip = synth_sine(440.0, 0.5, 0.0, 0.2, 16000);
    const Eigen::MatrixXd expected =
        (mel_filterbank(p, 16000) * stft_power(clip, p)).array().unaryExpr([](double v) { return std::log(v + 1e-10); });
    CHECK((log_mel(clip, p) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("DCT matrix is orthonormal DCT-II") {
    const int n = 64;
    const Eigen::MatrixXd d = dct_matrix(n);
    CHECK((d * d.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-12);
    for (int k = 0; k < n; k += 7)
      for (int i = 0; i < n; i += 5) {
        const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        CHECK(d(k, i) == doctest::Approx(scale * std::cos(std::numbers::pi * k * (2 * i + 1) / (2.0 * n))));
      }
    const Eigen::VectorXd c = d * Eigen::VectorXd::Constant(n, 3.0);
    CHECK(c[0] == doctest::Approx(3.0 * std::sqrt(n)));
    CHECK(c.tail(n - 1).cwiseAbs().maxCoeff() <= 1e-9);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, -1.0, 2.0);
    CHECK((d.transpose() * (d * x) - x).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("MFCC is the truncated DCT of the unnormalized log-mel") {
    const FeatureParams p = FeatureParams::defaults_for(16000);
    const AudioClip clip = synth_sine(220.0, 0.5, 0.0, 0.3, 16000);
    const FeatureMap m = mfcc(clip, p);
    CHECK(m.kind == FeatureKind::Mfcc);
    REQUIRE(m.values.rows() == 13);
    const Eigen::MatrixXd expected = dct_matrix(64).topRows(13) * log_mel(clip, p);
    CHECK((m.values - expected).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(extract_features(clip, FeatureKind::Mfcc, p).values == m.values);
  }
}
