#include "oracles.hpp"
#include "test_util.hpp"
#include "vdd/audio.hpp"
#include "vdd/error.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace vdd;

namespace {

Errc error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_SUITE("audio") {
  TEST_CASE("16-bit round trip stays within one quantization step") {
    const auto dir = testutil::scratch("audio_rt");
    AudioClip clip = synth_sine(440.0, 0.8, 0.3, 0.25, 16000);
    write_wav(clip, dir / "a.wav");
    const AudioClip back = read_wav(dir / "a.wav");
    CHECK(back.sample_rate_hz == 16000);
    REQUIRE(back.size() == clip.size());
    CHECK((back.samples - clip.samples).cwiseAbs().maxCoeff() <= 0.5 / 32768.0 + 1e-12);
    // Re-writing the decoded clip reproduces the bytes exactly.
    write_wav(back, dir / "b.wav");
    CHECK(testutil::read_bytes(dir / "a.wav") == testutil::read_bytes(dir / "b.wav"));
  }

  TEST_CASE("out-of-range samples are clipped to full scale") {
    const auto dir = testutil::scratch("audio_clip");
    AudioClip clip{Eigen::VectorXd(3), 8000};
    clip.samples << 2.0, -2.0, 0.5;
    write_wav(clip, dir / "c.wav");
    const AudioClip back = read_wav(dir / "c.wav");
    CHECK(back.samples[0] == doctest::Approx(32767.0 / 32768.0));
    CHECK(back.samples[1] == -1.0);
    CHECK(back.samples[2] == 0.5);
  }

  TEST_CASE("reads every supported encoding") {
    const auto dir = testutil::scratch("audio_enc");
    const std::vector<double> ref{0.0, 0.5, -0.5, 0.25};
    SUBCASE("pcm8") {
      std::vector<uint8_t> p;
      for (double v : ref) p.push_back(static_cast<uint8_t>(128 + std::lround(v * 128)));
      testutil::write_bytes(dir / "x.wav", testutil::make_wav(1, 1, 8000, 8, p));
    }
    SUBCASE("pcm24") {
      std::vector<uint8_t> p;
      for (double v : ref) {
        const int32_t s = static_cast<int32_t>(std::lround(v * 8388608.0));
        for (int i = 0; i < 3; ++i) p.push_back(static_cast<uint8_t>(s >> (8 * i)));
      }
      testutil::write_bytes(dir / "x.wav", testutil::make_wav(1, 1, 8000, 24, p));
    }
    SUBCASE("pcm32") {
      std::vector<uint8_t> p;
      for (double v : ref) {
        const int32_t s = static_cast<int32_t>(std::llround(v * 2147483648.0));
        for (int i = 0; i < 4; ++i) p.push_back(static_cast<uint8_t>(static_cast<uint32_t>(s) >> (8 * i)));
      }
      testutil::write_bytes(dir / "x.wav", testutil::make_wav(1, 1, 8000, 32, p));
    }
    SUBCASE("float32") {
      std::vector<uint8_t> p;
      for (double v : ref) {
        const float f = static_cast<float>(v);
        const auto* b = reinterpret_cast<const uint8_t*>(&f);
        p.insert(p.end(), b, b + 4);
      }
      testutil::write_bytes(dir / "x.wav", testutil::make_wav(3, 1, 8000, 32, p));
    }
    SUBCASE("float64 extensible") {
      std::vector<uint8_t> p;
      for (double v : ref) {
        const auto* b = reinterpret_cast<const uint8_t*>(&v);
        p.insert(p.end(), b, b + 8);
      }
      testutil::write_bytes(dir / "x.wav", testutil::make_wav(3, 1, 8000, 64, p, true));
    }
    const AudioClip clip = read_wav(dir / "x.wav");
    CHECK(clip.sample_rate_hz == 8000);
    REQUIRE(clip.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(clip.samples[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  }

  TEST_CASE("stereo is averaged to mono") {
    const auto dir = testutil::scratch("audio_stereo");
    std::vector<uint8_t> p;
    for (int16_t s : {16384, 0, -16384, -16384}) {
      p.push_back(static_cast<uint8_t>(s & 0xff));
      p.push_back(static_cast<uint8_t>((s >> 8) & 0xff));
    }
    testutil::write_bytes(dir / "s.wav", testutil::make_wav(1, 2, 22050, 16, p));
    const AudioClip clip = read_wav(dir / "s.wav");
    REQUIRE(clip.size() == 2);
    CHECK(clip.samples[0] == doctest::Approx(0.25));
    CHECK(clip.samples[1] == doctest::Approx(-0.5));
  }

  TEST_CASE("read errors carry distinct codes") {
    const auto dir = testutil::scratch("audio_err");
    CHECK(error_code([&] { read_wav(dir / "missing.wav"); }) == Errc::FileNotFound);
    testutil::write_bytes(dir / "junk.wav", {'R', 'I', 'F', 'F', 1, 2});
    CHECK(error_code([&] { read_wav(dir / "junk.wav"); }) == Errc::MalformedFile);
    testutil::write_bytes(dir / "alaw.wav", testutil::make_wav(6, 1, 8000, 8, {1, 2, 3}));
    CHECK(error_code([&] { read_wav(dir / "alaw.wav"); }) == Errc::UnsupportedEncoding);
    auto truncated = testutil::make_wav(1, 1, 8000, 16, std::vector<uint8_t>(100, 0));
    truncated.resize(truncated.size() - 50);
    testutil::write_bytes(dir / "short.wav", truncated);
    CHECK(error_code([&] { read_wav(dir / "short.wav"); }) == Errc::MalformedFile);
    CHECK(error_code([&] { write_wav(AudioClip{Eigen::VectorXd(0), 8000}, dir / "e.wav"); }) ==
          Errc::InvalidArgument);
  }

  TEST_CASE("resampling preserves a pure tone and the duration") {
    const AudioClip src = synth_sine(1000.0, 0.5, 0.0, 0.5, 25000);
    const AudioClip dst = resample(src, 16000);
    CHECK(dst.sample_rate_hz == 16000);
    CHECK(std::abs(dst.duration_s() - src.duration_s()) <= 1.0 / 16000);
    // 1000 Hz at fft 2048 @16 kHz is bin 128.
    CHECK(oracle::dominant_bin(dst.samples.segment(1000, 2048), 2048) == 128);
    const AudioClip twin = synth_sine(1000.0, 0.5, 0.0, 0.5, 16000);
    const Eigen::Index n = std::min(dst.size(), twin.size());
    CHECK((dst.samples.segment(200, n - 400) - twin.samples.segment(200, n - 400)).cwiseAbs().maxCoeff() < 0.02);
  }

  TEST_CASE("resampling to the same rate is the identity") {
    const AudioClip src = synth_sine(300.0, 0.5, 0.0, 0.1, 16000);
    CHECK(resample(src, 16000).samples == src.samples);
  }

  TEST_CASE("downsampling suppresses content above the new Nyquist") {
    const AudioClip src = synth_sine(11000.0, 0.5, 0.0, 0.5, 25000);
    const AudioClip dst = resample(src, 16000);
    const double rms = std::sqrt(dst.samples.segment(200, dst.size() - 400).squaredNorm() / (dst.size() - 400));
    CHECK(rms < 0.05 * 0.5 / std::sqrt(2.0));
  }

  TEST_CASE("sine synthesis matches the closed form") {
    const AudioClip s = synth_sine(50.0, 0.3, 0.7, 0.02, 1000);
    REQUIRE(s.size() == 20);
    for (int i = 0; i < 20; ++i)
      CHECK(s.samples[i] == doctest::Approx(0.3 * std::sin(2 * std::numbers::pi * 50.0 * i / 1000.0 + 0.7)));
  }

  TEST_CASE("mix pads and rejects rate mismatches") {
    AudioClip a{Eigen::VectorXd::Ones(3), 8000}, b{Eigen::VectorXd::Ones(5), 8000};
    const AudioClip m = mix(a, b);
    REQUIRE(m.size() == 5);
    CHECK(m.samples[0] == 2.0);
    CHECK(m.samples[4] == 1.0);
    CHECK(error_code([&] { mix(a, AudioClip{Eigen::VectorXd::Ones(3), 16000}); }) == Errc::RateMismatch);
  }

  TEST_CASE("peak normalization") {
    AudioClip a{Eigen::VectorXd(3), 8000};
    a.samples << 0.1, -0.4, 0.2;
    CHECK(peak(peak_normalize(a, 0.95)) == doctest::Approx(0.95));
    AudioClip z{Eigen::VectorXd::Zero(4), 8000};
    CHECK(peak_normalize(z, 0.95).samples == z.samples);
  }
}
