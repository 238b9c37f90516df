#include "vdd/audio.hpp"

#include "vdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

namespace vdd {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "invalid argument";
    case Errc::FileNotFound: return "file not found";
    case Errc::MalformedFile: return "malformed file";
    case Errc::UnsupportedEncoding: return "unsupported encoding";
    case Errc::Io: return "i/o error";
    case Errc::RateMismatch: return "sample rate mismatch";
    case Errc::ShapeMismatch: return "shape mismatch";
    case Errc::NonFinite: return "non-finite value";
    case Errc::CorruptModel: return "corrupt model file";
    case Errc::VersionMismatch: return "version mismatch";
    case Errc::MetadataMismatch: return "metadata mismatch";
    case Errc::UnknownLabel: return "unknown label";
    case Errc::DuplicatePath: return "duplicate path";
    case Errc::InsufficientData: return "insufficient data";
    case Errc::ScenarioMismatch: return "attack/scenario mismatch";
  }
  return "unknown error";
}

namespace {

uint16_t le16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t le32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

double decode_sample(const unsigned char* p, uint16_t format, uint16_t bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      uint32_t u = le32(p);
      float f;
      std::memcpy(&f, &u, sizeof f);
      return f;
    }
    uint64_t u = static_cast<uint64_t>(le32(p)) | (static_cast<uint64_t>(le32(p + 4)) << 32);
    double d;
    std::memcpy(&d, &u, sizeof d);
    return d;
  }
  switch (bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<int16_t>(le16(p)) / 32768.0;
    case 24: {
      int32_t v = static_cast<int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default: return static_cast<int32_t>(le32(p)) / 2147483648.0;
  }
}

// Windowed-sinc low-pass, cutoff as a fraction of the sample rate.
Eigen::VectorXd lowpass_taps(double cutoff, int taps) {
  Eigen::VectorXd h(taps);
  const int mid = taps / 2;
  for (int i = 0; i < taps; ++i) {
    const double n = i - mid;
    const double sinc = n == 0 ? 2.0 * cutoff
                               : std::sin(2.0 * std::numbers::pi * cutoff * n) / (std::numbers::pi * n);
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (taps - 1));
    h[i] = sinc * window;
  }
  return h / h.sum();
}

Eigen::VectorXd fir_filter_centered(const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
  const Eigen::Index n = x.size();
  const Eigen::Index mid = h.size() / 2;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    const Eigen::Index k0 = std::max<Eigen::Index>(0, i + mid - (n - 1));
    const Eigen::Index k1 = std::min<Eigen::Index>(h.size() - 1, i + mid);
    for (Eigen::Index k = k0; k <= k1; ++k) acc += h[k] * x[i + mid - k];
    y[i] = acc;
  }
  return y;
}

// Catmull-Rom cubic through the four neighbours, edges clamped.
double cubic_at(const Eigen::VectorXd& x, double pos) {
  const Eigen::Index n = x.size();
  const double fl = std::floor(pos);
  const double t = pos - fl;
  const auto at = [&](Eigen::Index i) { return x[std::clamp<Eigen::Index>(i, 0, n - 1)]; };
  const auto i1 = static_cast<Eigen::Index>(fl);
  const double p0 = at(i1 - 1), p1 = at(i1), p2 = at(i1 + 1), p3 = at(i1 + 2);
  return p1 + 0.5 * t *
                  (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, "cannot open WAV file: " + path.string());
  const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), {}};

  const auto malformed = [&](const std::string& why) {
    return Error(Errc::MalformedFile, path.string() + ": " + why);
  };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw malformed("missing RIFF/WAVE header");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const uint32_t size = le32(chunk + 4);
    const size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > buf.size()) throw malformed("truncated fmt chunk");
      format = le16(buf.data() + body);
      channels = le16(buf.data() + body + 2);
      rate = le32(buf.data() + body + 4);
      bits = le16(buf.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw malformed("truncated extensible fmt chunk");
        format = le16(buf.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw malformed("data chunk before fmt chunk");
      if (body + size > buf.size()) throw malformed("data chunk truncated");
      if (channels == 0 || rate == 0) throw malformed("zero channels or sample rate");
      const bool pcm_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
      const bool float_ok = format == kFormatFloat && (bits == 32 || bits == 64);
      if (!pcm_ok && !float_ok)
        throw Error(Errc::UnsupportedEncoding, path.string() + ": format " + std::to_string(format) +
                                                   " with " + std::to_string(bits) + " bits");
      const size_t bytes = bits / 8;
      const size_t frame = bytes * channels;
      const size_t frames = size / frame;
      if (frames == 0) throw malformed("no samples");
      AudioClip clip;
      clip.sample_rate_hz = static_cast<int>(rate);
      clip.samples.resize(static_cast<Eigen::Index>(frames));
      for (size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (size_t c = 0; c < channels; ++c)
          acc += decode_sample(buf.data() + body + f * frame + c * bytes, format, bits);
        clip.samples[static_cast<Eigen::Index>(f)] = acc / channels;
      }
      return clip;
    }
    pos = body + size + (size & 1);
  }
  throw malformed(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  if (clip.size() == 0) throw Error(Errc::InvalidArgument, "write_wav: empty clip");
  if (clip.sample_rate_hz <= 0) throw Error(Errc::InvalidArgument, "write_wav: non-positive sample rate");
  const auto n = static_cast<uint32_t>(clip.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<uint32_t>(clip.sample_rate_hz));
  put32(out, static_cast<uint32_t>(clip.sample_rate_hz) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (Eigen::Index i = 0; i < clip.size(); ++i) {
    const double s = std::clamp(clip.samples[i], -1.0, 1.0);
    const auto q = static_cast<int16_t>(std::clamp(std::lround(s * 32768.0), -32768L, 32767L));
    put16(out, static_cast<uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot write WAV file: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(Errc::Io, "write failed: " + path.string());
}

Eigen::VectorXd resample_to_length(const Eigen::VectorXd& x, Eigen::Index out_len, double cutoff) {
  if (out_len <= 0) throw Error(Errc::InvalidArgument, "resample: output length must be positive");
  if (x.size() == 0) throw Error(Errc::InvalidArgument, "resample: empty input");
  const Eigen::VectorXd src = cutoff > 0.0 ? fir_filter_centered(x, lowpass_taps(cutoff, 63)) : x;
  const double step = static_cast<double>(x.size()) / static_cast<double>(out_len);
  Eigen::VectorXd y(out_len);
  for (Eigen::Index i = 0; i < out_len; ++i) y[i] = cubic_at(src, i * step);
  return y;
}

AudioClip resample(const AudioClip& clip, int target_rate_hz) {
  if (target_rate_hz <= 0) throw Error(Errc::InvalidArgument, "resample: target rate must be positive");
  if (clip.size() == 0 || clip.sample_rate_hz <= 0)
    throw Error(Errc::InvalidArgument, "resample: invalid clip");
  if (target_rate_hz == clip.sample_rate_hz) return clip;
  const double ratio = static_cast<double>(target_rate_hz) / clip.sample_rate_hz;
  const auto out_len =
      std::max<Eigen::Index>(1, std::llround(static_cast<double>(clip.size()) * ratio));
  const double cutoff = ratio < 1.0 ? 0.45 * ratio : 0.0;
  return {resample_to_length(clip.samples, out_len, cutoff), target_rate_hz};
}

AudioClip synth_sine(double freq_hz, double amplitude, double phase_rad, double duration_s,
                     int rate_hz) {
  if (rate_hz <= 0) throw Error(Errc::InvalidArgument, "synth_sine: rate must be positive");
  if (!(freq_hz > 0.0) || freq_hz >= rate_hz / 2.0)
    throw Error(Errc::InvalidArgument, "synth_sine: frequency must lie in (0, Nyquist)");
  if (amplitude < 0.0) throw Error(Errc::InvalidArgument, "synth_sine: negative amplitude");
  const auto n = std::llround(duration_s * rate_hz);
  if (n <= 0) throw Error(Errc::InvalidArgument, "synth_sine: non-positive duration");
  AudioClip clip{Eigen::VectorXd(n), rate_hz};
  const double w = 2.0 * std::numbers::pi * freq_hz / rate_hz;
  for (Eigen::Index i = 0; i < n; ++i) clip.samples[i] = amplitude * std::sin(w * i + phase_rad);
  return clip;
}

AudioClip mix(const AudioClip& a, const AudioClip& b) {
  if (a.sample_rate_hz != b.sample_rate_hz)
    throw Error(Errc::RateMismatch, "mix: sample rates differ (" + std::to_string(a.sample_rate_hz) +
                                        " vs " + std::to_string(b.sample_rate_hz) + ")");
  const Eigen::Index n = std::max(a.size(), b.size());
  AudioClip out{Eigen::VectorXd::Zero(n), a.sample_rate_hz};
  out.samples.head(a.size()) += a.samples;
  out.samples.head(b.size()) += b.samples;
  return out;
}

double peak(const AudioClip& clip) {
  return clip.size() == 0 ? 0.0 : clip.samples.cwiseAbs().maxCoeff();
}

AudioClip peak_normalize(const AudioClip& clip, double target_peak) {
  if (!(target_peak > 0.0) || target_peak > 1.0)
    throw Error(Errc::InvalidArgument, "peak_normalize: target must lie in (0, 1]");
  const double p = peak(clip);
  if (p == 0.0) return clip;
  return {clip.samples * (target_peak / p), clip.sample_rate_hz};
}

}  // namespace vdd
