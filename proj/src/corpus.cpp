#include "vdd/corpus.hpp"

#include "vdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace vdd {

namespace {

// Rosenberg glottal flow over one normalized cycle.
double glottal_flow(double phase) {
  constexpr double kOpen = 0.40;
  constexpr double kClose = 0.16;
  if (phase < kOpen) return 0.5 * (1.0 - std::cos(std::numbers::pi * phase / kOpen));
  if (phase < kOpen + kClose) return std::cos(std::numbers::pi * (phase - kOpen) / (2.0 * kClose));
  return 0.0;
}

// Standard deviation giving E|x_i - x_{i-1}| == local for iid normal draws.
double local_to_sigma(double local) { return local * std::sqrt(std::numbers::pi) / 2.0; }

void resonate(Eigen::VectorXd& x, double freq_hz, double bandwidth_hz, int rate_hz) {
  const double r = std::exp(-std::numbers::pi * bandwidth_hz / rate_hz);
  const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq_hz / rate_hz);
  const double a2 = -r * r;
  const double b0 = 1.0 - a1 - a2;
  double y1 = 0.0, y2 = 0.0;
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    const double y = b0 * x[n] + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    x[n] = y;
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(Errc::MalformedFile, "unterminated quote");
  fields.push_back(field);
  return fields;
}

std::string format_duration(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", d);
  return buf;
}

}  // namespace

AudioClip synth_voice(const VoiceParams& p, uint64_t seed) {
  if (!(p.f0_hz > 0.0) || p.jitter_pct < 0.0 || p.shimmer_pct < 0.0 || !(p.duration_s > 0.0) || p.rate_hz <= 0 ||
      p.noise_level < 0.0 || p.noise_level > 1.0)
    throw Error(Errc::InvalidArgument, "synth_voice: invalid voice parameters");
  const auto n = static_cast<Eigen::Index>(std::llround(p.duration_s * p.rate_hz));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double period = p.rate_hz / p.f0_hz;
  const double period_sigma = local_to_sigma(p.jitter_pct / 100.0) * period;
  const double amp_sigma = local_to_sigma(p.shimmer_pct / 100.0);

  Eigen::VectorXd flow = Eigen::VectorXd::Zero(n + 1);
  double start = 0.0;
  while (start < static_cast<double>(n + 1)) {
    const double t = std::max(0.5 * period, period + period_sigma * gauss(rng));
    const double amp = std::max(0.05, 1.0 + amp_sigma * gauss(rng));
    const auto first = static_cast<Eigen::Index>(std::ceil(start));
    const auto last = std::min<Eigen::Index>(n + 1, static_cast<Eigen::Index>(std::ceil(start + t)));
    for (Eigen::Index i = first; i < last; ++i) flow[i] = amp * glottal_flow((i - start) / t);
    start += t;
  }

  Eigen::VectorXd source = flow.tail(n) - flow.head(n);
  const double rms = std::sqrt(source.squaredNorm() / static_cast<double>(n));
  if (rms > 0.0) source /= rms;
  if (p.noise_level > 0.0) {
    Eigen::VectorXd noise(n);
    for (Eigen::Index i = 0; i < n; ++i) noise[i] = gauss(rng);
    source = (1.0 - p.noise_level) * source + p.noise_level * noise;
  }

  constexpr std::array<double, 3> kBandwidths{80.0, 100.0, 120.0};
  for (size_t f = 0; f < p.formants_hz.size(); ++f)
    if (p.formants_hz[f] > 0.0 && p.formants_hz[f] < p.rate_hz / 2.0)
      resonate(source, p.formants_hz[f], kBandwidths[f], p.rate_hz);

  return peak_normalize({std::move(source), p.rate_hz}, 0.95);
}

VoiceParams draw_voice_params(Label label, uint64_t seed, size_t index, int rate_hz) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                    static_cast<uint32_t>(class_index(label)), 0x5eedu};
  std::mt19937_64 rng(seq);
  const auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  VoiceParams v;
  v.rate_hz = rate_hz;
  v.f0_hz = uniform(100.0, 220.0);
  v.duration_s = uniform(1.0, 3.0);
  if (label == Label::Normal) {
    v.jitter_pct = uniform(0.1, 0.5);
    v.shimmer_pct = uniform(1.0, 3.0);
    v.noise_level = uniform(0.0, 0.05);
  } else {
    v.jitter_pct = uniform(2.0, 5.0);
    v.shimmer_pct = uniform(6.0, 12.0);
    v.noise_level = uniform(0.1, 0.3);
  }
  return v;
}

std::filesystem::path CorpusManifest::resolve(const ManifestEntry& e) const {
  return e.path.is_absolute() ? e.path : base_dir / e.path;
}

size_t CorpusManifest::count(Label label) const {
  return static_cast<size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.label == label; }));
}

CorpusManifest gen_corpus(int n_normal, int n_pathol, uint64_t seed, const std::filesystem::path& out_dir,
                          const CorpusOptions& options) {
  if (n_normal <= 0 || n_pathol <= 0) throw Error(Errc::InvalidArgument, "gen_corpus: counts must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw Error(Errc::Io, "gen_corpus: cannot create directory " + out_dir.string());

  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  const int total = n_normal + n_pathol;
  for (int i = 0; i < total; ++i) {
    const bool normal = i < n_normal;
    const Label label = normal ? Label::Normal : Label::Pathol;
    const int k = normal ? i : i - n_normal;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%04d.wav", normal ? "normal" : "pathol", k);
    char subject[16];
    std::snprintf(subject, sizeof subject, "%c%04d", normal ? 'N' : 'P', k);

    const VoiceParams v = draw_voice_params(label, seed, static_cast<size_t>(i), options.rate_hz);
    const uint64_t voice_seed = seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(i) + 1;
    const AudioClip clip = synth_voice(v, voice_seed);
    write_wav(clip, out_dir / name);
    manifest.entries.push_back({name, label, subject, clip.duration_s()});
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write manifest: " + path.string());
  out << "path,label,subject_id,duration_s\n";
  for (const auto& e : manifest.entries)
    out << e.path.generic_string() << ',' << to_string(e.label) << ',' << e.subject_id << ','
        << format_duration(e.duration_s) << '\n';
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, "cannot open manifest: " + path.string());
  CorpusManifest manifest;
  manifest.base_dir = path.parent_path();

  const auto malformed = [&](size_t row, const std::string& why) {
    return Error(Errc::MalformedFile, path.string() + ": row " + std::to_string(row) + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line)) throw malformed(1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "path" || header[1] != "label" || header[2] != "subject_id" ||
      (header.size() >= 4 && header[3] != "duration_s") || header.size() > 4)
    throw malformed(1, "header must be path,label,subject_id[,duration_s]");

  std::set<std::string> seen;
  std::vector<size_t> missing;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(line);
    } catch (const Error& e) {
      throw malformed(row, e.what());
    }
    if (fields.size() != header.size())
      throw malformed(row, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) throw malformed(row, "empty path");
    ManifestEntry e;
    e.path = fields[0];
    try {
      e.label = parse_label(fields[1]);
    } catch (const Error&) {
      throw Error(Errc::UnknownLabel, path.string() + ": row " + std::to_string(row) + ": unknown label '" +
                                          fields[1] + "' (valid: normal, pathol)");
    }
    e.subject_id = fields[2];
    if (header.size() == 4 && !fields[3].empty()) {
      try {
        size_t used = 0;
        e.duration_s = std::stod(fields[3], &used);
        if (used != fields[3].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw malformed(row, "invalid duration '" + fields[3] + "'");
      }
    }
    if (!seen.insert(e.path.generic_string()).second)
      throw Error(Errc::DuplicatePath, path.string() + ": row " + std::to_string(row) + ": duplicate path '" +
                                           e.path.generic_string() + "'");
    if (!std::filesystem::exists(manifest.resolve(e))) missing.push_back(row);
    manifest.entries.push_back(std::move(e));
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << path.string() << ": audio missing for row(s)";
    for (size_t r : missing) msg << ' ' << r;
    throw Error(Errc::FileNotFound, msg.str());
  }
  return manifest;
}

AudioClip load_clip(const std::filesystem::path& path) { return peak_normalize(read_wav(path), kLoadPeak); }

}  // namespace vdd
