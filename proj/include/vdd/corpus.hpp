#pragma once

#include "vdd/audio.hpp"
#include "vdd/label.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vdd {

/// Source-filter parameters of a synthetic sustained vowel.
struct VoiceParams {
  double f0_hz = 150.0;
  double jitter_pct = 0.0;   // local cycle-to-cycle period perturbation
  double shimmer_pct = 0.0;  // local cycle-to-cycle amplitude perturbation
  double noise_level = 0.0;  // aspiration noise share in [0, 1]
  std::array<double, 3> formants_hz{700.0, 1220.0, 2600.0};  // /a/
  double duration_s = 1.0;
  int rate_hz = 25000;
};

/// Rosenberg glottal pulses with seeded jitter/shimmer, white aspiration noise,
/// three cascaded resonators, peak-normalized to 0.95.
AudioClip synth_voice(const VoiceParams& params, uint64_t seed);

struct ManifestEntry {
  std::filesystem::path path;
  Label label = Label::Normal;
  std::string subject_id;
  double duration_s = 0.0;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // relative entry paths resolve against this

  std::filesystem::path resolve(const ManifestEntry& e) const;
  size_t count(Label label) const;
};

struct CorpusOptions {
  int rate_hz = 25000;
};

/// Writes n_normal + n_pathol WAVs and manifest.csv into out_dir. The output is a
/// pure function of (counts, seed, options).
CorpusManifest gen_corpus(int n_normal, int n_pathol, uint64_t seed, const std::filesystem::path& out_dir,
                          const CorpusOptions& options = {});

/// Voice parameters drawn for file `index` of the corpus.
VoiceParams draw_voice_params(Label label, uint64_t seed, size_t index, int rate_hz);

/// Validates header (path,label,subject_id[,duration_s]), labels and unique paths.
/// Missing audio files are reported with their row numbers.
CorpusManifest load_manifest(const std::filesystem::path& path);

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Loader used throughout the pipeline: read_wav then peak-normalize to kLoadPeak.
inline constexpr double kLoadPeak = 0.95;
AudioClip load_clip(const std::filesystem::path& path);

}  // namespace vdd
