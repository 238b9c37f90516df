#pragma once

#include "vdd/audio.hpp"
#include "vdd/label.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace vdd {

/// Snippet framing for a detector: fixed-length overlapping windows at a fixed rate.
struct SnippetSpec {
  double length_ms = 1000.0;
  double overlap_ms = 900.0;
  int rate_hz = 16000;

  double hop_ms() const { return length_ms - overlap_ms; }
  Eigen::Index length_samples() const;
  Eigen::Index hop_samples() const;
  void validate() const;

  bool operator==(const SnippetSpec&) const = default;
};

namespace presets {
/// 200 ms snippets, 160 ms overlap, 25 kHz.
inline constexpr SnippetSpec kMobile{200.0, 160.0, 25000};
/// 1 s snippets, 900 ms overlap, 16 kHz.
inline constexpr SnippetSpec kCnn{1000.0, 900.0, 16000};
}  // namespace presets

/// "mobile" or "cnn"; throws InvalidArgument listing valid names.
SnippetSpec parse_preset(std::string_view name);
/// Preset name for a spec, or "custom".
std::string_view preset_name(const SnippetSpec& spec);

struct Segmentation {
  std::vector<AudioClip> snippets;
  bool padded = false;  // input was shorter than one snippet
};

/// Number of snippets for `len` samples at the spec's rate.
Eigen::Index snippet_count(Eigen::Index len, const SnippetSpec& spec);

/// Splits the clip (resampled to spec.rate_hz when needed). Trailing audio shorter
/// than one hop is dropped; clips shorter than one snippet yield one zero-padded snippet.
Segmentation segment(const AudioClip& clip, const SnippetSpec& spec);

enum class TieBreak { Pathol, Normal };

/// Strict majority wins; an exact tie resolves per `tie`.
Label majority_vote(std::span<const Label> labels, TieBreak tie = TieBreak::Pathol);

}  // namespace vdd
