#include "vdd/segmentation.hpp"

#include "vdd/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vdd {

std::string_view to_string(Label label) { return label == Label::Normal ? "normal" : "pathol"; }

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::Normal;
  if (text == "pathol") return Label::Pathol;
  throw Error(Errc::UnknownLabel, "unknown label '" + std::string(text) + "' (valid: normal, pathol)");
}

Eigen::Index SnippetSpec::length_samples() const { return std::llround(length_ms * rate_hz / 1000.0); }

Eigen::Index SnippetSpec::hop_samples() const { return std::llround(hop_ms() * rate_hz / 1000.0); }

void SnippetSpec::validate() const {
  if (rate_hz <= 0) throw Error(Errc::InvalidArgument, "SnippetSpec: rate must be positive");
  if (overlap_ms < 0.0 || !(overlap_ms < length_ms))
    throw Error(Errc::InvalidArgument, "SnippetSpec: need 0 <= overlap < length");
  if (hop_samples() < 1 || length_samples() < 1)
    throw Error(Errc::InvalidArgument, "SnippetSpec: hop shorter than one sample");
}

SnippetSpec parse_preset(std::string_view name) {
  if (name == "mobile" || name == "MOBILE") return presets::kMobile;
  if (name == "cnn" || name == "CNN") return presets::kCnn;
  throw Error(Errc::InvalidArgument, "unknown snippet preset '" + std::string(name) + "' (valid: mobile, cnn)");
}

std::string_view preset_name(const SnippetSpec& spec) {
  if (spec == presets::kMobile) return "mobile";
  if (spec == presets::kCnn) return "cnn";
  return "custom";
}

Eigen::Index snippet_count(Eigen::Index len, const SnippetSpec& spec) {
  const Eigen::Index length = spec.length_samples();
  if (len <= length) return 1;
  return 1 + (len - length) / spec.hop_samples();
}

Segmentation segment(const AudioClip& clip, const SnippetSpec& spec) {
  spec.validate();
  const AudioClip src = clip.sample_rate_hz == spec.rate_hz ? clip : resample(clip, spec.rate_hz);
  const Eigen::Index length = spec.length_samples();
  const Eigen::Index hop = spec.hop_samples();
  Segmentation out;
  if (src.size() < length) {
    AudioClip padded{Eigen::VectorXd::Zero(length), spec.rate_hz};
    padded.samples.head(src.size()) = src.samples;
    out.snippets.push_back(std::move(padded));
    out.padded = true;
    return out;
  }
  const Eigen::Index count = snippet_count(src.size(), spec);
  out.snippets.reserve(static_cast<size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    out.snippets.push_back({src.samples.segment(i * hop, length), spec.rate_hz});
  return out;
}

Label majority_vote(std::span<const Label> labels, TieBreak tie) {
  if (labels.empty()) throw Error(Errc::InvalidArgument, "majority_vote: empty label list");
  const auto pathol = std::count(labels.begin(), labels.end(), Label::Pathol);
  const auto normal = static_cast<std::ptrdiff_t>(labels.size()) - pathol;
  if (pathol > normal) return Label::Pathol;
  if (normal > pathol) return Label::Normal;
  return tie == TieBreak::Pathol ? Label::Pathol : Label::Normal;
}

}  // namespace vdd
