#include "vdd/config.hpp"

#include "vdd/error.hpp"
#include "vdd/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace vdd {

using nlohmann::json;

void to_json(json& j, const FeatureParams& p) {
  j = json{{"window_ms", p.window_ms}, {"hop_ms", p.hop_ms}, {"fft_size", p.fft_size}, {"n_mels", p.n_mels},
           {"n_mfcc", p.n_mfcc},       {"fmin_hz", p.fmin_hz}, {"fmax_hz", p.fmax_hz}};
}

void from_json(const json& j, FeatureParams& p) {
  p.window_ms = j.value("window_ms", p.window_ms);
  p.hop_ms = j.value("hop_ms", p.hop_ms);
  p.fft_size = j.value("fft_size", p.fft_size);
  p.n_mels = j.value("n_mels", p.n_mels);
  p.n_mfcc = j.value("n_mfcc", p.n_mfcc);
  p.fmin_hz = j.value("fmin_hz", p.fmin_hz);
  p.fmax_hz = j.value("fmax_hz", p.fmax_hz);
}

void to_json(json& j, const SnippetSpec& s) {
  j = json{{"length_ms", s.length_ms}, {"overlap_ms", s.overlap_ms}, {"rate_hz", s.rate_hz}};
}

void from_json(const json& j, SnippetSpec& s) {
  if (j.is_string()) {
    s = parse_preset(j.get<std::string>());
    return;
  }
  s.length_ms = j.value("length_ms", s.length_ms);
  s.overlap_ms = j.value("overlap_ms", s.overlap_ms);
  s.rate_hz = j.value("rate_hz", s.rate_hz);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
           {"weight_decay", c.weight_decay},   {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const CnnArchitecture& a) {
  j = json{{"input_rows", a.input_rows}, {"input_cols", a.input_cols}, {"channels", a.channels},
           {"kernel", a.kernel},         {"hidden", a.hidden}};
}

void from_json(const json& j, CnnArchitecture& a) {
  a.input_rows = j.value("input_rows", a.input_rows);
  a.input_cols = j.value("input_cols", a.input_cols);
  a.channels = j.value("channels", a.channels);
  a.kernel = j.value("kernel", a.kernel);
  a.hidden = j.value("hidden", a.hidden);
}

void to_json(json& j, const DetectorConfig& c) {
  j = json{{"name", c.name},
           {"feature", std::string(to_string(c.feature))},
           {"snippet", c.snippet},
           {"preset", std::string(preset_name(c.snippet))},
           {"classifier", std::string(to_string(c.classifier))},
           {"architecture", c.architecture},
           {"train", c.train},
           {"svm_c", c.svm_c},
           {"svm_gamma", c.svm_gamma},
           {"svm_epochs", c.svm_epochs}};
  if (c.features) j["features"] = *c.features;
}

void from_json(const json& j, DetectorConfig& c) {
  c.name = j.value("name", c.name);
  if (j.contains("feature")) c.feature = parse_feature_kind(j.at("feature").get<std::string>());
  if (j.contains("snippet")) c.snippet = j.at("snippet").get<SnippetSpec>();
  else if (j.contains("preset")) c.snippet = parse_preset(j.at("preset").get<std::string>());
  if (j.contains("classifier")) c.classifier = parse_classifier_kind(j.at("classifier").get<std::string>());
  if (j.contains("features")) {
    FeatureParams p = FeatureParams::defaults_for(c.snippet.rate_hz);
    from_json(j.at("features"), p);
    c.features = p;
  }
  if (j.contains("architecture")) from_json(j.at("architecture"), c.architecture);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  c.svm_c = j.value("svm_c", c.svm_c);
  c.svm_gamma = j.value("svm_gamma", c.svm_gamma);
  c.svm_epochs = j.value("svm_epochs", c.svm_epochs);
}

std::vector<AttackConfig> expand_grid(const AttackGrid& grid, const std::string& attack, uint64_t seed) {
  std::vector<AttackConfig> out;
  if (attack == "fgsm") {
    for (double e : grid.fgsm_epsilons) out.emplace_back(Fgsm{e});
  } else if (attack == "pgd") {
    for (double e : grid.pgd_epsilons)
      out.emplace_back(Pgd{e, e * grid.pgd_step_ratio, grid.pgd_iterations, grid.pgd_random_start, seed});
  } else if (attack == "tone") {
    for (double f : grid.tone_freqs_hz)
      for (double a : grid.tone_amplitudes) out.emplace_back(Tone{f, a, grid.tone_phase_rad});
  } else if (attack == "pitch") {
    for (int s : grid.pitch_steps) out.emplace_back(PitchShift{s, grid.steps_per_octave});
  } else {
    throw Error(Errc::InvalidArgument, "unknown attack '" + attack + "' (valid: fgsm, pgd, tone, pitch)");
  }
  for (const auto& a : out) validate(a);
  return out;
}

std::vector<DetectorEntry> default_detectors(uint64_t seed) {
  std::vector<DetectorEntry> out;
  for (FeatureKind f : {FeatureKind::MelSpec, FeatureKind::Mfcc}) {
    const std::string fname(to_string(f));
    for (const SnippetSpec& spec : {presets::kCnn, presets::kMobile}) {
      const std::string pname(preset_name(spec));
      DetectorEntry base;
      base.config.feature = f;
      base.config.snippet = spec;
      base.config.classifier = ClassifierKind::Cnn;
      base.config.train.seed = seed;
      base.config.name = fname + "-cnn-" + pname;
      out.push_back(base);
      DetectorEntry head = base;
      head.config.classifier = spec == presets::kCnn ? ClassifierKind::CnnSvmLinear : ClassifierKind::CnnSvmRbf;
      head.config.name = fname + "-" + std::string(to_string(head.config.classifier)) + "-" + pname;
      head.share_cnn_with = base.config.name;
      out.push_back(head);
    }
  }
  return out;
}

RunConfig default_run_config() {
  RunConfig c;
  c.split.seed = c.seed;
  c.detectors = default_detectors(c.seed);
  return c;
}

void RunConfig::validate() const {
  const auto bad = [](const std::string& why) { return Error(Errc::InvalidArgument, "config: " + why); };
  if (corpus.n_normal <= 0 || corpus.n_pathol <= 0) throw bad("corpus counts must be positive");
  if (kfold != 0 && kfold < 2) throw bad("kfold must be 0 (disabled) or >= 2");
  if (threads < 1) throw bad("threads must be >= 1");
  if (detectors.empty()) throw bad("no detectors configured");
  std::set<std::string> names;
  for (const auto& d : detectors) {
    const std::string name = d.config.display_name();
    if (!names.insert(name).second) throw bad("duplicate detector name '" + name + "'");
    d.config.snippet.validate();
    d.config.feature_params().validate(d.config.snippet.rate_hz);
  }
  for (const auto& d : detectors) {
    if (d.share_cnn_with.empty()) continue;
    const auto it = std::find_if(detectors.begin(), detectors.end(),
                                 [&](const DetectorEntry& o) { return o.config.display_name() == d.share_cnn_with; });
    if (it == detectors.end()) throw bad("share_cnn_with names unknown detector '" + d.share_cnn_with + "'");
    if (!it->share_cnn_with.empty()) throw bad("share_cnn_with target must own its CNN");
    if (d.config.classifier == ClassifierKind::Cnn) throw bad("share_cnn_with requires an SVM classifier");
    if (it->config.feature != d.config.feature || !(it->config.snippet == d.config.snippet))
      throw bad("detector '" + d.config.display_name() + "' shares a CNN trained on different features");
  }
  for (const auto& a : attacks.attacks) (void)expand_grid(attacks, a, seed);
}

std::filesystem::path RunConfig::run_dir() const { return output_root / ("run-" + config_hash(*this)); }

namespace {

json detector_entry_json(const DetectorEntry& d) {
  json j = d.config;
  if (!d.candidates.empty()) j["candidates"] = d.candidates;
  if (!d.share_cnn_with.empty()) j["share_cnn_with"] = d.share_cnn_with;
  return j;
}

}  // namespace

json to_json(const RunConfig& c) {
  json corpus{{"n_normal", c.corpus.n_normal}, {"n_pathol", c.corpus.n_pathol}, {"rate_hz", c.corpus.rate_hz}};
  if (c.corpus.manifest) corpus["manifest"] = c.corpus.manifest->generic_string();
  json detectors = json::array();
  for (const auto& d : c.detectors) detectors.push_back(detector_entry_json(d));
  const AttackGrid& g = c.attacks;
  return json{{"seed", c.seed},
              {"corpus", corpus},
              {"split",
               {{"train", c.split.train_frac},
                {"val", c.split.val_frac},
                {"test", c.split.test_frac},
                {"seed", c.split.seed},
                {"stratified", c.split.stratified}}},
              {"kfold", c.kfold},
              {"detectors", detectors},
              {"attacks",
               {{"attacks", g.attacks},
                {"fgsm_epsilons", g.fgsm_epsilons},
                {"pgd_epsilons", g.pgd_epsilons},
                {"pgd_iterations", g.pgd_iterations},
                {"pgd_step_ratio", g.pgd_step_ratio},
                {"pgd_random_start", g.pgd_random_start},
                {"tone_freqs_hz", g.tone_freqs_hz},
                {"tone_amplitudes", g.tone_amplitudes},
                {"tone_phase_rad", g.tone_phase_rad},
                {"pitch_steps", g.pitch_steps},
                {"steps_per_octave", g.steps_per_octave},
                {"black_box_scenario", std::string(to_string(g.black_box_scenario))}}},
              {"output_root", c.output_root.generic_string()},
              {"tie_break", c.tie == TieBreak::Pathol ? "pathol" : "normal"}};
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.split.seed = c.seed;
    if (j.contains("corpus")) {
      const json& s = j.at("corpus");
      if (s.contains("manifest")) c.corpus.manifest = s.at("manifest").get<std::string>();
      c.corpus.n_normal = s.value("n_normal", c.corpus.n_normal);
      c.corpus.n_pathol = s.value("n_pathol", c.corpus.n_pathol);
      c.corpus.rate_hz = s.value("rate_hz", c.corpus.rate_hz);
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      c.split.train_frac = s.value("train", c.split.train_frac);
      c.split.val_frac = s.value("val", c.split.val_frac);
      c.split.test_frac = s.value("test", c.split.test_frac);
      c.split.seed = s.value("seed", c.split.seed);
      c.split.stratified = s.value("stratified", c.split.stratified);
    }
    c.kfold = j.value("kfold", c.kfold);
    if (j.contains("detectors")) {
      for (const json& d : j.at("detectors")) {
        DetectorEntry e;
        e.config.train.seed = c.seed;
        from_json(d, e.config);
        if (d.contains("candidates"))
          for (const json& t : d.at("candidates")) {
            TrainConfig tc = e.config.train;
            from_json(t, tc);
            e.candidates.push_back(tc);
          }
        e.share_cnn_with = d.value("share_cnn_with", std::string());
        c.detectors.push_back(std::move(e));
      }
    } else {
      c.detectors = default_detectors(c.seed);
    }
    if (j.contains("attacks")) {
      const json& a = j.at("attacks");
      AttackGrid& g = c.attacks;
      g.attacks = a.value("attacks", g.attacks);
      g.fgsm_epsilons = a.value("fgsm_epsilons", g.fgsm_epsilons);
      g.pgd_epsilons = a.value("pgd_epsilons", g.pgd_epsilons);
      g.pgd_iterations = a.value("pgd_iterations", g.pgd_iterations);
      g.pgd_step_ratio = a.value("pgd_step_ratio", g.pgd_step_ratio);
      g.pgd_random_start = a.value("pgd_random_start", g.pgd_random_start);
      g.tone_freqs_hz = a.value("tone_freqs_hz", g.tone_freqs_hz);
      g.tone_amplitudes = a.value("tone_amplitudes", g.tone_amplitudes);
      g.tone_phase_rad = a.value("tone_phase_rad", g.tone_phase_rad);
      g.pitch_steps = a.value("pitch_steps", g.pitch_steps);
      g.steps_per_octave = a.value("steps_per_octave", g.steps_per_octave);
      if (a.contains("black_box_scenario"))
        g.black_box_scenario = parse_scenario(a.at("black_box_scenario").get<std::string>());
    }
    if (j.contains("output_root")) c.output_root = j.at("output_root").get<std::string>();
    c.threads = j.value("threads", c.threads);
    if (j.contains("tie_break")) {
      const std::string t = j.at("tie_break").get<std::string>();
      if (t != "pathol" && t != "normal") throw Error(Errc::InvalidArgument, "tie_break must be pathol or normal");
      c.tie = t == "pathol" ? TieBreak::Pathol : TieBreak::Normal;
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, "cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, "config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

std::string config_hash(const RunConfig& config) {
  json j = to_json(config);
  j.erase("output_root");
  const std::string text = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vdd
