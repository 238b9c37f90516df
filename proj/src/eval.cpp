#include "vdd/eval.hpp"

#include "vdd/error.hpp"
#include "vdd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace vdd {

namespace {

struct Group {
  std::vector<size_t> members;
  Label label = Label::Normal;
};

// Groups entries by subject id (files without one form singleton groups),
// preserving first-appearance order.
std::vector<Group> subject_groups(const CorpusManifest& manifest) {
  std::vector<Group> groups;
  std::map<std::string, size_t> by_subject;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (e.subject_id.empty()) {
      groups.push_back({{i}, e.label});
      continue;
    }
    auto [it, inserted] = by_subject.try_emplace(e.subject_id, groups.size());
    if (inserted) groups.push_back({{}, e.label});
    groups[it->second].members.push_back(i);
  }
  return groups;
}

CorpusManifest subset(const CorpusManifest& manifest, const std::vector<int>& assignment, int which) {
  CorpusManifest out;
  out.base_dir = manifest.base_dir;
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    if (assignment[i] == which) out.entries.push_back(manifest.entries[i]);
  return out;
}

template <typename T>
std::vector<T> pick(std::span<const T> items, const std::vector<int>& assignment, int fold, bool in_fold) {
  std::vector<T> out;
  for (size_t i = 0; i < items.size(); ++i)
    if ((assignment[i] == fold) == in_fold) out.push_back(items[i]);
  return out;
}

}  // namespace

DatasetSplit split_dataset(const CorpusManifest& manifest, const SplitSpec& spec) {
  if (spec.train_frac < 0 || spec.val_frac < 0 || spec.test_frac < 0 ||
      std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
    throw Error(Errc::InvalidArgument, "split_dataset: fractions must be non-negative and sum to 1");
  if (manifest.entries.empty()) throw Error(Errc::InsufficientData, "split_dataset: empty manifest");

  const std::vector<Group> groups = subject_groups(manifest);
  std::vector<int> assignment(manifest.entries.size(), 0);  // 0 train, 1 val, 2 test

  const std::vector<std::optional<Label>> strata =
      spec.stratified ? std::vector<std::optional<Label>>{Label::Normal, Label::Pathol}
                      : std::vector<std::optional<Label>>{std::nullopt};
  for (const auto& stratum : strata) {
    std::vector<size_t> order;
    size_t n = 0;
    for (size_t g = 0; g < groups.size(); ++g) {
      if (stratum && groups[g].label != *stratum) continue;
      order.push_back(g);
      n += groups[g].members.size();
    }
    if (n == 0) continue;
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + (stratum ? class_index(*stratum) + 1 : 0));
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_test = static_cast<size_t>(std::llround(static_cast<double>(n) * spec.test_frac));
    const auto n_val = static_cast<size_t>(std::llround(static_cast<double>(n) * spec.val_frac));
    if (n_test + n_val >= n && spec.train_frac > 0)
      throw Error(Errc::InsufficientData, "split_dataset: class too small to populate all splits");
    std::vector<bool> used(order.size(), false);
    const std::array<std::pair<int, size_t>, 2> targets{std::pair{2, n_test}, std::pair{1, n_val}};
    for (const auto& [which, quota] : targets) {
      size_t filled = 0;
      for (size_t o = 0; o < order.size() && filled < quota; ++o) {
        const Group& g = groups[order[o]];
        if (used[o] || filled + g.members.size() > quota) continue;
        used[o] = true;
        filled += g.members.size();
        for (size_t m : g.members) assignment[m] = which;
      }
      if (quota > 0 && filled == 0)
        throw Error(Errc::InsufficientData, std::string("split_dataset: cannot fill the ") +
                                                (which == 2 ? "test" : "validation") +
                                                " split without splitting a subject across splits");
    }
    bool any_train = false;
    for (size_t o = 0; o < order.size(); ++o) any_train = any_train || !used[o];
    if (!any_train && spec.train_frac > 0)
      throw Error(Errc::InsufficientData, "split_dataset: no files left for training");
  }
  return {subset(manifest, assignment, 0), subset(manifest, assignment, 1), subset(manifest, assignment, 2)};
}

std::vector<int> kfold_assignment(const CorpusManifest& manifest, int k, uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidArgument, "kfold: k must be at least 2");
  const std::vector<Group> groups = subject_groups(manifest);
  std::vector<int> fold(manifest.entries.size(), -1);
  for (Label stratum : {Label::Normal, Label::Pathol}) {
    std::vector<size_t> order;
    for (size_t g = 0; g < groups.size(); ++g)
      if (groups[g].label == stratum) order.push_back(g);
    if (static_cast<int>(order.size()) < k)
      throw Error(Errc::InsufficientData, "kfold: fewer " + std::string(to_string(stratum)) +
                                              " subjects than folds (" + std::to_string(order.size()) + " < " +
                                              std::to_string(k) + ")");
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 17 + class_index(stratum));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<size_t> load(static_cast<size_t>(k), 0);
    for (size_t g : order) {
      const auto target = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
      load[static_cast<size_t>(target)] += groups[g].members.size();
      for (size_t m : groups[g].members) fold[m] = target;
    }
  }
  return fold;
}

std::vector<FileFeatures> featurize(const CorpusManifest& manifest, const DetectorConfig& config, int threads) {
  std::vector<FileFeatures> out(manifest.entries.size());
  const FeatureParams params = config.feature_params();
  parallel_for(out.size(), threads, [&](size_t i) {
    const auto& e = manifest.entries[i];
    out[i] = compute_file_features(load_clip(manifest.resolve(e)), config.feature, config.snippet, params);
    out[i].label = e.label;
  });
  return out;
}

SelectionResult kfold_select(const CorpusManifest& manifest, std::span<const FileFeatures> features, int k,
                             std::span<const DetectorConfig> candidates, uint64_t seed, int threads) {
  if (candidates.empty()) throw Error(Errc::InvalidArgument, "kfold_select: no candidate configurations");
  if (features.size() != manifest.entries.size())
    throw Error(Errc::InvalidArgument, "kfold_select: one feature set per manifest entry required");
  for (const auto& c : candidates)
    if (c.feature != candidates.front().feature || !(c.snippet == candidates.front().snippet) ||
        c.feature_params() != candidates.front().feature_params())
      throw Error(Errc::InvalidArgument, "kfold_select: candidates must share features and snippet spec");

  const std::vector<int> fold = kfold_assignment(manifest, k, seed);
  SelectionResult result;
  result.mean_fold_accuracy.assign(candidates.size(), 0.0);
  std::vector<double> acc(candidates.size() * static_cast<size_t>(k), 0.0);
  parallel_for(acc.size(), threads, [&](size_t job) {
    const size_t c = job / static_cast<size_t>(k);
    const int f = static_cast<int>(job % static_cast<size_t>(k));
    const std::vector<FileFeatures> train = pick(features, fold, f, false);
    const std::vector<FileFeatures> held = pick(features, fold, f, true);
    const Detector det = train_detector(candidates[c], train);
    CorpusManifest held_manifest = subset(manifest, fold, f);
    acc[job] = evaluate(det, held_manifest, held).file_accuracy;
  });
  for (size_t c = 0; c < candidates.size(); ++c) {
    double sum = 0.0;
    for (int f = 0; f < k; ++f) sum += acc[c * static_cast<size_t>(k) + static_cast<size_t>(f)];
    result.mean_fold_accuracy[c] = sum / k;
    if (result.mean_fold_accuracy[c] > result.mean_fold_accuracy[result.best_index]) result.best_index = c;
  }
  result.detector = train_detector(candidates[result.best_index], features);
  return result;
}

double true_positive_rate(std::span<const FileRecord> files, Label positive) {
  size_t pos = 0, hit = 0;
  for (const auto& f : files) {
    if (f.truth != positive) continue;
    ++pos;
    if (f.predicted == positive) ++hit;
  }
  return pos == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(pos);
}

EvalReport summarize(std::vector<FileRecord> files, const EvalOptions& options) {
  EvalReport r;
  size_t snippets = 0, snippet_hits = 0, file_hits = 0;
  for (auto& f : files) {
    if (f.snippet_labels.empty()) throw Error(Errc::InvalidArgument, "summarize: file without snippets: " + f.path);
    f.predicted = majority_vote(f.snippet_labels, options.tie);
    const auto pathol = std::count(f.snippet_labels.begin(), f.snippet_labels.end(), Label::Pathol);
    f.vote_fraction = static_cast<double>(pathol) / static_cast<double>(f.snippet_labels.size());
    f.mean_score = std::accumulate(f.snippet_scores.begin(), f.snippet_scores.end(), 0.0) /
                   static_cast<double>(f.snippet_scores.size());
    snippets += f.snippet_labels.size();
    snippet_hits += static_cast<size_t>(std::count(f.snippet_labels.begin(), f.snippet_labels.end(), f.truth));
    if (f.predicted == f.truth) ++file_hits;
    r.per_snippet_scores.insert(r.per_snippet_scores.end(), f.snippet_scores.begin(), f.snippet_scores.end());
  }
  r.snippet_accuracy = snippets ? static_cast<double>(snippet_hits) / static_cast<double>(snippets) : 0.0;
  r.file_accuracy = files.empty() ? 0.0 : static_cast<double>(file_hits) / static_cast<double>(files.size());
  r.tpr = true_positive_rate(files, options.positive);
  r.per_file = std::move(files);
  return r;
}

namespace {

FileRecord classify_file(const Detector& det, const ManifestEntry& entry, const FileFeatures& features) {
  FileRecord rec;
  rec.path = entry.path.generic_string();
  rec.truth = entry.label;
  for (const auto& m : features.snippets) {
    const SnippetDecision d = det.classify(det.input_tensor(m));
    rec.snippet_labels.push_back(d.label);
    rec.snippet_scores.push_back(d.score);
  }
  return rec;
}

}  // namespace

EvalReport evaluate(const Detector& detector, const CorpusManifest& manifest, std::span<const FileFeatures> features,
                    const EvalOptions& options) {
  if (manifest.entries.empty()) throw Error(Errc::InsufficientData, "evaluate: empty file list");
  if (features.size() != manifest.entries.size())
    throw Error(Errc::InvalidArgument, "evaluate: one feature set per file required");
  std::vector<FileRecord> files(manifest.entries.size());
  parallel_for(files.size(), options.threads,
               [&](size_t i) { files[i] = classify_file(detector, manifest.entries[i], features[i]); });
  return summarize(std::move(files), options);
}

EvalReport evaluate(const Detector& detector, const CorpusManifest& manifest, const EvalOptions& options) {
  if (manifest.entries.empty()) throw Error(Errc::InsufficientData, "evaluate: empty file list");
  return evaluate(detector, manifest, featurize(manifest, detector.config, options.threads), options);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::White: return "white";
    case Scenario::BlackFile: return "black-file";
    case Scenario::BlackSnippet: return "black-snippet";
  }
  return "white";
}

Scenario parse_scenario(std::string_view text) {
  if (text == "white") return Scenario::White;
  if (text == "black-file") return Scenario::BlackFile;
  if (text == "black-snippet") return Scenario::BlackSnippet;
  throw Error(Errc::InvalidArgument,
              "unknown scenario '" + std::string(text) + "' (valid: white, black-file, black-snippet)");
}

void check_scenario(const AttackConfig& attack, Scenario scenario) {
  const bool white = is_white_box(attack);
  if (white && scenario != Scenario::White)
    throw Error(Errc::ScenarioMismatch, attack_name(attack) + " is a white-box attack on feature maps; it needs scenario "
                                                              "'white', not '" + std::string(to_string(scenario)) + "'");
  if (!white && scenario == Scenario::White)
    throw Error(Errc::ScenarioMismatch, attack_name(attack) +
                                            " manipulates the waveform; use scenario 'black-file' or 'black-snippet'");
}

std::vector<size_t> CleanRun::attacked_files() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < report.per_file.size(); ++i) {
    const auto& f = report.per_file[i];
    if (f.truth == Label::Normal && f.predicted == Label::Normal) out.push_back(i);
  }
  return out;
}

CleanRun clean_run(const Detector& detector, const CorpusManifest& manifest, const EvalOptions& options) {
  if (manifest.entries.empty()) throw Error(Errc::InsufficientData, "clean_run: empty file list");
  CleanRun run;
  run.detector = &detector;
  run.manifest = manifest;
  run.clips.resize(manifest.entries.size());
  run.features.resize(manifest.entries.size());
  const FeatureParams params = detector.feature_params;
  parallel_for(run.clips.size(), options.threads, [&](size_t i) {
    const auto& e = manifest.entries[i];
    run.clips[i] = load_clip(manifest.resolve(e));
    run.features[i] = compute_file_features(run.clips[i], detector.config.feature, detector.config.snippet, params);
    run.features[i].label = e.label;
  });
  run.report = evaluate(detector, manifest, run.features, options);
  return run;
}

namespace {

struct WhiteStats {
  double linf_sum = 0.0;
  double linf_max = 0.0;
  double range_sum = 0.0;
  size_t count = 0;
};

AudioClip apply_waveform_attack(const AudioClip& clip, const AttackConfig& attack) {
  if (const auto* t = std::get_if<Tone>(&attack)) return tone_attack(clip, *t);
  return pitch_shift(clip, std::get<PitchShift>(attack));
}

}  // namespace

AttackOutcome run_attack(const CleanRun& clean, const AttackConfig& attack, Scenario scenario,
                         const EvalOptions& options) {
  validate(attack);
  check_scenario(attack, scenario);
  const Detector& det = *clean.detector;
  const std::vector<size_t> targets = clean.attacked_files();
  const InputBox box = det.bounded_input() ? InputBox::unit() : InputBox::unbounded();
  const LossGradient loss = cnn_loss_gradient(det.cnn);

  std::vector<FileRecord> attacked(targets.size());
  std::vector<WhiteStats> stats(targets.size());
  parallel_for(targets.size(), options.threads, [&](size_t t) {
    const size_t i = targets[t];
    FileRecord rec = clean.report.per_file[i];
    const FileFeatures& feats = clean.features[i];
    switch (scenario) {
      case Scenario::White: {
        for (size_t s = 0; s < feats.snippets.size(); ++s) {
          if (rec.snippet_labels[s] != rec.truth) continue;
          const Tensor x = det.input_tensor(feats.snippets[s]);
          Tensor adv;
          if (const auto* f = std::get_if<Fgsm>(&attack)) {
            adv = fgsm(loss, x, rec.truth, *f, box);
          } else {
            Pgd cfg = std::get<Pgd>(attack);
            cfg.seed = cfg.seed * 0x9e3779b97f4a7c15ULL + i * 1009 + s;
            adv = pgd(loss, x, rec.truth, cfg, box);
          }
          const SnippetDecision d = det.classify(adv);
          rec.snippet_labels[s] = d.label;
          rec.snippet_scores[s] = d.score;
          const double linf = perturbation_linf(x, adv);
          stats[t].linf_sum += linf;
          stats[t].linf_max = std::max(stats[t].linf_max, linf);
          stats[t].range_sum += x.values.maxCoeff() - x.values.minCoeff();
          ++stats[t].count;
        }
        break;
      }
      case Scenario::BlackFile: {
        const AudioClip adv = apply_waveform_attack(clean.clips[i], attack);
        const FileFeatures f =
            compute_file_features(adv, det.config.feature, det.config.snippet, det.feature_params);
        rec.snippet_labels.clear();
        rec.snippet_scores.clear();
        for (const auto& m : f.snippets) {
          const SnippetDecision d = det.classify(det.input_tensor(m));
          rec.snippet_labels.push_back(d.label);
          rec.snippet_scores.push_back(d.score);
        }
        break;
      }
      case Scenario::BlackSnippet: {
        const Segmentation seg = segment(clean.clips[i], det.config.snippet);
        for (size_t s = 0; s < seg.snippets.size(); ++s) {
          if (rec.snippet_labels[s] != rec.truth) continue;
          const AudioClip adv = apply_waveform_attack(seg.snippets[s], attack);
          const FeatureMap m = extract_features(adv, det.config.feature, det.feature_params);
          const SnippetDecision d = det.classify(det.input_tensor(m));
          rec.snippet_labels[s] = d.label;
          rec.snippet_scores[s] = d.score;
        }
        break;
      }
    }
    attacked[t] = std::move(rec);
  });

  AttackOutcome out;
  out.attack = attack;
  out.scenario = scenario;
  out.clean_tpr = clean.report.tpr;
  std::vector<FileRecord> full = clean.report.per_file;
  for (size_t t = 0; t < targets.size(); ++t) full[targets[t]] = attacked[t];
  out.attacked = summarize(std::move(attacked), options);
  out.full = summarize(std::move(full), options);
  WhiteStats total;
  for (const auto& s : stats) {
    total.linf_sum += s.linf_sum;
    total.linf_max = std::max(total.linf_max, s.linf_max);
    total.range_sum += s.range_sum;
    total.count += s.count;
  }
  if (total.count) {
    out.mean_linf = total.linf_sum / static_cast<double>(total.count);
    out.max_linf = total.linf_max;
    out.input_range = total.range_sum / static_cast<double>(total.count);
  }
  return out;
}

std::vector<AttackOutcome> run_attack_experiment(const CleanRun& clean, std::span<const AttackConfig> grid,
                                                 Scenario scenario, const EvalOptions& options) {
  for (const auto& a : grid) check_scenario(a, scenario);
  std::vector<AttackOutcome> out;
  out.reserve(grid.size());
  for (const auto& a : grid) out.push_back(run_attack(clean, a, scenario, options));
  return out;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> data, double p) {
  if (data.empty()) throw Error(Errc::InvalidArgument, "quantile: empty data");
  std::sort(data.begin(), data.end());
  const double pos = p * static_cast<double>(data.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, data.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return data[lo] + frac * (data[hi] - data[lo]);
}

BoxplotStats boxplot_stats(std::span<const double> scores) {
  if (scores.empty()) throw Error(Errc::InvalidArgument, "boxplot_stats: empty input");
  std::vector<double> data(scores.begin(), scores.end());
  std::sort(data.begin(), data.end());
  BoxplotStats s;
  s.median = quantile(data, 0.5);
  s.q1 = quantile(data, 0.25);
  s.q3 = quantile(data, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  for (double v : data) {
    if (v >= lo_fence) {
      s.whisker_low = std::min(s.whisker_low, v);
      break;
    }
  }
  for (auto it = data.rbegin(); it != data.rend(); ++it) {
    if (*it <= hi_fence) {
      s.whisker_high = std::max(s.whisker_high, *it);
      break;
    }
  }
  for (double v : data)
    if (v < s.whisker_low || v > s.whisker_high) s.outliers.push_back(v);
  return s;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::pair<std::string, std::string> attack_params(const AttackConfig& attack) {
  if (const auto* f = std::get_if<Fgsm>(&attack)) return {format_number(f->epsilon), ""};
  if (const auto* p = std::get_if<Pgd>(&attack)) return {format_number(p->epsilon), std::to_string(p->iterations)};
  if (const auto* t = std::get_if<Tone>(&attack)) return {format_number(t->freq_hz), format_number(t->amplitude)};
  const auto& s = std::get<PitchShift>(attack);
  return {std::to_string(s.steps), std::to_string(s.steps_per_octave)};
}

MetricsRow metrics_row(const Detector& detector, const AttackOutcome& outcome) {
  MetricsRow r;
  r.detector = detector.config.display_name();
  r.feature = std::string(to_string(detector.config.feature));
  r.snippet_preset = std::string(preset_name(detector.config.snippet));
  r.attack = attack_name(outcome.attack);
  std::tie(r.param1, r.param2) = attack_params(outcome.attack);
  r.scenario = std::string(to_string(outcome.scenario));
  r.clean_tpr = outcome.clean_tpr;
  r.attacked_tpr = outcome.attacked.tpr;
  r.snippet_acc = outcome.full.snippet_accuracy;
  r.file_acc = outcome.full.file_accuracy;
  return r;
}

std::vector<BoxplotRow> boxplot_rows(const Detector& detector, const CleanRun& clean,
                                     std::span<const AttackOutcome> outcomes) {
  const std::string name = detector.config.display_name();
  std::vector<BoxplotRow> rows;
  const auto add = [&](const std::string& group, const std::vector<double>& scores) {
    if (scores.empty()) return;
    rows.push_back({name + "/" + group, boxplot_stats(scores), scores.size()});
  };
  for (Label l : {Label::Normal, Label::Pathol}) {
    std::vector<double> scores;
    for (const auto& f : clean.report.per_file)
      if (f.truth == l && f.predicted == l) scores.insert(scores.end(), f.snippet_scores.begin(), f.snippet_scores.end());
    add("clean-" + std::string(to_string(l)), scores);
  }
  for (const auto& o : outcomes) {
    const auto [p1, p2] = attack_params(o.attack);
    std::string group = attack_name(o.attack) + ":" + p1;
    if (!p2.empty()) group += ":" + p2;
    add(group + ":" + std::string(to_string(o.scenario)), o.attacked.per_snippet_scores);
  }
  return rows;
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "detector,feature,snippet_preset,attack,param1,param2,scenario,clean_tpr,attacked_tpr,snippet_acc,file_acc\n";
  for (const auto& r : rows)
    out << r.detector << ',' << r.feature << ',' << r.snippet_preset << ',' << r.attack << ',' << r.param1 << ','
        << r.param2 << ',' << r.scenario << ',' << format_number(r.clean_tpr) << ',' << format_number(r.attacked_tpr)
        << ',' << format_number(r.snippet_acc) << ',' << format_number(r.file_acc) << '\n';
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, "cannot open metrics CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("detector,feature,", 0) != 0)
    throw Error(Errc::MalformedFile, path.string() + ": missing metrics header");
  std::vector<MetricsRow> rows;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 11) throw Error(Errc::MalformedFile, path.string() + ": row " + std::to_string(row) + ": expected 11 fields");
    MetricsRow r{f[0], f[1], f[2], f[3], f[4], f[5], f[6]};
    try {
      r.clean_tpr = std::stod(f[7]);
      r.attacked_tpr = std::stod(f[8]);
      r.snippet_acc = std::stod(f[9]);
      r.file_acc = std::stod(f[10]);
    } catch (const std::exception&) {
      throw Error(Errc::MalformedFile, path.string() + ": row " + std::to_string(row) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_boxplot_csv(std::span<const BoxplotRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << "group,median,q1,q3,wlow,whigh,n_outliers\n";
  for (const auto& r : rows)
    out << r.group << ',' << format_number(r.stats.median) << ',' << format_number(r.stats.q1) << ','
        << format_number(r.stats.q3) << ',' << format_number(r.stats.whisker_low) << ','
        << format_number(r.stats.whisker_high) << ',' << r.stats.outliers.size() << '\n';
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

void export_report(const ReportBundle& bundle, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + out_dir.string());
  write_metrics_csv(bundle.metrics, out_dir / "metrics.csv");
  write_boxplot_csv(bundle.boxplots, out_dir / "boxplots.csv");

  std::ofstream files(out_dir / "files.csv", std::ios::binary);
  std::ofstream pert(out_dir / "perturbation.csv", std::ios::binary);
  if (!files || !pert) throw Error(Errc::Io, "cannot write report files in " + out_dir.string());
  files << "detector,attack,param1,param2,scenario,path,truth,predicted,vote_fraction,mean_score\n";
  pert << "detector,attack,param1,param2,scenario,attacked_files,tpr_all_normals,mean_linf,max_linf,"
          "mean_input_range,relative_linf\n";
  for (const auto& [name, o] : bundle.outcomes) {
    const auto [p1, p2] = attack_params(o.attack);
    const std::string key = name + ',' + attack_name(o.attack) + ',' + p1 + ',' + p2 + ',' +
                            std::string(to_string(o.scenario));
    for (const auto& f : o.attacked.per_file)
      files << key << ',' << f.path << ',' << to_string(f.truth) << ',' << to_string(f.predicted) << ','
            << format_number(f.vote_fraction) << ',' << format_number(f.mean_score) << '\n';
    const double rel = o.input_range > 0.0 ? o.mean_linf / o.input_range : 0.0;
    pert << key << ',' << o.attacked.per_file.size() << ',' << format_number(o.full.tpr) << ','
         << format_number(o.mean_linf) << ',' << format_number(o.max_linf) << ',' << format_number(o.input_range)
         << ',' << format_number(rel) << '\n';
  }
  std::ofstream manifest(out_dir / "run_manifest.json", std::ios::binary);
  if (!manifest) throw Error(Errc::Io, "cannot write run manifest in " + out_dir.string());
  manifest << bundle.run_manifest.dump(2) << '\n';
}

}  // namespace vdd
