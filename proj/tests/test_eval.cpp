#include "oracles.hpp"
#include "test_util.hpp"
#include "vdd/error.hpp"
#include "vdd/eval.hpp"

#include <doctest.h>

#include <set>

using namespace vdd;
namespace fs = std::filesystem;

namespace {

CorpusManifest synthetic_manifest(int n_normal, int n_pathol, int per_subject = 0) {
  CorpusManifest m;
  for (int i = 0; i < n_normal + n_pathol; ++i) {
    ManifestEntry e;
    e.path = "f" + std::to_string(i) + ".wav";
    e.label = i < n_normal ? Label::Normal : Label::Pathol;
    if (per_subject > 0) e.subject_id = "s" + std::to_string(i / per_subject);
    m.entries.push_back(e);
  }
  return m;
}

std::set<std::string> paths(const CorpusManifest& m) {
  std::set<std::string> out;
  for (const auto& e : m.entries) out.insert(e.path);
  return out;
}

FileRecord record(Label truth, std::vector<Label> votes) {
  FileRecord r;
  r.truth = truth;
  r.path = "x";
  r.snippet_labels = std::move(votes);
  for (Label l : r.snippet_labels) r.snippet_scores.push_back(l == Label::Pathol ? 0.9 : 0.1);
  return r;
}

struct Fixture {
  CorpusManifest manifest;
  Detector cnn, svm;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    out.manifest = gen_corpus(5, 5, 12, testutil::scratch("eval_fixture"));
    DetectorConfig c;
    c.feature = FeatureKind::Mfcc;
    c.snippet = presets::kMobile;
    c.train.epochs = 3;
    const auto feats = featurize(out.manifest, c);
    out.cnn = train_detector(c, feats);
    c.classifier = ClassifierKind::CnnSvmLinear;
    out.svm = with_svm_head(out.cnn, c, feats);
    return out;
  }();
  return f;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("70/10/20 split is exact, stratified, disjoint and seeded") {
    const CorpusManifest m = synthetic_manifest(100, 100);
    const DatasetSplit s = split_dataset(m, {});
    CHECK(s.train.entries.size() == 140);
    CHECK(s.validation.entries.size() == 20);
    CHECK(s.test.entries.size() == 40);
    for (Label l : {Label::Normal, Label::Pathol}) {
      CHECK(s.train.count(l) == 70);
      CHECK(s.validation.count(l) == 10);
      CHECK(s.test.count(l) == 20);
    }
    std::set<std::string> all = paths(s.train);
    for (const auto& part : {s.validation, s.test})
      for (const auto& p : paths(part)) CHECK(all.insert(p).second);
    CHECK(all == paths(m));

    CHECK(paths(split_dataset(m, {}).test) == paths(s.test));
    SplitSpec other;
    other.seed = 2;
    CHECK(paths(split_dataset(m, other).test) != paths(s.test));
  }

  TEST_CASE("subjects never straddle splits") {
    const CorpusManifest m = synthetic_manifest(100, 100, 2);
    const DatasetSplit s = split_dataset(m, {});
    CHECK(s.train.entries.size() + s.validation.entries.size() + s.test.entries.size() == 200);
    std::map<std::string, int> where;
    int part = 0;
    for (const auto& p : {s.train, s.validation, s.test}) {
      for (const auto& e : p.entries) {
        auto [it, fresh] = where.emplace(e.subject_id, part);
        CHECK(it->second == part);
      }
      ++part;
    }
  }

  TEST_CASE("split errors") {
    CHECK_THROWS_AS(split_dataset(CorpusManifest{}, {}), Error);
    SplitSpec bad;
    bad.train_frac = 0.8;
    CHECK_THROWS_AS(split_dataset(synthetic_manifest(10, 10), bad), Error);
    // Each class is a single subject, so the test split cannot be filled.
    try {
      split_dataset(synthetic_manifest(10, 10, 10), {});
      FAIL("expected InsufficientData");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InsufficientData);
      CHECK(std::string(e.what()).find("subject") != std::string::npos);
    }
  }

  TEST_CASE("k-fold assignment partitions by subject and balances classes") {
    const CorpusManifest m = synthetic_manifest(50, 30, 2);
    const std::vector<int> fold = kfold_assignment(m, 5, 3);
    REQUIRE(fold.size() == 80);
    std::map<std::pair<int, Label>, int> per;
    for (size_t i = 0; i < fold.size(); ++i) {
      REQUIRE(fold[i] >= 0);
      REQUIRE(fold[i] < 5);
      ++per[{fold[i], m.entries[i].label}];
      if (i % 2 == 1) CHECK(fold[i] == fold[i - 1]);
    }
    for (int k = 0; k < 5; ++k) {
      CHECK(per[{k, Label::Normal}] == 10);
      CHECK(per[{k, Label::Pathol}] == 6);
    }
    CHECK(kfold_assignment(m, 5, 3) == fold);
    CHECK_THROWS_AS(kfold_assignment(m, 1, 3), Error);
    CHECK_THROWS_AS(kfold_assignment(synthetic_manifest(3, 30), 5, 3), Error);
  }

  TEST_CASE("majority vote and TPR agree with brute force") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<Label> votes(1 + rng() % 9);
      for (auto& v : votes) v = rng() % 2 ? Label::Pathol : Label::Normal;
      for (TieBreak t : {TieBreak::Pathol, TieBreak::Normal})
        CHECK(majority_vote(votes, t) == oracle::majority(votes, t == TieBreak::Pathol));
    }
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<FileRecord> files;
      std::vector<Label> truth, pred;
      for (int i = 0; i < 20; ++i) {
        FileRecord r;
        r.truth = rng() % 2 ? Label::Pathol : Label::Normal;
        r.predicted = rng() % 2 ? Label::Pathol : Label::Normal;
        truth.push_back(r.truth);
        pred.push_back(r.predicted);
        files.push_back(r);
      }
      for (Label pos : {Label::Normal, Label::Pathol})
        CHECK(true_positive_rate(files, pos) == doctest::Approx(oracle::tpr(truth, pred, pos)));
    }
    CHECK(true_positive_rate({}) == 0.0);
  }

  TEST_CASE("a constant model scores 0.5 file accuracy on a balanced set") {
    std::vector<FileRecord> files;
    for (int i = 0; i < 6; ++i) files.push_back(record(i < 3 ? Label::Normal : Label::Pathol, {Label::Pathol, Label::Pathol}));
    const EvalReport r = summarize(files);
    CHECK(r.file_accuracy == 0.5);
    CHECK(r.snippet_accuracy == 0.5);
    CHECK(r.tpr == 0.0);
    CHECK(r.per_snippet_scores.size() == 12);
    CHECK_THROWS_AS(summarize({record(Label::Normal, {})}), Error);
    CHECK_THROWS_AS(evaluate(fixture().cnn, CorpusManifest{}), Error);
  }

  TEST_CASE("summaries apply the tie rule and vote fractions") {
    const EvalReport p = summarize({record(Label::Normal, {Label::Normal, Label::Pathol})});
    CHECK(p.per_file[0].predicted == Label::Pathol);
    CHECK(p.per_file[0].vote_fraction == 0.5);
    EvalOptions o;
    o.tie = TieBreak::Normal;
    CHECK(summarize({record(Label::Normal, {Label::Normal, Label::Pathol})}, o).per_file[0].predicted == Label::Normal);
  }

  TEST_CASE("quantiles and boxplots match the direct definitions") {
    const BoxplotStats a = boxplot_stats(std::vector<double>{1, 2, 3, 4, 5});
    CHECK(a.median == 3);
    CHECK(a.q1 == 2);
    CHECK(a.q3 == 4);
    CHECK(a.whisker_low == 1);
    CHECK(a.whisker_high == 5);
    CHECK(a.outliers.empty());
    const BoxplotStats b = boxplot_stats(std::vector<double>{1, 1, 1, 1, 100});
    CHECK(b.median == 1);
    CHECK(b.whisker_high == 1);
    CHECK(b.outliers == std::vector<double>{100});

    std::mt19937_64 rng(5);
    std::lognormal_distribution<double> d(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> v(1 + rng() % 40);
      for (auto& x : v) x = d(rng);
      const double p = std::uniform_real_distribution<double>(0, 1)(rng);
      CHECK(quantile(v, p) == doctest::Approx(oracle::quantile(v, p)));
      const BoxplotStats s = boxplot_stats(v);
      const oracle::Box o = oracle::boxplot(v);
      CHECK(s.median == doctest::Approx(o.median));
      CHECK(s.q1 == doctest::Approx(o.q1));
      CHECK(s.q3 == doctest::Approx(o.q3));
      CHECK(s.whisker_low == doctest::Approx(o.wlow));
      CHECK(s.whisker_high == doctest::Approx(o.whigh));
      std::vector<double> out = s.outliers;
      std::sort(out.begin(), out.end());
      CHECK(out == o.outliers);
    }
    CHECK_THROWS_AS(quantile({}, 0.5), Error);
    CHECK_THROWS_AS(boxplot_stats({}), Error);
  }

  TEST_CASE("scenario names and compatibility") {
    for (Scenario s : {Scenario::White, Scenario::BlackFile, Scenario::BlackSnippet})
      CHECK(parse_scenario(to_string(s)) == s);
    CHECK_THROWS_AS(parse_scenario("grey"), Error);
    auto code = [](const AttackConfig& a, Scenario s) {
      try {
        check_scenario(a, s);
      } catch (const Error& e) {
        return e.code();
      }
      return Errc::InvalidArgument;
    };
    CHECK(code(Fgsm{}, Scenario::BlackFile) == Errc::ScenarioMismatch);
    CHECK(code(Tone{}, Scenario::White) == Errc::ScenarioMismatch);
    CHECK_NOTHROW(check_scenario(Pgd{}, Scenario::White));
    CHECK_NOTHROW(check_scenario(PitchShift{}, Scenario::BlackSnippet));
  }

  TEST_CASE("zero-strength attacks leave every attacked file correct") {
    const Fixture& f = fixture();
    const CleanRun clean = clean_run(f.cnn, f.manifest);
    REQUIRE_FALSE(clean.attacked_files().empty());
    for (size_t i : clean.attacked_files()) {
      CHECK(f.manifest.entries[i].label == Label::Normal);
      CHECK(clean.report.per_file[i].predicted == Label::Normal);
    }
    CHECK(run_attack(clean, Fgsm{0.0}, Scenario::White).attacked.tpr == 1.0);
    CHECK(run_attack(clean, Pgd{0.0, 0.0, 3}, Scenario::White).attacked.tpr == 1.0);
    const AttackOutcome file = run_attack(clean, Tone{100.0, 0.0}, Scenario::BlackFile);
    const AttackOutcome snip = run_attack(clean, Tone{100.0, 0.0}, Scenario::BlackSnippet);
    CHECK(file.attacked.tpr == 1.0);
    CHECK(snip.attacked.tpr == 1.0);
    CHECK(file.attacked.per_snippet_scores == snip.attacked.per_snippet_scores);
    CHECK(file.full.file_accuracy == clean.report.file_accuracy);
    CHECK(file.clean_tpr == clean.report.tpr);
  }

  TEST_CASE("white-box perturbations respect the budget") {
    const CleanRun clean = clean_run(fixture().cnn, fixture().manifest);
    const AttackOutcome o = run_attack(clean, Fgsm{0.05}, Scenario::White);
    CHECK(o.max_linf <= 0.05 + 1e-12);
    CHECK(o.mean_linf > 0.0);
    CHECK(o.attacked.tpr <= 1.0);
  }

  TEST_CASE("metrics CSV round trip has one row per detector and grid point") {
    const Fixture& f = fixture();
    const std::vector<AttackConfig> grid{Tone{100.0, 0.0}, Tone{100.0, 0.5}, PitchShift{-2}};
    std::vector<MetricsRow> rows;
    for (const Detector* d : {&f.cnn, &f.svm}) {
      const CleanRun clean = clean_run(*d, f.manifest);
      for (const auto& o : run_attack_experiment(clean, grid, Scenario::BlackFile)) rows.push_back(metrics_row(*d, o));
    }
    const auto dir = testutil::scratch("metrics_rt");
    write_metrics_csv(rows, dir / "metrics.csv");
    const std::vector<MetricsRow> back = read_metrics_csv(dir / "metrics.csv");
    REQUIRE(back.size() == 6);
    for (size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].detector == rows[i].detector);
      CHECK(back[i].attack == rows[i].attack);
      CHECK(back[i].param1 == rows[i].param1);
      CHECK(back[i].param2 == rows[i].param2);
      CHECK(back[i].scenario == "black-file");
      CHECK(back[i].clean_tpr == doctest::Approx(rows[i].clean_tpr));
      CHECK(back[i].attacked_tpr == doctest::Approx(rows[i].attacked_tpr));
      CHECK(back[i].file_acc == doctest::Approx(rows[i].file_acc));
    }
    CHECK(back[0].detector != back[3].detector);
    testutil::write_bytes(dir / "bad.csv", {'a', ',', 'b', '\n'});
    CHECK_THROWS_AS(read_metrics_csv(dir / "bad.csv"), Error);
  }
}
