#include "test_util.hpp"
#include "vdd/corpus.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <sstream>

namespace fs = std::filesystem;

namespace {

// Runs the CLI with the given arguments; returns its exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + VDD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path only_run_dir(const fs::path& root) {
  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.path().filename().string().starts_with("run-")) runs.push_back(e.path());
  REQUIRE(runs.size() == 1);
  return runs.front();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 1") {
    const auto dir = testutil::scratch("cli_usage");
    const fs::path log = dir / "log.txt";
    CHECK(run_cli("", log) == 1);
    CHECK(run_cli("bogus", log) == 1);
    CHECK(run_cli("gen-data --normal 2", log) == 1);
    CHECK(run_cli("gen-data --normal -3 --out " + (dir / "x").string(), log) == 1);
    CHECK(run_cli("train --feature spectrogram --out-root " + dir.string(), log) == 1);
    CHECK(slurp(log).find("melspec") != std::string::npos);
    CHECK(run_cli("attack --attack laser --out-root " + dir.string(), log) == 1);
    CHECK(run_cli("--help", log) == 0);
  }

  TEST_CASE("gen-data writes a reproducible corpus") {
    const auto dir = testutil::scratch("cli_gen");
    const fs::path log = dir / "log.txt";
    REQUIRE(run_cli("gen-data --normal 3 --pathol 2 --seed 5 --out " + (dir / "a").string(), log) == 0);
    REQUIRE(run_cli("gen-data --normal 3 --pathol 2 --seed 5 --out " + (dir / "b").string(), log) == 0);
    const vdd::CorpusManifest m = vdd::load_manifest(dir / "a" / "manifest.csv");
    CHECK(m.count(vdd::Label::Normal) == 3);
    CHECK(m.count(vdd::Label::Pathol) == 2);
    for (const auto& e : m.entries) CHECK(testutil::read_bytes(m.resolve(e)) == testutil::read_bytes(dir / "b" / e.path));
    CHECK(testutil::read_bytes(dir / "a" / "manifest.csv") == testutil::read_bytes(dir / "b" / "manifest.csv"));
  }

  TEST_CASE("data errors exit with 2") {
    const auto dir = testutil::scratch("cli_data");
    const fs::path log = dir / "log.txt";
    CHECK(run_cli("train --manifest " + (dir / "missing.csv").string() + " --out-root " + dir.string(), log) == 2);
    fs::create_directories(dir / "empty");
    CHECK(run_cli("report --run " + (dir / "empty").string(), log) == 2);
    std::ofstream(dir / "bad.csv") << "path,label,subject_id\nnope.wav,normal,s1\n";
    CHECK(run_cli("train --manifest " + (dir / "bad.csv").string() + " --out-root " + dir.string(), log) == 2);
  }

  TEST_CASE("smoke pipeline: train, attack, report") {
    const auto root = testutil::scratch("cli_smoke");
    const fs::path log = root / "log.txt";
    const std::string config = std::string("--config \"") + VDD_SOURCE_DIR + "/configs/smoke.json\" --out-root " +
                               root.string();
    REQUIRE(run_cli("train " + config, log) == 0);
    const fs::path run = only_run_dir(root);
    CHECK(fs::exists(run / "config.json"));
    CHECK(fs::exists(run / "models" / "mfcc-cnn-svm-rbf-mobile.vddm"));
    CHECK(lines(run / "splits" / "test.csv") == 5);

    CHECK(run_cli("attack --run " + run.string() + " --attack fgsm --scenario black-file", log) == 1);
    CHECK(slurp(log).find("white") != std::string::npos);

    REQUIRE(run_cli("attack " + config, log) == 0);
    // 3 detectors x (2 fgsm + 1 pgd + 2 tone + 1 pitch)
    CHECK(lines(run / "attack" / "metrics.csv") == 1 + 18);
    CHECK(fs::exists(run / "attack" / "run_manifest.json"));

    REQUIRE(run_cli("report --run " + run.string(), log) == 0);
    for (const char* f : {"fig_tone.csv", "fig_pitch.csv", "fig_epsilon.csv", "fig_boxplots.csv", "summary.txt"})
      CHECK(fs::exists(run / "report" / f));
    CHECK(slurp(run / "report" / "summary.txt").find("mfcc-cnn-mobile") != std::string::npos);
  }
}
