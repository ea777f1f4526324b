// End-to-end exercises of the installed command-line binary: every
// subcommand, the exit-code contract, overwrite protection, and
// whole-pipeline determinism.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const char* kCli = SLICEREC_CLI_PATH;

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path work_root() {
  static const fs::path root = [] {
    fs::path d = fs::temp_directory_path() / "slicerec_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CmdResult run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path out_file = work_root() / ("stdout_" + std::to_string(counter));
  const fs::path err_file = work_root() / ("stderr_" + std::to_string(counter));
  ++counter;
  const std::string cmd = env + std::string(kCli) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

// One tiny dataset shared by the pipeline cases.
const std::string kSynthArgs =
    "--seed 5 --n-train-healthy 2 --n-val-healthy 2 --n-val-anomalous 2 "
    "--n-test-healthy 2 --n-test-anomalous 2 --slices-per-volume 8 "
    "--height 24 --width 24";
const std::string kTrainArgs =
    "--steps 2 --batch-size 2 --gen-depth 2 --gen-filters 4 "
    "--critic-blocks 2 --critic-filters 4 --critic-steps 2 "
    "--slice-range full --seed 9";

fs::path dataset_dir() {
  static const fs::path dir = [] {
    const fs::path d = work_root() / "data";
    const CmdResult r = run("synth --out " + d.string() + " " + kSynthArgs);
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

fs::path run_dir() {
  static const fs::path dir = [] {
    const fs::path d = work_root() / "run";
    const CmdResult r =
        run("train --manifest " + (dataset_dir() / "manifest.tsv").string() +
            " --out " + d.string() + " " + kTrainArgs);
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 64") {
  CHECK(run("").code == 64);
  CHECK(run("frobnicate").code == 64);
  CHECK(run("train --no-such-flag 1").code == 64);
}

TEST_CASE("synth writes a loadable dataset and refuses accidental overwrite") {
  const fs::path d = dataset_dir();
  CHECK(fs::exists(d / "manifest.tsv"));
  CHECK(fs::exists(d / "synth_config.json"));
  int volr = 0;
  for (const auto& e : fs::directory_iterator(d / "vols"))
    volr += e.path().extension() == ".volr";
  CHECK(volr == 10);

  const CmdResult again = run("synth --out " + d.string() + " " + kSynthArgs);
  CHECK(again.code == 73);
  CHECK(again.err.find("--overwrite") != std::string::npos);

  const CmdResult forced =
      run("synth --out " + d.string() + " --overwrite " + kSynthArgs);
  CHECK(forced.code == 0);
}

TEST_CASE("train produces checkpoint, log, and echoed config") {
  const fs::path r = run_dir();
  CHECK(fs::exists(r / "final.ckpt"));
  CHECK(fs::exists(r / "train_log.tsv"));
  CHECK(fs::exists(r / "train_config.json"));
  const std::string log = slurp(r / "train_log.tsv");
  CHECK(log.find("step\tgen_total") == 0);
  const std::string echoed = slurp(r / "train_config.json");
  CHECK(echoed.find("\"steps\": 2") != std::string::npos);
  CHECK(echoed.find("\"seed\": 9") != std::string::npos);

  SUBCASE("rerun without overwrite is refused") {
    const CmdResult again =
        run("train --manifest " + (dataset_dir() / "manifest.tsv").string() +
            " --out " + r.string() + " " + kTrainArgs);
    CHECK(again.code == 73);
  }
  SUBCASE("missing manifest exits 66") {
    const CmdResult r2 = run("train --manifest /nonexistent/manifest.tsv --out " +
                             (work_root() / "r2").string() + " " + kTrainArgs);
    CHECK(r2.code == 66);
  }
  SUBCASE("anomalous scan in the train split exits 68") {
    const fs::path bad = work_root() / "bad_manifest";
    fs::create_directories(bad);
    std::string manifest = slurp(dataset_dir() / "manifest.tsv");
    // Relabel every validation row as train: anomalous scans land in
    // the train split and must be refused.
    std::string::size_type pos = 0;
    while ((pos = manifest.find("\tvalidation\t", pos)) != std::string::npos)
      manifest.replace(pos, 12, "\ttrain\t");
    std::ofstream(bad / "manifest.tsv") << manifest;
    fs::create_directory_symlink(dataset_dir() / "vols", bad / "vols");
    const CmdResult r3 = run("train --manifest " +
                             (bad / "manifest.tsv").string() + " --out " +
                             (work_root() / "r3").string() + " " + kTrainArgs);
    CHECK(r3.code == 68);
    CHECK(r3.err.find("cdr") != std::string::npos);
  }
  SUBCASE("config file with an unknown key exits 78") {
    const fs::path cfg = work_root() / "bad.json";
    std::ofstream(cfg) << R"({"train": {"stpes": 3}})";
    const CmdResult r4 =
        run("train --config " + cfg.string() + " --manifest " +
            (dataset_dir() / "manifest.tsv").string() + " --out " +
            (work_root() / "r4").string());
    CHECK(r4.code == 78);
    CHECK(r4.err.find("stpes") != std::string::npos);
  }
  SUBCASE("a GPU device request is refused as configuration") {
    const CmdResult r5 =
        run("train --manifest " + (dataset_dir() / "manifest.tsv").string() +
                " --out " + (work_root() / "r5").string() + " " + kTrainArgs,
            "SLICEREC_DEVICE=cuda ");
    CHECK(r5.code == 78);
    CHECK(r5.err.find("SLICEREC_DEVICE") != std::string::npos);
    const CmdResult r6 =
        run("score --checkpoint " + (run_dir() / "final.ckpt").string() +
                " --manifest " + (dataset_dir() / "manifest.tsv").string() +
                " --split validation --out " + (work_root() / "r6").string(),
            "SLICEREC_DEVICE=cpu ");
    CHECK(r6.code == 0);
  }
}

fs::path scores_dir() {
  static const fs::path dir = [] {
    const fs::path d = work_root() / "scores";
    for (const std::string split : {"validation", "test"}) {
      const CmdResult r =
          run("score --checkpoint " + (run_dir() / "final.ckpt").string() +
              " --manifest " + (dataset_dir() / "manifest.tsv").string() +
              " --split " + split + " --out " + d.string());
      REQUIRE(r.code == 0);
    }
    return d;
  }();
  return dir;
}

TEST_CASE("score writes per-split tables") {
  const fs::path sd = scores_dir();
  CHECK(fs::exists(sd / "scores_validation.tsv"));
  CHECK(fs::exists(sd / "scores_test.tsv"));
  const std::string table = slurp(sd / "scores_validation.tsv");
  CHECK(table.find("scan_id\tcdr\tl1_average") == 0);
  // 4 validation scans -> header + 4 rows
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);

  SUBCASE("rerun without overwrite is refused") {
    const CmdResult again =
        run("score --checkpoint " + (run_dir() / "final.ckpt").string() +
            " --manifest " + (dataset_dir() / "manifest.tsv").string() +
            " --split test --out " + sd.string());
    CHECK(again.code == 73);
  }
  SUBCASE("a missing checkpoint exits 66") {
    const CmdResult bad =
        run("score --checkpoint /nope.ckpt --manifest " +
            (dataset_dir() / "manifest.tsv").string() + " --split test --out " +
            (work_root() / "sx").string());
    CHECK(bad.code == 66);
  }
  SUBCASE("an empty split is a data error (65)") {
    const fs::path lone = work_root() / "lone";
    fs::create_directories(lone);
    std::istringstream in(slurp(dataset_dir() / "manifest.tsv"));
    std::ostringstream kept;
    std::string line;
    while (std::getline(in, line))
      if (line.find("\ttest\t") == std::string::npos) kept << line << '\n';
    std::ofstream(lone / "manifest.tsv") << kept.str();
    fs::create_directory_symlink(dataset_dir() / "vols", lone / "vols");
    const CmdResult r3 =
        run("score --checkpoint " + (run_dir() / "final.ckpt").string() +
            " --manifest " + (lone / "manifest.tsv").string() +
            " --split test --out " + (work_root() / "sz").string());
    CHECK(r3.code == 65);
  }
}

TEST_CASE("reconstruct writes volumes, montages, and window metrics") {
  const fs::path rd = work_root() / "recon";
  const CmdResult r =
      run("reconstruct --checkpoint " + (run_dir() / "final.ckpt").string() +
          " --manifest " + (dataset_dir() / "manifest.tsv").string() +
          " --split test --out " + rd.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(rd / "windows.tsv"));
  int volr = 0, pgm = 0;
  for (const auto& e : fs::directory_iterator(rd)) {
    volr += e.path().extension() == ".volr";
    pgm += e.path().extension() == ".pgm";
  }
  CHECK(volr == 4);  // one reconstruction per test scan
  CHECK(pgm == 4);
  const std::string windows = slurp(rd / "windows.tsv");
  CHECK(windows.find("scan_id\tstart\tl1\tl2\tdice\tssim_loss") == 0);
  // 4 scans x 3 windows -> header + 12 rows
  CHECK(std::count(windows.begin(), windows.end(), '\n') == 13);

  // Montages are valid binary PGMs of three side-by-side windows.
  for (const auto& e : fs::directory_iterator(rd))
    if (e.path().extension() == ".pgm") {
      const std::string pgm_bytes = slurp(e.path());
      CHECK(pgm_bytes.rfind("P5\n", 0) == 0);
    }
}

TEST_CASE("evaluate selects a score and writes the report set") {
  static const fs::path ev = work_root() / "eval";
  static const CmdResult r = run(
      "evaluate --validation-scores " +
      (scores_dir() / "scores_validation.tsv").string() + " --test-scores " +
      (scores_dir() / "scores_test.tsv").string() + " --out " + ev.string() +
      " --bins 8");
  CHECK(r.code == 0);
  CHECK(fs::exists(ev / "report.txt"));
  CHECK(fs::exists(ev / "roc.tsv"));
  CHECK(fs::exists(ev / "histogram.tsv"));
  CHECK(r.out.find("selected ") == 0);
  CHECK(r.out.find("validation auc") != std::string::npos);
  const std::string report = slurp(ev / "report.txt");
  CHECK(report.find("overall") != std::string::npos);

  SUBCASE("a fixed score skips selection") {
    const fs::path ev2 = work_root() / "eval_fixed";
    const CmdResult r2 =
        run("evaluate --validation-scores " +
            (scores_dir() / "scores_validation.tsv").string() +
            " --test-scores " + (scores_dir() / "scores_test.tsv").string() +
            " --out " + ev2.string() + " --score l1_maximum");
    CHECK(r2.code == 0);
    CHECK(slurp(ev2 / "report.txt").find("l1_maximum") != std::string::npos);
  }
  SUBCASE("rerun without overwrite is refused") {
    const CmdResult r4 = run(
        "evaluate --validation-scores " +
        (scores_dir() / "scores_validation.tsv").string() + " --test-scores " +
        (scores_dir() / "scores_test.tsv").string() + " --out " + ev.string());
    CHECK(r4.code == 73);
  }
  SUBCASE("missing score tables exit 66") {
    const CmdResult r3 = run("evaluate --validation-scores /missing.tsv " +
                             std::string("--test-scores /missing2.tsv --out ") +
                             (work_root() / "ev3").string());
    CHECK(r3.code == 66);
  }
}

TEST_CASE("the full pipeline is byte-deterministic under one seed") {
  auto pipeline = [&](const fs::path& base) {
    fs::create_directories(base);
    CmdResult r = run("synth --out " + (base / "data").string() + " " + kSynthArgs);
    REQUIRE(r.code == 0);
    r = run("train --manifest " + (base / "data" / "manifest.tsv").string() +
            " --out " + (base / "run").string() + " " + kTrainArgs);
    REQUIRE(r.code == 0);
    for (const std::string split : {"validation", "test"}) {
      r = run("score --checkpoint " + (base / "run" / "final.ckpt").string() +
              " --manifest " + (base / "data" / "manifest.tsv").string() +
              " --split " + split + " --out " + (base / "scores").string() +
              (split == "test" ? " --overwrite" : ""));
      REQUIRE(r.code == 0);
    }
    r = run("evaluate --validation-scores " +
            (base / "scores" / "scores_validation.tsv").string() +
            " --test-scores " + (base / "scores" / "scores_test.tsv").string() +
            " --out " + (base / "eval").string());
    REQUIRE(r.code == 0);
  };

  const fs::path a = work_root() / "det_a";
  const fs::path b = work_root() / "det_b";
  pipeline(a);
  pipeline(b);

  CHECK(slurp(a / "run" / "final.ckpt") == slurp(b / "run" / "final.ckpt"));
  CHECK(slurp(a / "scores" / "scores_test.tsv") ==
        slurp(b / "scores" / "scores_test.tsv"));
  CHECK(slurp(a / "scores" / "scores_validation.tsv") ==
        slurp(b / "scores" / "scores_validation.tsv"));
  CHECK(slurp(a / "eval" / "report.txt") == slurp(b / "eval" / "report.txt"));
  CHECK(slurp(a / "eval" / "roc.tsv") == slurp(b / "eval" / "roc.tsv"));
}
