#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "preg_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with the given arguments, capturing stdout (stderr goes to a
// side file so failures stay quiet unless inspected).
RunResult run(const std::string& args) {
  static int counter = 0;
  const fs::path out = scratch() / ("stdout_" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      std::string(PREG_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
      (scratch() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  return r;
}

std::string fixture(const std::string& name) {
  return (fs::path(PREG_FIXTURES_DIR) / name).string();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// One small dataset shared by the training smoke tests.
const std::string& tiny_data() {
  static const std::string dir = [] {
    const std::string d = (scratch() / "tiny").string();
    const RunResult r = run("gen-sbm --out " + d +
                            " --blocks 2 --nodes-per-block 15 --p-in 0.5 --p-out 0.08"
                            " --feature-dim 4 --separation 2 --noise 0.5 --seed 9 --connected");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

const std::string kTinyTrain =
    " --train-per-class 5 --val-per-class 5 --max-epochs 150 --patience 40";

}  // namespace

TEST_CASE("help exits cleanly for every subcommand") {
  CHECK(run("--help").code == 0);
  for (const std::string sub : {"train", "gridsearch", "analyze", "gen-sbm", "gradcheck"})
    CHECK(run(sub + " --help").code == 0);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("").code == 2);                       // no subcommand
  CHECK(run("train").code == 2);                  // missing --data
  CHECK(run("train --data x --mu -1").code == 2); // negative mu
  CHECK(run("analyze --data x --check nonsense").code == 2);
  CHECK(run("train --data " + tiny_data() + " --reg none --anneal --mu 0.5" + kTinyTrain).code ==
        2);  // anneal without preg
}

TEST_CASE("runtime failures exit with code 1") {
  CHECK(run("train --data /nonexistent_dir" + kTinyTrain).code == 1);
  CHECK(run("train --data " + tiny_data() + " --split files" + kTinyTrain).code ==
        1);  // no *_idx.txt files present
}

TEST_CASE("gen-sbm writes a loadable, byte-deterministic dataset") {
  const std::string a = (scratch() / "sbm_a").string();
  const std::string b = (scratch() / "sbm_b").string();
  const std::string flags =
      " --blocks 2 --nodes-per-block 10 --p-in 0.6 --p-out 0.1 --feature-dim 3 --seed 4";
  REQUIRE(run("gen-sbm --out " + a + flags).code == 0);
  REQUIRE(run("gen-sbm --out " + b + flags).code == 0);
  for (const std::string f : {"edges.tsv", "features.txt", "labels.txt", "sbm_config.json"}) {
    CHECK(fs::exists(fs::path(a) / f));
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  }
  const json cfg = json::parse(slurp(fs::path(a) / "sbm_config.json"));
  CHECK(cfg["seed"] == 4);
  CHECK(cfg["nodes_per_block"] == 10);
}

TEST_CASE("train emits well-formed metrics JSON") {
  const RunResult r = run("train --data " + tiny_data() +
                          " --reg preg --phi se --mu 0.3 --seed 1" + kTinyTrain);
  REQUIRE(r.code == 0);
  const json m = json::parse(r.out);
  CHECK(m["mu"] == 0.3);
  CHECK(m["phi"] == "se");
  for (const std::string k : {"train_acc", "val_acc", "test_acc"}) {
    const double v = m[k].get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(m["omega"].get<double>() >= 0.0);
  CHECK(m["stopped_epoch"].get<int>() >= 1);
  REQUIRE(m["loss_curve"].is_array());
  REQUIRE_FALSE(m["loss_curve"].empty());
  CHECK(m["loss_curve"].size() == m["stopped_epoch"].get<std::size_t>());
  CHECK(m["loss_curve"][0]["epoch"] == 1);
  CHECK(m["loss_curve"][0]["cls"].get<double>() > 0.0);
}

TEST_CASE("train runs are byte-reproducible") {
  const std::string cmd = "train --data " + tiny_data() +
                          " --reg preg --phi ce --mu 0.5 --seed 7" + kTinyTrain;
  const RunResult a = run(cmd);
  const RunResult b = run(cmd);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK_FALSE(a.out.empty());
}

TEST_CASE("explicit split files are honored") {
  const std::string dir = (scratch() / "withsplit").string();
  REQUIRE(run("gen-sbm --out " + dir +
              " --blocks 2 --nodes-per-block 10 --p-in 0.6 --p-out 0.1 --feature-dim 3 --seed 2")
              .code == 0);
  std::ofstream(dir + "/train_idx.txt") << "0\n1\n10\n11\n";
  std::ofstream(dir + "/val_idx.txt") << "2\n3\n12\n13\n";
  std::ofstream(dir + "/test_idx.txt") << "4\n5\n14\n15\n";
  const RunResult r =
      run("train --data " + dir + " --split files --max-epochs 100 --patience 30");
  REQUIRE(r.code == 0);
  const json m = json::parse(r.out);
  CHECK(m["test_acc"].get<double>() >= 0.0);
}

TEST_CASE("analyze theorem1 reports a vanishing residual") {
  const RunResult r =
      run("analyze --data " + fixture("path3") + " --check theorem1 --seed 3");
  REQUIRE(r.code == 0);
  const auto rows = parse_csv(r.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"step", "value", "dispersion"});
  CHECK(std::stod(rows[1][1]) < 1e-9);
}

TEST_CASE("analyze preg-descent produces a nonincreasing trace") {
  const RunResult r = run("analyze --data " + fixture("path3") +
                          " --check preg-descent --phi se --descent-lr 0.1 --steps 50 --seed 1");
  REQUIRE(r.code == 0);
  const auto rows = parse_csv(r.out);
  REQUIRE(rows.size() == 52);  // header + initial point + 50 steps
  for (std::size_t i = 2; i < rows.size(); ++i)
    CHECK(std::stod(rows[i][1]) <= std::stod(rows[i - 1][1]));
}

TEST_CASE("analyze infinite-gcn distinguishes the self-loop regimes") {
  const std::string base = "analyze --data " + fixture("path3") +
                           " --check infinite-gcn --seed 5 --tol 1e-8 --max-iter 60";
  const RunResult bare = run(base);
  REQUIRE(bare.code == 0);
  const auto bare_rows = parse_csv(bare.out);
  CHECK(bare_rows.size() == 62);  // never converges: header + iterations 0..60
  CHECK(std::stod(bare_rows.back()[1]) >= 1e-8);

  const RunResult looped = run(base + " --self-loops");
  REQUIRE(looped.code == 0);
  const auto loop_rows = parse_csv(looped.out);
  CHECK(loop_rows.size() < 62);
  CHECK(std::stod(loop_rows.back()[1]) < 1e-8);
}

TEST_CASE("gradcheck passes for every combination") {
  const RunResult r = run("gradcheck --nodes 8 --seed 2");
  REQUIRE(r.code == 0);
  std::size_t lines = 0;
  std::istringstream is(r.out);
  std::string line;
  while (std::getline(is, line))
    if (line.find("max_rel_err") != std::string::npos) ++lines;
  CHECK(lines == 30);  // 2 models × 5 regularizers × 3 φ
}
