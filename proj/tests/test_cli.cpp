#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cops/common.hpp"
#include "cops/envs.hpp"
#include "cops/memory.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string stdout_text;
};

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cops-cli-" + std::to_string(cops::Rng(std::random_device{}())()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

CliResult run_cli(const TempDir& tmp, const std::string& args) {
  fs::path out_file = tmp.path / ("stdout-" + std::to_string(std::rand()) + ".txt");
  std::string command = std::string(COPS_CLI_PATH) + " " + args + " >" + out_file.string() +
                        " 2>" + out_file.string() + ".err";
  int raw = std::system(command.c_str());
  CliResult result;
  result.exit_code = WEXITSTATUS(raw);
  std::ifstream in(out_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  result.stdout_text = ss.str();
  return result;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli run is bitwise reproducible under a fixed seed") {
  TempDir tmp;
  std::string common = "run --trials 3 --families 4 --H 4 --seed 11 --explore-prob 0.4 --out ";
  CliResult a = run_cli(tmp, common + (tmp.path / "a").string());
  CliResult b = run_cli(tmp, common + (tmp.path / "b").string());
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  CHECK(read_file(tmp.path / "a/report.csv") == read_file(tmp.path / "b/report.csv"));
  CHECK(read_file(tmp.path / "a/curve.csv") == read_file(tmp.path / "b/curve.csv"));
}

TEST_CASE("cli rejects bad flags with exit 2") {
  TempDir tmp;
  CHECK(run_cli(tmp, "run --k 0").exit_code == 2);
  CHECK(run_cli(tmp, "run --mode sideways").exit_code == 2);
  CHECK(run_cli(tmp, "definitely-not-a-command").exit_code == 2);
}

TEST_CASE("cli reports unreachable backends with exit 3") {
  TempDir tmp;
  // COPS_API_BASE points at a dead port for this invocation.
  setenv("COPS_API_BASE", "http://127.0.0.1:1", 1);
  CliResult r = run_cli(tmp, "run --backend remote --trials 1 --families 1 --out " +
                                 (tmp.path / "r2").string());
  unsetenv("COPS_API_BASE");
  CHECK(r.exit_code == 3);
}

TEST_CASE("cli memory inspect and verify") {
  TempDir tmp;
  fs::path bank_path = tmp.path / "bank.jsonl";
  {
    cops::MemoryBank bank;
    for (int f = 0; f < 3; ++f) {
      bank.append(cops::solved_experience(cops::SyntheticTaskSpec{f, 7}));
    }
    bank.save(bank_path);
  }

  CliResult inspect = run_cli(tmp, "memory inspect --bank " + bank_path.string());
  CHECK(inspect.exit_code == 0);
  // Header plus three rows.
  int lines = 0;
  for (char c : inspect.stdout_text) {
    if (c == '\n') ++lines;
  }
  CHECK(lines == 4);

  CHECK(run_cli(tmp, "memory verify --bank " + bank_path.string()).exit_code == 0);

  // Truncate the last line mid-record.
  std::string content = read_file(bank_path);
  std::ofstream(bank_path, std::ios::binary)
      << content.substr(0, content.size() / 2) << "{broken";
  CliResult verify = run_cli(tmp, "memory verify --bank " + bank_path.string());
  CHECK(verify.exit_code != 0);

  fs::path empty = tmp.path / "empty.jsonl";
  std::ofstream(empty).close();
  CliResult empty_inspect = run_cli(tmp, "memory inspect --bank " + empty.string());
  CHECK(empty_inspect.exit_code == 0);
  CHECK(empty_inspect.stdout_text == "seq,task_id,reward,text_digest\n");
}

TEST_CASE("cli theory epsgrid emits a monotone penalty column") {
  TempDir tmp;
  CliResult r = run_cli(tmp, "theory epsgrid --out " + (tmp.path / "grid").string());
  REQUIRE(r.exit_code == 0);
  std::ifstream in(tmp.path / "grid/epsgrid.csv");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "eps,penalty");
  double prev = -1.0;
  int rows = 0;
  while (std::getline(in, line)) {
    auto comma = line.find(',');
    double penalty = std::stod(line.substr(comma + 1));
    CHECK(penalty >= prev);
    prev = penalty;
    ++rows;
  }
  CHECK(rows == 11);
}

TEST_CASE("cli theory online with a single candidate has zero regret") {
  TempDir tmp;
  fs::path config = tmp.path / "single.json";
  std::ofstream(config) << R"({"candidates": 1, "seeds": 2, "rounds": 8})";
  CliResult r = run_cli(tmp, "theory online --config " + config.string() + " --out " +
                                 (tmp.path / "online").string());
  REQUIRE(r.exit_code == 0);
  std::ifstream in(tmp.path / "online/regret_trace.csv");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "round,gap,cum_regret,rhs,cum_rhs");
  while (std::getline(in, line)) {
    auto first = line.find(',');
    auto second = line.find(',', first + 1);
    CHECK(std::stod(line.substr(first + 1, second - first - 1)) == 0.0);
  }
}

TEST_CASE("cli theory offline rejects an empty candidate set with exit 4") {
  TempDir tmp;
  fs::path config = tmp.path / "infeasible.json";
  std::ofstream(config) << R"({"n_candidates": 0, "include_decoder_candidate": false})";
  CliResult r = run_cli(tmp, "theory offline --config " + config.string() + " --out " +
                                 (tmp.path / "off").string());
  CHECK(r.exit_code == 4);
}

TEST_CASE("cli plot renders deterministic SVG and rejects bad input") {
  TempDir tmp;
  fs::path csv = tmp.path / "curve.csv";
  std::ofstream(csv) << "trial,success_rate\n1,0.1\n2,0.4\n3,0.9\n";
  CliResult a = run_cli(tmp, "plot --input " + csv.string() + " --out " +
                                 (tmp.path / "a.svg").string());
  CliResult b = run_cli(tmp, "plot --input " + csv.string() + " --out " +
                                 (tmp.path / "b.svg").string());
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  std::string svg = read_file(tmp.path / "a.svg");
  CHECK(svg == read_file(tmp.path / "b.svg"));
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);

  fs::path empty = tmp.path / "empty.csv";
  std::ofstream(empty).close();
  CHECK(run_cli(tmp, "plot --input " + empty.string()).exit_code == 2);

  fs::path bad = tmp.path / "bad.csv";
  std::ofstream(bad) << "a,b\n1,notanumber\n";
  CHECK(run_cli(tmp, "plot --input " + bad.string()).exit_code == 2);
}
