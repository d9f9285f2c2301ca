// cops: benchmark runs, memory-bank inspection, selection-theory experiments
// and plotting, from one binary. See README.md for the command tour.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cops/agent.hpp"
#include "cops/common.hpp"
#include "cops/core.hpp"
#include "cops/embedding.hpp"
#include "cops/envs.hpp"
#include "cops/memory.hpp"
#include "cops/remote.hpp"
#include "cops/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;
constexpr int kExitInfeasible = 4;

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw cops::Error("cannot open " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw cops::Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Manifest schema: config digest, seed, timestamps, outputs, version. The
// timestamps make the manifest the one output excluded from byte-for-byte
// reproducibility checks.
void write_manifest(const fs::path& dir, const json& config, std::uint64_t seed,
                    std::time_t started, const std::vector<std::string>& outputs) {
  json manifest{{"version", kVersion},
                {"seed", seed},
                {"config_digest", cops::to_hex(cops::fnv1a64(config.dump()))},
                {"started_unix", static_cast<std::int64_t>(started)},
                {"finished_unix", static_cast<std::int64_t>(std::time(nullptr))},
                {"outputs", outputs}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// run: Algorithm-1 episodes over the synthetic benchmark
// ---------------------------------------------------------------------------

struct RunOptions {
  std::string env = "synthetic";
  std::string stub = "retrieval";  // retrieval | never | always:<action>
  std::string backend = "stub";    // stub | remote
  std::size_t trials = 10;
  std::size_t k = 5;
  double c = 5.0;
  std::size_t max_steps = 6;
  std::size_t families = 10;
  std::size_t instances = 1;
  std::size_t distractors = 0;
  double explore_prob = 0.3;
  std::string embed_scope = "state";  // the initial state is the task key here
  std::string mode = "online";
  std::uint64_t seed = 7;
  bool with_replacement = false;
  std::string out_dir = "out/run";
  std::string bank_path;       // optional initial bank (JSONL)
  std::string save_bank_path;  // optional final bank dump
};

int cmd_run(const RunOptions& opt) {
  const std::time_t started = std::time(nullptr);
  cops::AgentConfig cfg;
  cfg.k = opt.k;
  cfg.c = opt.c;
  cfg.max_steps = opt.max_steps;
  cfg.with_replacement = opt.with_replacement;
  cfg.seed = opt.seed;
  cfg.embed_scope = opt.embed_scope == "full" ? cops::DistanceParams::Scope::kFullExperience
                                              : cops::DistanceParams::Scope::kInitialStateOnly;

  std::vector<cops::SyntheticTaskSpec> tasks =
      cops::make_task_set(opt.families, opt.instances, opt.seed);

  cops::MemoryBank bank = opt.bank_path.empty()
                              ? cops::MemoryBank()
                              : cops::MemoryBank::load(opt.bank_path);
  for (std::size_t d = 0; d < opt.distractors; ++d) {
    cops::SyntheticTaskSpec spec{static_cast<int>(opt.families + d),
                                 cops::derive_seed(opt.seed, 9000 + d)};
    bank.append(cops::solved_experience(spec));
  }

  std::unique_ptr<cops::ChatModel> model;
  if (opt.backend == "remote") {
    cops::RemoteConfig remote = cops::RemoteConfig::from_env();
    if (!cops::probe_backend(remote)) {
      std::cerr << "error: chat backend unreachable at COPS_API_BASE='" << remote.base_url
                << "'\n";
      return kExitBackend;
    }
    model = std::make_unique<cops::RemoteChatModel>(remote);
  } else if (opt.stub == "retrieval") {
    model = std::make_unique<cops::RetrievalSensitiveModel>(opt.explore_prob, opt.seed);
  } else if (opt.stub == "never") {
    model = std::make_unique<cops::NeverSucceedModel>();
  } else if (opt.stub.rfind("always:", 0) == 0) {
    model = std::make_unique<cops::AlwaysModel>(opt.stub.substr(7));
  } else {
    std::cerr << "error: unknown stub '" << opt.stub << "'\n";
    return kExitUsage;
  }

  cops::EnvFactory factory = [&](std::size_t task_index) {
    return std::make_unique<cops::SyntheticEnv>(tasks[task_index]);
  };
  cops::Mode mode = opt.mode == "online" ? cops::Mode::kOnline : cops::Mode::kOffline;
  cops::BenchmarkReport report =
      cops::run_benchmark(factory, tasks.size(), opt.trials, *model, bank, cfg, mode);

  fs::path dir(opt.out_dir);
  write_file_atomic(dir / "report.csv", cops::benchmark_rows_csv(report));
  write_file_atomic(dir / "curve.csv", cops::benchmark_curve_csv(report));
  if (!opt.save_bank_path.empty()) bank.save(opt.save_bank_path);

  json config{{"command", "run"},         {"env", opt.env},
              {"stub", opt.stub},         {"backend", opt.backend},
              {"trials", opt.trials},     {"k", opt.k},
              {"c", opt.c},               {"H", opt.max_steps},
              {"families", opt.families}, {"instances", opt.instances},
              {"distractors", opt.distractors}, {"explore_prob", opt.explore_prob},
              {"embed_scope", opt.embed_scope}, {"mode", opt.mode},
              {"with_replacement", opt.with_replacement}, {"seed", opt.seed}};
  write_manifest(dir, config, opt.seed, started, {"report.csv", "curve.csv"});

  double final_rate = report.per_trial_success.empty() ? 0.0 : report.per_trial_success.back();
  std::cout << "run: " << tasks.size() << " tasks x " << opt.trials
            << " trials, final success rate " << format_double(final_rate) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// memory: inspect / verify a JSONL bank
// ---------------------------------------------------------------------------

int cmd_memory_inspect(const std::string& bank_path) {
  cops::MemoryBank bank = cops::MemoryBank::load(bank_path);
  std::cout << "seq,task_id,reward,text_digest\n";
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const cops::Experience& e = bank.entry(i);
    std::cout << e.created_seq << "," << e.task_id << "," << format_double(e.reward) << ","
              << cops::to_hex(cops::fnv1a64(cops::render_experience_text(e))) << "\n";
  }
  return kExitOk;
}

int cmd_memory_verify(const std::string& bank_path) {
  cops::MemoryBank bank = cops::MemoryBank::load(bank_path);  // throws naming the line
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const cops::Experience& e = bank.entry(i);
    if (e.final_state != cops::fold_state(e.initial_state, e.steps)) {
      throw cops::Error("entry seq " + std::to_string(e.created_seq) +
                        ": final_state does not fold from steps");
    }
    if (e.reward < 0.0 || e.reward > 1.0) {
      throw cops::Error("entry seq " + std::to_string(e.created_seq) + ": reward outside [0,1]");
    }
  }
  std::cout << "memory verify: " << bank.size() << " entries ok\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// theory: offline / online bound suites and the epsilon grid
// ---------------------------------------------------------------------------

struct TheoryOptions {
  std::string config_path;
  std::string out_dir = "out/theory";
  std::uint64_t base_seed = 0;  // 0 = keep config/default
  std::size_t n_seeds = 0;      // 0 = keep config/default
  int rounds = 0;               // 0 = keep config/default (online)
  bool oracle = false;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw cops::Error("cannot open config " + path);
  json cfg = json::parse(in, nullptr, false);
  if (cfg.is_discarded()) throw cops::Error("malformed JSON config " + path);
  return cfg;
}

cops::theory::RandomWorldConfig world_from_json(const json& j, bool memoryless_default) {
  cops::theory::RandomWorldConfig cfg;
  cfg.memoryless = memoryless_default;
  if (j.contains("n_tasks")) cfg.n_tasks = j["n_tasks"].get<int>();
  if (j.contains("n_states")) cfg.n_states = j["n_states"].get<int>();
  if (j.contains("n_actions")) cfg.n_actions = j["n_actions"].get<int>();
  if (j.contains("horizon")) cfg.horizon = j["horizon"].get<int>();
  if (j.contains("memoryless")) cfg.memoryless = j["memoryless"].get<bool>();
  if (j.contains("min_weight")) cfg.min_weight = j["min_weight"].get<double>();
  return cfg;
}

std::string bound_report_csv(const cops::theory::BoundReport& report) {
  std::string out = "seed,lhs,rhs,slack,c_dec,eps_hat,pass\n";
  for (const auto& row : report.rows) {
    out += std::to_string(row.seed) + "," + format_double(row.lhs) + "," +
           format_double(row.rhs) + "," + format_double(row.slack) + "," +
           format_double(row.c_dec) + "," + format_double(row.eps_hat) + "," +
           (row.pass ? "1" : "0") + "\n";
  }
  return out;
}

json bound_summary(const cops::theory::BoundReport& report) {
  double worst_slack = 0.0;
  bool first = true;
  for (const auto& row : report.rows) {
    if (first || row.slack < worst_slack) worst_slack = row.slack;
    first = false;
  }
  return json{{"seeds", report.rows.size()},
              {"pass", report.pass},
              {"worst_slack", worst_slack}};
}

int cmd_theory_offline(const TheoryOptions& opt) {
  const std::time_t started = std::time(nullptr);
  json cfg_json = load_config(opt.config_path);
  cops::theory::OfflineSuiteConfig cfg;
  cfg.instance.world = world_from_json(cfg_json.value("world", json::object()), false);
  if (cfg_json.contains("n_pre")) cfg.instance.n_pre = cfg_json["n_pre"].get<std::size_t>();
  if (cfg_json.contains("alpha")) cfg.instance.alpha = cfg_json["alpha"].get<double>();
  if (cfg_json.contains("gamma")) cfg.instance.gamma = cfg_json["gamma"].get<double>();
  if (cfg_json.contains("n_candidates")) {
    cfg.instance.n_random_candidates = cfg_json["n_candidates"].get<int>();
  }
  if (cfg_json.contains("include_decoder_candidate")) {
    cfg.instance.include_decoder_candidate = cfg_json["include_decoder_candidate"].get<bool>();
  }
  if (cfg_json.contains("base_seed")) cfg.base_seed = cfg_json["base_seed"].get<std::uint64_t>();
  if (cfg_json.contains("seeds")) cfg.n_seeds = cfg_json["seeds"].get<std::size_t>();
  if (opt.base_seed != 0) cfg.base_seed = opt.base_seed;
  if (opt.n_seeds != 0) cfg.n_seeds = opt.n_seeds;
  if (cfg.instance.n_random_candidates < 1 && !cfg.instance.include_decoder_candidate) {
    std::cerr << "error: infeasible candidate set (no candidates configured)\n";
    return kExitInfeasible;
  }

  cops::theory::BoundReport report;
  try {
    report = cops::theory::run_offline_suite(cfg);
  } catch (const cops::Error& e) {
    std::cerr << "error: offline suite infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }

  fs::path dir(opt.out_dir);
  write_file_atomic(dir / "bound.csv", bound_report_csv(report));
  write_file_atomic(dir / "summary.json", bound_summary(report).dump(2) + "\n");
  write_manifest(dir, cfg_json, cfg.base_seed, started, {"bound.csv", "summary.json"});
  std::cout << "theory offline: " << report.rows.size() << " seeds, "
            << (report.pass ? "all pass" : "FAIL") << "\n";
  return report.pass ? kExitOk : kExitFailure;
}

int cmd_theory_online(const TheoryOptions& opt) {
  const std::time_t started = std::time(nullptr);
  json cfg_json = load_config(opt.config_path);
  cops::theory::OnlineSuiteConfig cfg;
  cfg.world = world_from_json(cfg_json.value("world", json::object()), true);
  cfg.world.feature_mode = cops::theory::FeatureMode::kCounts;
  if (cfg_json.contains("n_pre")) cfg.n_pre = cfg_json["n_pre"].get<std::size_t>();
  if (cfg_json.contains("alpha")) cfg.alpha = cfg_json["alpha"].get<double>();
  if (cfg_json.contains("gamma")) cfg.gamma = cfg_json["gamma"].get<double>();
  if (cfg_json.contains("rounds")) cfg.rounds = cfg_json["rounds"].get<int>();
  if (cfg_json.contains("base_seed")) cfg.base_seed = cfg_json["base_seed"].get<std::uint64_t>();
  if (cfg_json.contains("seeds")) cfg.n_seeds = cfg_json["seeds"].get<std::size_t>();
  if (cfg_json.contains("oracle")) cfg.oracle_llm = cfg_json["oracle"].get<bool>();
  if (cfg_json.contains("candidates")) {
    cfg.max_candidates = cfg_json["candidates"].get<std::size_t>();
  }
  if (opt.base_seed != 0) cfg.base_seed = opt.base_seed;
  if (opt.n_seeds != 0) cfg.n_seeds = opt.n_seeds;
  if (opt.rounds != 0) cfg.rounds = opt.rounds;
  if (opt.oracle) cfg.oracle_llm = true;

  cops::theory::OnlineSuiteResult result;
  try {
    result = cops::theory::run_online_suite(cfg);
  } catch (const cops::Error& e) {
    std::cerr << "error: online suite infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }

  fs::path dir(opt.out_dir);
  write_file_atomic(dir / "bound.csv", bound_report_csv(result.report));
  std::string trace = "round,gap,cum_regret,rhs,cum_rhs\n";
  if (!result.runs.empty()) {
    double cum = 0.0, cum_rhs = 0.0;
    for (const auto& row : result.runs.front().rounds) {
      cum += row.gap;
      cum_rhs += row.rhs_star;
      trace += std::to_string(row.round) + "," + format_double(row.gap) + "," +
               format_double(cum) + "," + format_double(row.rhs_star) + "," +
               format_double(cum_rhs) + "\n";
    }
  }
  write_file_atomic(dir / "regret_trace.csv", trace);
  write_file_atomic(dir / "summary.json", bound_summary(result.report).dump(2) + "\n");
  write_manifest(dir, cfg_json, cfg.base_seed, started,
                 {"bound.csv", "regret_trace.csv", "summary.json"});
  std::cout << "theory online: " << result.report.rows.size() << " seeds, "
            << (result.report.pass ? "all pass" : "FAIL") << "\n";
  return result.report.pass ? kExitOk : kExitFailure;
}

// Penalty column over an epsilon grid for a fixed random instance; the
// monotonicity is plain from the formula and handy as a smoke artifact.
int cmd_theory_epsgrid(const TheoryOptions& opt) {
  const std::time_t started = std::time(nullptr);
  json cfg_json = load_config(opt.config_path);
  std::vector<double> grid;
  if (cfg_json.contains("eps_grid")) {
    grid = cfg_json["eps_grid"].get<std::vector<double>>();
  } else {
    for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);
  }
  std::uint64_t seed = opt.base_seed != 0 ? opt.base_seed : 20240903;
  cops::Rng rng(seed);
  cops::theory::OfflineInstanceConfig icfg;
  icfg.world = world_from_json(cfg_json.value("world", json::object()), false);
  cops::theory::OfflineInstance inst = cops::theory::make_offline_instance(icfg, rng);
  const auto& candidate = inst.candidates.front().front();
  const auto& dec = inst.decoder.front().dist;
  double chi2 = cops::theory::chi_square(candidate.probs, dec.probs);

  std::string csv = "eps,penalty\n";
  for (double eps : grid) {
    csv += format_double(eps) + "," + format_double(eps * std::sqrt(1.0 + chi2)) + "\n";
  }
  fs::path dir(opt.out_dir);
  write_file_atomic(dir / "epsgrid.csv", csv);
  write_manifest(dir, cfg_json, seed, started, {"epsgrid.csv"});
  std::cout << "theory epsgrid: " << grid.size() << " points, chi2=" << format_double(chi2)
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot: CSV -> SVG line chart
// ---------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

int cmd_plot(const std::string& input, const std::string& out_path) {
  std::ifstream in(input);
  if (!in) {
    std::cerr << "error: cannot open " << input << "\n";
    return kExitUsage;
  }
  std::string header;
  if (!std::getline(in, header) || header.empty()) {
    std::cerr << "error: empty CSV\n";
    return kExitUsage;
  }
  std::vector<std::string> columns;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) columns.push_back(col);
  }
  if (columns.size() < 2) {
    std::cerr << "error: need at least two CSV columns\n";
    return kExitUsage;
  }
  std::vector<Series> series(columns.size() - 1);
  for (std::size_t i = 1; i < columns.size(); ++i) series[i - 1].name = columns[i];
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns.size()) {
      std::cerr << "error: malformed CSV row: " << line << "\n";
      return kExitUsage;
    }
    try {
      double x = std::stod(cells[0]);
      for (std::size_t i = 1; i < cells.size(); ++i) {
        series[i - 1].x.push_back(x);
        series[i - 1].y.push_back(std::stod(cells[i]));
      }
    } catch (const std::exception&) {
      std::cerr << "error: non-numeric CSV cell in row: " << line << "\n";
      return kExitUsage;
    }
    ++rows;
  }
  if (rows == 0) {
    std::cerr << "error: CSV has no data rows\n";
    return kExitUsage;
  }

  double min_x = series[0].x.front(), max_x = series[0].x.front();
  double min_y = 0.0, max_y = series[0].y.front();
  for (const Series& s : series) {
    for (double v : s.x) {
      min_x = std::min(min_x, v);
      max_x = std::max(max_x, v);
    }
    for (double v : s.y) {
      min_y = std::min(min_y, v);
      max_y = std::max(max_y, v);
    }
  }
  if (max_x == min_x) max_x = min_x + 1.0;
  if (max_y == min_y) max_y = min_y + 1.0;

  const double width = 640, height = 400, pad = 50;
  auto sx = [&](double x) { return pad + (x - min_x) / (max_x - min_x) * (width - 2 * pad); };
  auto sy = [&](double y) { return height - pad - (y - min_y) / (max_y - min_y) * (height - 2 * pad); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};

  std::string svg;
  char buf[256];
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                pad, height - pad, width - pad, height - pad);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                pad, pad, pad, height - pad);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">%s</text>\n", width / 2 - 20,
                height - 12, columns[0].c_str());
  svg += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"8\" y=\"%.1f\" font-size=\"12\">%g..%g</text>\n",
                pad - 10.0, min_y, max_y);
  svg += buf;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(s.x[i]), sy(s.y[i]));
      points += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"%s\"/>\n",
                  palette[si % 7], points.c_str());
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                  width - pad - 120.0, pad + 16.0 * static_cast<double>(si), palette[si % 7],
                  s.name.c_str());
    svg += buf;
  }
  svg += "</svg>\n";
  write_file_atomic(out_path, svg);
  std::cout << "plot: " << series.size() << " series, " << rows << " rows -> " << out_path
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "CoPS: cross-task experience sharing agent memory and selection theory\n"
      "\n"
      "Output schemas:\n"
      "  run:    report.csv  task_id,trial,success,steps,demo_seqs\n"
      "          curve.csv   trial,success_rate,cumulative_success_rate\n"
      "  theory: bound.csv   seed,lhs,rhs,slack,c_dec,eps_hat,pass\n"
      "          regret_trace.csv  round,gap,cum_regret,rhs,cum_rhs\n"
      "          epsgrid.csv eps,penalty\n"
      "  bank:   JSON-Lines, one record per experience:\n"
      "          {v,task_id,initial_state,steps,reward,created_seq}\n"
      "Each command writes manifest.json (config digest, seed, timestamps).\n"
      "Env vars: COPS_API_BASE, COPS_API_KEY, COPS_CHAT_MODEL, COPS_EMBED_MODEL."};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "Run the episode benchmark");
  run->add_option("--env", run_opt.env, "Environment (synthetic)")
      ->check(CLI::IsMember({"synthetic"}));
  run->add_option("--stub", run_opt.stub, "Scripted model: retrieval|never|always:<action>");
  run->add_option("--backend", run_opt.backend, "Action source: stub|remote")
      ->check(CLI::IsMember({"stub", "remote"}));
  run->add_option("--trials", run_opt.trials, "Trials per task")->check(CLI::Range(1, 1000000));
  run->add_option("--k", run_opt.k, "In-context experience count")
      ->check(CLI::Range(1, 1000000));
  run->add_option("--c", run_opt.c, "Distance scaling factor")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--H", run_opt.max_steps, "Max interactions per episode")
      ->check(CLI::Range(1, 1000000));
  run->add_option("--families", run_opt.families, "Task families")->check(CLI::Range(1, 9999));
  run->add_option("--instances", run_opt.instances, "Instances per family")
      ->check(CLI::Range(1, 1000));
  run->add_option("--distractors", run_opt.distractors, "Pre-seeded distractor families");
  run->add_option("--explore-prob", run_opt.explore_prob,
                  "Retrieval stub episode-level exploration probability")
      ->check(CLI::Range(0.0, 1.0));
  run->add_option("--embed-scope", run_opt.embed_scope, "Embed full experience or initial state")
      ->check(CLI::IsMember({"full", "state"}));
  run->add_option("--mode", run_opt.mode, "online|offline")
      ->check(CLI::IsMember({"online", "offline"}));
  run->add_option("--seed", run_opt.seed, "Root seed");
  run->add_flag("--with-replacement", run_opt.with_replacement, "Sample demos with replacement");
  run->add_option("--out", run_opt.out_dir, "Output directory");
  run->add_option("--bank", run_opt.bank_path, "Initial bank (JSONL)");
  run->add_option("--save-bank", run_opt.save_bank_path, "Write final bank (JSONL)");

  std::string bank_path;
  CLI::App* memory = app.add_subcommand("memory", "Inspect or verify a memory bank");
  CLI::App* inspect = memory->add_subcommand("inspect", "List entries");
  inspect->add_option("--bank", bank_path, "Bank file (JSONL)")->required();
  CLI::App* verify = memory->add_subcommand("verify", "Re-check bank invariants");
  verify->add_option("--bank", bank_path, "Bank file (JSONL)")->required();
  memory->require_subcommand(1);

  TheoryOptions theory_opt;
  CLI::App* theory = app.add_subcommand("theory", "Selection-theory experiment suites");
  theory->require_subcommand(1);
  CLI::App* offline = theory->add_subcommand("offline", "Suboptimality bound suite");
  CLI::App* online = theory->add_subcommand("online", "Regret bound suite");
  CLI::App* epsgrid = theory->add_subcommand("epsgrid", "Penalty across an epsilon grid");
  for (CLI::App* sub : {offline, online, epsgrid}) {
    sub->add_option("--config", theory_opt.config_path, "JSON config file");
    sub->add_option("--out", theory_opt.out_dir, "Output directory");
    sub->add_option("--base-seed", theory_opt.base_seed, "Override base seed");
    sub->add_option("--seeds", theory_opt.n_seeds, "Override seed count");
  }
  online->add_option("--rounds", theory_opt.rounds, "Override round count")
      ->check(CLI::Range(1, 63));
  online->add_flag("--oracle", theory_opt.oracle, "Use the posterior-average expert as model");

  std::string plot_input, plot_out = "out/plot.svg";
  CLI::App* plot = app.add_subcommand("plot", "Render a CSV as an SVG line chart");
  plot->add_option("--input", plot_input, "CSV input")->required();
  plot->add_option("--out", plot_out, "SVG output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_opt);
    if (memory->parsed()) {
      if (inspect->parsed()) return cmd_memory_inspect(bank_path);
      if (verify->parsed()) return cmd_memory_verify(bank_path);
    }
    if (theory->parsed()) {
      if (offline->parsed()) return cmd_theory_offline(theory_opt);
      if (online->parsed()) return cmd_theory_online(theory_opt);
      if (epsgrid->parsed()) return cmd_theory_epsgrid(theory_opt);
    }
    if (plot->parsed()) return cmd_plot(plot_input, plot_out);
  } catch (const cops::BankLoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const cops::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
