#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "divjudge/errors.hpp"
#include "divjudge/harness.hpp"

using namespace divjudge;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& experiment) {
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.d = 3;
  cfg.m_grid = {24};
  cfg.l_grid = {16};
  cfg.n_grid = {10, 40};
  cfg.exp3_d = 2;
  cfg.exp3_m = 60;
  cfg.exp3_l = 40;
  cfg.exp2_d = 1;
  cfg.sweep_d = 2;
  cfg.sweep_points = 2;
  cfg.sweep_m = 24;
  cfg.sweep_l = 16;
  cfg.n_seeds = 2;
  cfg.mc_oracle_l = 500;
  cfg.master_seed = 7;
  cfg.discriminator.max_epochs = 5;
  cfg.em.n_init = 2;
  cfg.em.max_iters = 50;
  return cfg;
}

const DivergenceEstimate& find_estimate(const CellResult& cell,
                                        EstimateMethod method,
                                        DivergenceKind kind,
                                        double meta_l = -1.0) {
  for (const DivergenceEstimate& e : cell.estimates) {
    if (e.method != method || e.kind != kind) continue;
    if (meta_l >= 0.0 &&
        (e.meta.count("l") == 0 || e.meta.at("l") != meta_l)) {
      continue;
    }
    return e;
  }
  throw std::runtime_error("estimate not found");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string make_rows_csv(int n, double shift, unsigned mult) {
  // cheap deterministic two-column numeric table
  std::ostringstream out;
  out << "u,v\n";
  unsigned state = 12345u + mult;
  for (int i = 0; i < n; ++i) {
    state = state * 1664525u + 1013904223u;
    const double a = (state >> 8) / 16777216.0;
    state = state * 1664525u + 1013904223u;
    const double b = (state >> 8) / 16777216.0;
    out << (a + shift) << "," << b << "\n";
  }
  return out.str();
}

#ifdef DIVJUDGE_CLI_PATH
int run_cli(const std::string& args, const std::string& log_path) {
  const std::string cmd = std::string("\"") + DIVJUDGE_CLI_PATH + "\" " +
                          args + " > " + log_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}
#endif

}  // namespace

TEST_CASE("config text parsing covers every key") {
  ExperimentConfig cfg;
  apply_config_text(cfg,
                    "# comment line\n"
                    "d = 5\n"
                    "m_grid = 8, 16\n"
                    "l_grid=4\n"
                    "n_grid = 10,20,30\n"
                    "exp3_d = 3\n"
                    "exp3_m = 77\n"
                    "exp3_l = 66\n"
                    "exp2_d = 2\n"
                    "exp2_p_weight1 = 0.25\n"
                    "exp2_p_mean1 = -1.0\n"
                    "exp2_p_mean2 = 5.5\n"
                    "exp2_q_weight1 = 0.5\n"
                    "exp2_q_mean1 = 1.0\n"
                    "exp2_q_mean2 = 9.0\n"
                    "sweep_d = 6\n"
                    "sweep_points = 4\n"
                    "sweep_max_separation = 3.5   # trailing comment\n"
                    "sweep_m = 55\n"
                    "sweep_l = 44\n"
                    "n_seeds = 3\n"
                    "mc_oracle_l = 1234\n"
                    "master_seed = 99\n"
                    "out_dir = custom_results\n"
                    "workers = 2\n"
                    "disc_hidden_sizes = 8, 4\n"
                    "disc_leaky_slope = 0.02\n"
                    "disc_dropout_rate = 0.1\n"
                    "disc_learning_rate = 0.002\n"
                    "disc_batch_size = 32\n"
                    "disc_max_epochs = 7\n"
                    "disc_patience = 3\n"
                    "disc_holdout_fraction = 0.25\n"
                    "disc_prob_clamp = 1e-6\n"
                    "em_k = 3\n"
                    "em_max_iters = 11\n"
                    "em_tol = 1e-5\n"
                    "em_reg = 1e-5\n"
                    "em_n_init = 2\n",
                    "inline");
  CHECK(cfg.d == 5);
  CHECK(cfg.m_grid == std::vector<int>{8, 16});
  CHECK(cfg.l_grid == std::vector<int>{4});
  CHECK(cfg.n_grid == std::vector<int>{10, 20, 30});
  CHECK(cfg.exp3_m == 77);
  CHECK(cfg.exp2_p_weight1 == 0.25);
  CHECK(cfg.exp2_q_mean2 == 9.0);
  CHECK(cfg.sweep_max_separation == 3.5);
  CHECK(cfg.n_seeds == 3);
  CHECK(cfg.mc_oracle_l == 1234);
  CHECK(cfg.master_seed == 99);
  CHECK(cfg.out_dir == "custom_results");
  CHECK(cfg.workers == 2);
  CHECK(cfg.discriminator.hidden_sizes == std::vector<int>{8, 4});
  CHECK(cfg.discriminator.leaky_slope == 0.02);
  CHECK(cfg.discriminator.max_epochs == 7);
  CHECK(cfg.discriminator.prob_clamp == 1e-6);
  CHECK(cfg.em.k == 3);
  CHECK(cfg.em.tol == 1e-5);
  CHECK(cfg.em.n_init == 2);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(apply_config_text(cfg, "not_a_key = 1\n", "x"),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_config_text(cfg, "d = twelve\n", "x"),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_config_text(cfg, "m_grid = 1,,2\n", "x"),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_config_text(cfg, "just a line\n", "x"),
                  std::invalid_argument);
  // the message names the source and line
  try {
    apply_config_text(cfg, "d = 3\nbogus = 1\n", "somefile");
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("somefile") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_file(cfg, "missing_config_file.cfg"),
                  DataError);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(tiny_config("exp1").validate());
  auto bad = tiny_config("exp1");
  bad.n_seeds = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("exp1");
  bad.m_grid = {3};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("exp1");
  bad.experiment = "exp9";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("exp2");
  bad.exp2_p_weight1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("sweep");
  bad.sweep_points = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config("exp1");
  bad.mc_oracle_l = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("tiny exp1 run produces the full estimate set per cell") {
  const RunResult res = run_exp1(tiny_config("exp1"));
  CHECK(res.experiment == "exp1");
  REQUIRE(res.cells.size() == 1);

  const CellResult& cell = res.cells[0];
  CHECK(cell.coords.at("m") == 24.0);
  CHECK(cell.coords.at("l") == 16.0);
  // analytical KL, MC KL/JS at L, MC KL/JS at the oracle budget, disc KL/JS
  CHECK(cell.estimates.size() == 7);

  const DivergenceEstimate& analytical =
      find_estimate(cell, EstimateMethod::analytical, DivergenceKind::kl);
  CHECK(analytical.value > 0.0);
  CHECK(std::isfinite(analytical.value));
  CHECK(analytical.dispersion == 0.0);

  const DivergenceEstimate& mc_at_l =
      find_estimate(cell, EstimateMethod::mc, DivergenceKind::kl, 16.0);
  CHECK(mc_at_l.meta.at("l") == 16.0);
  const DivergenceEstimate& mc_oracle =
      find_estimate(cell, EstimateMethod::mc, DivergenceKind::kl, 500.0);
  // the oracle budget estimate sits closer to the analytical truth
  CHECK(std::isfinite(mc_oracle.value));

  const DivergenceEstimate& disc_js = find_estimate(
      cell, EstimateMethod::discriminator, DivergenceKind::js);
  CHECK(disc_js.value >= 0.0);
  CHECK(disc_js.meta.at("seeds") == 2.0);
  REQUIRE(cell.seeds.size() == 2);
  CHECK(!cell.seeds[0].train_loss_history.empty());
  CHECK(cell.wall_seconds >= 0.0);
  CHECK(res.params.at("d") == 3.0);
}

TEST_CASE("tiny exp1 analytical truth is shared across the grid") {
  auto cfg = tiny_config("exp1");
  cfg.m_grid = {24, 32};
  cfg.l_grid = {16};
  const RunResult res = run_exp1(cfg);
  REQUIRE(res.cells.size() == 2);
  const double a0 =
      find_estimate(res.cells[0], EstimateMethod::analytical,
                    DivergenceKind::kl)
          .value;
  const double a1 =
      find_estimate(res.cells[1], EstimateMethod::analytical,
                    DivergenceKind::kl)
          .value;
  CHECK(a0 == a1);
  CHECK(res.params.at("analytical_kl") == a0);
}

TEST_CASE("tiny exp2 records its mixture parameters verbatim") {
  const RunResult res = run_exp2(tiny_config("exp2"));
  CHECK(res.experiment == "exp2");
  CHECK(res.params.at("p_weight1") == 0.32);
  CHECK(res.params.at("p_weight2") == doctest::Approx(0.68));
  CHECK(res.params.at("p_mean1") == 0.0);
  CHECK(res.params.at("p_mean2") == 7.7);
  CHECK(res.params.at("q_weight1") == 0.67);
  CHECK(res.params.at("q_mean1") == 2.2);
  CHECK(res.params.at("q_mean2") == 10.1);
  REQUIRE(res.cells.size() == 1);
  CHECK(res.cells[0].estimates.size() == 6);
  const DivergenceEstimate& mc_kl_est =
      find_estimate(res.cells[0], EstimateMethod::mc, DivergenceKind::kl,
                    500.0);
  CHECK(mc_kl_est.value > 0.0);
}

TEST_CASE("tiny exp3 runs one cell per N value") {
  const RunResult res = run_exp3(tiny_config("exp3"));
  CHECK(res.experiment == "exp3");
  REQUIRE(res.cells.size() == 2);
  CHECK(res.cells[0].coords.at("n") == 10.0);
  CHECK(res.cells[1].coords.at("n") == 40.0);
  for (const CellResult& cell : res.cells) {
    const DivergenceEstimate& js = find_estimate(
        cell, EstimateMethod::discriminator, DivergenceKind::js);
    CHECK(js.value >= 0.0);
    CHECK(js.meta.at("n") == cell.coords.at("n"));
    // MC estimates against the fitted model are present too
    find_estimate(cell, EstimateMethod::mc, DivergenceKind::kl);
    find_estimate(cell, EstimateMethod::mc, DivergenceKind::js);
  }
}

TEST_CASE("tiny sweep covers the separation grid with truths") {
  const RunResult res = run_sweep(tiny_config("sweep"));
  CHECK(res.experiment == "sweep");
  REQUIRE(res.cells.size() == 2);
  CHECK(res.cells[0].coords.at("separation") == 0.0);
  CHECK(res.cells[1].coords.at("separation") == 5.0);
  // analytical KL scalar: s^2 / 2
  CHECK(res.cells[0].scalars.at("analytical_kl") == 0.0);
  CHECK(res.cells[1].scalars.at("analytical_kl") == 12.5);
  // identical p and q leave only logsumexp rounding residue in the MC JS
  CHECK(res.cells[0].scalars.at("true_mc_js") >= 0.0);
  CHECK(res.cells[0].scalars.at("true_mc_js") <= 1e-12);
  CHECK(res.cells[1].scalars.at("true_mc_js") > 0.5);
  for (const CellResult& cell : res.cells) {
    const DivergenceEstimate& js = find_estimate(
        cell, EstimateMethod::discriminator, DivergenceKind::js);
    CHECK(js.value >= 0.0);
    CHECK(js.value <= 0.6931471805599453 + js.dispersion + 1e-9);
  }
}

TEST_CASE("run_experiment dispatches on the experiment name") {
  const RunResult res = run_experiment(tiny_config("sweep"));
  CHECK(res.experiment == "sweep");
  auto cfg = tiny_config("exp1");
  cfg.experiment = "compare";
  CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("JSON round trip is byte-exact") {
  const RunResult res = run_sweep(tiny_config("sweep"));
  const std::string json = to_json_string(res);
  const RunResult back = run_result_from_json_string(json);
  CHECK(to_json_string(back) == json);
  CHECK(back.experiment == res.experiment);
  CHECK(back.cells.size() == res.cells.size());
  CHECK(back.config.master_seed == res.config.master_seed);

  CHECK_THROWS_AS(run_result_from_json_string("nope"), DataError);
  CHECK_THROWS_AS(run_result_from_json_string("{\"format\":\"other\"}"),
                  DataError);
}

TEST_CASE("fingerprints ignore timing but track content") {
  const std::string a = to_json_string(run_sweep(tiny_config("sweep")));
  const std::string b = to_json_string(run_sweep(tiny_config("sweep")));
  // wall-clock fields differ between runs, fingerprints do not
  CHECK(result_fingerprint(a) == result_fingerprint(b));

  auto reseeded = tiny_config("sweep");
  reseeded.master_seed = 8;
  const std::string c = to_json_string(run_sweep(reseeded));
  CHECK(result_fingerprint(a) != result_fingerprint(c));
}

TEST_CASE("CSV series carries one row per estimate") {
  const RunResult res = run_sweep(tiny_config("sweep"));
  const std::string csv = to_csv_series(res);
  std::istringstream lines(csv);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line ==
        "experiment,cell_index,m,l,n,separation,method,kind,value,"
        "dispersion,value_normalized,seeds,eval_l");
  std::size_t rows = 0;
  std::size_t js_rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.rfind("sweep,", 0) == 0);
    if (line.find(",js,") != std::string::npos) ++js_rows;
  }
  std::size_t expected = 0;
  for (const CellResult& cell : res.cells) {
    expected += cell.estimates.size();
  }
  CHECK(rows == expected);
  CHECK(js_rows > 0);
}

TEST_CASE("write_run_result creates both artifacts") {
  const fs::path dir = "harness_write_test_out";
  fs::remove_all(dir);
  const RunResult res = run_sweep(tiny_config("sweep"));
  const std::string json_path = write_run_result(res, dir.string());
  CHECK(fs::exists(json_path));
  CHECK(fs::exists(dir / "sweep_series.csv"));
  const RunResult back = run_result_from_json_string(slurp(json_path));
  CHECK(back.experiment == "sweep");
  fs::remove_all(dir);
}

TEST_CASE("compare_tables on numeric tables detects a shift") {
  const RawTable real = parse_csv(make_rows_csv(400, 0.0, 1), "real.csv");
  const RawTable synth = parse_csv(make_rows_csv(400, 2.0, 2), "synt.csv");
  CompareOptions opts;
  opts.real_path = "real.csv";
  opts.synthetic_path = "synt.csv";
  opts.m = 300;
  opts.l = 100;
  opts.n_seeds = 2;
  opts.discriminator.max_epochs = 20;
  const RunResult res = compare_tables(real, synth, opts);
  CHECK(res.experiment == "compare");
  REQUIRE(res.cells.size() == 1);
  CHECK(res.cells[0].scalars.at("rows_real") == 400.0);
  CHECK(res.cells[0].scalars.at("encoded_width") == 2.0);
  CHECK(res.params.at("m") == 300.0);
  const DivergenceEstimate& js = find_estimate(
      res.cells[0], EstimateMethod::discriminator, DivergenceKind::js);
  // a unit-interval feature shifted by 2 is perfectly separable
  CHECK(js.value > 0.3);
  CHECK(res.text_params.at("real_path") == "real.csv");
}

TEST_CASE("compare_tables scales down M and L when rows run short") {
  const RawTable real = parse_csv(make_rows_csv(80, 0.0, 3), "real");
  const RawTable synth = parse_csv(make_rows_csv(120, 0.0, 4), "synt");
  CompareOptions opts;
  opts.m = 7500;
  opts.l = 1000;
  opts.n_seeds = 2;
  opts.discriminator.max_epochs = 4;
  const RunResult res = compare_tables(real, synth, opts);
  // balanced rows = 80; M + L scaled proportionally to fit
  CHECK(res.params.at("m_requested") == 7500.0);
  CHECK(res.params.at("l_requested") == 1000.0);
  CHECK(res.params.at("m") + res.params.at("l") <= 80.0);
  CHECK(res.params.at("m") >= 4.0);
  CHECK(res.params.at("l") >= 1.0);
  bool scaled_warning = false;
  bool unequal_warning = false;
  for (const std::string& w : res.warnings) {
    if (w.find("scaled down") != std::string::npos) scaled_warning = true;
    if (w.find("unequal") != std::string::npos) unequal_warning = true;
  }
  CHECK(scaled_warning);
  CHECK(unequal_warning);
}

TEST_CASE("compare_tables rejects undersized inputs") {
  const RawTable real = parse_csv(make_rows_csv(30, 0.0, 5), "real");
  const RawTable synth = parse_csv(make_rows_csv(400, 0.0, 6), "synt");
  CompareOptions opts;
  opts.n_seeds = 2;
  CHECK_THROWS_AS(compare_tables(real, synth, opts), DataError);
}

#ifdef DIVJUDGE_CLI_PATH

TEST_CASE("CLI happy path writes results and is deterministic") {
  const fs::path out = "cli_out_det";
  fs::remove_all(out);

  const std::string cfg_path = "cli_tiny_sweep.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "sweep_d = 2\nsweep_points = 2\nsweep_m = 24\nsweep_l = 16\n"
           "n_seeds = 2\nmc_oracle_l = 300\ndisc_max_epochs = 4\n";
  }
  const std::string result_path = (out / "sweep_result.json").string();

  // identical command twice: byte-identical results modulo timing fields
  CHECK(run_cli("sweep --config " + cfg_path + " --out " + out.string(),
                "cli_log_a.txt") == 0);
  REQUIRE(fs::exists(result_path));
  REQUIRE(fs::exists(out / "sweep_series.csv"));
  const std::string first = slurp(result_path);
  CHECK(run_cli("sweep --config " + cfg_path + " --out " + out.string(),
                "cli_log_b.txt") == 0);
  const std::string second = slurp(result_path);
  CHECK(result_fingerprint(first) == result_fingerprint(second));

  // a different seed changes the results
  CHECK(run_cli("sweep --config " + cfg_path + " --seed 9 --out " +
                    out.string(),
                "cli_log_c.txt") == 0);
  CHECK(result_fingerprint(first) != result_fingerprint(slurp(result_path)));

  fs::remove_all(out);
  fs::remove(cfg_path);
  fs::remove("cli_log_a.txt");
  fs::remove("cli_log_b.txt");
  fs::remove("cli_log_c.txt");
}

TEST_CASE("CLI environment variable overrides the output directory") {
  const fs::path out_env = "cli_out_env";
  fs::remove_all(out_env);
  const std::string cfg_path = "cli_tiny_env.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "sweep_d = 2\nsweep_points = 2\nsweep_m = 24\nsweep_l = 16\n"
           "n_seeds = 2\nmc_oracle_l = 100\ndisc_max_epochs = 3\n";
  }
  const std::string cmd = "DIVJUDGE_OUT_DIR=" + out_env.string() + " \"" +
                          DIVJUDGE_CLI_PATH + "\" sweep --config " +
                          cfg_path + " --out ignored_dir > cli_log_env.txt 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status >= 0);
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(fs::exists(out_env / "sweep_result.json"));
  CHECK(!fs::exists(fs::path("ignored_dir") / "sweep_result.json"));
  fs::remove_all(out_env);
  fs::remove_all("ignored_dir");
  fs::remove(cfg_path);
  fs::remove("cli_log_env.txt");
}

TEST_CASE("CLI error paths use the documented exit codes") {
  // usage errors -> 1
  CHECK(run_cli("frobnicate", "cli_err1.txt") == 1);
  CHECK(run_cli("compare --synthetic only.csv", "cli_err2.txt") == 1);
  {
    std::ofstream cfg("cli_bad_key.cfg");
    cfg << "no_such_key = 1\n";
  }
  CHECK(run_cli("sweep --config cli_bad_key.cfg", "cli_err3.txt") == 1);
  // a config file that does not exist is a data error -> 2
  CHECK(run_cli("sweep --config cli_missing.cfg", "cli_err4.txt") == 2);

  // data errors -> 2
  CHECK(run_cli("compare --real cli_no_a.csv --synthetic cli_no_b.csv",
                "cli_err5.txt") == 2);
  {
    std::ofstream a("cli_small_a.csv");
    a << make_rows_csv(10, 0.0, 7);
    std::ofstream b("cli_small_b.csv");
    b << make_rows_csv(10, 0.0, 8);
  }
  CHECK(run_cli("compare --real cli_small_a.csv --synthetic cli_small_b.csv",
                "cli_err6.txt") == 2);

  for (const char* f :
       {"cli_bad_key.cfg", "cli_small_a.csv", "cli_small_b.csv",
        "cli_err1.txt", "cli_err2.txt", "cli_err3.txt", "cli_err4.txt",
        "cli_err5.txt", "cli_err6.txt"}) {
    fs::remove(f);
  }
}

TEST_CASE("CLI compare runs on mixed-type CSV files") {
  const fs::path out = "cli_out_compare";
  fs::remove_all(out);
  // mixed-type tables: numeric, binary, categorical, and missing cells
  {
    std::ofstream a("cli_cmp_real.csv");
    a << "x,flag,city\n";
    for (int i = 0; i < 120; ++i) {
      a << (i % 17) * 0.25 << "," << (i % 2) << ","
        << (i % 3 == 0 ? "ny" : (i % 3 == 1 ? "la" : "sf")) << "\n";
    }
    std::ofstream b("cli_cmp_synt.csv");
    b << "x,flag,city\n";
    for (int i = 0; i < 110; ++i) {
      b << (i % 13) * 0.3 << "," << (i % 2) << ","
        << (i % 4 == 0 ? "ny" : (i % 4 == 1 ? "la" : "berlin")) << "\n";
    }
  }
  CHECK(run_cli("compare --real cli_cmp_real.csv --synthetic "
                "cli_cmp_synt.csv --m 60 --l 30 --seeds 2 --out " +
                    out.string(),
                "cli_cmp_log.txt") == 0);
  REQUIRE(fs::exists(out / "compare_result.json"));
  const RunResult res =
      run_result_from_json_string(slurp((out / "compare_result.json").string()));
  CHECK(res.experiment == "compare");
  // the unknown city "berlin" shows up as an ingestion warning
  bool berlin_warning = false;
  for (const std::string& w : res.warnings) {
    if (w.find("city") != std::string::npos) berlin_warning = true;
  }
  CHECK(berlin_warning);
  fs::remove_all(out);
  fs::remove("cli_cmp_real.csv");
  fs::remove("cli_cmp_synt.csv");
  fs::remove("cli_cmp_log.txt");
}

#endif  // DIVJUDGE_CLI_PATH
