#include "divjudge/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "divjudge/errors.hpp"
#include "divjudge/rng.hpp"

namespace divjudge {

namespace {

using nlohmann::json;

constexpr double kLn2 = std::numbers::ln2;

// Seed stream tags; every job's randomness is derived from
// (master_seed, tag, cell index, replicate) so scheduling order never
// affects results.
constexpr std::uint64_t kStreamExp1Pair = 101;
constexpr std::uint64_t kStreamCellMc = 201;
constexpr std::uint64_t kStreamCellOracle = 202;
constexpr std::uint64_t kStreamCellEnsemble = 203;
constexpr std::uint64_t kStreamExp3 = 301;
constexpr std::uint64_t kStreamSweepTruth = 401;
constexpr std::uint64_t kStreamSweepEnsemble = 402;
constexpr std::uint64_t kStreamCompare = 501;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

/// Runs fn(0..n_jobs-1) on up to `workers` threads. Results must be written
/// to per-job slots by the caller; the first exception is rethrown after all
/// threads finish.
void parallel_for(int n_jobs, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n_jobs));
  if (workers == 1) {
    for (int i = 0; i < n_jobs; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  const auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n_jobs) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back(worker);
  }
  for (auto& thread : threads) {
    thread.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

/// Seed-ensemble MC estimates for one cell.
std::pair<DivergenceEstimate, DivergenceEstimate> mc_ensemble(
    const Distribution& p, const Distribution& q, int l, int n_seeds,
    std::uint64_t seed) {
  std::vector<double> kls;
  std::vector<double> jss;
  kls.reserve(static_cast<std::size_t>(n_seeds));
  jss.reserve(static_cast<std::size_t>(n_seeds));
  for (int s = 0; s < n_seeds; ++s) {
    kls.push_back(mc_kl(p, q, l, mix_seed(seed, 2 * s)));
    jss.push_back(mc_js(p, q, l, mix_seed(seed, 2 * s + 1)));
  }
  std::map<std::string, double> meta{{"l", static_cast<double>(l)}};
  return {aggregate_estimates(kls, EstimateMethod::mc, DivergenceKind::kl,
                              meta),
          aggregate_estimates(jss, EstimateMethod::mc, DivergenceKind::js,
                              meta)};
}

MixtureDist make_axis_mixture(int d, double weight1, double mean1,
                              double mean2) {
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);
  m1[0] = mean1;
  m2[0] = mean2;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  std::vector<GaussianDist> components;
  components.emplace_back(std::move(m1), eye);
  components.emplace_back(std::move(m2), eye);
  Eigen::VectorXd weights(2);
  weights << weight1, 1.0 - weight1;
  return MixtureDist(std::move(components), std::move(weights));
}

MixtureDist exp3_truth(int d) {
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd m2 = Eigen::VectorXd::Constant(d, 4.0);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  std::vector<GaussianDist> components;
  components.emplace_back(std::move(m1), eye);
  components.emplace_back(std::move(m2), eye);
  Eigen::VectorXd weights(2);
  weights << 0.6, 0.4;
  return MixtureDist(std::move(components), std::move(weights));
}

void check_grid(const std::vector<int>& grid, const char* name, int minimum) {
  if (grid.empty()) {
    throw std::invalid_argument(std::string("ExperimentConfig: ") + name +
                                " must not be empty");
  }
  for (const int v : grid) {
    if (v < minimum) {
      throw std::invalid_argument(std::string("ExperimentConfig: ") + name +
                                  " entries must be >= " +
                                  std::to_string(minimum) + ", got " +
                                  std::to_string(v));
    }
  }
}

// ---------------------------------------------------------------------------
// Config file parsing

int parse_int(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(out)) {
      throw std::invalid_argument("bad real");
    }
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects a real number, got '" + value +
                                "'");
  }
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return static_cast<std::uint64_t>(out);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key +
                                "' expects a non-negative integer, got '" +
                                value + "'");
  }
}

std::vector<int> parse_int_list(const std::string& value,
                                const std::string& key) {
  std::vector<int> out;
  std::stringstream stream(value);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto begin = item.find_first_not_of(" \t");
    const auto end = item.find_last_not_of(" \t");
    if (begin == std::string::npos) {
      throw std::invalid_argument("config: key '" + key +
                                  "' has an empty list entry");
    }
    out.push_back(parse_int(item.substr(begin, end - begin + 1), key));
  }
  if (out.empty()) {
    throw std::invalid_argument("config: key '" + key + "' has an empty list");
  }
  return out;
}

std::string trim_ws(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// ---------------------------------------------------------------------------
// Serialization

json estimate_to_json(const DivergenceEstimate& e) {
  json j;
  j["value"] = e.value;
  j["dispersion"] = e.dispersion;
  j["method"] = to_string(e.method);
  j["kind"] = to_string(e.kind);
  j["meta"] = e.meta;
  if (e.kind == DivergenceKind::js) {
    j["value_normalized"] = e.value / kLn2;
  }
  return j;
}

DivergenceEstimate estimate_from_json(const json& j) {
  DivergenceEstimate e;
  e.value = j.at("value").get<double>();
  e.dispersion = j.at("dispersion").get<double>();
  e.method = estimate_method_from_string(j.at("method").get<std::string>());
  e.kind = divergence_kind_from_string(j.at("kind").get<std::string>());
  e.meta = j.at("meta").get<std::map<std::string, double>>();
  return e;
}

json seed_to_json(const SeedOutcome& s) {
  json j;
  j["kl"] = s.kl;
  j["js"] = s.js;
  j["final_train_loss"] = s.final_train_loss;
  j["final_validation_loss"] = s.final_validation_loss;
  j["train_loss_history"] = s.train_loss_history;
  return j;
}

SeedOutcome seed_from_json(const json& j) {
  SeedOutcome s;
  s.kl = j.at("kl").get<double>();
  s.js = j.at("js").get<double>();
  s.final_train_loss = j.at("final_train_loss").get<double>();
  s.final_validation_loss = j.at("final_validation_loss").get<double>();
  s.train_loss_history =
      j.at("train_loss_history").get<std::vector<double>>();
  return s;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["d"] = c.d;
  j["m_grid"] = c.m_grid;
  j["l_grid"] = c.l_grid;
  j["n_grid"] = c.n_grid;
  j["exp3_d"] = c.exp3_d;
  j["exp3_m"] = c.exp3_m;
  j["exp3_l"] = c.exp3_l;
  j["exp2_d"] = c.exp2_d;
  j["exp2_p_weight1"] = c.exp2_p_weight1;
  j["exp2_p_mean1"] = c.exp2_p_mean1;
  j["exp2_p_mean2"] = c.exp2_p_mean2;
  j["exp2_q_weight1"] = c.exp2_q_weight1;
  j["exp2_q_mean1"] = c.exp2_q_mean1;
  j["exp2_q_mean2"] = c.exp2_q_mean2;
  j["sweep_d"] = c.sweep_d;
  j["sweep_points"] = c.sweep_points;
  j["sweep_max_separation"] = c.sweep_max_separation;
  j["sweep_m"] = c.sweep_m;
  j["sweep_l"] = c.sweep_l;
  j["n_seeds"] = c.n_seeds;
  j["mc_oracle_l"] = c.mc_oracle_l;
  j["master_seed"] = c.master_seed;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  json disc;
  disc["hidden_sizes"] = c.discriminator.hidden_sizes;
  disc["leaky_slope"] = c.discriminator.leaky_slope;
  disc["dropout_rate"] = c.discriminator.dropout_rate;
  disc["learning_rate"] = c.discriminator.learning_rate;
  disc["batch_size"] = c.discriminator.batch_size;
  disc["max_epochs"] = c.discriminator.max_epochs;
  disc["patience"] = c.discriminator.patience;
  disc["holdout_fraction"] = c.discriminator.holdout_fraction;
  disc["prob_clamp"] = c.discriminator.prob_clamp;
  j["discriminator"] = disc;
  json em;
  em["k"] = c.em.k;
  em["max_iters"] = c.em.max_iters;
  em["tol"] = c.em.tol;
  em["reg"] = c.em.reg;
  em["n_init"] = c.em.n_init;
  j["em"] = em;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.experiment = j.at("experiment").get<std::string>();
  c.d = j.at("d").get<int>();
  c.m_grid = j.at("m_grid").get<std::vector<int>>();
  c.l_grid = j.at("l_grid").get<std::vector<int>>();
  c.n_grid = j.at("n_grid").get<std::vector<int>>();
  c.exp3_d = j.at("exp3_d").get<int>();
  c.exp3_m = j.at("exp3_m").get<int>();
  c.exp3_l = j.at("exp3_l").get<int>();
  c.exp2_d = j.at("exp2_d").get<int>();
  c.exp2_p_weight1 = j.at("exp2_p_weight1").get<double>();
  c.exp2_p_mean1 = j.at("exp2_p_mean1").get<double>();
  c.exp2_p_mean2 = j.at("exp2_p_mean2").get<double>();
  c.exp2_q_weight1 = j.at("exp2_q_weight1").get<double>();
  c.exp2_q_mean1 = j.at("exp2_q_mean1").get<double>();
  c.exp2_q_mean2 = j.at("exp2_q_mean2").get<double>();
  c.sweep_d = j.at("sweep_d").get<int>();
  c.sweep_points = j.at("sweep_points").get<int>();
  c.sweep_max_separation = j.at("sweep_max_separation").get<double>();
  c.sweep_m = j.at("sweep_m").get<int>();
  c.sweep_l = j.at("sweep_l").get<int>();
  c.n_seeds = j.at("n_seeds").get<int>();
  c.mc_oracle_l = j.at("mc_oracle_l").get<int>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  c.out_dir = j.at("out_dir").get<std::string>();
  c.workers = j.at("workers").get<int>();
  const json& disc = j.at("discriminator");
  c.discriminator.hidden_sizes =
      disc.at("hidden_sizes").get<std::vector<int>>();
  c.discriminator.leaky_slope = disc.at("leaky_slope").get<double>();
  c.discriminator.dropout_rate = disc.at("dropout_rate").get<double>();
  c.discriminator.learning_rate = disc.at("learning_rate").get<double>();
  c.discriminator.batch_size = disc.at("batch_size").get<int>();
  c.discriminator.max_epochs = disc.at("max_epochs").get<int>();
  c.discriminator.patience = disc.at("patience").get<int>();
  c.discriminator.holdout_fraction =
      disc.at("holdout_fraction").get<double>();
  c.discriminator.prob_clamp = disc.at("prob_clamp").get<double>();
  const json& em = j.at("em");
  c.em.k = em.at("k").get<int>();
  c.em.max_iters = em.at("max_iters").get<int>();
  c.em.tol = em.at("tol").get<double>();
  c.em.reg = em.at("reg").get<double>();
  c.em.n_init = em.at("n_init").get<int>();
  return c;
}

/// Formats a double exactly as the JSON document does (shortest
/// round-trippable representation), keeping CSV and JSON consistent.
std::string format_number(double v) { return json(v).dump(); }

}  // namespace

void ExperimentConfig::validate() const {
  static const std::set<std::string> known{"exp1", "exp2", "exp3", "sweep",
                                           "compare"};
  if (known.count(experiment) == 0) {
    throw std::invalid_argument("ExperimentConfig: unknown experiment '" +
                                experiment + "'");
  }
  if (d < 1 || exp2_d < 1 || exp3_d < 1 || sweep_d < 1) {
    throw std::invalid_argument("ExperimentConfig: dimensions must be >= 1");
  }
  check_grid(m_grid, "m_grid", 4);
  check_grid(l_grid, "l_grid", 1);
  check_grid(n_grid, "n_grid", 1);
  if (exp3_m < 4 || exp3_l < 1 || sweep_m < 4 || sweep_l < 1) {
    throw std::invalid_argument(
        "ExperimentConfig: exp3/sweep M must be >= 4 and L >= 1");
  }
  if (!(exp2_p_weight1 > 0.0 && exp2_p_weight1 < 1.0) ||
      !(exp2_q_weight1 > 0.0 && exp2_q_weight1 < 1.0)) {
    throw std::invalid_argument(
        "ExperimentConfig: mixture weights must lie in (0, 1)");
  }
  if (sweep_points < 2) {
    throw std::invalid_argument("ExperimentConfig: sweep_points must be >= 2");
  }
  if (sweep_max_separation < 0.0) {
    throw std::invalid_argument(
        "ExperimentConfig: sweep_max_separation must be >= 0");
  }
  if (n_seeds < 2) {
    throw std::invalid_argument(
        "ExperimentConfig: n_seeds must be >= 2 so dispersions are defined");
  }
  if (mc_oracle_l < 1) {
    throw std::invalid_argument("ExperimentConfig: mc_oracle_l must be >= 1");
  }
  if (workers < 1) {
    throw std::invalid_argument("ExperimentConfig: workers must be >= 1");
  }
  discriminator.validate();
  em.validate();
}

void apply_config_text(ExperimentConfig& config, const std::string& text,
                       const std::string& source_label) {
  std::istringstream stream(text);
  std::string raw_line;
  int line_no = 0;
  while (std::getline(stream, raw_line)) {
    ++line_no;
    const auto hash = raw_line.find('#');
    if (hash != std::string::npos) {
      raw_line.erase(hash);
    }
    const std::string line = trim_ws(raw_line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source_label + ":" +
                                  std::to_string(line_no) +
                                  ": expected 'key = value', got '" + line +
                                  "'");
    }
    const std::string key = trim_ws(line.substr(0, eq));
    const std::string value = trim_ws(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument(source_label + ":" +
                                  std::to_string(line_no) +
                                  ": empty key or value");
    }

    if (key == "d") {
      config.d = parse_int(value, key);
    } else if (key == "m_grid") {
      config.m_grid = parse_int_list(value, key);
    } else if (key == "l_grid") {
      config.l_grid = parse_int_list(value, key);
    } else if (key == "n_grid") {
      config.n_grid = parse_int_list(value, key);
    } else if (key == "exp3_d") {
      config.exp3_d = parse_int(value, key);
    } else if (key == "exp3_m") {
      config.exp3_m = parse_int(value, key);
    } else if (key == "exp3_l") {
      config.exp3_l = parse_int(value, key);
    } else if (key == "exp2_d") {
      config.exp2_d = parse_int(value, key);
    } else if (key == "exp2_p_weight1") {
      config.exp2_p_weight1 = parse_real(value, key);
    } else if (key == "exp2_p_mean1") {
      config.exp2_p_mean1 = parse_real(value, key);
    } else if (key == "exp2_p_mean2") {
      config.exp2_p_mean2 = parse_real(value, key);
    } else if (key == "exp2_q_weight1") {
      config.exp2_q_weight1 = parse_real(value, key);
    } else if (key == "exp2_q_mean1") {
      config.exp2_q_mean1 = parse_real(value, key);
    } else if (key == "exp2_q_mean2") {
      config.exp2_q_mean2 = parse_real(value, key);
    } else if (key == "sweep_d") {
      config.sweep_d = parse_int(value, key);
    } else if (key == "sweep_points") {
      config.sweep_points = parse_int(value, key);
    } else if (key == "sweep_max_separation") {
      config.sweep_max_separation = parse_real(value, key);
    } else if (key == "sweep_m") {
      config.sweep_m = parse_int(value, key);
    } else if (key == "sweep_l") {
      config.sweep_l = parse_int(value, key);
    } else if (key == "n_seeds") {
      config.n_seeds = parse_int(value, key);
    } else if (key == "mc_oracle_l") {
      config.mc_oracle_l = parse_int(value, key);
    } else if (key == "master_seed") {
      config.master_seed = parse_u64(value, key);
    } else if (key == "out_dir") {
      config.out_dir = value;
    } else if (key == "workers") {
      config.workers = parse_int(value, key);
    } else if (key == "disc_hidden_sizes") {
      config.discriminator.hidden_sizes = parse_int_list(value, key);
    } else if (key == "disc_leaky_slope") {
      config.discriminator.leaky_slope = parse_real(value, key);
    } else if (key == "disc_dropout_rate") {
      config.discriminator.dropout_rate = parse_real(value, key);
    } else if (key == "disc_learning_rate") {
      config.discriminator.learning_rate = parse_real(value, key);
    } else if (key == "disc_batch_size") {
      config.discriminator.batch_size = parse_int(value, key);
    } else if (key == "disc_max_epochs") {
      config.discriminator.max_epochs = parse_int(value, key);
    } else if (key == "disc_patience") {
      config.discriminator.patience = parse_int(value, key);
    } else if (key == "disc_holdout_fraction") {
      config.discriminator.holdout_fraction = parse_real(value, key);
    } else if (key == "disc_prob_clamp") {
      config.discriminator.prob_clamp = parse_real(value, key);
    } else if (key == "em_k") {
      config.em.k = parse_int(value, key);
    } else if (key == "em_max_iters") {
      config.em.max_iters = parse_int(value, key);
    } else if (key == "em_tol") {
      config.em.tol = parse_real(value, key);
    } else if (key == "em_reg") {
      config.em.reg = parse_real(value, key);
    } else if (key == "em_n_init") {
      config.em.n_init = parse_int(value, key);
    } else {
      throw std::invalid_argument(source_label + ":" +
                                  std::to_string(line_no) +
                                  ": unknown config key '" + key + "'");
    }
  }
}

void apply_config_file(ExperimentConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("config: cannot open '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(config, buffer.str(), path);
}

// ---------------------------------------------------------------------------
// Experiments

RunResult run_exp1(const ExperimentConfig& config_in) {
  ExperimentConfig config = config_in;
  config.experiment = "exp1";
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const auto [p, q] =
      random_gaussian_pair(config.d, mix_seed(config.master_seed,
                                              kStreamExp1Pair));
  const double analytical_kl = gaussian_kl_analytical(p, q);
  const Distribution dp = p;
  const Distribution dq = q;

  RunResult result;
  result.experiment = "exp1";
  result.config = config;
  result.params["d"] = static_cast<double>(config.d);
  result.params["analytical_kl"] = analytical_kl;

  const int n_l = static_cast<int>(config.l_grid.size());
  const int n_cells = static_cast<int>(config.m_grid.size()) * n_l;
  result.cells.resize(static_cast<std::size_t>(n_cells));
  parallel_for(n_cells, config.workers, [&](int idx) {
    const auto cell_t0 = std::chrono::steady_clock::now();
    const int m = config.m_grid[static_cast<std::size_t>(idx / n_l)];
    const int l = config.l_grid[static_cast<std::size_t>(idx % n_l)];
    CellResult cell;
    cell.coords["m"] = static_cast<double>(m);
    cell.coords["l"] = static_cast<double>(l);
    cell.scalars["analytical_kl"] = analytical_kl;

    DivergenceEstimate analytical;
    analytical.value = analytical_kl;
    analytical.dispersion = 0.0;
    analytical.method = EstimateMethod::analytical;
    analytical.kind = DivergenceKind::kl;
    cell.estimates.push_back(analytical);

    const auto [mc_kl_l, mc_js_l] = mc_ensemble(
        dp, dq, l, config.n_seeds,
        mix_seed(mix_seed(config.master_seed, kStreamCellMc),
                 static_cast<std::uint64_t>(idx)));
    cell.estimates.push_back(mc_kl_l);
    cell.estimates.push_back(mc_js_l);
    const auto [mc_kl_big, mc_js_big] = mc_ensemble(
        dp, dq, config.mc_oracle_l, config.n_seeds,
        mix_seed(mix_seed(config.master_seed, kStreamCellOracle),
                 static_cast<std::uint64_t>(idx)));
    cell.estimates.push_back(mc_kl_big);
    cell.estimates.push_back(mc_js_big);

    DiscriminatorConfig disc = config.discriminator;
    disc.seed = mix_seed(mix_seed(config.master_seed, kStreamCellEnsemble),
                         static_cast<std::uint64_t>(idx));
    const DistributionSource p_source(dp, "p");
    const DistributionSource q_source(dq, "q");
    EnsembleResult ensemble =
        ensemble_estimate(p_source, q_source, disc, m, l, config.n_seeds);
    cell.estimates.push_back(ensemble.kl);
    cell.estimates.push_back(ensemble.js);
    cell.seeds = std::move(ensemble.seeds);

    cell.wall_seconds = seconds_since(cell_t0);
    result.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  });

  result.total_wall_seconds = seconds_since(t0);
  return result;
}

RunResult run_exp2(const ExperimentConfig& config_in) {
  ExperimentConfig config = config_in;
  config.experiment = "exp2";
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const Distribution dp =
      make_axis_mixture(config.exp2_d, config.exp2_p_weight1,
                        config.exp2_p_mean1, config.exp2_p_mean2);
  const Distribution dq =
      make_axis_mixture(config.exp2_d, config.exp2_q_weight1,
                        config.exp2_q_mean1, config.exp2_q_mean2);

  RunResult result;
  result.experiment = "exp2";
  result.config = config;
  result.params["d"] = static_cast<double>(config.exp2_d);
  result.params["p_weight1"] = config.exp2_p_weight1;
  result.params["p_weight2"] = 1.0 - config.exp2_p_weight1;
  result.params["p_mean1"] = config.exp2_p_mean1;
  result.params["p_mean2"] = config.exp2_p_mean2;
  result.params["q_weight1"] = config.exp2_q_weight1;
  result.params["q_weight2"] = 1.0 - config.exp2_q_weight1;
  result.params["q_mean1"] = config.exp2_q_mean1;
  result.params["q_mean2"] = config.exp2_q_mean2;

  const int n_l = static_cast<int>(config.l_grid.size());
  const int n_cells = static_cast<int>(config.m_grid.size()) * n_l;
  result.cells.resize(static_cast<std::size_t>(n_cells));
  parallel_for(n_cells, config.workers, [&](int idx) {
    const auto cell_t0 = std::chrono::steady_clock::now();
    const int m = config.m_grid[static_cast<std::size_t>(idx / n_l)];
    const int l = config.l_grid[static_cast<std::size_t>(idx % n_l)];
    CellResult cell;
    cell.coords["m"] = static_cast<double>(m);
    cell.coords["l"] = static_cast<double>(l);

    const auto [mc_kl_l, mc_js_l] = mc_ensemble(
        dp, dq, l, config.n_seeds,
        mix_seed(mix_seed(config.master_seed, kStreamCellMc),
                 static_cast<std::uint64_t>(idx)));
    cell.estimates.push_back(mc_kl_l);
    cell.estimates.push_back(mc_js_l);
    const auto [mc_kl_big, mc_js_big] = mc_ensemble(
        dp, dq, config.mc_oracle_l, config.n_seeds,
        mix_seed(mix_seed(config.master_seed, kStreamCellOracle),
                 static_cast<std::uint64_t>(idx)));
    cell.estimates.push_back(mc_kl_big);
    cell.estimates.push_back(mc_js_big);

    DiscriminatorConfig disc = config.discriminator;
    disc.seed = mix_seed(mix_seed(config.master_seed, kStreamCellEnsemble),
                         static_cast<std::uint64_t>(idx));
    const DistributionSource p_source(dp, "p");
    const DistributionSource q_source(dq, "q");
    EnsembleResult ensemble =
        ensemble_estimate(p_source, q_source, disc, m, l, config.n_seeds);
    cell.estimates.push_back(ensemble.kl);
    cell.estimates.push_back(ensemble.js);
    cell.seeds = std::move(ensemble.seeds);

    cell.wall_seconds = seconds_since(cell_t0);
    result.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  });

  result.total_wall_seconds = seconds_since(t0);
  return result;
}

RunResult run_exp3(const ExperimentConfig& config_in) {
  ExperimentConfig config = config_in;
  config.experiment = "exp3";
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const MixtureDist truth = exp3_truth(config.exp3_d);
  const Distribution dtruth = truth;

  RunResult result;
  result.experiment = "exp3";
  result.config = config;
  result.params["d"] = static_cast<double>(config.exp3_d);
  result.params["m"] = static_cast<double>(config.exp3_m);
  result.params["l"] = static_cast<double>(config.exp3_l);
  result.params["truth_weight1"] = 0.6;
  result.params["truth_mean1"] = 0.0;
  result.params["truth_mean2"] = 4.0;

  const int n_cells = static_cast<int>(config.n_grid.size());
  result.cells.resize(static_cast<std::size_t>(n_cells));
  parallel_for(n_cells, config.workers, [&](int idx) {
    const auto cell_t0 = std::chrono::steady_clock::now();
    const int n = config.n_grid[static_cast<std::size_t>(idx)];
    CellResult cell;
    cell.coords["n"] = static_cast<double>(n);

    std::vector<double> disc_kls, disc_jss, mc_kls, mc_jss;
    for (int s = 0; s < config.n_seeds; ++s) {
      const std::uint64_t base =
          mix_seed(mix_seed(mix_seed(config.master_seed, kStreamExp3),
                            static_cast<std::uint64_t>(idx)),
                   static_cast<std::uint64_t>(s));
      const DatasetMatrix train_rows =
          sample(dtruth, n, mix_seed(base, 1), "truth-train");
      EMConfig em = config.em;
      em.seed = mix_seed(base, 2);
      const MixtureDist fitted = fit_gmm(train_rows, em);
      const Distribution dfit = fitted;

      mc_kls.push_back(
          mc_kl(dtruth, dfit, config.mc_oracle_l, mix_seed(base, 3)));
      mc_jss.push_back(
          mc_js(dtruth, dfit, config.mc_oracle_l, mix_seed(base, 4)));

      const DistributionSource p_source(dtruth, "truth");
      const DistributionSource q_source(dfit, "fitted");
      auto [p_train, p_eval] =
          p_source.draw(config.exp3_m, config.exp3_l, mix_seed(base, 5));
      auto [q_train, q_eval] =
          q_source.draw(config.exp3_m, config.exp3_l, mix_seed(base, 6));
      DiscriminatorConfig disc_cfg = config.discriminator;
      disc_cfg.seed = mix_seed(base, 7);
      const TrainedDiscriminator disc = train(p_train, q_train, disc_cfg);

      SeedOutcome outcome;
      outcome.kl = estimate_kl(disc, p_eval);
      outcome.js = estimate_js(disc, p_eval, q_eval);
      outcome.final_train_loss = disc.final_train_loss();
      outcome.final_validation_loss = disc.final_validation_loss();
      outcome.train_loss_history = disc.train_loss_history();
      disc_kls.push_back(outcome.kl);
      disc_jss.push_back(outcome.js);
      cell.seeds.push_back(std::move(outcome));
    }

    std::map<std::string, double> mc_meta{
        {"l", static_cast<double>(config.mc_oracle_l)},
        {"n", static_cast<double>(n)}};
    cell.estimates.push_back(aggregate_estimates(
        mc_kls, EstimateMethod::mc, DivergenceKind::kl, mc_meta));
    cell.estimates.push_back(aggregate_estimates(
        mc_jss, EstimateMethod::mc, DivergenceKind::js, mc_meta));
    std::map<std::string, double> disc_meta{
        {"m", static_cast<double>(config.exp3_m)},
        {"l", static_cast<double>(config.exp3_l)},
        {"n", static_cast<double>(n)}};
    cell.estimates.push_back(aggregate_estimates(
        disc_kls, EstimateMethod::discriminator, DivergenceKind::kl,
        disc_meta));
    cell.estimates.push_back(aggregate_estimates(
        disc_jss, EstimateMethod::discriminator, DivergenceKind::js,
        disc_meta));

    cell.wall_seconds = seconds_since(cell_t0);
    result.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  });

  result.total_wall_seconds = seconds_since(t0);
  return result;
}

RunResult run_sweep(const ExperimentConfig& config_in) {
  ExperimentConfig config = config_in;
  config.experiment = "sweep";
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const int d = config.sweep_d;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const GaussianDist p(Eigen::VectorXd::Zero(d), eye);
  const Distribution dp = p;

  RunResult result;
  result.experiment = "sweep";
  result.config = config;
  result.params["d"] = static_cast<double>(d);
  result.params["m"] = static_cast<double>(config.sweep_m);
  result.params["l"] = static_cast<double>(config.sweep_l);

  const int n_cells = config.sweep_points;
  result.cells.resize(static_cast<std::size_t>(n_cells));
  parallel_for(n_cells, config.workers, [&](int idx) {
    const auto cell_t0 = std::chrono::steady_clock::now();
    const double separation =
        config.sweep_max_separation * static_cast<double>(idx) /
        static_cast<double>(config.sweep_points - 1);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    mean[0] = separation;
    const GaussianDist q(std::move(mean), eye);
    const Distribution dq = q;

    CellResult cell;
    cell.coords["separation"] = separation;
    cell.scalars["analytical_kl"] = 0.5 * separation * separation;

    const std::uint64_t truth_seed =
        mix_seed(mix_seed(config.master_seed, kStreamSweepTruth),
                 static_cast<std::uint64_t>(idx));
    DivergenceEstimate true_kl;
    true_kl.value = mc_kl(dp, dq, config.mc_oracle_l, mix_seed(truth_seed, 0));
    true_kl.method = EstimateMethod::mc;
    true_kl.kind = DivergenceKind::kl;
    true_kl.meta["l"] = static_cast<double>(config.mc_oracle_l);
    DivergenceEstimate true_js;
    true_js.value = std::max(
        0.0, mc_js(dp, dq, config.mc_oracle_l, mix_seed(truth_seed, 1)));
    true_js.method = EstimateMethod::mc;
    true_js.kind = DivergenceKind::js;
    true_js.meta["l"] = static_cast<double>(config.mc_oracle_l);
    cell.estimates.push_back(true_kl);
    cell.estimates.push_back(true_js);
    cell.scalars["true_mc_kl"] = true_kl.value;
    cell.scalars["true_mc_js"] = true_js.value;

    DiscriminatorConfig disc = config.discriminator;
    disc.seed = mix_seed(mix_seed(config.master_seed, kStreamSweepEnsemble),
                         static_cast<std::uint64_t>(idx));
    const DistributionSource p_source(dp, "p");
    const DistributionSource q_source(dq, "q");
    EnsembleResult ensemble = ensemble_estimate(
        p_source, q_source, disc, config.sweep_m, config.sweep_l,
        config.n_seeds);
    cell.estimates.push_back(ensemble.kl);
    cell.estimates.push_back(ensemble.js);
    cell.seeds = std::move(ensemble.seeds);

    cell.wall_seconds = seconds_since(cell_t0);
    result.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  });

  result.total_wall_seconds = seconds_since(t0);
  return result;
}

RunResult run_experiment(const ExperimentConfig& config) {
  if (config.experiment == "exp1") {
    return run_exp1(config);
  }
  if (config.experiment == "exp2") {
    return run_exp2(config);
  }
  if (config.experiment == "exp3") {
    return run_exp3(config);
  }
  if (config.experiment == "sweep") {
    return run_sweep(config);
  }
  throw std::invalid_argument(
      "run_experiment: '" + config.experiment +
      "' is not a grid experiment (compare has its own entry point)");
}

// ---------------------------------------------------------------------------
// compare

namespace {

void append_report_warnings(const EncodeReport& report, const char* side,
                            std::vector<std::string>* warnings) {
  for (const auto& [name, count] : report.unknown_category_counts) {
    warnings->push_back(std::string(side) + ": column '" + name + "': " +
                        std::to_string(count) +
                        " cell(s) outside the frozen vocabulary");
  }
  for (const auto& [name, count] : report.missing_counts) {
    warnings->push_back(std::string(side) + ": column '" + name + "': " +
                        std::to_string(count) + " missing cell(s)");
  }
}

}  // namespace

RunResult compare_tables(const RawTable& real, const RawTable& synthetic,
                         const CompareOptions& options) {
  if (options.m < 4 || options.l < 1) {
    throw std::invalid_argument("compare: M must be >= 4 and L >= 1");
  }
  if (options.n_seeds < 2) {
    throw std::invalid_argument("compare: n_seeds must be >= 2");
  }
  const auto t0 = std::chrono::steady_clock::now();

  RunResult result;
  result.experiment = "compare";
  result.config.experiment = "compare";
  result.config.discriminator = options.discriminator;
  result.config.n_seeds = options.n_seeds;
  result.config.master_seed = options.master_seed;
  result.config.out_dir = options.out_dir;
  result.text_params["real_path"] = real.source_path;
  result.text_params["synthetic_path"] = synthetic.source_path;
  {
    std::string joined;
    for (std::size_t i = 0; i < options.missing_tokens.size(); ++i) {
      if (i > 0) {
        joined += "|";
      }
      joined += options.missing_tokens[i];
    }
    result.text_params["missing_tokens"] = joined;
  }

  const Schema schema = infer_schema(real, options.missing_tokens);
  EncodeResult enc_real = encode_with_report(real, schema);
  EncodeResult enc_synth = encode_with_report(synthetic, schema);
  append_report_warnings(enc_real.report, "real", &result.warnings);
  append_report_warnings(enc_synth.report, "synthetic", &result.warnings);

  const int rows_real = static_cast<int>(enc_real.matrix.rows());
  const int rows_synth = static_cast<int>(enc_synth.matrix.rows());
  const int balanced = std::min(rows_real, rows_synth);
  if (balanced < 50) {
    throw DataError("compare: only " + std::to_string(balanced) +
                    " usable rows per side after balancing; at least 50 are "
                    "required");
  }
  if (rows_real != rows_synth) {
    result.warnings.push_back(
        "class sizes unequal (real " + std::to_string(rows_real) +
        ", synthetic " + std::to_string(rows_synth) +
        "); each seed resamples " + std::to_string(balanced) +
        " row budget per side");
  }

  int m_eff = options.m;
  int l_eff = options.l;
  if (balanced < options.m + options.l) {
    const double ratio = static_cast<double>(balanced) /
                         static_cast<double>(options.m + options.l);
    m_eff = std::max(4, static_cast<int>(std::floor(options.m * ratio)));
    l_eff = std::max(1, static_cast<int>(std::floor(options.l * ratio)));
    if (m_eff + l_eff > balanced) {
      m_eff = balanced - l_eff;
    }
    result.warnings.push_back(
        "insufficient rows for M=" + std::to_string(options.m) +
        ", L=" + std::to_string(options.l) + "; scaled down to M=" +
        std::to_string(m_eff) + ", L=" + std::to_string(l_eff));
  }

  DiscriminatorConfig disc = options.discriminator;
  disc.seed = mix_seed(options.master_seed, kStreamCompare);
  const FixedDatasetSource real_source(enc_real.matrix);
  const FixedDatasetSource synth_source(enc_synth.matrix);
  EnsembleResult ensemble = ensemble_estimate(
      real_source, synth_source, disc, m_eff, l_eff, options.n_seeds);

  CellResult cell;
  cell.coords["m"] = static_cast<double>(m_eff);
  cell.coords["l"] = static_cast<double>(l_eff);
  cell.scalars["rows_real"] = static_cast<double>(rows_real);
  cell.scalars["rows_synthetic"] = static_cast<double>(rows_synth);
  cell.scalars["encoded_width"] = static_cast<double>(schema.encoded_width());
  cell.estimates.push_back(ensemble.kl);
  cell.estimates.push_back(ensemble.js);
  cell.seeds = std::move(ensemble.seeds);
  cell.wall_seconds = seconds_since(t0);
  result.cells.push_back(std::move(cell));

  result.params["m_requested"] = static_cast<double>(options.m);
  result.params["l_requested"] = static_cast<double>(options.l);
  result.params["m"] = static_cast<double>(m_eff);
  result.params["l"] = static_cast<double>(l_eff);
  result.params["encoded_width"] =
      static_cast<double>(schema.encoded_width());

  result.total_wall_seconds = seconds_since(t0);
  return result;
}

RunResult compare(const CompareOptions& options) {
  const RawTable real = load_csv(options.real_path);
  const RawTable synthetic = load_csv(options.synthetic_path);
  return compare_tables(real, synthetic, options);
}

// ---------------------------------------------------------------------------
// Result documents

std::string to_json_string(const RunResult& result) {
  json j;
  j["format"] = "divjudge-result";
  j["version"] = 1;
  j["experiment"] = result.experiment;
  j["config"] = config_to_json(result.config);
  j["params"] = result.params;
  j["text_params"] = result.text_params;
  j["warnings"] = result.warnings;
  json cells = json::array();
  for (const auto& cell : result.cells) {
    json c;
    c["coords"] = cell.coords;
    c["scalars"] = cell.scalars;
    json estimates = json::array();
    for (const auto& e : cell.estimates) {
      estimates.push_back(estimate_to_json(e));
    }
    c["estimates"] = estimates;
    json seeds = json::array();
    for (const auto& s : cell.seeds) {
      seeds.push_back(seed_to_json(s));
    }
    c["seeds"] = seeds;
    c["wall_seconds"] = cell.wall_seconds;
    cells.push_back(std::move(c));
  }
  j["cells"] = cells;
  j["total_wall_seconds"] = result.total_wall_seconds;
  return j.dump(2) + "\n";
}

RunResult run_result_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("result document: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "divjudge-result") {
      throw DataError("result document: unexpected format tag");
    }
    if (j.at("version").get<int>() != 1) {
      throw DataError("result document: unsupported version");
    }
    RunResult result;
    result.experiment = j.at("experiment").get<std::string>();
    result.config = config_from_json(j.at("config"));
    result.params = j.at("params").get<std::map<std::string, double>>();
    result.text_params =
        j.at("text_params").get<std::map<std::string, std::string>>();
    result.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      CellResult cell;
      cell.coords = c.at("coords").get<std::map<std::string, double>>();
      cell.scalars = c.at("scalars").get<std::map<std::string, double>>();
      for (const auto& e : c.at("estimates")) {
        cell.estimates.push_back(estimate_from_json(e));
      }
      for (const auto& s : c.at("seeds")) {
        cell.seeds.push_back(seed_from_json(s));
      }
      cell.wall_seconds = c.at("wall_seconds").get<double>();
      result.cells.push_back(std::move(cell));
    }
    result.total_wall_seconds = j.at("total_wall_seconds").get<double>();
    return result;
  } catch (const json::exception& e) {
    throw DataError(std::string("result document: missing or mistyped "
                                "field: ") +
                    e.what());
  }
}

std::string result_fingerprint(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("result_fingerprint: invalid JSON: ") +
                    e.what());
  }
  j.erase("total_wall_seconds");
  if (j.contains("cells")) {
    for (auto& cell : j["cells"]) {
      cell.erase("wall_seconds");
    }
  }
  return j.dump(2) + "\n";
}

std::string to_csv_series(const RunResult& result) {
  std::ostringstream out;
  out << "experiment,cell_index,m,l,n,separation,method,kind,value,"
         "dispersion,value_normalized,seeds,eval_l\n";
  const auto coord = [](const CellResult& cell, const char* key) {
    const auto it = cell.coords.find(key);
    return it == cell.coords.end() ? std::string()
                                   : format_number(it->second);
  };
  for (std::size_t idx = 0; idx < result.cells.size(); ++idx) {
    const CellResult& cell = result.cells[idx];
    for (const auto& e : cell.estimates) {
      out << result.experiment << ',' << idx << ',' << coord(cell, "m") << ','
          << coord(cell, "l") << ',' << coord(cell, "n") << ','
          << coord(cell, "separation") << ',' << to_string(e.method) << ','
          << to_string(e.kind) << ',' << format_number(e.value) << ','
          << format_number(e.dispersion) << ',';
      if (e.kind == DivergenceKind::js) {
        out << format_number(e.value / kLn2);
      }
      out << ',';
      const auto seeds_it = e.meta.find("seeds");
      if (seeds_it != e.meta.end()) {
        out << format_number(seeds_it->second);
      }
      out << ',';
      const auto l_it = e.meta.find("l");
      if (l_it != e.meta.end()) {
        out << format_number(l_it->second);
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string write_run_result(const RunResult& result,
                             const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw DataError("write_run_result: cannot create directory '" + out_dir +
                    "': " + ec.message());
  }
  const fs::path json_path =
      fs::path(out_dir) / (result.experiment + "_result.json");
  const fs::path csv_path =
      fs::path(out_dir) / (result.experiment + "_series.csv");
  {
    std::ofstream out(json_path);
    if (!out) {
      throw DataError("write_run_result: cannot open '" +
                      json_path.string() + "'");
    }
    out << to_json_string(result);
    if (!out.good()) {
      throw DataError("write_run_result: write failure on '" +
                      json_path.string() + "'");
    }
  }
  {
    std::ofstream out(csv_path);
    if (!out) {
      throw DataError("write_run_result: cannot open '" + csv_path.string() +
                      "'");
    }
    out << to_csv_series(result);
    if (!out.good()) {
      throw DataError("write_run_result: write failure on '" +
                      csv_path.string() + "'");
    }
  }
  return json_path.string();
}

}  // namespace divjudge
