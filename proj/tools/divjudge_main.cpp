#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "divjudge/errors.hpp"
#include "divjudge/harness.hpp"

namespace {

/// Output-directory precedence: config file < --out flag < DIVJUDGE_OUT_DIR.
std::string resolve_out_dir(const std::string& configured,
                            const std::string& flag_value) {
  std::string out = configured;
  if (!flag_value.empty()) {
    out = flag_value;
  }
  if (const char* env = std::getenv("DIVJUDGE_OUT_DIR");
      env != nullptr && env[0] != '\0') {
    out = env;
  }
  return out;
}

const divjudge::DivergenceEstimate* find_estimate(
    const divjudge::CellResult& cell, divjudge::EstimateMethod method,
    divjudge::DivergenceKind kind) {
  for (const auto& e : cell.estimates) {
    if (e.method == method && e.kind == kind) {
      return &e;
    }
  }
  return nullptr;
}

void print_summary(const divjudge::RunResult& result,
                   const std::string& json_path) {
  for (const auto& warning : result.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  for (const auto& cell : result.cells) {
    std::string coords;
    for (const auto& [key, value] : cell.coords) {
      if (!coords.empty()) {
        coords += " ";
      }
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s=%g", key.c_str(), value);
      coords += buf;
    }
    std::printf("%s [%s]", result.experiment.c_str(), coords.c_str());
    if (const auto* akl = [&]() -> const double* {
          const auto it = cell.scalars.find("analytical_kl");
          return it == cell.scalars.end() ? nullptr : &it->second;
        }()) {
      std::printf("  analytical KL %.4f", *akl);
    }
    using divjudge::DivergenceKind;
    using divjudge::EstimateMethod;
    if (const auto* e =
            find_estimate(cell, EstimateMethod::mc, DivergenceKind::kl)) {
      std::printf("  MC KL %.4f±%.4f", e->value, e->dispersion);
    }
    if (const auto* e =
            find_estimate(cell, EstimateMethod::mc, DivergenceKind::js)) {
      std::printf("  MC JS %.4f±%.4f", e->value, e->dispersion);
    }
    if (const auto* e = find_estimate(cell, EstimateMethod::discriminator,
                                      DivergenceKind::kl)) {
      std::printf("  disc KL %.4f±%.4f", e->value, e->dispersion);
    }
    if (const auto* e = find_estimate(cell, EstimateMethod::discriminator,
                                      DivergenceKind::js)) {
      std::printf("  disc JS %.4f±%.4f", e->value, e->dispersion);
    }
    std::printf("\n");
  }
  std::printf("result: %s\n", json_path.c_str());
}

struct ExperimentFlags {
  std::string config_path;
  std::string out_dir;
  int seeds = 0;
  std::uint64_t master_seed = 0;
  bool has_seed = false;
};

void add_experiment_subcommand(CLI::App& app, const std::string& name,
                               const std::string& description,
                               ExperimentFlags& flags, bool& selected) {
  CLI::App* sub = app.add_subcommand(name, description);
  sub->add_option("--config", flags.config_path,
                  "key = value configuration file");
  sub->add_option("--seeds", flags.seeds, "number of ensemble seeds (>= 2)");
  sub->add_option("--out", flags.out_dir, "output directory");
  sub->add_option("--seed", flags.master_seed, "master random seed")
      ->each([&flags](const std::string&) { flags.has_seed = true; });
  sub->callback([&selected]() { selected = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "divjudge: classifier-based KL and JS divergence estimation between "
      "two datasets"};
  app.set_version_flag("--version", "divjudge 1.0.0");
  app.require_subcommand(1);

  ExperimentFlags exp_flags[4];
  bool exp_selected[4] = {false, false, false, false};
  const char* exp_names[4] = {"exp1", "exp2", "exp3", "sweep"};
  add_experiment_subcommand(
      app, "exp1", "Random Gaussian pair over an (M, L) grid", exp_flags[0],
      exp_selected[0]);
  add_experiment_subcommand(
      app, "exp2", "Two-component mixture pair over an (M, L) grid",
      exp_flags[1], exp_selected[1]);
  add_experiment_subcommand(
      app, "exp3", "Divergence vs generative-model training size N",
      exp_flags[2], exp_selected[2]);
  add_experiment_subcommand(
      app, "sweep", "Estimate fidelity across mean separations", exp_flags[3],
      exp_selected[3]);

  bool compare_selected = false;
  divjudge::CompareOptions compare_opts;
  std::string compare_out_flag;
  std::vector<std::string> missing_tokens;
  bool compare_has_seed = false;
  {
    CLI::App* sub = app.add_subcommand(
        "compare", "Compare a real CSV dataset against a synthetic one");
    sub->add_option("--real", compare_opts.real_path, "real dataset CSV")
        ->required();
    sub->add_option("--synthetic", compare_opts.synthetic_path,
                    "synthetic dataset CSV")
        ->required();
    sub->add_option("--m", compare_opts.m,
                    "training samples per class (default 7500)");
    sub->add_option("--l", compare_opts.l,
                    "evaluation samples per class (default 1000)");
    sub->add_option("--seeds", compare_opts.n_seeds,
                    "number of ensemble seeds (>= 2)");
    sub->add_option("--missing-token", missing_tokens,
                    "missing-value token (repeatable; default: empty cell "
                    "and '?')");
    sub->add_option("--out", compare_out_flag, "output directory");
    sub->add_option("--seed", compare_opts.master_seed, "master random seed")
        ->each([&compare_has_seed](const std::string&) {
          compare_has_seed = true;
        });
    sub->callback([&compare_selected]() { compare_selected = true; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (compare_selected) {
      if (!missing_tokens.empty()) {
        compare_opts.missing_tokens = missing_tokens;
      }
      if (!compare_has_seed) {
        compare_opts.master_seed = 42;
      }
      compare_opts.out_dir = resolve_out_dir(compare_opts.out_dir,
                                             compare_out_flag);
      const divjudge::RunResult result = divjudge::compare(compare_opts);
      const std::string path =
          divjudge::write_run_result(result, compare_opts.out_dir);
      print_summary(result, path);
      return 0;
    }
    for (int i = 0; i < 4; ++i) {
      if (!exp_selected[i]) {
        continue;
      }
      divjudge::ExperimentConfig config;
      config.experiment = exp_names[i];
      if (!exp_flags[i].config_path.empty()) {
        divjudge::apply_config_file(config, exp_flags[i].config_path);
      }
      if (exp_flags[i].seeds > 0) {
        config.n_seeds = exp_flags[i].seeds;
      }
      if (exp_flags[i].has_seed) {
        config.master_seed = exp_flags[i].master_seed;
      }
      config.out_dir = resolve_out_dir(config.out_dir, exp_flags[i].out_dir);
      const divjudge::RunResult result = divjudge::run_experiment(config);
      const std::string path =
          divjudge::write_run_result(result, config.out_dir);
      print_summary(result, path);
      return 0;
    }
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const divjudge::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const divjudge::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
