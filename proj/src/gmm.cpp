#include "divjudge/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "divjudge/errors.hpp"
#include "divjudge/rng.hpp"

namespace divjudge {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct EmState {
  Eigen::VectorXd weights;    // k
  Eigen::MatrixXd means;      // k x d
  Eigen::MatrixXd variances;  // k x d, diagonal entries
};

struct EmRun {
  EmState state;
  std::vector<double> history;
};

double variance_floor(double reg) { return std::max(reg, 1e-12); }

/// Diagonal-Gaussian log-density: avoids building full covariance matrices
/// inside the EM loop.
double diag_log_pdf(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& mu,
                    const Eigen::RowVectorXd& var) {
  const int d = static_cast<int>(x.size());
  double quad = 0.0;
  double log_det = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = x[j] - mu[j];
    quad += diff * diff / var[j];
    log_det += std::log(var[j]);
  }
  return -0.5 * (d * kLog2Pi + log_det + quad);
}

/// k-means++ seeding: first center uniform, subsequent centers drawn with
/// probability proportional to squared distance from the nearest chosen one.
Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& data, int k,
                                 Rng& rng) {
  const int n = static_cast<int>(data.rows());
  Eigen::MatrixXd centers(k, data.cols());
  centers.row(0) = data.row(rng.bounded(n));
  Eigen::VectorXd dist2 =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (int i = 0; i < n; ++i) {
      const double d2 = (data.row(i) - centers.row(c - 1)).squaredNorm();
      dist2[i] = std::min(dist2[i], d2);
    }
    const double total = dist2.sum();
    int chosen = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      // All points coincide with existing centers; fall back to uniform.
      chosen = rng.bounded(n);
    }
    centers.row(c) = data.row(chosen);
  }
  return centers;
}

EmRun run_em(const Eigen::MatrixXd& data, const EMConfig& config,
             std::uint64_t seed) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  const int k = config.k;
  const double floor = variance_floor(config.reg);
  Rng rng(seed);

  EmRun run;
  run.state.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  run.state.means = kmeanspp_centers(data, k, rng);
  Eigen::RowVectorXd global_mean = data.colwise().mean();
  Eigen::RowVectorXd global_var =
      (data.rowwise() - global_mean).array().square().colwise().mean();
  for (int j = 0; j < d; ++j) {
    global_var[j] = std::max(global_var[j], floor);
  }
  run.state.variances = global_var.replicate(k, 1);

  // E-step: responsibilities and the log-likelihood of the current
  // parameters via per-row log-sum-exp.
  Eigen::MatrixXd log_resp(n, k);
  const auto e_step = [&]() {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        log_resp(i, c) = std::log(run.state.weights[c]) +
                         diag_log_pdf(data.row(i), run.state.means.row(c),
                                      run.state.variances.row(c));
        row_max = std::max(row_max, log_resp(i, c));
      }
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        sum += std::exp(log_resp(i, c) - row_max);
      }
      const double lse = row_max + std::log(sum);
      ll += lse;
      for (int c = 0; c < k; ++c) {
        log_resp(i, c) -= lse;
      }
    }
    if (!std::isfinite(ll)) {
      throw NumericalError(
          "fit_gmm: log-likelihood became non-finite after iteration " +
          std::to_string(run.history.size()));
    }
    return ll;
  };

  double prev_ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const double ll = e_step();
    run.history.push_back(ll);
    if (iter > 0 && std::abs(ll - prev_ll) < config.tol) {
      converged = true;
      break;
    }
    prev_ll = ll;

    // M-step with responsibility mass clamped away from zero so collapsed
    // components keep finite parameters.
    for (int c = 0; c < k; ++c) {
      double mass = 0.0;
      Eigen::RowVectorXd mean_acc = Eigen::RowVectorXd::Zero(d);
      for (int i = 0; i < n; ++i) {
        const double r = std::exp(log_resp(i, c));
        mass += r;
        mean_acc += r * data.row(i);
      }
      const double safe_mass = std::max(mass, 1e-10);
      run.state.weights[c] = mass / n;
      run.state.means.row(c) = mean_acc / safe_mass;
      Eigen::RowVectorXd var_acc = Eigen::RowVectorXd::Zero(d);
      for (int i = 0; i < n; ++i) {
        const double r = std::exp(log_resp(i, c));
        var_acc += r * (data.row(i) - run.state.means.row(c))
                           .array()
                           .square()
                           .matrix();
      }
      run.state.variances.row(c) = var_acc / safe_mass;
      // Regularize by projection onto [floor, inf) rather than by adding reg:
      // the projected value still maximizes the constrained M-step objective,
      // so the log-likelihood history stays nondecreasing even when a
      // component collapses onto near-duplicate rows.
      for (int j = 0; j < d; ++j) {
        run.state.variances(c, j) = std::max(run.state.variances(c, j), floor);
      }
    }
    const double weight_sum = run.state.weights.sum();
    run.state.weights /= weight_sum;
  }
  if (!converged) {
    // The loop ended with an M-step, so the recorded history trails the
    // returned parameters by one evaluation.
    run.history.push_back(e_step());
  }
  return run;
}

MixtureDist to_mixture(const EmState& state) {
  const int k = static_cast<int>(state.weights.size());
  const int d = static_cast<int>(state.means.cols());
  std::vector<GaussianDist> components;
  components.reserve(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (int j = 0; j < d; ++j) {
      cov(j, j) = state.variances(c, j);
    }
    components.emplace_back(state.means.row(c).transpose(), std::move(cov));
  }
  // A collapsed component can reach weight 0 exactly; keep it representable
  // with negligible mass rather than violating the mixture's positivity.
  Eigen::VectorXd weights = state.weights.cwiseMax(1e-12);
  weights /= weights.sum();
  return MixtureDist(std::move(components), std::move(weights));
}

}  // namespace

void EMConfig::validate() const {
  if (k < 1) {
    throw std::invalid_argument("EMConfig: k must be >= 1, got " +
                                std::to_string(k));
  }
  if (max_iters < 1) {
    throw std::invalid_argument("EMConfig: max_iters must be >= 1, got " +
                                std::to_string(max_iters));
  }
  if (!(tol > 0.0)) {
    throw std::invalid_argument("EMConfig: tol must be > 0");
  }
  if (reg < 0.0) {
    throw std::invalid_argument("EMConfig: reg must be >= 0");
  }
  if (n_init < 1) {
    throw std::invalid_argument("EMConfig: n_init must be >= 1, got " +
                                std::to_string(n_init));
  }
}

GmmFit fit_gmm_detailed(const DatasetMatrix& data, const EMConfig& config) {
  config.validate();
  const int n = static_cast<int>(data.rows());
  if (n < config.k) {
    throw DataError("fit_gmm: " + std::to_string(n) + " rows cannot support " +
                    std::to_string(config.k) + " mixture components");
  }
  if (!data.values.allFinite()) {
    throw DataError("fit_gmm: data contains non-finite entries");
  }

  bool have_best = false;
  EmRun best;
  for (int r = 0; r < config.n_init; ++r) {
    EmRun candidate =
        run_em(data.values, config, mix_seed(config.seed,
                                             static_cast<std::uint64_t>(r)));
    if (!have_best || candidate.history.back() > best.history.back()) {
      best = std::move(candidate);
      have_best = true;
    }
  }

  GmmFit fit{to_mixture(best.state), std::move(best.history), 0.0};
  fit.final_log_likelihood = fit.log_likelihood_history.back();
  return fit;
}

MixtureDist fit_gmm(const DatasetMatrix& data, const EMConfig& config) {
  return fit_gmm_detailed(data, config).model;
}

double log_likelihood(const MixtureDist& model, const DatasetMatrix& data) {
  if (data.cols() != model.dim()) {
    throw std::invalid_argument(
        "log_likelihood: data dimension " + std::to_string(data.cols()) +
        " does not match model dimension " + std::to_string(model.dim()));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    total += model.log_pdf(data.values.row(i).transpose());
  }
  return total;
}

}  // namespace divjudge
