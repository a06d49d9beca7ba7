#pragma once

#include <cstdint>
#include <vector>

#include "divjudge/dataset.hpp"
#include "divjudge/distributions.hpp"

namespace divjudge {

/// Expectation-maximization settings for diagonal-covariance mixtures.
struct EMConfig {
  int k = 2;
  int max_iters = 200;
  double tol = 1e-6;
  double reg = 1e-6;
  int n_init = 5;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on k < 1, max_iters < 1, tol <= 0,
  /// reg < 0, or n_init < 1.
  void validate() const;
};

/// Best-restart EM outcome with its convergence trace.
struct GmmFit {
  MixtureDist model;
  /// Log-likelihood evaluated at the start of each iteration of the winning
  /// restart; nondecreasing within 1e-8.
  std::vector<double> log_likelihood_history;
  double final_log_likelihood = 0.0;
};

/// Fits a diagonal-covariance Gaussian mixture by EM with k-means++ seeding,
/// keeping the best of n_init restarts by final log-likelihood. Deterministic
/// given config.seed.
GmmFit fit_gmm_detailed(const DatasetMatrix& data, const EMConfig& config);

/// Convenience wrapper returning just the fitted mixture.
MixtureDist fit_gmm(const DatasetMatrix& data, const EMConfig& config);

/// Sum of per-row mixture log-densities. Throws std::invalid_argument on
/// dimension mismatch.
double log_likelihood(const MixtureDist& model, const DatasetMatrix& data);

}  // namespace divjudge
