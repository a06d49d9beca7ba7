#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "divjudge/dataset.hpp"
#include "divjudge/rng.hpp"

namespace divjudge {

/// Multivariate Gaussian with a cached lower-triangular Cholesky factor.
/// Immutable after construction; safe to share across threads.
class GaussianDist {
 public:
  /// Validates symmetry (1e-10), factorizes, and checks chol * chol^T
  /// reproduces the covariance to 1e-8 elementwise.
  /// Throws NumericalError if the covariance is not positive-definite.
  GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  double log_det_covariance() const { return log_det_; }

  double log_pdf(const Eigen::VectorXd& x) const;

  /// One draw: mean + chol * z with z standard normal.
  Eigen::VectorXd draw(Rng& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0.0;
};

/// Finite mixture of Gaussians. Weights must be positive and sum to 1
/// within 1e-12.
class MixtureDist {
 public:
  MixtureDist(std::vector<GaussianDist> components, Eigen::VectorXd weights);

  int dim() const { return components_[0].dim(); }
  const std::vector<GaussianDist>& components() const { return components_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  /// log-sum-exp over log weight + component log-pdf.
  double log_pdf(const Eigen::VectorXd& x) const;

  /// Draws a component index from the weights, then samples it.
  Eigen::VectorXd draw(Rng& rng) const;

 private:
  std::vector<GaussianDist> components_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_weights_;
};

using Distribution = std::variant<GaussianDist, MixtureDist>;

int dim(const Distribution& dist);
double log_pdf(const GaussianDist& dist, const Eigen::VectorXd& x);
double log_pdf(const MixtureDist& dist, const Eigen::VectorXd& x);
double log_pdf(const Distribution& dist, const Eigen::VectorXd& x);

/// Draws n rows. Identical (dist, n, seed) yields bit-identical output.
DatasetMatrix sample(const GaussianDist& dist, int n, std::uint64_t seed,
                     std::string label = {});
DatasetMatrix sample(const MixtureDist& dist, int n, std::uint64_t seed,
                     std::string label = {});
DatasetMatrix sample(const Distribution& dist, int n, std::uint64_t seed,
                     std::string label = {});

/// Closed-form KL(p || q) in nats:
///   1/2 [ tr(Sq^-1 Sp) + (mq-mp)^T Sq^-1 (mq-mp) - d + ln(det Sq / det Sp) ]
double gaussian_kl_analytical(const GaussianDist& p, const GaussianDist& q);

/// Random well-conditioned pair for experiment 1: each covariance is
/// A A^T + 0.5 I with A entries i.i.d. standard normal, means i.i.d.
/// uniform[0, 1]. Deterministic given seed.
std::pair<GaussianDist, GaussianDist> random_gaussian_pair(int d,
                                                           std::uint64_t seed);

/// Monte-Carlo KL(p || q): mean of log p(x) - log q(x) over L draws from p.
double mc_kl(const Distribution& p, const Distribution& q, int l,
             std::uint64_t seed);

/// Monte-Carlo JS(p, q) against the midpoint mixture, L draws per side.
/// Bounded above by ln 2.
double mc_js(const Distribution& p, const Distribution& q, int l,
             std::uint64_t seed);

enum class EstimateMethod { analytical, mc, discriminator };
enum class DivergenceKind { kl, js };

std::string to_string(EstimateMethod m);
std::string to_string(DivergenceKind k);
EstimateMethod estimate_method_from_string(const std::string& s);
DivergenceKind divergence_kind_from_string(const std::string& s);

/// Scalar divergence with cross-seed dispersion (sample standard deviation)
/// and run metadata such as M, L, N, seed count.
struct DivergenceEstimate {
  double value = 0.0;
  double dispersion = 0.0;
  EstimateMethod method = EstimateMethod::mc;
  DivergenceKind kind = DivergenceKind::kl;
  std::map<std::string, double> meta;
};

/// Mean +/- sample standard deviation over per-seed values.
DivergenceEstimate aggregate_estimates(const std::vector<double>& per_seed,
                                       EstimateMethod method,
                                       DivergenceKind kind,
                                       std::map<std::string, double> meta = {});

}  // namespace divjudge
