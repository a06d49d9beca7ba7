#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "divjudge/dataset.hpp"
#include "divjudge/discriminator.hpp"
#include "divjudge/distributions.hpp"

namespace divjudge {

/// logit(z) = ln(z / (1-z)), the inverse sigmoid. Under equal class priors
/// this maps the class-1 posterior to the log density ratio.
double logit(double z);

enum class SampleClass { class_p, class_q };

/// Per-sample log density-ratio estimates. Finite by construction because
/// posteriors are clamped away from {0, 1}.
struct RatioEstimate {
  Eigen::VectorXd log_ratio;
  SampleClass source = SampleClass::class_p;
};

RatioEstimate log_density_ratio(const TrainedDiscriminator& disc,
                                const DatasetMatrix& x,
                                SampleClass source = SampleClass::class_p);

/// KL(p || q) estimate: mean logit posterior over evaluation samples from p.
double estimate_kl(const TrainedDiscriminator& disc,
                   const DatasetMatrix& x_p_eval);

/// JS(p, q) estimate over evaluation samples from both sides:
///   mean of ln(2 D) / 2 over p-samples + mean of ln(2 - 2 D) / 2 over
/// q-samples. The ln 2 constants are kept so identical distributions with
/// posteriors at 0.5 score exactly 0.
double estimate_js(const TrainedDiscriminator& disc,
                   const DatasetMatrix& x_p_eval,
                   const DatasetMatrix& x_q_eval);

// Formula cores, exposed for direct testing against hand-built posteriors.
double estimate_kl_from_posteriors(const Eigen::VectorXd& post_p);
double estimate_js_from_posteriors(const Eigen::VectorXd& post_p,
                                   const Eigen::VectorXd& post_q);

/// Loss-implied JS lower-bound diagnostic: (ln 4 - final_loss) / 2.
double js_from_loss(double final_loss);

/// Supplies per-seed training and evaluation draws that are disjoint within
/// a seed.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual int dim() const = 0;
  virtual std::pair<DatasetMatrix, DatasetMatrix> draw(
      int n_train, int n_eval, std::uint64_t seed) const = 0;
};

/// Fresh draws from a known distribution.
class DistributionSource final : public SampleSource {
 public:
  DistributionSource(Distribution dist, std::string label);
  int dim() const override;
  std::pair<DatasetMatrix, DatasetMatrix> draw(
      int n_train, int n_eval, std::uint64_t seed) const override;

 private:
  Distribution dist_;
  std::string label_;
};

/// Disjoint resampling without replacement from a fixed dataset.
/// Throws DataError if the dataset has fewer than n_train + n_eval rows.
class FixedDatasetSource final : public SampleSource {
 public:
  explicit FixedDatasetSource(DatasetMatrix data);
  int dim() const override;
  std::pair<DatasetMatrix, DatasetMatrix> draw(
      int n_train, int n_eval, std::uint64_t seed) const override;

 private:
  DatasetMatrix data_;
};

struct SeedOutcome {
  double kl = 0.0;
  double js = 0.0;
  double final_train_loss = 0.0;
  double final_validation_loss = 0.0;
  std::vector<double> train_loss_history;
};

struct EnsembleResult {
  DivergenceEstimate kl;
  DivergenceEstimate js;
  std::vector<SeedOutcome> seeds;
};

/// Repeats (draw M + L per class, train, estimate) across n_seeds seeds and
/// aggregates as mean +/- sample standard deviation. config.seed is the
/// master seed; each replicate derives its own streams from it.
EnsembleResult ensemble_estimate(const SampleSource& p_source,
                                 const SampleSource& q_source,
                                 const DiscriminatorConfig& config, int m,
                                 int l, int n_seeds);

}  // namespace divjudge
