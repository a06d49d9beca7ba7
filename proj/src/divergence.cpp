#include "divjudge/divergence.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "divjudge/errors.hpp"
#include "divjudge/rng.hpp"

namespace divjudge {

namespace {

constexpr double kLn2 = std::numbers::ln2;

void require_nonempty(const Eigen::VectorXd& post, const char* what) {
  if (post.size() == 0) {
    throw std::invalid_argument(std::string(what) +
                                ": posterior vector is empty");
  }
  for (Eigen::Index i = 0; i < post.size(); ++i) {
    if (!(post[i] > 0.0 && post[i] < 1.0)) {
      throw std::invalid_argument(std::string(what) + ": posterior " +
                                  std::to_string(post[i]) +
                                  " outside (0, 1) at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

double logit(double z) {
  if (!(z > 0.0 && z < 1.0)) {
    throw std::invalid_argument("logit: argument " + std::to_string(z) +
                                " outside (0, 1)");
  }
  return std::log(z) - std::log1p(-z);
}

RatioEstimate log_density_ratio(const TrainedDiscriminator& disc,
                                const DatasetMatrix& x, SampleClass source) {
  const Eigen::VectorXd post = disc.predict_proba(x);
  RatioEstimate out;
  out.source = source;
  out.log_ratio.resize(post.size());
  for (Eigen::Index i = 0; i < post.size(); ++i) {
    out.log_ratio[i] = logit(post[i]);
  }
  return out;
}

double estimate_kl_from_posteriors(const Eigen::VectorXd& post_p) {
  require_nonempty(post_p, "estimate_kl");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < post_p.size(); ++i) {
    acc += logit(post_p[i]);
  }
  return acc / static_cast<double>(post_p.size());
}

double estimate_js_from_posteriors(const Eigen::VectorXd& post_p,
                                   const Eigen::VectorXd& post_q) {
  require_nonempty(post_p, "estimate_js");
  require_nonempty(post_q, "estimate_js");
  double acc_p = 0.0;
  for (Eigen::Index i = 0; i < post_p.size(); ++i) {
    acc_p += std::log(post_p[i]);
  }
  double acc_q = 0.0;
  for (Eigen::Index i = 0; i < post_q.size(); ++i) {
    acc_q += std::log1p(-post_q[i]);
  }
  return kLn2 + 0.5 * acc_p / static_cast<double>(post_p.size()) +
         0.5 * acc_q / static_cast<double>(post_q.size());
}

double estimate_kl(const TrainedDiscriminator& disc,
                   const DatasetMatrix& x_p_eval) {
  return estimate_kl_from_posteriors(disc.predict_proba(x_p_eval));
}

double estimate_js(const TrainedDiscriminator& disc,
                   const DatasetMatrix& x_p_eval,
                   const DatasetMatrix& x_q_eval) {
  return estimate_js_from_posteriors(disc.predict_proba(x_p_eval),
                                     disc.predict_proba(x_q_eval));
}

double js_from_loss(double final_loss) {
  if (!std::isfinite(final_loss)) {
    throw std::invalid_argument("js_from_loss: loss is not finite");
  }
  return (2.0 * kLn2 - final_loss) / 2.0;
}

DistributionSource::DistributionSource(Distribution dist, std::string label)
    : dist_(std::move(dist)), label_(std::move(label)) {}

int DistributionSource::dim() const { return divjudge::dim(dist_); }

std::pair<DatasetMatrix, DatasetMatrix> DistributionSource::draw(
    int n_train, int n_eval, std::uint64_t seed) const {
  if (n_train < 1 || n_eval < 1) {
    throw std::invalid_argument("DistributionSource::draw: sizes must be >= 1");
  }
  DatasetMatrix train = sample(dist_, n_train, mix_seed(seed, 0), label_);
  DatasetMatrix eval = sample(dist_, n_eval, mix_seed(seed, 1), label_);
  return {std::move(train), std::move(eval)};
}

FixedDatasetSource::FixedDatasetSource(DatasetMatrix data)
    : data_(std::move(data)) {
  if (data_.rows() == 0) {
    throw DataError("FixedDatasetSource: dataset '" + data_.label +
                    "' is empty");
  }
}

int FixedDatasetSource::dim() const { return static_cast<int>(data_.cols()); }

std::pair<DatasetMatrix, DatasetMatrix> FixedDatasetSource::draw(
    int n_train, int n_eval, std::uint64_t seed) const {
  if (n_train < 1 || n_eval < 1) {
    throw std::invalid_argument("FixedDatasetSource::draw: sizes must be >= 1");
  }
  const int need = n_train + n_eval;
  const int have = static_cast<int>(data_.rows());
  if (have < need) {
    throw DataError("FixedDatasetSource: dataset '" + data_.label + "' has " +
                    std::to_string(have) + " rows but " + std::to_string(need) +
                    " are required for disjoint train/eval draws");
  }
  std::vector<int> order(static_cast<std::size_t>(have));
  for (int i = 0; i < have; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  DatasetMatrix train;
  train.label = data_.label;
  train.values.resize(n_train, data_.cols());
  for (int i = 0; i < n_train; ++i) {
    train.values.row(i) = data_.values.row(order[static_cast<std::size_t>(i)]);
  }
  DatasetMatrix eval;
  eval.label = data_.label;
  eval.values.resize(n_eval, data_.cols());
  for (int i = 0; i < n_eval; ++i) {
    eval.values.row(i) =
        data_.values.row(order[static_cast<std::size_t>(n_train + i)]);
  }
  return {std::move(train), std::move(eval)};
}

EnsembleResult ensemble_estimate(const SampleSource& p_source,
                                 const SampleSource& q_source,
                                 const DiscriminatorConfig& config, int m,
                                 int l, int n_seeds) {
  if (m < 4) {
    throw std::invalid_argument(
        "ensemble_estimate: training size m must be >= 4, got " +
        std::to_string(m));
  }
  if (l < 1) {
    throw std::invalid_argument(
        "ensemble_estimate: evaluation size l must be >= 1, got " +
        std::to_string(l));
  }
  if (n_seeds < 2) {
    throw std::invalid_argument(
        "ensemble_estimate: n_seeds must be >= 2 for a dispersion estimate, "
        "got " +
        std::to_string(n_seeds));
  }
  if (p_source.dim() != q_source.dim()) {
    throw std::invalid_argument(
        "ensemble_estimate: sources have different dimensions (" +
        std::to_string(p_source.dim()) + " vs " +
        std::to_string(q_source.dim()) + ")");
  }

  EnsembleResult result;
  result.seeds.reserve(static_cast<std::size_t>(n_seeds));
  std::vector<double> kl_values;
  std::vector<double> js_values;
  kl_values.reserve(static_cast<std::size_t>(n_seeds));
  js_values.reserve(static_cast<std::size_t>(n_seeds));

  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t replicate =
        mix_seed(config.seed, static_cast<std::uint64_t>(s));
    auto [p_train, p_eval] =
        p_source.draw(m, l, mix_seed(replicate, 11));
    auto [q_train, q_eval] =
        q_source.draw(m, l, mix_seed(replicate, 13));

    DiscriminatorConfig seed_config = config;
    seed_config.seed = mix_seed(replicate, 17);
    const TrainedDiscriminator disc = train(p_train, q_train, seed_config);

    SeedOutcome outcome;
    outcome.kl = estimate_kl(disc, p_eval);
    outcome.js = estimate_js(disc, p_eval, q_eval);
    outcome.final_train_loss = disc.final_train_loss();
    outcome.final_validation_loss = disc.final_validation_loss();
    outcome.train_loss_history = disc.train_loss_history();
    kl_values.push_back(outcome.kl);
    js_values.push_back(outcome.js);
    result.seeds.push_back(std::move(outcome));
  }

  std::map<std::string, double> meta;
  meta["m"] = static_cast<double>(m);
  meta["l"] = static_cast<double>(l);
  result.kl = aggregate_estimates(kl_values, EstimateMethod::discriminator,
                                  DivergenceKind::kl, meta);
  result.js = aggregate_estimates(js_values, EstimateMethod::discriminator,
                                  DivergenceKind::js, meta);
  return result;
}

}  // namespace divjudge
