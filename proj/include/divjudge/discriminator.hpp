#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "divjudge/dataset.hpp"

namespace divjudge {

/// Training hyperparameters. The layer widths are fixed project-wide; no
/// per-experiment tuning happens anywhere.
struct DiscriminatorConfig {
  std::vector<int> hidden_sizes{256, 64, 32};
  double leaky_slope = 0.01;
  double dropout_rate = 0.2;
  double learning_rate = 1e-3;
  int batch_size = 64;  // clamped to the training-set size
  int max_epochs = 1000;
  int patience = 10;
  double holdout_fraction = 0.2;
  double prob_clamp = 1e-7;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Frozen binary classifier mapping a feature vector to the class-1
/// posterior probability. Inference is deterministic: dropout off,
/// batch norm on running statistics, inputs standardized with the stored
/// training-set moments. Immutable; safe for concurrent inference.
class TrainedDiscriminator {
 public:
  struct HiddenLayer {
    Eigen::MatrixXd weight;  // (out x in)
    Eigen::VectorXd bias;
    Eigen::VectorXd bn_gamma, bn_beta;
    Eigen::VectorXd bn_mean, bn_var;  // running statistics
  };

  int input_dim() const { return input_dim_; }

  /// Class-1 posterior per row, clamped to [eps, 1-eps].
  /// Rows are evaluated independently, so batch and single-row calls agree
  /// exactly. Throws on dimension mismatch or non-finite features.
  Eigen::VectorXd predict_proba(const DatasetMatrix& x) const;
  double predict_proba_row(const Eigen::VectorXd& x) const;

  const std::vector<double>& train_loss_history() const { return train_hist_; }
  const std::vector<double>& holdout_loss_history() const { return holdout_hist_; }
  /// Two-term loss of the restored parameters on the training split.
  double final_train_loss() const { return final_train_loss_; }
  /// Best holdout loss (the early-stopping criterion value).
  double final_validation_loss() const { return final_val_loss_; }
  int best_epoch() const { return best_epoch_; }
  const DiscriminatorConfig& config() const { return config_; }
  double prob_clamp() const { return config_.prob_clamp; }

  const std::vector<HiddenLayer>& hidden_layers() const { return hidden_; }
  const Eigen::RowVectorXd& output_weight() const { return out_weight_; }
  double output_bias() const { return out_bias_; }
  const Eigen::VectorXd& feature_mean() const { return feat_mean_; }
  const Eigen::VectorXd& feature_std() const { return feat_std_; }

  /// Versioned JSON model format; load reproduces predictions exactly.
  std::string to_json_string() const;
  static TrainedDiscriminator from_json_string(const std::string& text);
  void save(const std::string& path) const;
  static TrainedDiscriminator load(const std::string& path);

 private:
  friend class Trainer;
  TrainedDiscriminator() = default;

  int input_dim_ = 0;
  std::vector<HiddenLayer> hidden_;
  Eigen::RowVectorXd out_weight_;
  double out_bias_ = 0.0;
  Eigen::VectorXd feat_mean_, feat_std_;
  DiscriminatorConfig config_;
  std::vector<double> train_hist_, holdout_hist_;
  double final_train_loss_ = 0.0;
  double final_val_loss_ = 0.0;
  int best_epoch_ = -1;
};

/// Trains the classifier on class-1 rows x_p and class-0 rows x_q with
/// minibatch Adam on binary cross-entropy, early-stopped on a stratified
/// holdout split. Deterministic given config.seed.
TrainedDiscriminator train(const DatasetMatrix& x_p, const DatasetMatrix& x_q,
                           const DiscriminatorConfig& config);

/// Two-term binary cross-entropy: the sum of the class-conditional means
///   -mean over y=1 of log(prob) - mean over y=0 of log(1-prob).
/// Chance-level probs of 0.5 therefore score 2 ln 2 = ln 4.
double bce_loss(const Eigen::VectorXd& probs, const std::vector<int>& labels);

}  // namespace divjudge
