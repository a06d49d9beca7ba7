#include "divjudge/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "divjudge/errors.hpp"
#include "divjudge/rng.hpp"

namespace divjudge {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

double clamp_prob(double p, double eps) {
  return std::min(std::max(p, eps), 1.0 - eps);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void DiscriminatorConfig::validate() const {
  if (hidden_sizes.empty()) throw std::invalid_argument("config: no hidden layers");
  for (int h : hidden_sizes) {
    if (h < 1) throw std::invalid_argument("config: hidden size must be >= 1");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("config: holdout_fraction must be in (0,1)");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("config: dropout_rate must be in [0,1)");
  }
  if (!(prob_clamp > 0.0 && prob_clamp <= 0.01)) {
    throw std::invalid_argument("config: prob_clamp must be in (0, 0.01]");
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("config: max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
}

double bce_loss(const Eigen::VectorXd& probs, const std::vector<int>& labels) {
  if (probs.size() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("bce_loss: length mismatch");
  }
  double sum_p = 0.0, sum_q = 0.0;
  int n_p = 0, n_q = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("bce_loss: probabilities must be in (0,1)");
    }
    if (labels[static_cast<std::size_t>(i)] == 1) {
      sum_p -= std::log(p);
      ++n_p;
    } else {
      sum_q -= std::log(1.0 - p);
      ++n_q;
    }
  }
  if (n_p == 0 || n_q == 0) {
    throw std::invalid_argument("bce_loss: both classes must be present");
  }
  return sum_p / n_p + sum_q / n_q;
}

namespace {

// All mutable training state. Matrices carry one row per sample.
class TrainerState {
 public:
  struct Layer {
    Eigen::MatrixXd w;               // (out x in)
    Eigen::VectorXd b, gamma, beta;
    Eigen::VectorXd run_mean, run_var;
    // Adam moments
    Eigen::MatrixXd w_m, w_v;
    Eigen::VectorXd b_m, b_v, g_m, g_v, be_m, be_v;
    // per-batch caches
    Eigen::MatrixXd z_hat, post;     // normalized pre-activation, layer output
    Eigen::MatrixXd act_mask;        // leaky-relu slope per element
    Eigen::MatrixXd drop_mask;
    Eigen::VectorXd inv_std;
  };

  TrainerState(int input_dim, const DiscriminatorConfig& cfg, Rng& rng)
      : cfg_(cfg) {
    int fan_in = input_dim;
    for (int width : cfg.hidden_sizes) {
      layers_.push_back(make_layer(width, fan_in, cfg.leaky_slope, rng));
      fan_in = width;
    }
    // He init with unit gain for the sigmoid head
    const double std_out = 1.0 / std::sqrt(static_cast<double>(fan_in));
    out_w_.resize(fan_in);
    for (int i = 0; i < fan_in; ++i) out_w_[i] = std_out * rng.normal();
    out_b_ = 0.0;
    out_w_m_ = Eigen::VectorXd::Zero(fan_in);
    out_w_v_ = Eigen::VectorXd::Zero(fan_in);
  }

  // Forward pass; training mode updates batch-norm running stats and applies
  // dropout. Returns unclamped sigmoid outputs.
  Eigen::VectorXd forward(const Eigen::MatrixXd& x, bool training, Rng& rng) {
    Eigen::MatrixXd h = x;
    const auto n = static_cast<double>(x.rows());
    for (auto& layer : layers_) {
      Eigen::MatrixXd z =
          (h * layer.w.transpose()).rowwise() + layer.b.transpose();
      if (training) {
        const Eigen::RowVectorXd mu = z.colwise().mean();
        const Eigen::MatrixXd centered = z.rowwise() - mu;
        const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
        layer.inv_std = (var.array() + kBnEps).rsqrt().transpose();
        layer.z_hat = centered * layer.inv_std.asDiagonal();
        const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
        layer.run_mean = (1.0 - kBnMomentum) * layer.run_mean +
                         kBnMomentum * mu.transpose();
        layer.run_var = (1.0 - kBnMomentum) * layer.run_var +
                        kBnMomentum * unbias * var.transpose();
        z = (layer.z_hat * layer.gamma.asDiagonal()).rowwise() +
            layer.beta.transpose();
      } else {
        const Eigen::VectorXd inv =
            (layer.run_var.array() + kBnEps).rsqrt().matrix();
        z = ((z.rowwise() - layer.run_mean.transpose()) * inv.asDiagonal() *
             layer.gamma.asDiagonal())
                .rowwise() +
            layer.beta.transpose();
      }
      layer.act_mask =
          (z.array() > 0.0).select(Eigen::MatrixXd::Ones(z.rows(), z.cols()),
                                   Eigen::MatrixXd::Constant(z.rows(), z.cols(),
                                                             cfg_.leaky_slope));
      h = z.cwiseProduct(layer.act_mask);
      if (training && cfg_.dropout_rate > 0.0) {
        const double keep = 1.0 - cfg_.dropout_rate;
        layer.drop_mask.resize(h.rows(), h.cols());
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
          for (Eigen::Index c = 0; c < h.cols(); ++c) {
            layer.drop_mask(r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
          }
        }
        h = h.cwiseProduct(layer.drop_mask);
      }
      layer.post = h;
    }
    Eigen::VectorXd logits = h * out_w_ + Eigen::VectorXd::Constant(h.rows(), out_b_);
    return logits.unaryExpr([](double v) { return sigmoid(v); });
  }

  // Backward from d(loss)/d(logit) and one Adam step.
  void backward_and_step(const Eigen::MatrixXd& x, const Eigen::VectorXd& dlogit) {
    ++adam_t_;
    const Eigen::MatrixXd& last = layers_.back().post;
    const Eigen::VectorXd grad_out_w = last.transpose() * dlogit;
    const double grad_out_b = dlogit.sum();
    Eigen::MatrixXd dh = dlogit * out_w_.transpose();

    struct Grads {
      Eigen::MatrixXd w;
      Eigen::VectorXd b, gamma, beta;
    };
    std::vector<Grads> grads(layers_.size());

    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
      auto& layer = layers_[li];
      if (cfg_.dropout_rate > 0.0) dh = dh.cwiseProduct(layer.drop_mask);
      Eigen::MatrixXd da = dh.cwiseProduct(layer.act_mask);
      grads[li].gamma = (da.cwiseProduct(layer.z_hat)).colwise().sum();
      grads[li].beta = da.colwise().sum();
      // batch-norm backward (batch statistics)
      const double n = static_cast<double>(da.rows());
      const Eigen::MatrixXd dzh = da * layer.gamma.asDiagonal();
      const Eigen::RowVectorXd sum_dzh = dzh.colwise().sum();
      const Eigen::RowVectorXd sum_dzh_zh =
          (dzh.cwiseProduct(layer.z_hat)).colwise().sum();
      Eigen::MatrixXd dz = (dzh * n).rowwise() - sum_dzh;
      dz -= layer.z_hat * sum_dzh_zh.transpose().asDiagonal();
      dz = (dz * layer.inv_std.asDiagonal()) / n;

      const Eigen::MatrixXd& prev =
          (li == 0) ? x : layers_[li - 1].post;
      grads[li].w = dz.transpose() * prev;
      grads[li].b = dz.colwise().sum();
      if (li > 0) dh = dz * layer.w;

      adam_update(layer.w, layer.w_m, layer.w_v, grads[li].w);
      adam_update(layer.b, layer.b_m, layer.b_v, grads[li].b);
      adam_update(layer.gamma, layer.g_m, layer.g_v, grads[li].gamma);
      adam_update(layer.beta, layer.be_m, layer.be_v, grads[li].beta);
    }
    adam_update(out_w_, out_w_m_, out_w_v_, grad_out_w);
    adam_scalar(out_b_, out_b_m_, out_b_v_, grad_out_b);
  }

  // Inference-mode forward for a single row vector.
  double forward_row(const Eigen::VectorXd& x) const {
    Eigen::VectorXd h = x;
    for (const auto& layer : layers_) {
      Eigen::VectorXd z = layer.w * h + layer.b;
      z = (z - layer.run_mean).cwiseProduct(
              (layer.run_var.array() + kBnEps).rsqrt().matrix());
      z = z.cwiseProduct(layer.gamma) + layer.beta;
      h = z.unaryExpr([this](double v) {
        return v > 0.0 ? v : cfg_.leaky_slope * v;
      });
    }
    return sigmoid(out_w_.dot(h) + out_b_);
  }

  std::vector<Layer>& layers() { return layers_; }
  const Eigen::VectorXd& out_w() const { return out_w_; }
  double out_b() const { return out_b_; }

  struct Snapshot {
    std::vector<Layer> layers;
    Eigen::VectorXd out_w;
    double out_b;
  };
  Snapshot snapshot() const { return {layers_, out_w_, out_b_}; }
  void restore(const Snapshot& s) {
    layers_ = s.layers;
    out_w_ = s.out_w;
    out_b_ = s.out_b;
  }

 private:
  static Layer make_layer(int width, int fan_in, double slope, Rng& rng) {
    Layer layer;
    const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
    const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
    layer.w.resize(width, fan_in);
    for (int r = 0; r < width; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = stddev * rng.normal();
    }
    layer.b = Eigen::VectorXd::Zero(width);
    layer.gamma = Eigen::VectorXd::Ones(width);
    layer.beta = Eigen::VectorXd::Zero(width);
    layer.run_mean = Eigen::VectorXd::Zero(width);
    layer.run_var = Eigen::VectorXd::Ones(width);
    layer.w_m = Eigen::MatrixXd::Zero(width, fan_in);
    layer.w_v = Eigen::MatrixXd::Zero(width, fan_in);
    layer.b_m = layer.b_v = layer.g_m = layer.g_v = layer.be_m = layer.be_v =
        Eigen::VectorXd::Zero(width);
    return layer;
  }

  template <typename T>
  void adam_update(T& param, T& m, T& v, const T& grad) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = (kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * grad.array().square())
            .matrix();
    const double c1 = 1.0 - std::pow(kAdamBeta1, adam_t_);
    const double c2 = 1.0 - std::pow(kAdamBeta2, adam_t_);
    param.array() -= cfg_.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + kAdamEps);
  }

  void adam_scalar(double& param, double& m, double& v, double grad) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
    const double c1 = 1.0 - std::pow(kAdamBeta1, adam_t_);
    const double c2 = 1.0 - std::pow(kAdamBeta2, adam_t_);
    param -= cfg_.learning_rate * (m / c1) / (std::sqrt(v / c2) + kAdamEps);
  }

  DiscriminatorConfig cfg_;
  std::vector<Layer> layers_;
  Eigen::VectorXd out_w_, out_w_m_, out_w_v_;
  double out_b_ = 0.0, out_b_m_ = 0.0, out_b_v_ = 0.0;
  int adam_t_ = 0;
};

// Two-term loss from clamped probabilities plus per-class counts.
double two_term_loss(const Eigen::VectorXd& probs,
                     const std::vector<int>& labels, double eps) {
  double sum_p = 0.0, sum_q = 0.0;
  int n_p = 0, n_q = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i], eps);
    if (labels[static_cast<std::size_t>(i)] == 1) {
      sum_p -= std::log(p);
      ++n_p;
    } else {
      sum_q -= std::log(1.0 - p);
      ++n_q;
    }
  }
  return sum_p / std::max(n_p, 1) + sum_q / std::max(n_q, 1);
}

}  // namespace

class Trainer {
 public:
  static TrainedDiscriminator run(const DatasetMatrix& x_p,
                                  const DatasetMatrix& x_q,
                                  const DiscriminatorConfig& config) {
    config.validate();
    if (x_p.cols() != x_q.cols()) {
      throw std::invalid_argument("train: class column counts differ");
    }
    if (x_p.rows() < 2 || x_q.rows() < 2) {
      throw std::invalid_argument("train: each class needs at least 2 rows");
    }
    if (!x_p.values.allFinite() || !x_q.values.allFinite()) {
      throw NumericalError("train: non-finite input features");
    }
    const int d = static_cast<int>(x_p.cols());
    const auto n_p = x_p.rows();
    const auto n_q = x_q.rows();
    const auto n_total = n_p + n_q;

    // Standardization statistics over everything handed to training.
    Eigen::MatrixXd all(n_total, d);
    all.topRows(n_p) = x_p.values;
    all.bottomRows(n_q) = x_q.values;
    Eigen::VectorXd feat_mean = all.colwise().mean();
    Eigen::VectorXd feat_std(d);
    for (int c = 0; c < d; ++c) {
      const double var =
          (all.col(c).array() - feat_mean[c]).square().mean();
      const double sd = std::sqrt(var);
      feat_std[c] = sd > 1e-12 ? sd : 1.0;
    }
    Eigen::MatrixXd std_all =
        (all.rowwise() - feat_mean.transpose()).array().rowwise() /
        feat_std.transpose().array();
    std::vector<int> labels(static_cast<std::size_t>(n_total), 0);
    std::fill(labels.begin(), labels.begin() + n_p, 1);

    Rng rng(config.seed);

    // Stratified holdout split: shuffle each class, carve the tail.
    std::vector<Eigen::Index> idx_p(n_p), idx_q(n_q);
    std::iota(idx_p.begin(), idx_p.end(), Eigen::Index{0});
    std::iota(idx_q.begin(), idx_q.end(), n_p);
    rng.shuffle(idx_p);
    rng.shuffle(idx_q);
    const auto hold_p = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(config.holdout_fraction * n_p), 1, n_p - 1);
    const auto hold_q = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(config.holdout_fraction * n_q), 1, n_q - 1);
    std::vector<Eigen::Index> train_idx, hold_idx;
    train_idx.insert(train_idx.end(), idx_p.begin(), idx_p.end() - hold_p);
    train_idx.insert(train_idx.end(), idx_q.begin(), idx_q.end() - hold_q);
    hold_idx.insert(hold_idx.end(), idx_p.end() - hold_p, idx_p.end());
    hold_idx.insert(hold_idx.end(), idx_q.end() - hold_q, idx_q.end());

    auto gather = [&](const std::vector<Eigen::Index>& rows) {
      Eigen::MatrixXd m(rows.size(), d);
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        m.row(i) = std_all.row(rows[i]);
        y[i] = labels[static_cast<std::size_t>(rows[i])];
      }
      return std::pair{m, y};
    };
    auto [hold_x, hold_y] = gather(hold_idx);

    TrainerState state(d, config, rng);
    const auto n_train = static_cast<Eigen::Index>(train_idx.size());
    const Eigen::Index batch =
        std::min<Eigen::Index>(config.batch_size, n_train);

    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int stale = 0;
    TrainerState::Snapshot best;
    std::vector<double> train_hist, hold_hist;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
      rng.shuffle(train_idx);
      double ep_sum_p = 0.0, ep_sum_q = 0.0;
      Eigen::Index ep_n_p = 0, ep_n_q = 0;
      Eigen::Index start = 0;
      while (start < n_train) {
        Eigen::Index len = std::min(batch, n_train - start);
        // a trailing single row would degenerate the batch statistics
        if (n_train - start - len == 1) len += 1;
        Eigen::MatrixXd bx(len, d);
        Eigen::VectorXd by(len);
        for (Eigen::Index i = 0; i < len; ++i) {
          bx.row(i) = std_all.row(train_idx[start + i]);
          by[i] = labels[static_cast<std::size_t>(train_idx[start + i])];
        }
        const Eigen::VectorXd probs = state.forward(bx, true, rng);
        for (Eigen::Index i = 0; i < len; ++i) {
          const double p = clamp_prob(probs[i], config.prob_clamp);
          if (by[i] > 0.5) {
            ep_sum_p -= std::log(p);
            ++ep_n_p;
          } else {
            ep_sum_q -= std::log(1.0 - p);
            ++ep_n_q;
          }
        }
        // gradient of the two-term loss scaled as 2x the balanced mean
        const Eigen::VectorXd dlogit =
            (probs - by) * (2.0 / static_cast<double>(len));
        state.backward_and_step(bx, dlogit);
        start += len;
      }
      train_hist.push_back(ep_sum_p / std::max<Eigen::Index>(ep_n_p, 1) +
                           ep_sum_q / std::max<Eigen::Index>(ep_n_q, 1));

      Eigen::VectorXd hold_probs(hold_x.rows());
      for (Eigen::Index i = 0; i < hold_x.rows(); ++i) {
        hold_probs[i] = state.forward_row(hold_x.row(i));
      }
      const double hold_loss =
          two_term_loss(hold_probs, hold_y, config.prob_clamp);
      hold_hist.push_back(hold_loss);

      if (hold_loss < best_loss) {
        best_loss = hold_loss;
        best_epoch = epoch;
        best = state.snapshot();
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
    state.restore(best);

    TrainedDiscriminator model;
    model.input_dim_ = d;
    model.config_ = config;
    model.feat_mean_ = std::move(feat_mean);
    model.feat_std_ = std::move(feat_std);
    for (const auto& layer : state.layers()) {
      TrainedDiscriminator::HiddenLayer out;
      out.weight = layer.w;
      out.bias = layer.b;
      out.bn_gamma = layer.gamma;
      out.bn_beta = layer.beta;
      out.bn_mean = layer.run_mean;
      out.bn_var = layer.run_var;
      model.hidden_.push_back(std::move(out));
    }
    model.out_weight_ = state.out_w().transpose();
    model.out_bias_ = state.out_b();
    model.train_hist_ = std::move(train_hist);
    model.holdout_hist_ = std::move(hold_hist);
    model.final_val_loss_ = best_loss;
    model.best_epoch_ = best_epoch;

    for (const auto& layer : model.hidden_) {
      if (!layer.weight.allFinite() || !layer.bn_mean.allFinite() ||
          !layer.bn_var.allFinite()) {
        throw NumericalError("train: non-finite parameters after training");
      }
    }

    auto [train_x, train_y] = gather(train_idx);
    Eigen::VectorXd train_probs(train_x.rows());
    for (Eigen::Index i = 0; i < train_x.rows(); ++i) {
      train_probs[i] = state.forward_row(train_x.row(i));
    }
    model.final_train_loss_ =
        two_term_loss(train_probs, train_y, config.prob_clamp);
    return model;
  }
};

TrainedDiscriminator train(const DatasetMatrix& x_p, const DatasetMatrix& x_q,
                           const DiscriminatorConfig& config) {
  return Trainer::run(x_p, x_q, config);
}

double TrainedDiscriminator::predict_proba_row(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_) {
    throw std::invalid_argument("predict_proba: dimension mismatch");
  }
  if (!x.allFinite()) {
    throw NumericalError("predict_proba: non-finite features");
  }
  Eigen::VectorXd h =
      (x - feat_mean_).cwiseQuotient(feat_std_);
  for (const auto& layer : hidden_) {
    Eigen::VectorXd z = layer.weight * h + layer.bias;
    z = (z - layer.bn_mean)
            .cwiseProduct((layer.bn_var.array() + kBnEps).rsqrt().matrix());
    z = z.cwiseProduct(layer.bn_gamma) + layer.bn_beta;
    const double slope = config_.leaky_slope;
    h = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  }
  const double p = sigmoid(out_weight_.dot(h) + out_bias_);
  return clamp_prob(p, config_.prob_clamp);
}

Eigen::VectorXd TrainedDiscriminator::predict_proba(const DatasetMatrix& x) const {
  if (x.cols() != input_dim_) {
    throw std::invalid_argument("predict_proba: dimension mismatch");
  }
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[i] = predict_proba_row(x.values.row(i));
  }
  return out;
}

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                           static_cast<Eigen::Index>(data.size()));
}

nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
  const auto n_rows = static_cast<Eigen::Index>(j.size());
  if (n_rows == 0) return {};
  const auto n_cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto row = j[static_cast<std::size_t>(r)].get<std::vector<double>>();
    m.row(r) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), n_cols);
  }
  return m;
}

}  // namespace

std::string TrainedDiscriminator::to_json_string() const {
  nlohmann::json j;
  j["format"] = "divjudge-discriminator";
  j["format_version"] = 1;
  j["input_dim"] = input_dim_;
  j["config"] = {
      {"hidden_sizes", config_.hidden_sizes},
      {"leaky_slope", config_.leaky_slope},
      {"dropout_rate", config_.dropout_rate},
      {"learning_rate", config_.learning_rate},
      {"batch_size", config_.batch_size},
      {"max_epochs", config_.max_epochs},
      {"patience", config_.patience},
      {"holdout_fraction", config_.holdout_fraction},
      {"prob_clamp", config_.prob_clamp},
      {"seed", config_.seed},
  };
  j["feature_mean"] = vec_to_json(feat_mean_);
  j["feature_std"] = vec_to_json(feat_std_);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : hidden_) {
    layers.push_back({
        {"weight", mat_to_json(layer.weight)},
        {"bias", vec_to_json(layer.bias)},
        {"bn_gamma", vec_to_json(layer.bn_gamma)},
        {"bn_beta", vec_to_json(layer.bn_beta)},
        {"bn_mean", vec_to_json(layer.bn_mean)},
        {"bn_var", vec_to_json(layer.bn_var)},
    });
  }
  j["hidden_layers"] = layers;
  j["output_weight"] = std::vector<double>(out_weight_.begin(), out_weight_.end());
  j["output_bias"] = out_bias_;
  j["train_loss_history"] = train_hist_;
  j["holdout_loss_history"] = holdout_hist_;
  j["final_train_loss"] = final_train_loss_;
  j["final_validation_loss"] = final_val_loss_;
  j["best_epoch"] = best_epoch_;
  return j.dump(2);
}

TrainedDiscriminator TrainedDiscriminator::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("model parse error: ") + e.what());
  }
  if (j.value("format", "") != "divjudge-discriminator" ||
      j.value("format_version", 0) != 1) {
    throw DataError("unrecognized model format");
  }
  TrainedDiscriminator m;
  m.input_dim_ = j.at("input_dim").get<int>();
  const auto& c = j.at("config");
  m.config_.hidden_sizes = c.at("hidden_sizes").get<std::vector<int>>();
  m.config_.leaky_slope = c.at("leaky_slope").get<double>();
  m.config_.dropout_rate = c.at("dropout_rate").get<double>();
  m.config_.learning_rate = c.at("learning_rate").get<double>();
  m.config_.batch_size = c.at("batch_size").get<int>();
  m.config_.max_epochs = c.at("max_epochs").get<int>();
  m.config_.patience = c.at("patience").get<int>();
  m.config_.holdout_fraction = c.at("holdout_fraction").get<double>();
  m.config_.prob_clamp = c.at("prob_clamp").get<double>();
  m.config_.seed = c.at("seed").get<std::uint64_t>();
  m.feat_mean_ = vec_from_json(j.at("feature_mean"));
  m.feat_std_ = vec_from_json(j.at("feature_std"));
  for (const auto& jl : j.at("hidden_layers")) {
    HiddenLayer layer;
    layer.weight = mat_from_json(jl.at("weight"));
    layer.bias = vec_from_json(jl.at("bias"));
    layer.bn_gamma = vec_from_json(jl.at("bn_gamma"));
    layer.bn_beta = vec_from_json(jl.at("bn_beta"));
    layer.bn_mean = vec_from_json(jl.at("bn_mean"));
    layer.bn_var = vec_from_json(jl.at("bn_var"));
    m.hidden_.push_back(std::move(layer));
  }
  const auto ow = j.at("output_weight").get<std::vector<double>>();
  m.out_weight_ = Eigen::Map<const Eigen::RowVectorXd>(
      ow.data(), static_cast<Eigen::Index>(ow.size()));
  m.out_bias_ = j.at("output_bias").get<double>();
  m.train_hist_ = j.at("train_loss_history").get<std::vector<double>>();
  m.holdout_hist_ = j.at("holdout_loss_history").get<std::vector<double>>();
  m.final_train_loss_ = j.at("final_train_loss").get<double>();
  m.final_val_loss_ = j.at("final_validation_loss").get<double>();
  m.best_epoch_ = j.at("best_epoch").get<int>();
  return m;
}

void TrainedDiscriminator::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << to_json_string() << '\n';
}

TrainedDiscriminator TrainedDiscriminator::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

}  // namespace divjudge
