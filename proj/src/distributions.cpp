#include "divjudge/distributions.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "divjudge/errors.hpp"

namespace divjudge {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

GaussianDist::GaussianDist(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  if (mean_.size() == 0) {
    throw std::invalid_argument("GaussianDist: empty mean");
  }
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size()) {
    throw std::invalid_argument("GaussianDist: covariance shape does not match mean");
  }
  const double asym = (covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) {
    std::ostringstream os;
    os << "GaussianDist: covariance asymmetric by " << asym;
    throw NumericalError(os.str());
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("GaussianDist: covariance is not positive-definite");
  }
  chol_ = llt.matrixL();
  const double recon = (chol_ * chol_.transpose() - covariance_).cwiseAbs().maxCoeff();
  if (recon > 1e-8) {
    std::ostringstream os;
    os << "GaussianDist: Cholesky reconstruction error " << recon;
    throw NumericalError(os.str());
  }
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

double GaussianDist::log_pdf(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) {
    throw std::invalid_argument("GaussianDist::log_pdf: dimension mismatch");
  }
  // Quadratic form via forward substitution: solve L y = (x - mu).
  const Eigen::VectorXd y =
      chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return -0.5 * (dim() * kLog2Pi + log_det_ + y.squaredNorm());
}

Eigen::VectorXd GaussianDist::draw(Rng& rng) const {
  Eigen::VectorXd z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
  return mean_ + chol_ * z;
}

MixtureDist::MixtureDist(std::vector<GaussianDist> components,
                         Eigen::VectorXd weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) {
    throw std::invalid_argument("MixtureDist: needs at least one component");
  }
  if (weights_.size() != static_cast<Eigen::Index>(components_.size())) {
    throw std::invalid_argument("MixtureDist: weight count != component count");
  }
  if ((weights_.array() <= 0.0).any()) {
    throw std::invalid_argument("MixtureDist: weights must be positive");
  }
  if (std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("MixtureDist: weights must sum to 1");
  }
  const int d = components_[0].dim();
  for (const auto& c : components_) {
    if (c.dim() != d) {
      throw std::invalid_argument("MixtureDist: components have mixed dimensions");
    }
  }
  log_weights_ = weights_.array().log();
}

double MixtureDist::log_pdf(const Eigen::VectorXd& x) const {
  Eigen::VectorXd terms(weights_.size());
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    terms[k] = log_weights_[k] + components_[k].log_pdf(x);
  }
  return log_sum_exp(terms);
}

Eigen::VectorXd MixtureDist::draw(Rng& rng) const {
  const double u = rng.uniform();
  double cum = 0.0;
  Eigen::Index pick = weights_.size() - 1;
  for (Eigen::Index k = 0; k < weights_.size(); ++k) {
    cum += weights_[k];
    if (u < cum) {
      pick = k;
      break;
    }
  }
  return components_[pick].draw(rng);
}

int dim(const Distribution& dist) {
  return std::visit([](const auto& d) { return d.dim(); }, dist);
}

double log_pdf(const GaussianDist& dist, const Eigen::VectorXd& x) {
  return dist.log_pdf(x);
}

double log_pdf(const MixtureDist& dist, const Eigen::VectorXd& x) {
  return dist.log_pdf(x);
}

double log_pdf(const Distribution& dist, const Eigen::VectorXd& x) {
  return std::visit([&](const auto& d) { return d.log_pdf(x); }, dist);
}

namespace {

template <typename Dist>
DatasetMatrix sample_impl(const Dist& dist, int n, std::uint64_t seed,
                          std::string label) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd out(n, dist.dim());
  for (int i = 0; i < n; ++i) out.row(i) = dist.draw(rng);
  return DatasetMatrix(std::move(out), std::move(label));
}

}  // namespace

DatasetMatrix sample(const GaussianDist& dist, int n, std::uint64_t seed,
                     std::string label) {
  return sample_impl(dist, n, seed, std::move(label));
}

DatasetMatrix sample(const MixtureDist& dist, int n, std::uint64_t seed,
                     std::string label) {
  return sample_impl(dist, n, seed, std::move(label));
}

DatasetMatrix sample(const Distribution& dist, int n, std::uint64_t seed,
                     std::string label) {
  return std::visit(
      [&](const auto& d) { return sample_impl(d, n, seed, label); }, dist);
}

double gaussian_kl_analytical(const GaussianDist& p, const GaussianDist& q) {
  if (p.dim() != q.dim()) {
    throw std::invalid_argument("gaussian_kl_analytical: dimension mismatch");
  }
  const int d = p.dim();
  const auto& lq = q.chol();
  // tr(Sq^-1 Sp) = || Lq^-1 Lp ||_F^2
  const Eigen::MatrixXd w =
      lq.triangularView<Eigen::Lower>().solve(p.chol());
  const double trace_term = w.squaredNorm();
  const Eigen::VectorXd md =
      lq.triangularView<Eigen::Lower>().solve(q.mean() - p.mean());
  const double quad_term = md.squaredNorm();
  double kl = 0.5 * (trace_term + quad_term - d +
                     q.log_det_covariance() - p.log_det_covariance());
  if (kl < 0.0 && kl > -1e-9) kl = 0.0;  // floating-point dust near p == q
  return kl;
}

std::pair<GaussianDist, GaussianDist> random_gaussian_pair(
    int d, std::uint64_t seed) {
  if (d < 1) {
    throw std::invalid_argument("random_gaussian_pair: d must be >= 1");
  }
  Rng rng(seed);
  const auto draw_one = [&]() {
    Eigen::VectorXd mean(d);
    for (int i = 0; i < d; ++i) {
      mean[i] = rng.uniform();
    }
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        a(i, j) = rng.normal();
      }
    }
    Eigen::MatrixXd cov = a * a.transpose();
    cov.diagonal().array() += 0.5;
    return GaussianDist(std::move(mean), std::move(cov));
  };
  GaussianDist p = draw_one();
  GaussianDist q = draw_one();
  return {std::move(p), std::move(q)};
}

double mc_kl(const Distribution& p, const Distribution& q, int l,
             std::uint64_t seed) {
  if (l < 1) throw std::invalid_argument("mc_kl: L must be >= 1");
  if (dim(p) != dim(q)) throw std::invalid_argument("mc_kl: dimension mismatch");
  const DatasetMatrix xs = sample(p, l, seed);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const Eigen::VectorXd x = xs.values.row(i);
    acc += log_pdf(p, x) - log_pdf(q, x);
  }
  return acc / static_cast<double>(l);
}

double mc_js(const Distribution& p, const Distribution& q, int l,
             std::uint64_t seed) {
  if (l < 1) throw std::invalid_argument("mc_js: L must be >= 1");
  if (dim(p) != dim(q)) throw std::invalid_argument("mc_js: dimension mismatch");
  constexpr double kLn2 = 0.6931471805599453;
  const DatasetMatrix xp = sample(p, l, mix_seed(seed, 0));
  const DatasetMatrix xq = sample(q, l, mix_seed(seed, 1));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < xp.rows(); ++i) {
    const Eigen::VectorXd x = xp.values.row(i);
    const double lp = log_pdf(p, x);
    const double lq = log_pdf(q, x);
    const double lm = std::max(lp, lq) +
                      std::log1p(std::exp(-std::abs(lp - lq))) - kLn2;
    acc += 0.5 * (lp - lm);
  }
  for (Eigen::Index i = 0; i < xq.rows(); ++i) {
    const Eigen::VectorXd x = xq.values.row(i);
    const double lp = log_pdf(p, x);
    const double lq = log_pdf(q, x);
    const double lm = std::max(lp, lq) +
                      std::log1p(std::exp(-std::abs(lp - lq))) - kLn2;
    acc += 0.5 * (lq - lm);
  }
  return acc / static_cast<double>(l);
}

std::string to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::analytical: return "analytical";
    case EstimateMethod::mc: return "mc";
    case EstimateMethod::discriminator: return "discriminator";
  }
  return "unknown";
}

std::string to_string(DivergenceKind k) {
  return k == DivergenceKind::kl ? "kl" : "js";
}

EstimateMethod estimate_method_from_string(const std::string& s) {
  if (s == "analytical") return EstimateMethod::analytical;
  if (s == "mc") return EstimateMethod::mc;
  if (s == "discriminator") return EstimateMethod::discriminator;
  throw std::invalid_argument("unknown estimate method: " + s);
}

DivergenceKind divergence_kind_from_string(const std::string& s) {
  if (s == "kl") return DivergenceKind::kl;
  if (s == "js") return DivergenceKind::js;
  throw std::invalid_argument("unknown divergence kind: " + s);
}

DivergenceEstimate aggregate_estimates(const std::vector<double>& per_seed,
                                       EstimateMethod method,
                                       DivergenceKind kind,
                                       std::map<std::string, double> meta) {
  if (per_seed.empty()) {
    throw std::invalid_argument("aggregate_estimates: no values");
  }
  DivergenceEstimate est;
  est.method = method;
  est.kind = kind;
  est.meta = std::move(meta);
  est.meta["seeds"] = static_cast<double>(per_seed.size());
  double mean = 0.0;
  for (double v : per_seed) mean += v;
  mean /= static_cast<double>(per_seed.size());
  est.value = mean;
  if (per_seed.size() > 1) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - mean) * (v - mean);
    est.dispersion = std::sqrt(ss / static_cast<double>(per_seed.size() - 1));
  }
  // JS is nonnegative; finite-sample noise around p = q can push the mean
  // slightly below zero, so project onto the feasible range. Per-seed raw
  // values are reported elsewhere unprojected.
  if (est.kind == DivergenceKind::js && est.value < 0.0) {
    est.value = 0.0;
  }
  return est;
}

}  // namespace divjudge
