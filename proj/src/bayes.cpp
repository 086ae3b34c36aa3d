#include "icl/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace icl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Eigen::Map<const Eigen::VectorXd> as_vec(const Task& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}

// Separable prior curvature weights for IRLS (Gaussian exact; StudentT via
// the scale-mixture posterior mean of the latent precision; GenNormal via
// the standard |.|^beta reweighting with a floor near zero).
double irls_precision(const PriorSpec& prior, double theta_j) {
  const double s = prior.scale();
  switch (prior.family) {
    case PriorFamily::Gaussian:
      return 1.0 / (s * s);
    case PriorFamily::StudentT: {
      const double nu = prior.shape;
      return (nu + 1.0) / (nu * s * s + theta_j * theta_j);
    }
    case PriorFamily::GeneralizedNormal: {
      const double b = prior.shape;
      const double a = s;
      const double az = std::max(std::abs(theta_j), 1e-3 * a);
      return b * std::pow(az / a, b - 2.0) / (a * a);
    }
  }
  return 1.0;
}

struct MvtComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol;  // lower Cholesky of the scale matrix
  double df = 4.0;
  double log_mix = 0.0;  // log mixture weight
};

struct MixtureProposal {
  std::vector<MvtComponent> comps;
  double prior_log_mix = -std::numeric_limits<double>::infinity();
  const PriorSpec* prior = nullptr;

  Task sample(Rng& rng) const {
    double u = rng.uniform();
    double acc = std::exp(prior_log_mix);
    if (u < acc && prior) {
      return sample_tasks(*prior, 1, rng)[0];
    }
    for (const auto& c : comps) {
      acc += std::exp(c.log_mix);
      if (u < acc || &c == &comps.back()) {
        const int d = static_cast<int>(c.mean.size());
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j) z(j) = rng.normal();
        double g = rng.chi_square(c.df) / c.df;
        Eigen::VectorXd x = c.mean + (c.chol * z) / std::sqrt(g);
        return Task(x.data(), x.data() + d);
      }
    }
    return sample_tasks(*prior, 1, rng)[0];
  }

  double log_pdf(const Task& t) const {
    std::vector<double> terms;
    terms.reserve(comps.size() + 1);
    if (prior && std::isfinite(prior_log_mix))
      terms.push_back(prior_log_mix + log_density(*prior, t));
    const auto x = as_vec(t);
    for (const auto& c : comps) {
      const int d = static_cast<int>(c.mean.size());
      Eigen::VectorXd sol = c.chol.triangularView<Eigen::Lower>().solve(x - c.mean);
      double q = sol.squaredNorm();
      double logdet = 0.0;
      for (int j = 0; j < d; ++j) logdet += std::log(c.chol(j, j));
      double lp = std::lgamma(0.5 * (c.df + d)) - std::lgamma(0.5 * c.df) -
                  0.5 * d * std::log(c.df * 3.14159265358979323846) - logdet -
                  0.5 * (c.df + d) * std::log1p(q / c.df);
      terms.push_back(c.log_mix + lp);
    }
    return logsumexp(terms);
  }
};

}  // namespace

LrMapResult lr_map_laplace(const PriorSpec& prior, const LrSuffStats& stats, double sigma,
                           int iters) {
  const int d = stats.d;
  const double inv_var = 1.0 / (sigma * sigma);
  Eigen::Map<const Eigen::MatrixXd> A(stats.A.data(), d, d);
  Eigen::Map<const Eigen::VectorXd> b(stats.b.data(), d);
  Eigen::VectorXd loc(d);
  for (int j = 0; j < d; ++j) loc(j) = prior.location_at(j);

  Eigen::VectorXd theta = loc;
  Eigen::MatrixXd P;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd w(d);
    for (int j = 0; j < d; ++j) w(j) = irls_precision(prior, theta(j) - loc(j));
    P = A * inv_var;
    P.diagonal() += w;
    theta = P.ldlt().solve(b * inv_var + w.asDiagonal() * loc);
  }
  return {theta, P};
}

Posterior Posterior::conjugate_gaussian_lr(const PriorSpec& prior, const ProcessModel& model) {
  if (prior.family != PriorFamily::Gaussian ||
      model.kind != ProcessKind::LinearRegression)
    throw ConfigError("conjugate engine requires a Gaussian prior and an LR model");
  Posterior p;
  p.engine_ = PosteriorEngineKind::ConjugateGaussianLR;
  p.prior_ = prior;
  p.model_ = model;
  const int d = model.data_dim;
  p.lambda_ = Eigen::MatrixXd::Identity(d, d) / prior.target_variance;
  Eigen::VectorXd m0(d);
  for (int j = 0; j < d; ++j) m0(j) = prior.location_at(j);
  p.lin_ = p.lambda_ * m0;
  p.lr_stats_.emplace(d);
  return p;
}

Posterior Posterior::grid(const PriorSpec& prior, const ProcessModel& model,
                          int points_per_axis) {
  if (prior.dim > 3) throw ConfigError("grid engine requires dim <= 3");
  if (model.kind == ProcessKind::Volterra)
    throw UnsupportedLikelihood("no posterior over volterra tasks");
  if (points_per_axis < 2) throw ConfigError("grid engine needs >= 2 points per axis");
  Posterior p;
  p.engine_ = PosteriorEngineKind::Grid;
  p.prior_ = prior;
  p.model_ = model;
  const double half = 8.0 * std::sqrt(prior.target_variance);
  const int d = prior.dim;
  std::vector<double> axis(static_cast<std::size_t>(points_per_axis));
  for (int i = 0; i < points_per_axis; ++i)
    axis[static_cast<std::size_t>(i)] = -half + 2.0 * half * i / (points_per_axis - 1);
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(points_per_axis);
  p.support_.reserve(total);
  p.log_w_.reserve(total);
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (std::size_t c = 0; c < total; ++c) {
    Task t(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k)
      t[static_cast<std::size_t>(k)] =
          prior.location_at(k) + axis[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    p.log_w_.push_back(log_density(prior, t));
    p.support_.push_back(std::move(t));
    for (int k = 0; k < d; ++k) {
      if (++idx[static_cast<std::size_t>(k)] < points_per_axis) break;
      idx[static_cast<std::size_t>(k)] = 0;
    }
  }
  if (model.kind == ProcessKind::LinearRegression) p.lr_stats_.emplace(model.data_dim);
  if (model.kind == ProcessKind::OrnsteinUhlenbeck) p.ou_stats_.emplace(model.data_dim);
  return p;
}

Posterior Posterior::particle(const PriorSpec& prior, const ProcessModel& model,
                              std::size_t engine_size, const Rng& rng,
                              RefreshPolicy refresh) {
  if (engine_size < 1000) throw ConfigError("particle engine requires engine_size >= 1000");
  if (model.kind == ProcessKind::Volterra)
    throw UnsupportedLikelihood("no posterior over volterra tasks");
  Posterior p;
  p.engine_ = PosteriorEngineKind::Particle;
  p.prior_ = prior;
  p.model_ = model;
  p.refresh_ = refresh;
  p.rng_ = rng.substream(0x706f7374u);  // stream for refresh draws
  Rng init = rng.substream(0x696e6974u);
  p.support_ = sample_tasks(prior, engine_size, init);
  p.log_w_.assign(engine_size, 0.0);
  // prior-proposal start: log weight = log pi - log pi = 0
  if (model.kind == ProcessKind::LinearRegression) p.lr_stats_.emplace(model.data_dim);
  if (model.kind == ProcessKind::OrnsteinUhlenbeck) p.ou_stats_.emplace(model.data_dim);
  return p;
}

void Posterior::add_log_weights_lr(std::span<const double> x, double y) {
  const double var = model_.noise_scale * model_.noise_scale;
  const double c = -0.5 * (kLog2Pi + std::log(var));
  const int d = model_.data_dim;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    const double* th = support_[i].data();
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += th[j] * x[static_cast<std::size_t>(j)];
    const double z = y - mean;
    double lw = log_w_[i] + c - 0.5 * z * z / var;
    log_w_[i] = std::isnan(lw) ? -std::numeric_limits<double>::infinity() : lw;
  }
}

void Posterior::add_log_weights_ou(std::span<const double> x_prev,
                                   std::span<const double> x_next) {
  const int d = model_.data_dim;
  const double sig = model_.noise_scale;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    OuParams pp = task_to_params_ou(support_[i], d);
    const double rho = std::exp(-pp.tau * model_.dt);
    const double var = sig * sig * (1.0 - rho * rho) / (2.0 * pp.tau);
    double quad = 0.0;
    for (int j = 0; j < d; ++j) {
      double m = pp.mu[static_cast<std::size_t>(j)] +
                 rho * (x_prev[static_cast<std::size_t>(j)] - pp.mu[static_cast<std::size_t>(j)]);
      double z = x_next[static_cast<std::size_t>(j)] - m;
      quad += z * z;
    }
    double lw = log_w_[i] - 0.5 * quad / var - 0.5 * d * (kLog2Pi + std::log(var));
    log_w_[i] = std::isnan(lw) ? -std::numeric_limits<double>::infinity() : lw;
  }
}

void Posterior::update_lr(std::span<const double> x, double y) {
  if (model_.kind != ProcessKind::LinearRegression)
    throw ConfigError("update_lr on a non-LR posterior");
  const double inv_var = 1.0 / (model_.noise_scale * model_.noise_scale);
  lr_stats_->add(x, y);
  if (engine_ == PosteriorEngineKind::ConjugateGaussianLR) {
    const int d = model_.data_dim;
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
    lambda_ += inv_var * xv * xv.transpose();
    lin_ += inv_var * xv * y;
  } else {
    add_log_weights_lr(x, y);
    maybe_refresh();
  }
  ++steps_seen_;
}

void Posterior::observe_ou(std::span<const double> x) {
  if (model_.kind != ProcessKind::OrnsteinUhlenbeck)
    throw ConfigError("observe_ou on a non-OU posterior");
  if (has_ou_last_) {
    ou_stats_->add(ou_last_, x);
    add_log_weights_ou(ou_last_, x);
    maybe_refresh();
    ++steps_seen_;
  }
  ou_last_.assign(x.begin(), x.end());
  has_ou_last_ = true;
}

double Posterior::full_history_loglik(const Task& theta) const {
  if (model_.kind == ProcessKind::LinearRegression)
    return lr_stats_->log_likelihood(theta, model_.noise_scale);
  return ou_stats_->log_likelihood(theta, model_.noise_scale, model_.dt);
}

void Posterior::maybe_refresh() {
  if (engine_ != PosteriorEngineKind::Particle || !refresh_.enabled) return;
  const std::size_t n = support_.size();
  const double target = refresh_.ess_fraction * static_cast<double>(n);
  if (ess() >= target) return;

  const int d = prior_.dim;
  for (int round = 0; round < refresh_.max_rounds && ess() < target; ++round) {
    // moment fit of the current weighted cloud
    std::vector<double> w = weights();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < n; ++i) mean += w[i] * as_vec(support_[i]);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::VectorXd c = as_vec(support_[i]) - mean;
      cov += w[i] * c * c.transpose();
    }
    cov *= refresh_.inflation;
    cov.diagonal().array() += 1e-8;

    MixtureProposal prop;
    prop.prior = &prior_;
    prop.prior_log_mix = std::log(refresh_.defensive_prior);
    double fit_mass = 1.0 - refresh_.defensive_prior;
    MvtComponent fit;
    fit.mean = mean;
    fit.chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
    fit.df = refresh_.proposal_df;
    if (model_.kind == ProcessKind::LinearRegression && lr_stats_->n >= 1) {
      // anchor at the separable-prior MAP
      LrMapResult mp = lr_map_laplace(prior_, *lr_stats_, model_.noise_scale);
      Eigen::MatrixXd acov =
          mp.precision.ldlt().solve(Eigen::MatrixXd::Identity(d, d)) * refresh_.inflation;
      acov.diagonal().array() += 1e-10;
      MvtComponent anchor;
      anchor.mean = mp.map;
      anchor.chol = Eigen::LLT<Eigen::MatrixXd>(acov).matrixL();
      anchor.df = refresh_.proposal_df;
      anchor.log_mix = std::log(0.45 * fit_mass);
      fit.log_mix = std::log(0.55 * fit_mass);
      prop.comps.push_back(std::move(anchor));
    } else {
      fit.log_mix = std::log(fit_mass);
    }
    prop.comps.push_back(std::move(fit));

    for (std::size_t i = 0; i < n; ++i) {
      Task t = prop.sample(rng_);
      double lw = log_density(prior_, t) + full_history_loglik(t) - prop.log_pdf(t);
      log_w_[i] = std::isnan(lw) ? -std::numeric_limits<double>::infinity() : lw;
      support_[i] = std::move(t);
    }
  }
}

std::vector<double> Posterior::weights() const {
  if (engine_ == PosteriorEngineKind::ConjugateGaussianLR)
    throw ConfigError("conjugate engine has no explicit weights");
  std::vector<double> w(log_w_.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double lw : log_w_) m = std::max(m, lw);
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_w_[i] - m);
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

double Posterior::ess() const {
  std::vector<double> w = weights();
  double s2 = 0.0;
  for (double x : w) s2 += x * x;
  return 1.0 / s2;
}

Eigen::VectorXd Posterior::conjugate_mean() const {
  return lambda_.ldlt().solve(lin_);
}

Eigen::MatrixXd Posterior::conjugate_cov() const {
  const int d = model_.data_dim;
  return lambda_.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
}

std::vector<double> Posterior::mean() const {
  if (engine_ == PosteriorEngineKind::ConjugateGaussianLR) {
    Eigen::VectorXd m = conjugate_mean();
    return {m.data(), m.data() + m.size()};
  }
  std::vector<double> w = weights();
  std::vector<double> out(static_cast<std::size_t>(prior_.dim), 0.0);
  for (std::size_t i = 0; i < support_.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] * support_[i][j];
  return out;
}

double Posterior::expectation(const std::function<double(const Task&)>& f) const {
  if (engine_ == PosteriorEngineKind::ConjugateGaussianLR)
    throw ConfigError("posterior expectation needs a weighted engine");
  std::vector<double> w = weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) acc += w[i] * f(support_[i]);
  return acc;
}

double Posterior::predict_lr(std::span<const double> query) const {
  std::vector<double> m = mean();
  double acc = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) acc += m[j] * query[j];
  return acc;
}

std::vector<double> Posterior::predict_ou() const {
  if (!has_ou_last_) throw ConfigError("predict_ou before any observation");
  const int d = model_.data_dim;
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  std::vector<double> w = weights();
  for (std::size_t i = 0; i < support_.size(); ++i) {
    OuParams p = task_to_params_ou(support_[i], d);
    const double rho = std::exp(-p.tau * model_.dt);
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(j)] +=
          w[i] * (p.mu[static_cast<std::size_t>(j)] +
                  rho * (ou_last_[static_cast<std::size_t>(j)] - p.mu[static_cast<std::size_t>(j)]));
  }
  return out;
}

void Posterior::dump_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "index";
  for (int j = 0; j < prior_.dim; ++j) f << ",theta" << j;
  f << ",weight\n";
  std::vector<double> w = weights();
  for (std::size_t i = 0; i < support_.size(); ++i) {
    f << i;
    for (double v : support_[i]) f << ',' << v;
    f << ',' << w[i] << '\n';
  }
}

}  // namespace icl
