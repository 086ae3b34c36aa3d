#include "icl/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

PriorSpec PriorSpec::gaussian(int dim, double target_variance) {
  PriorSpec p;
  p.family = PriorFamily::Gaussian;
  p.dim = dim;
  p.target_variance = target_variance;
  p.validate();
  return p;
}

PriorSpec PriorSpec::student_t(double nu, int dim, double target_variance) {
  PriorSpec p;
  p.family = PriorFamily::StudentT;
  p.shape = nu;
  p.dim = dim;
  p.target_variance = target_variance;
  p.validate();
  return p;
}

PriorSpec PriorSpec::gen_normal(double beta, int dim, double target_variance) {
  PriorSpec p;
  p.family = PriorFamily::GeneralizedNormal;
  p.shape = beta;
  p.dim = dim;
  p.target_variance = target_variance;
  p.validate();
  return p;
}

void PriorSpec::validate() const {
  if (dim < 1) throw ConfigError("prior dim must be >= 1");
  if (target_variance <= 0.0) throw ConfigError("target_variance must be > 0");
  if (!location.empty() && static_cast<int>(location.size()) != dim)
    throw ConfigError("prior location length must equal dim");
  if (family == PriorFamily::StudentT && !(shape > 2.0))
    throw ConfigError("StudentT prior requires nu > 2 for unit-variance normalization");
  if (family == PriorFamily::GeneralizedNormal && !(shape > 0.0))
    throw ConfigError("GeneralizedNormal prior requires beta > 0");
}

double PriorSpec::scale() const {
  switch (family) {
    case PriorFamily::Gaussian:
      return std::sqrt(target_variance);
    case PriorFamily::StudentT:
      // Var of standard t_nu is nu/(nu-2).
      return std::sqrt(target_variance * (shape - 2.0) / shape);
    case PriorFamily::GeneralizedNormal: {
      // Var of scale-a gen-normal is a^2 Gamma(3/b) / Gamma(1/b).
      double b = shape;
      double lg = std::lgamma(1.0 / b) - std::lgamma(3.0 / b);
      return std::sqrt(target_variance * std::exp(lg));
    }
  }
  return 1.0;
}

int PriorSpec::moment_order() const {
  if (family == PriorFamily::StudentT)
    return static_cast<int>(std::floor(shape - 1.0));
  return kAllMoments;
}

std::string PriorSpec::family_name() const {
  switch (family) {
    case PriorFamily::Gaussian: return "gaussian";
    case PriorFamily::StudentT: return "student_t";
    case PriorFamily::GeneralizedNormal: return "gen_normal";
  }
  return "?";
}

std::vector<Task> sample_tasks(const PriorSpec& prior, std::size_t count, Rng& rng) {
  prior.validate();
  if (count < 1) throw ConfigError("sample_tasks: count must be >= 1");
  const double s = prior.scale();
  std::vector<Task> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Task t(static_cast<std::size_t>(prior.dim));
    for (int j = 0; j < prior.dim; ++j) {
      double z;
      switch (prior.family) {
        case PriorFamily::Gaussian: z = rng.normal(); break;
        case PriorFamily::StudentT: z = rng.student_t(prior.shape); break;
        case PriorFamily::GeneralizedNormal:
          z = rng.generalized_normal(prior.shape);
          break;
        default: z = 0.0;
      }
      t[static_cast<std::size_t>(j)] = prior.location_at(j) + s * z;
    }
    out[i] = std::move(t);
  }
  return out;
}

double log_density_1d(const PriorSpec& prior, double x) {
  const double s = prior.scale();
  const double z = x / s;
  switch (prior.family) {
    case PriorFamily::Gaussian:
      return -0.5 * kLog2Pi - std::log(s) - 0.5 * z * z;
    case PriorFamily::StudentT: {
      double nu = prior.shape;
      double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                 0.5 * std::log(nu * 3.14159265358979323846) - std::log(s);
      return c - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
    }
    case PriorFamily::GeneralizedNormal: {
      double b = prior.shape;
      double c = std::log(b) - std::log(2.0) - std::lgamma(1.0 / b) - std::log(s);
      return c - std::pow(std::abs(z), b);
    }
  }
  return 0.0;
}

double log_density(const PriorSpec& prior, const Task& theta) {
  if (static_cast<int>(theta.size()) != prior.dim)
    throw ConfigError("log_density: theta dimension mismatch");
  double acc = 0.0;
  for (int j = 0; j < prior.dim; ++j)
    acc += log_density_1d(prior, theta[static_cast<std::size_t>(j)] - prior.location_at(j));
  return acc;
}

WeightResult importance_weights(const PriorSpec& source, const DensityFn& target,
                                const std::vector<Task>& tasks,
                                std::optional<double> clip) {
  if (tasks.empty()) throw ConfigError("importance_weights: no tasks");
  const std::size_t n = tasks.size();

  DensityFn tgt = target;
  if (!tgt) {
    // Uniform over the empirical bounding box. All given tasks lie inside it,
    // so the density is the constant 1/volume.
    const int d = source.dim;
    std::vector<double> lo(static_cast<std::size_t>(d),
                           std::numeric_limits<double>::infinity());
    std::vector<double> hi(static_cast<std::size_t>(d),
                           -std::numeric_limits<double>::infinity());
    for (const auto& t : tasks)
      for (int j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], t[static_cast<std::size_t>(j)]);
        hi[j] = std::max(hi[j], t[static_cast<std::size_t>(j)]);
      }
    double log_vol = 0.0;
    for (int j = 0; j < d; ++j)
      log_vol += std::log(std::max(hi[j] - lo[j], 1e-300));
    const double log_dens = -log_vol;
    tgt = [log_dens](const Task&) { return std::exp(log_dens); };
  }

  std::vector<double> log_ratio(n);
  double max_lr = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double td = tgt(tasks[i]);
    double lr = (td > 0.0 ? std::log(td) : -std::numeric_limits<double>::infinity()) -
                log_density(source, tasks[i]);
    log_ratio[i] = lr;
    max_lr = std::max(max_lr, lr);
  }
  if (!std::isfinite(max_lr))
    throw std::runtime_error("importance_weights: all raw weights are zero");

  WeightResult res;
  res.weights.resize(n);
  const double log_clip = clip ? std::log(*clip) : std::numeric_limits<double>::infinity();
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lw = std::min(log_ratio[i], log_clip) - std::min(max_lr, log_clip);
    double w = std::exp(lw);
    res.weights[i] = w;
    sum += w;
    sum2 += w * w;
  }
  if (sum <= 0.0) throw std::runtime_error("importance_weights: degenerate weights");
  res.ess = sum * sum / sum2;
  for (auto& w : res.weights) w /= sum;
  return res;
}

}  // namespace icl
