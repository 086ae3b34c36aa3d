#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "icl/rng.hpp"

namespace icl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Task = std::vector<double>;

enum class PriorFamily { Gaussian, StudentT, GeneralizedNormal };

// Sentinel for "all moments finite".
inline constexpr int kAllMoments = -1;

// A task distribution with i.i.d. coordinates, normalized so each coordinate
// has variance target_variance. `shape` is nu for StudentT (nu > 2 required)
// and beta for GeneralizedNormal (beta > 0); it is ignored for Gaussian.
struct PriorSpec {
  PriorFamily family = PriorFamily::Gaussian;
  double shape = 0.0;
  int dim = 1;
  std::vector<double> location;  // empty means all-zero
  double target_variance = 1.0;

  static PriorSpec gaussian(int dim, double target_variance = 1.0);
  static PriorSpec student_t(double nu, int dim, double target_variance = 1.0);
  static PriorSpec gen_normal(double beta, int dim, double target_variance = 1.0);

  void validate() const;

  // Per-coordinate scale making the coordinate variance target_variance.
  double scale() const;

  // Largest integer p with E||theta||^p < infinity; kAllMoments when all
  // moments exist. StudentT: floor(nu - 1).
  int moment_order() const;

  double location_at(int i) const {
    return location.empty() ? 0.0 : location.at(static_cast<std::size_t>(i));
  }
  std::string family_name() const;
};

std::vector<Task> sample_tasks(const PriorSpec& prior, std::size_t count, Rng& rng);

// log pi(theta), product of per-coordinate densities.
double log_density(const PriorSpec& prior, const Task& theta);

// One coordinate's log density at standardized location; exposed for the
// 1-D shrinkage tables and the grid posterior.
double log_density_1d(const PriorSpec& prior, double x);

struct WeightResult {
  std::vector<double> weights;  // self-normalized, sum to 1
  double ess = 0.0;             // (sum w)^2 / sum w^2 of raw ratios
};

using DensityFn = std::function<double(const Task&)>;

// Self-normalized importance weights w_i ~ target(theta_i) / pi_source(theta_i).
// If target is null, the target is uniform over the axis-aligned bounding box
// of the given tasks. Raw ratios are truncated at `clip` when provided.
WeightResult importance_weights(const PriorSpec& source, const DensityFn& target,
                                const std::vector<Task>& tasks,
                                std::optional<double> clip = std::nullopt);

}  // namespace icl
