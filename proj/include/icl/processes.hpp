#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icl/priors.hpp"
#include "icl/rng.hpp"

namespace icl {

struct GenerationError : std::runtime_error {
  GenerationError(const std::string& what, std::int64_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step(step) {}
  std::int64_t step;
};

struct UnsupportedLikelihood : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProcessKind { LinearRegression, OrnsteinUhlenbeck, Volterra };

// Design distribution of LR x-tokens. FixedOnes (every x = all-ones) exists
// for the fixed-design divergence studies.
enum class LrDesign { GaussianIID, FixedOnes };

struct ProcessModel {
  ProcessKind kind = ProcessKind::LinearRegression;
  int data_dim = 8;
  double noise_scale = 0.5;
  double dt = 0.8;
  int substeps = 1;
  double alpha = 1.0;
  int hidden_dim = 16;
  bool ou_euler_maruyama = false;  // generate OU by EM instead of the exact law
  int ou_em_substeps = 1;          // EM inner steps per observation interval
  LrDesign lr_design = LrDesign::GaussianIID;

  static ProcessModel linear_regression(int x_dim = 8, double noise = 0.5);
  static ProcessModel ornstein_uhlenbeck(int dim = 8, double sigma = 0.5, double dt = 0.8);
  static ProcessModel volterra(double alpha, int dim = 8, double sigma = 0.6,
                               double dt = 2.0, int substeps = 10, int hidden = 16);

  // Length of the task vector the model consumes: LR x_dim, OU dim+1,
  // Volterra hidden*dim + hidden + dim*hidden + dim.
  int task_dim() const;
  void validate() const;
  std::string kind_name() const;
};

struct SequenceBatch {
  ProcessKind kind = ProcessKind::LinearRegression;
  int data_dim = 0;
  int T = 0;  // tokens per sequence
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<Task> tasks;
  std::vector<double> samples;  // [n_sequences][T][data_dim] row-major

  std::size_t n_sequences() const { return tasks.size(); }
  std::span<const double> token(std::size_t seq, int t) const {
    return {samples.data() + (seq * static_cast<std::size_t>(T) + static_cast<std::size_t>(t)) *
                                 static_cast<std::size_t>(data_dim),
            static_cast<std::size_t>(data_dim)};
  }
  std::span<double> token(std::size_t seq, int t) {
    return {samples.data() + (seq * static_cast<std::size_t>(T) + static_cast<std::size_t>(t)) *
                                 static_cast<std::size_t>(data_dim),
            static_cast<std::size_t>(data_dim)};
  }

  void write_binary(const std::string& path) const;
  static SequenceBatch read_binary(const std::string& path);
  void write_csv(const std::string& path) const;
};

struct OuParams {
  std::vector<double> mu;
  double tau = 0.0;
};

// theta in R^{d+1}: mu = theta[0..d), tau = 0.3 + 0.2*sigmoid(-0.4*theta[d]).
OuParams task_to_params_ou(const Task& theta, int dim = 8);

struct OuTransition {
  std::vector<double> mean;
  double var = 0.0;  // per-coordinate
};

// Exact OU transition: mean = mu + e^{-tau dt}(x - mu),
// var = sigma^2 (1 - e^{-2 tau dt}) / (2 tau).
OuTransition ou_exact_transition(std::span<const double> x, std::span<const double> mu,
                                 double tau, double sigma, double dt);

// Generate n sequences of T tokens. Each sequence i uses the substream
// (task index i) of `rng`, so outputs are reproducible per (seed, i, step).
SequenceBatch generate(const ProcessModel& model, const std::vector<Task>& tasks,
                       int T, const Rng& rng);

// Sum over t of log p_t(x_t | x_{1:t-1}, theta) for the theta-dependent
// one-step terms (LR: y-tokens given x; OU: transitions given the first
// observation). Constants are included, so differences of two calls are
// exact log likelihood ratios. Volterra is rejected.
double conditional_log_likelihood(const ProcessModel& model,
                                  const SequenceBatch& batch, std::size_t seq,
                                  const Task& theta);

// --- sufficient statistics -------------------------------------------------

// LR: loglik(theta) = -(theta'A theta - 2 b'theta + yy)/(2 sigma^2) + n_pairs*const.
struct LrSuffStats {
  int d = 0;
  std::vector<double> A;  // d x d row-major, sum x x'
  std::vector<double> b;  // sum x y
  double yy = 0.0;        // sum y^2
  std::int64_t n = 0;

  explicit LrSuffStats(int dim) : d(dim), A(static_cast<std::size_t>(dim) * dim, 0.0),
                                  b(static_cast<std::size_t>(dim), 0.0) {}
  void add(std::span<const double> x, double y);
  double log_likelihood(const Task& theta, double sigma) const;
};

// OU per-coordinate transition statistics, valid for any (mu, tau) query.
struct OuSuffStats {
  int d = 0;
  std::int64_t n = 0;          // transition count
  std::vector<double> s_pp;    // sum x'_j^2
  std::vector<double> s_cc;    // sum x_j^2
  std::vector<double> s_pc;    // sum x'_j x_j
  std::vector<double> s_p;     // sum x'_j
  std::vector<double> s_c;     // sum x_j

  explicit OuSuffStats(int dim)
      : d(dim), s_pp(dim, 0.0), s_cc(dim, 0.0), s_pc(dim, 0.0), s_p(dim, 0.0), s_c(dim, 0.0) {}
  void add(std::span<const double> x_cur, std::span<const double> x_next);
  double log_likelihood(const Task& theta, double sigma, double dt) const;
};

// --- Volterra ----------------------------------------------------------------

// Discrete Volterra recursion on the inner grid (step dt/substeps):
//   X_{n+1} = X_0 + sum_{u=0}^{n} (n-u+1)^{-alpha} * inc_u,
//   inc_u = b_theta(X_u) * delta + sigma * sqrt(delta) * xi_u.
// Observations are X at inner indices k*substeps. Supports zero-noise
// conditional means and shared-noise branch re-runs for coupling studies.
class VolterraSim {
 public:
  VolterraSim(const ProcessModel& model, const Task& theta);

  void drift(std::span<const double> x, std::span<double> out) const;

  // Simulate T_obs observation intervals (inner grid size T_obs*substeps).
  void run(int T_obs, Rng& rng);
  // Re-run from stored noises with X at inner index m shifted by h.
  void run_branch_state_pert(int m, std::span<const double> h);
  // Re-run with drift from another task, same noises (drift perturbation).
  void run_branch_drift(const VolterraSim& base);

  // E[X at observation k+1 | inner history up to observation k], computed by
  // zero-noise continuation of the inner recursion.
  std::vector<double> conditional_mean_next(int k_obs) const;

  std::span<const double> state(int inner_n) const {
    return {X_.data() + static_cast<std::size_t>(inner_n) * d_, static_cast<std::size_t>(d_)};
  }
  std::span<const double> observation(int k_obs) const { return state(k_obs * sub_); }
  int inner_size() const { return N_; }
  const ProcessModel& model() const { return model_; }

 private:
  void forward(int from_inner);  // recompute X_{n+1} for n >= from_inner

  ProcessModel model_;
  int d_, hid_, sub_;
  double delta_, sqrt_delta_;
  std::vector<double> w1_, b1_, w2_, b2_;
  std::vector<double> kernel_;  // kernel_[r] = r^{-alpha}, r >= 1
  int N_ = 0;
  std::vector<double> X_;       // (N+1) x d
  std::vector<double> inc_;     // N x d
  std::vector<double> noise_;   // N x d
  std::vector<double> x0_;
};

double sigmoid(double x);

}  // namespace icl
