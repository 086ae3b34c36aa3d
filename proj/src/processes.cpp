#include "icl/processes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "icl/parallel.hpp"

namespace icl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gauss_logpdf(double x, double mean, double var) {
  double z = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * z * z / var;
}
}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ProcessModel ProcessModel::linear_regression(int x_dim, double noise) {
  ProcessModel m;
  m.kind = ProcessKind::LinearRegression;
  m.data_dim = x_dim;
  m.noise_scale = noise;
  m.dt = 0.0;
  m.validate();
  return m;
}

ProcessModel ProcessModel::ornstein_uhlenbeck(int dim, double sigma, double dt) {
  ProcessModel m;
  m.kind = ProcessKind::OrnsteinUhlenbeck;
  m.data_dim = dim;
  m.noise_scale = sigma;
  m.dt = dt;
  m.validate();
  return m;
}

ProcessModel ProcessModel::volterra(double alpha, int dim, double sigma, double dt,
                                    int substeps, int hidden) {
  ProcessModel m;
  m.kind = ProcessKind::Volterra;
  m.data_dim = dim;
  m.noise_scale = sigma;
  m.dt = dt;
  m.substeps = substeps;
  m.alpha = alpha;
  m.hidden_dim = hidden;
  m.validate();
  return m;
}

int ProcessModel::task_dim() const {
  switch (kind) {
    case ProcessKind::LinearRegression: return data_dim;
    case ProcessKind::OrnsteinUhlenbeck: return data_dim + 1;
    case ProcessKind::Volterra:
      return hidden_dim * data_dim + hidden_dim + data_dim * hidden_dim + data_dim;
  }
  return 0;
}

void ProcessModel::validate() const {
  if (data_dim < 1) throw ConfigError("process data_dim must be >= 1");
  if (noise_scale <= 0.0) throw ConfigError("process noise_scale must be > 0");
  if (kind != ProcessKind::LinearRegression && dt <= 0.0)
    throw ConfigError("process dt must be > 0");
  if (substeps < 1) throw ConfigError("process substeps must be >= 1");
  if (kind == ProcessKind::Volterra && alpha <= 0.0)
    throw ConfigError("volterra alpha must be > 0");
  if (kind == ProcessKind::Volterra && hidden_dim < 1)
    throw ConfigError("volterra hidden_dim must be >= 1");
  if (ou_em_substeps < 1) throw ConfigError("ou_em_substeps must be >= 1");
}

std::string ProcessModel::kind_name() const {
  switch (kind) {
    case ProcessKind::LinearRegression: return "linear_regression";
    case ProcessKind::OrnsteinUhlenbeck: return "ornstein_uhlenbeck";
    case ProcessKind::Volterra: return "volterra";
  }
  return "?";
}

OuParams task_to_params_ou(const Task& theta, int dim) {
  if (static_cast<int>(theta.size()) != dim + 1)
    throw ConfigError("OU task must have dimension " + std::to_string(dim + 1));
  OuParams p;
  p.mu.assign(theta.begin(), theta.begin() + dim);
  p.tau = 0.3 + 0.2 * sigmoid(-0.4 * theta[static_cast<std::size_t>(dim)]);
  return p;
}

OuTransition ou_exact_transition(std::span<const double> x, std::span<const double> mu,
                                 double tau, double sigma, double dt) {
  if (tau <= 0.0 || dt <= 0.0) throw ConfigError("ou_exact_transition: tau, dt must be > 0");
  OuTransition tr;
  const double rho = std::exp(-tau * dt);
  tr.mean.resize(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) tr.mean[j] = mu[j] + rho * (x[j] - mu[j]);
  tr.var = sigma * sigma * (1.0 - rho * rho) / (2.0 * tau);
  return tr;
}

// --- generation ---------------------------------------------------------------

namespace {

void generate_lr(const ProcessModel& m, const Task& theta, int T, Rng rng, std::span<double> out) {
  const int d = m.data_dim;
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int t = 0; t < T; t += 2) {
    double* xtok = out.data() + static_cast<std::size_t>(t) * d;
    double* ytok = xtok + d;
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(j)] = m.lr_design == LrDesign::FixedOnes ? 1.0 : rng.normal();
    std::copy(x.begin(), x.end(), xtok);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x[static_cast<std::size_t>(j)] * theta[static_cast<std::size_t>(j)];
    std::fill(ytok, ytok + d, 0.0);
    ytok[0] = mean + m.noise_scale * rng.normal();
  }
}

void generate_ou(const ProcessModel& m, const Task& theta, int T, Rng rng, std::span<double> out) {
  const int d = m.data_dim;
  OuParams p = task_to_params_ou(theta, d);
  double* x0 = out.data();
  for (int j = 0; j < d; ++j) x0[j] = rng.normal();
  if (!m.ou_euler_maruyama) {
    const double rho = std::exp(-p.tau * m.dt);
    const double sd = std::sqrt(m.noise_scale * m.noise_scale * (1.0 - rho * rho) / (2.0 * p.tau));
    for (int t = 1; t < T; ++t) {
      const double* prev = out.data() + static_cast<std::size_t>(t - 1) * d;
      double* cur = out.data() + static_cast<std::size_t>(t) * d;
      for (int j = 0; j < d; ++j)
        cur[j] = p.mu[static_cast<std::size_t>(j)] + rho * (prev[j] - p.mu[static_cast<std::size_t>(j)]) +
                 sd * rng.normal();
    }
  } else {
    const double h = m.dt / m.ou_em_substeps;
    const double sq = m.noise_scale * std::sqrt(h);
    std::vector<double> x(x0, x0 + d);
    for (int t = 1; t < T; ++t) {
      for (int s = 0; s < m.ou_em_substeps; ++s)
        for (int j = 0; j < d; ++j)
          x[static_cast<std::size_t>(j)] +=
              p.tau * (p.mu[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]) * h +
              sq * rng.normal();
      std::copy(x.begin(), x.end(), out.data() + static_cast<std::size_t>(t) * d);
    }
  }
}

}  // namespace

SequenceBatch generate(const ProcessModel& model, const std::vector<Task>& tasks, int T,
                       const Rng& rng) {
  model.validate();
  if (T < 1) throw ConfigError("generate: T must be >= 1");
  if (model.kind == ProcessKind::LinearRegression && T % 2 != 0)
    throw ConfigError("generate: LR token count must be even (x,y pairs)");
  const int td = model.task_dim();
  for (const auto& t : tasks)
    if (static_cast<int>(t.size()) != td)
      throw ConfigError("generate: task dimension must be " + std::to_string(td));

  SequenceBatch batch;
  batch.kind = model.kind;
  batch.data_dim = model.data_dim;
  batch.T = T;
  batch.dt = model.dt;
  batch.tasks = tasks;
  batch.samples.assign(tasks.size() * static_cast<std::size_t>(T) * model.data_dim, 0.0);

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Rng seq_rng = rng.substream(i);
    std::span<double> out{batch.samples.data() +
                              i * static_cast<std::size_t>(T) * model.data_dim,
                          static_cast<std::size_t>(T) * model.data_dim};
    switch (model.kind) {
      case ProcessKind::LinearRegression:
        generate_lr(model, tasks[i], T, seq_rng, out);
        break;
      case ProcessKind::OrnsteinUhlenbeck:
        generate_ou(model, tasks[i], T, seq_rng, out);
        break;
      case ProcessKind::Volterra: {
        VolterraSim sim(model, tasks[i]);
        sim.run(T - 1, seq_rng);
        for (int k = 0; k < T; ++k) {
          auto obs = sim.observation(k);
          std::copy(obs.begin(), obs.end(), out.data() + static_cast<std::size_t>(k) * model.data_dim);
        }
        break;
      }
    }
    for (std::size_t j = 0; j < out.size(); ++j)
      if (!std::isfinite(out[j]))
        throw GenerationError("non-finite sample in sequence " + std::to_string(i),
                              static_cast<std::int64_t>(j) / model.data_dim);
  }
  return batch;
}

double conditional_log_likelihood(const ProcessModel& model, const SequenceBatch& batch,
                                  std::size_t seq, const Task& theta) {
  if (model.kind == ProcessKind::Volterra)
    throw UnsupportedLikelihood(
        "volterra likelihood on the subsampled grid is not tractable");
  if (static_cast<int>(theta.size()) != model.task_dim())
    throw ConfigError("conditional_log_likelihood: theta dimension mismatch");

  if (model.kind == ProcessKind::LinearRegression) {
    LrSuffStats st(model.data_dim);
    for (int t = 0; t + 1 < batch.T; t += 2)
      st.add(batch.token(seq, t), batch.token(seq, t + 1)[0]);
    return st.log_likelihood(theta, model.noise_scale);
  }
  OuSuffStats st(model.data_dim);
  for (int t = 0; t + 1 < batch.T; ++t)
    st.add(batch.token(seq, t), batch.token(seq, t + 1));
  return st.log_likelihood(theta, model.noise_scale, model.dt);
}

void LrSuffStats::add(std::span<const double> x, double y) {
  for (int i = 0; i < d; ++i) {
    b[static_cast<std::size_t>(i)] += x[static_cast<std::size_t>(i)] * y;
    for (int j = 0; j < d; ++j)
      A[static_cast<std::size_t>(i) * d + j] += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
  }
  yy += y * y;
  ++n;
}

double LrSuffStats::log_likelihood(const Task& theta, double sigma) const {
  double quad = yy;
  for (int i = 0; i < d; ++i) {
    double ai = 0.0;
    for (int j = 0; j < d; ++j) ai += A[static_cast<std::size_t>(i) * d + j] * theta[static_cast<std::size_t>(j)];
    quad += theta[static_cast<std::size_t>(i)] * ai - 2.0 * b[static_cast<std::size_t>(i)] * theta[static_cast<std::size_t>(i)];
  }
  const double var = sigma * sigma;
  return -0.5 * quad / var - 0.5 * static_cast<double>(n) * (kLog2Pi + std::log(var));
}

void OuSuffStats::add(std::span<const double> x_cur, std::span<const double> x_next) {
  for (int j = 0; j < d; ++j) {
    double c = x_cur[static_cast<std::size_t>(j)], p = x_next[static_cast<std::size_t>(j)];
    s_pp[static_cast<std::size_t>(j)] += p * p;
    s_cc[static_cast<std::size_t>(j)] += c * c;
    s_pc[static_cast<std::size_t>(j)] += p * c;
    s_p[static_cast<std::size_t>(j)] += p;
    s_c[static_cast<std::size_t>(j)] += c;
  }
  ++n;
}

double OuSuffStats::log_likelihood(const Task& theta, double sigma, double dt) const {
  OuParams p = task_to_params_ou(theta, d);
  const double rho = std::exp(-p.tau * dt);
  const double var = sigma * sigma * (1.0 - rho * rho) / (2.0 * p.tau);
  double quad = 0.0;
  for (int j = 0; j < d; ++j) {
    const double m = (1.0 - rho) * p.mu[static_cast<std::size_t>(j)];
    // sum over transitions of (x' - rho x - m)^2
    quad += s_pp[static_cast<std::size_t>(j)] + rho * rho * s_cc[static_cast<std::size_t>(j)] +
            m * m * static_cast<double>(n) - 2.0 * rho * s_pc[static_cast<std::size_t>(j)] -
            2.0 * m * s_p[static_cast<std::size_t>(j)] + 2.0 * rho * m * s_c[static_cast<std::size_t>(j)];
  }
  return -0.5 * quad / var -
         0.5 * static_cast<double>(n) * d * (kLog2Pi + std::log(var));
}

// --- Volterra ------------------------------------------------------------------

VolterraSim::VolterraSim(const ProcessModel& model, const Task& theta)
    : model_(model), d_(model.data_dim), hid_(model.hidden_dim), sub_(model.substeps) {
  if (model.kind != ProcessKind::Volterra)
    throw ConfigError("VolterraSim requires a volterra model");
  const int td = model.task_dim();
  if (static_cast<int>(theta.size()) != td)
    throw ConfigError("volterra task must have dimension " + std::to_string(td));
  delta_ = model.dt / sub_;
  sqrt_delta_ = std::sqrt(delta_);
  auto it = theta.begin();
  w1_.assign(it, it + static_cast<std::ptrdiff_t>(hid_) * d_);
  it += static_cast<std::ptrdiff_t>(hid_) * d_;
  b1_.assign(it, it + hid_);
  it += hid_;
  w2_.assign(it, it + static_cast<std::ptrdiff_t>(d_) * hid_);
  it += static_cast<std::ptrdiff_t>(d_) * hid_;
  b2_.assign(it, it + d_);
}

void VolterraSim::drift(std::span<const double> x, std::span<double> out) const {
  // b(x) = clip(10 (W2 tanh(W1 x + b1) + b2), -2, 2) - 0.1 x
  std::vector<double> h(static_cast<std::size_t>(hid_));
  for (int i = 0; i < hid_; ++i) {
    double a = b1_[static_cast<std::size_t>(i)];
    const double* row = w1_.data() + static_cast<std::size_t>(i) * d_;
    for (int j = 0; j < d_; ++j) a += row[j] * x[static_cast<std::size_t>(j)];
    h[static_cast<std::size_t>(i)] = std::tanh(a);
  }
  for (int i = 0; i < d_; ++i) {
    double a = b2_[static_cast<std::size_t>(i)];
    const double* row = w2_.data() + static_cast<std::size_t>(i) * hid_;
    for (int j = 0; j < hid_; ++j) a += row[j] * h[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = std::clamp(10.0 * a, -2.0, 2.0) - 0.1 * x[static_cast<std::size_t>(i)];
  }
}

void VolterraSim::run(int T_obs, Rng& rng) {
  N_ = T_obs * sub_;
  kernel_.resize(static_cast<std::size_t>(N_) + 2);
  for (std::size_t r = 1; r < kernel_.size(); ++r)
    kernel_[r] = std::pow(static_cast<double>(r), -model_.alpha);
  x0_.resize(static_cast<std::size_t>(d_));
  for (int j = 0; j < d_; ++j) x0_[static_cast<std::size_t>(j)] = rng.normal();
  X_.assign(static_cast<std::size_t>(N_ + 1) * d_, 0.0);
  inc_.assign(static_cast<std::size_t>(N_) * d_, 0.0);
  noise_.resize(static_cast<std::size_t>(N_) * d_);
  for (auto& z : noise_) z = rng.normal();
  std::copy(x0_.begin(), x0_.end(), X_.begin());
  forward(0);
}

void VolterraSim::forward(int from_inner) {
  std::vector<double> bx(static_cast<std::size_t>(d_));
  for (int n = from_inner; n < N_; ++n) {
    drift(state(n), bx);
    double* inc = inc_.data() + static_cast<std::size_t>(n) * d_;
    const double* z = noise_.data() + static_cast<std::size_t>(n) * d_;
    for (int j = 0; j < d_; ++j)
      inc[j] = bx[static_cast<std::size_t>(j)] * delta_ + model_.noise_scale * sqrt_delta_ * z[j];
    double* next = X_.data() + static_cast<std::size_t>(n + 1) * d_;
    for (int j = 0; j < d_; ++j) next[j] = x0_[static_cast<std::size_t>(j)];
    for (int u = 0; u <= n; ++u) {
      const double k = kernel_[static_cast<std::size_t>(n - u + 1)];
      const double* iu = inc_.data() + static_cast<std::size_t>(u) * d_;
      for (int j = 0; j < d_; ++j) next[j] += k * iu[j];
    }
  }
}

void VolterraSim::run_branch_state_pert(int m, std::span<const double> h) {
  double* xm = X_.data() + static_cast<std::size_t>(m) * d_;
  for (int j = 0; j < d_; ++j) xm[j] += h[static_cast<std::size_t>(j)];
  forward(m);
}

void VolterraSim::run_branch_drift(const VolterraSim& base) {
  N_ = base.N_;
  kernel_ = base.kernel_;
  x0_ = base.x0_;
  noise_ = base.noise_;
  X_.assign(static_cast<std::size_t>(N_ + 1) * d_, 0.0);
  inc_.assign(static_cast<std::size_t>(N_) * d_, 0.0);
  std::copy(x0_.begin(), x0_.end(), X_.begin());
  forward(0);
}

std::vector<double> VolterraSim::conditional_mean_next(int k_obs) const {
  const int m = k_obs * sub_;
  const int target = m + sub_;
  if (target > N_) throw ConfigError("conditional_mean_next: beyond simulated horizon");
  // zero-noise continuation: increments beyond m use the continued states
  std::vector<double> Xc(X_.begin(), X_.begin() + static_cast<std::ptrdiff_t>(target + 1) * d_);
  std::vector<double> incc(inc_.begin(), inc_.begin() + static_cast<std::ptrdiff_t>(target) * d_);
  std::vector<double> bx(static_cast<std::size_t>(d_));
  for (int n = m; n < target; ++n) {
    drift({Xc.data() + static_cast<std::size_t>(n) * d_, static_cast<std::size_t>(d_)}, bx);
    double* inc = incc.data() + static_cast<std::size_t>(n) * d_;
    for (int j = 0; j < d_; ++j) inc[j] = bx[static_cast<std::size_t>(j)] * delta_;
    double* next = Xc.data() + static_cast<std::size_t>(n + 1) * d_;
    for (int j = 0; j < d_; ++j) next[j] = x0_[static_cast<std::size_t>(j)];
    for (int u = 0; u <= n; ++u) {
      const double k = kernel_[static_cast<std::size_t>(n - u + 1)];
      const double* iu = incc.data() + static_cast<std::size_t>(u) * d_;
      for (int j = 0; j < d_; ++j) next[j] += k * iu[j];
    }
  }
  return {Xc.begin() + static_cast<std::ptrdiff_t>(target) * d_,
          Xc.begin() + static_cast<std::ptrdiff_t>(target + 1) * d_};
}

// --- serialization -------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'I', 'C', 'L', 'S', 'E', 'Q', '1', '\0'};
}

void SequenceBatch::write_binary(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.write(kMagic, 8);
  auto w32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  auto w64 = [&](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
  w32(static_cast<std::uint32_t>(kind));
  w32(static_cast<std::uint32_t>(data_dim));
  w32(static_cast<std::uint32_t>(T));
  w32(static_cast<std::uint32_t>(n_sequences()));
  f.write(reinterpret_cast<const char*>(&dt), 8);
  w64(seed);
  w32(tasks.empty() ? 0u : static_cast<std::uint32_t>(tasks[0].size()));
  w32(0u);
  for (const auto& t : tasks)
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
  f.write(reinterpret_cast<const char*>(samples.data()),
          static_cast<std::streamsize>(samples.size() * 8));
}

SequenceBatch SequenceBatch::read_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("bad sequence file magic");
  auto r32 = [&] { std::uint32_t v; f.read(reinterpret_cast<char*>(&v), 4); return v; };
  auto r64 = [&] { std::uint64_t v; f.read(reinterpret_cast<char*>(&v), 8); return v; };
  SequenceBatch b;
  b.kind = static_cast<ProcessKind>(r32());
  b.data_dim = static_cast<int>(r32());
  b.T = static_cast<int>(r32());
  std::uint32_t n = r32();
  f.read(reinterpret_cast<char*>(&b.dt), 8);
  b.seed = r64();
  std::uint32_t task_dim = r32();
  r32();
  b.tasks.assign(n, Task(task_dim));
  for (auto& t : b.tasks)
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(task_dim) * 8);
  b.samples.resize(static_cast<std::size_t>(n) * b.T * b.data_dim);
  f.read(reinterpret_cast<char*>(b.samples.data()),
         static_cast<std::streamsize>(b.samples.size() * 8));
  if (!f) throw std::runtime_error("truncated sequence file " + path);
  return b;
}

void SequenceBatch::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "sequence,step";
  for (int j = 0; j < data_dim; ++j) f << ",x" << j;
  f << "\n";
  char buf[32];
  for (std::size_t i = 0; i < n_sequences(); ++i)
    for (int t = 0; t < T; ++t) {
      f << i << ',' << t;
      auto tok = token(i, t);
      for (int j = 0; j < data_dim; ++j) {
        int len = std::snprintf(buf, sizeof buf, "%.17g", tok[static_cast<std::size_t>(j)]);
        f << ',';
        f.write(buf, len);
      }
      f << '\n';
    }
}

}  // namespace icl
