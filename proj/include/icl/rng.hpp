#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace icl {

// Counter-based PRNG (Philox4x32-10). A stream is (key, counter); substreams
// are derived by hashing tags into the key, so any work item can be seeded
// as rng_for(master_seed, study, item, purpose) independent of execution
// order or thread count.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : key_(seed), ctr_hi_(0), ctr_lo_(0) {}

  // New independent stream derived from this one's key and a tag.
  Rng substream(std::uint64_t tag) const {
    Rng r;
    r.key_ = mix(key_, tag);
    r.ctr_hi_ = mix(ctr_hi_, tag ^ 0x9e3779b97f4a7c15ULL);
    r.ctr_lo_ = 0;
    return r;
  }
  Rng substream(std::uint64_t a, std::uint64_t b) const {
    return substream(a).substream(b);
  }
  Rng substream(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return substream(a).substream(b).substream(c);
  }

  std::uint64_t next_u64() {
    if (have_block_) {
      have_block_ = false;
      return block_[1];
    }
    philox(block_);
    ++ctr_lo_;
    if (ctr_lo_ == 0) ++ctr_hi_;
    have_block_ = true;
    return block_[0];
  }

  // Uniform in (0,1), 53-bit mantissa, never exactly 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return cached_normal_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_normal_ = true;
    return r * std::cos(a);
  }

  void normal_fill(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }
  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> v(n);
    normal_fill(v.data(), n);
    return v;
  }

  // Marsaglia-Tsang. Valid for shape > 0; rejection loop advances the stream
  // a variable number of steps, which is fine for a per-item stream.
  double gamma(double shape, double scale = 1.0) {
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  double chi_square(double dof) { return gamma(0.5 * dof, 2.0); }

  // Student-t with `dof` degrees of freedom (unit scale, not unit variance).
  double student_t(double dof) {
    double z = normal();
    double g = chi_square(dof);
    return z * std::sqrt(dof / g);
  }

  // Generalized normal with shape beta, unit scale: density ~ exp(-|x|^beta).
  double generalized_normal(double beta) {
    double g = gamma(1.0 / beta, 1.0);
    double x = std::pow(g, 1.0 / beta);
    return (next_u64() & 1ULL) ? x : -x;
  }

  // Uniform point on the unit sphere in R^dim.
  std::vector<double> unit_vector(std::size_t dim) {
    std::vector<double> v(dim);
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (auto& x : v) {
        x = normal();
        n2 += x * x;
      }
    } while (n2 == 0.0);
    double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x *= inv;
    return v;
  }

  std::uint64_t index(std::uint64_t bound) { return next_u64() % bound; }

  static std::uint64_t mix(std::uint64_t h, std::uint64_t k) {
    // splitmix64 finalizer over h ^ k
    std::uint64_t z = h ^ (k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b, std::uint32_t* lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    *lo = static_cast<std::uint32_t>(p);
    return static_cast<std::uint32_t>(p >> 32);
  }

  void philox(std::uint64_t out[2]) {
    std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo_);
    std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi_);
    std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi_ >> 32);
    std::uint32_t k0 = static_cast<std::uint32_t>(key_);
    std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
    for (int round = 0; round < 10; ++round) {
      std::uint32_t lo0, lo1;
      std::uint32_t hi0 = mulhi(0xD2511F53u, c0, &lo0);
      std::uint32_t hi1 = mulhi(0xCD9E8D57u, c2, &lo1);
      std::uint32_t n0 = hi1 ^ c1 ^ k0;
      std::uint32_t n1 = lo1;
      std::uint32_t n2 = hi0 ^ c3 ^ k1;
      std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out[0] = (static_cast<std::uint64_t>(c1) << 32) | c0;
    out[1] = (static_cast<std::uint64_t>(c3) << 32) | c2;
  }

  std::uint64_t key_;
  std::uint64_t ctr_hi_;
  std::uint64_t ctr_lo_;
  std::uint64_t block_[2] = {0, 0};
  bool have_block_ = false;
  bool have_normal_ = false;
  double cached_normal_ = 0.0;
};

// Canonical work-item stream: (master seed, study id, item index, purpose).
inline Rng rng_for(std::uint64_t master_seed, std::uint64_t study,
                   std::uint64_t item, std::uint64_t purpose = 0) {
  return Rng(master_seed).substream(study, item, purpose);
}

}  // namespace icl
