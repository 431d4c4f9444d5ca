#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace fedtrans {

// Deterministic random source. All distributions are implemented by hand on
// top of a 64-bit generator so that a given seed produces the same stream on
// every platform and standard library. Simulation reproducibility depends on
// this: never swap in std:: distributions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    // Builds an independent stream from a seed and a derivation path,
    // e.g. derive(run_seed, {kClientTag, round, client_id}).
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 bits of mantissa.
    double uniform();
    // Uniform on (0, 1); never returns zero (safe for logs).
    double uniform_pos();
    double uniform(double lo, double hi);
    // Uniform integer in [0, n); n must be positive.
    int uniform_int(int n);
    // exp(U(log lo, log hi)); lo, hi must be positive.
    double log_uniform(double lo, double hi);
    // Standard normal via Box-Muller.
    double normal();
    // Gamma(shape, 1) via Marsaglia-Tsang, with the boost for shape < 1.
    double gamma(double shape);
    // Symmetric Dirichlet of dimension k with concentration c.
    std::vector<double> dirichlet(double concentration, int k);

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

  private:
    std::uint64_t state_[4];
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

} // namespace fedtrans
