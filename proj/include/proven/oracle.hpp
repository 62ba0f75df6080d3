#pragma once

// Ground-truth machinery for tests and validation reports. Nothing here is
// used to produce a certificate.

#include "proven/network.hpp"
#include "proven/probabilistic.hpp"
#include "proven/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace proven {

struct McEstimate {
    double p_hat = 0.0;
    std::uint64_t n_samples = 0;
    double std_error = 0.0;  // binomial, from (hits + 1/2) / (n + 1)
    std::uint64_t seed = 0;
};

/// Draws one perturbed input per call from a NoiseModel around x0.
class NoiseSampler {
public:
    NoiseSampler(const NoiseModel& noise, Vector x0);

    void sample(CounterRng& rng, Vector& out) const;

private:
    NoiseKind kind_;
    double half_width_;
    Vector x0_;
    Matrix factor_;  // covariance = factor * factor^T
};

/// Fraction of samples X ~ noise with f_c(X) - f_t(X) > a.
McEstimate mc_probability(const Network& net, const Eigen::Ref<const Vector>& x0,
                          const NoiseModel& noise, int c, int t, double a,
                          std::uint64_t n_samples, std::uint64_t seed);

/// Same samples shared across several targets; one estimate per target.
std::vector<McEstimate> mc_probability_targets(const Network& net,
                                               const Eigen::Ref<const Vector>& x0,
                                               const NoiseModel& noise, int c,
                                               const std::vector<int>& targets, double a,
                                               std::uint64_t n_samples, std::uint64_t seed);

/// Random points in the ball plus finite-difference sign probes toward the
/// ball's boundary. Returns a point whose top-1 class differs from
/// spec.predicted if one is found; nullopt proves nothing.
std::optional<Vector> attack_search(const Network& net, const InputSpec& spec, double epsilon,
                                    std::uint64_t n_random, std::uint64_t seed);

/// Midpoint-rule P[g_t(X) > a] for X uniform on the box x0 +- half_width,
/// refined by doubling until successive values differ by less than 1e-3.
/// Only for n0 <= 4.
double exact_probability_grid(const Network& net, const Eigen::Ref<const Vector>& x0,
                              double half_width, int c, int t, double a,
                              std::uint64_t cells_per_dim = 16);

/// Uniform sample from the l_p ball of radius epsilon around x0.
void sample_ball(CounterRng& rng, const Eigen::Ref<const Vector>& x0, double epsilon, Norm p,
                 Vector& out);

}  // namespace proven
