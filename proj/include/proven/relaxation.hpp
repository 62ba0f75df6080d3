#pragma once

#include "proven/network.hpp"

#include <string_view>
#include <vector>

namespace proven {

/// How the lower line of an unstable ReLU is chosen. `fastlin` reuses the
/// upper slope u/(u-l); `adaptive` picks 0 or 1 depending on which side of
/// the interval dominates.
enum class RelaxationMode { fastlin, adaptive };

std::string_view to_string(RelaxationMode mode);
RelaxationMode parse_relaxation_mode(std::string_view name);

/// lower_slope*s + lower_intercept <= sigma(s) <= upper_slope*s + upper_intercept on [l, u].
struct NeuronRelaxation {
    double upper_slope = 0.0;
    double upper_intercept = 0.0;
    double lower_slope = 0.0;
    double lower_intercept = 0.0;
};

NeuronRelaxation relax_activation(Activation kind, double l, double u, RelaxationMode mode);

/// Elementwise bounds on every layer's pre-activation over the input ball.
struct PreactivationBounds {
    std::vector<Vector> lower;
    std::vector<Vector> upper;
};

PreactivationBounds compute_preactivation_bounds(const Network& net, const InputSpec& spec,
                                                 RelaxationMode mode);

/// Linear functions sandwiching the margin f_c - f_t over the ball:
/// lower_coeffs*x + lower_offset <= g_t(x) <= upper_coeffs*x + upper_offset.
struct MarginLinearBounds {
    int target = 0;
    RowVector lower_coeffs;
    RowVector upper_coeffs;
    double lower_offset = 0.0;
    double upper_offset = 0.0;

    double lower_at(const Eigen::Ref<const Vector>& x) const { return lower_coeffs * x + lower_offset; }
    double upper_at(const Eigen::Ref<const Vector>& x) const { return upper_coeffs * x + upper_offset; }
};

/// Relaxations for every neuron of every layer, derived from a set of
/// pre-activation bounds. Holds everything the backward pass needs.
class RelaxedNetwork {
public:
    RelaxedNetwork(const Network& net, const InputSpec& spec, RelaxationMode mode);

    const PreactivationBounds& bounds() const noexcept { return bounds_; }
    MarginLinearBounds margin_bounds(int target) const;

private:
    const Network* net_;
    int predicted_;
    PreactivationBounds bounds_;
    std::vector<std::vector<NeuronRelaxation>> relaxations_;
};

MarginLinearBounds compute_margin_bounds(const Network& net, const InputSpec& spec, int target,
                                         RelaxationMode mode);

/// One MarginLinearBounds per target in `spec`, sharing the pre-activation pass.
std::vector<MarginLinearBounds> compute_all_margin_bounds(const Network& net,
                                                          const InputSpec& spec,
                                                          RelaxationMode mode);

}  // namespace proven
