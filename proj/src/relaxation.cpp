#include "proven/relaxation.hpp"

#include "proven/errors.hpp"

#include <cmath>
#include <string>

namespace proven {

std::string_view to_string(RelaxationMode mode) {
    return mode == RelaxationMode::fastlin ? "fastlin" : "adaptive";
}

RelaxationMode parse_relaxation_mode(std::string_view name) {
    if (name == "fastlin") return RelaxationMode::fastlin;
    if (name == "adaptive") return RelaxationMode::adaptive;
    throw Error("unknown relaxation mode '" + std::string(name) + "'");
}

namespace {

constexpr double kDegenerateWidth = 1e-12;
constexpr double kTangentTolerance = 1e-9;
constexpr int kTangentMaxIter = 100;

struct Line {
    double slope;
    double intercept;
};

Line secant(Activation act, double l, double u) {
    const double fl = activate(act, l);
    const double fu = activate(act, u);
    const double slope = (fu - fl) / (u - l);
    return {slope, fl - slope * l};
}

Line tangent(Activation act, double d) {
    const double slope = activate_derivative(act, d);
    return {slope, activate(act, d) - slope * d};
}

// Tangent at whichever endpoint leaves the smaller gap at the opposite one.
Line endpoint_tangent(Activation act, double l, double u) {
    const Line at_l = tangent(act, l);
    const Line at_u = tangent(act, u);
    const double gap_l = std::abs(activate(act, u) - (at_l.slope * u + at_l.intercept));
    const double gap_u = std::abs(activate(act, l) - (at_u.slope * l + at_u.intercept));
    return gap_l <= gap_u ? at_l : at_u;
}

// Root of h between `a` and `b`, where h(a) >= 0 > h(b). The interval may run
// in either direction.
template <typename F>
double bisect_root(F&& h, double a, double b) {
    for (int it = 0; it < kTangentMaxIter && std::abs(b - a) > kTangentTolerance; ++it) {
        const double mid = 0.5 * (a + b);
        if (h(mid) >= 0.0)
            a = mid;
        else
            b = mid;
    }
    return 0.5 * (a + b);
}

NeuronRelaxation relax_relu(double l, double u, RelaxationMode mode) {
    if (l >= 0.0) return {1.0, 0.0, 1.0, 0.0};
    if (u <= 0.0) return {0.0, 0.0, 0.0, 0.0};
    const double slope = u / (u - l);
    NeuronRelaxation r;
    r.upper_slope = slope;
    r.upper_intercept = -slope * l;
    r.lower_intercept = 0.0;
    if (mode == RelaxationMode::fastlin)
        r.lower_slope = slope;
    else
        r.lower_slope = u >= -l ? 1.0 : 0.0;
    return r;
}

// tanh, sigmoid and arctan: convex below zero, concave above.
NeuronRelaxation relax_s_shaped(Activation act, double l, double u) {
    Line upper{};
    Line lower{};
    if (u <= 0.0) {
        upper = secant(act, l, u);
        lower = endpoint_tangent(act, l, u);
    } else if (l >= 0.0) {
        lower = secant(act, l, u);
        upper = endpoint_tangent(act, l, u);
    } else {
        const double fl = activate(act, l);
        const double fu = activate(act, u);

        // Upper line passes through (l, f(l)) and touches f at d in [0, u].
        auto h_upper = [&](double d) {
            return activate_derivative(act, d) * (d - l) - (activate(act, d) - fl);
        };
        if (h_upper(u) >= 0.0) {
            upper = secant(act, l, u);
        } else {
            const double d = bisect_root(h_upper, 0.0, u);
            upper = tangent(act, d);
            upper.intercept = std::max(upper.intercept, fl - upper.slope * l);
        }

        // Lower line passes through (u, f(u)) and touches f at d in [l, 0].
        auto h_lower = [&](double d) {
            return activate_derivative(act, d) * (u - d) - (fu - activate(act, d));
        };
        if (h_lower(l) >= 0.0) {
            lower = secant(act, l, u);
        } else {
            const double d = bisect_root(h_lower, 0.0, l);
            lower = tangent(act, d);
            lower.intercept = std::min(lower.intercept, fu - lower.slope * u);
        }
    }
    return {upper.slope, upper.intercept, lower.slope, lower.intercept};
}

}  // namespace

NeuronRelaxation relax_activation(Activation kind, double l, double u, RelaxationMode mode) {
    if (std::isnan(l) || std::isnan(u)) throw NumericError("NaN pre-activation bound");
    if (l > u)
        throw NumericError("lower bound " + std::to_string(l) + " exceeds upper bound " +
                           std::to_string(u));
    if (kind == Activation::identity) return {1.0, 0.0, 1.0, 0.0};
    if (u - l < kDegenerateWidth) {
        // Monotone activations: sigma(l) <= sigma(s) <= sigma(u).
        return {0.0, activate(kind, u), 0.0, activate(kind, l)};
    }
    if (kind == Activation::relu) return relax_relu(l, u, mode);
    return relax_s_shaped(kind, l, u);
}

namespace {

// Pushes linear forms expressed over a^(depth) back to the input, relaxing
// each activation on the way. Rows of `lower`/`upper` are independent forms.
void substitute_to_input(const Network& net,
                         const std::vector<std::vector<NeuronRelaxation>>& relaxations,
                         std::size_t depth, Matrix& lower, Vector& lower_offset, Matrix& upper,
                         Vector& upper_offset) {
    for (std::size_t k = depth; k > 0; --k) {
        const Layer& layer = net.layers()[k - 1];
        const auto& rel = relaxations[k - 1];
        for (Eigen::Index j = 0; j < lower.cols(); ++j) {
            const NeuronRelaxation& r = rel[static_cast<std::size_t>(j)];
            for (Eigen::Index row = 0; row < lower.rows(); ++row) {
                double& cl = lower(row, j);
                if (cl < 0.0) {
                    lower_offset[row] += cl * r.upper_intercept;
                    cl *= r.upper_slope;
                } else {
                    lower_offset[row] += cl * r.lower_intercept;
                    cl *= r.lower_slope;
                }
                double& cu = upper(row, j);
                if (cu > 0.0) {
                    upper_offset[row] += cu * r.upper_intercept;
                    cu *= r.upper_slope;
                } else {
                    upper_offset[row] += cu * r.lower_intercept;
                    cu *= r.lower_slope;
                }
            }
        }
        lower_offset.noalias() += lower * layer.bias;
        upper_offset.noalias() += upper * layer.bias;
        lower = lower * layer.weights;
        upper = upper * layer.weights;
    }
}

}  // namespace

RelaxedNetwork::RelaxedNetwork(const Network& net, const InputSpec& spec, RelaxationMode mode)
    : net_(&net), predicted_(spec.predicted) {
    if (spec.x0.size() != net.input_dim())
        throw DimensionError(0, "anchor input does not match the network input dimension");
    const std::size_t m = net.num_layers();
    bounds_.lower.reserve(m);
    bounds_.upper.reserve(m);
    relaxations_.reserve(m);

    for (std::size_t k = 0; k < m; ++k) {
        const Layer& layer = net.layers()[k];
        Matrix lower = layer.weights;
        Matrix upper = layer.weights;
        Vector lower_offset = layer.bias;
        Vector upper_offset = layer.bias;
        substitute_to_input(net, relaxations_, k, lower, lower_offset, upper, upper_offset);

        const Eigen::Index n = layer.weights.rows();
        Vector l(n);
        Vector u(n);
        std::vector<NeuronRelaxation> rel(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) {
            l[j] = lower.row(j).dot(spec.x0) + lower_offset[j] -
                   spec.epsilon * dual_norm(lower.row(j), spec.norm);
            u[j] = upper.row(j).dot(spec.x0) + upper_offset[j] +
                   spec.epsilon * dual_norm(upper.row(j), spec.norm);
            if (!std::isfinite(l[j]) || !std::isfinite(u[j]))
                throw NumericError("non-finite pre-activation bound at layer " +
                                   std::to_string(k) + ", neuron " + std::to_string(j));
            // Both sides bound the same quantity; only rounding can invert them.
            if (l[j] > u[j]) std::swap(l[j], u[j]);
            rel[static_cast<std::size_t>(j)] = relax_activation(layer.activation, l[j], u[j], mode);
        }
        bounds_.lower.push_back(std::move(l));
        bounds_.upper.push_back(std::move(u));
        relaxations_.push_back(std::move(rel));
    }
}

MarginLinearBounds RelaxedNetwork::margin_bounds(int target) const {
    const Eigen::Index k_out = net_->output_dim();
    if (target < 0 || target >= k_out) throw ClassIndexError("target class out of range");
    if (target == predicted_) throw ClassIndexError("target equals the predicted class");

    Matrix lower = Matrix::Zero(1, k_out);
    lower(0, predicted_) = 1.0;
    lower(0, target) = -1.0;
    Matrix upper = lower;
    Vector lower_offset = Vector::Zero(1);
    Vector upper_offset = Vector::Zero(1);
    substitute_to_input(*net_, relaxations_, net_->num_layers(), lower, lower_offset, upper,
                        upper_offset);

    MarginLinearBounds out;
    out.target = target;
    out.lower_coeffs = lower.row(0);
    out.upper_coeffs = upper.row(0);
    out.lower_offset = lower_offset[0];
    out.upper_offset = upper_offset[0];
    if (!out.lower_coeffs.allFinite() || !out.upper_coeffs.allFinite() ||
        !std::isfinite(out.lower_offset) || !std::isfinite(out.upper_offset))
        throw NumericError("non-finite margin bound for target " + std::to_string(target));
    return out;
}

PreactivationBounds compute_preactivation_bounds(const Network& net, const InputSpec& spec,
                                                 RelaxationMode mode) {
    return RelaxedNetwork(net, spec, mode).bounds();
}

MarginLinearBounds compute_margin_bounds(const Network& net, const InputSpec& spec, int target,
                                         RelaxationMode mode) {
    return RelaxedNetwork(net, spec, mode).margin_bounds(target);
}

std::vector<MarginLinearBounds> compute_all_margin_bounds(const Network& net,
                                                          const InputSpec& spec,
                                                          RelaxationMode mode) {
    const RelaxedNetwork relaxed(net, spec, mode);
    std::vector<MarginLinearBounds> out;
    out.reserve(spec.targets.size());
    for (int t : spec.targets) out.push_back(relaxed.margin_bounds(t));
    return out;
}

}  // namespace proven
