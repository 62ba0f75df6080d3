#include "proven/worst_case.hpp"

#include "proven/errors.hpp"

#include <algorithm>
#include <cmath>

namespace proven {

double minimize_affine_over_ball(const Eigen::Ref<const RowVector>& coeffs, double offset,
                                 const Eigen::Ref<const Vector>& x0, double epsilon, Norm p) {
    if (!(epsilon >= 0.0)) throw NumericError("epsilon must be nonnegative");
    return coeffs.dot(x0.transpose()) + offset - epsilon * dual_norm(coeffs, p);
}

double maximize_affine_over_ball(const Eigen::Ref<const RowVector>& coeffs, double offset,
                                 const Eigen::Ref<const Vector>& x0, double epsilon, Norm p) {
    if (!(epsilon >= 0.0)) throw NumericError("epsilon must be nonnegative");
    return coeffs.dot(x0.transpose()) + offset + epsilon * dual_norm(coeffs, p);
}

namespace {

bool target_certified(const Network& net, const InputSpec& spec, int target, double epsilon,
                      RelaxationMode mode) {
    const InputSpec probe = spec.with_epsilon(epsilon);
    const MarginLinearBounds mlb = compute_margin_bounds(net, probe, target, mode);
    return minimize_affine_over_ball(mlb.lower_coeffs, mlb.lower_offset, spec.x0, epsilon,
                                     spec.norm) > 0.0;
}

}  // namespace

bool is_certified(const Network& net, const InputSpec& spec, double epsilon, RelaxationMode mode) {
    if (!(epsilon >= 0.0)) throw NumericError("epsilon must be nonnegative");
    const InputSpec probe = spec.with_epsilon(epsilon);
    const RelaxedNetwork relaxed(net, probe, mode);
    for (int t : spec.targets) {
        const MarginLinearBounds mlb = relaxed.margin_bounds(t);
        if (!(minimize_affine_over_ball(mlb.lower_coeffs, mlb.lower_offset, spec.x0, epsilon,
                                        spec.norm) > 0.0))
            return false;
    }
    return true;
}

double bisect_radius(const std::function<bool(double)>& predicate, const BisectionOptions& opts,
                     double certified_floor) {
    if (!(opts.eps_max > 0.0)) throw NumericError("eps_max must be positive");
    if (!(opts.tolerance > 0.0)) throw NumericError("bisection tolerance must be positive");
    double lo = std::clamp(certified_floor, 0.0, opts.eps_max);
    double hi = opts.eps_max;
    if (predicate(hi)) return hi;
    for (int it = 0; it < opts.max_iterations && hi - lo >= opts.tolerance * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (predicate(mid))
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

WorstCaseCertificate certify_worst_case(const Network& net, const InputSpec& spec,
                                        RelaxationMode mode, const BisectionOptions& opts) {
    const Vector logits = forward(net, spec.x0);
    for (int t : spec.targets) {
        if (!(logits[spec.predicted] > logits[t]))
            throw TiedPredictionError("prediction at the anchor is not a strict argmax; "
                                      "nothing is certifiable at radius zero");
    }

    WorstCaseCertificate cert;
    cert.norm = spec.norm;
    cert.mode = mode;
    cert.tolerance = opts.tolerance;
    cert.epsilon_certified = opts.eps_max;
    for (int t : spec.targets) {
        const double eps = bisect_radius(
            [&](double e) { return target_certified(net, spec, t, e, mode); }, opts);
        cert.per_target_epsilon[t] = eps;
        cert.epsilon_certified = std::min(cert.epsilon_certified, eps);
    }
    if (spec.targets.empty()) cert.epsilon_certified = opts.eps_max;
    return cert;
}

}  // namespace proven
