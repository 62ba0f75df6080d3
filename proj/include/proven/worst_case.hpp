#pragma once

#include "proven/network.hpp"
#include "proven/relaxation.hpp"

#include <functional>
#include <map>

namespace proven {

/// Exact minimum of coeffs*x + offset over ||x - x0||_p <= epsilon:
/// coeffs*x0 + offset - epsilon*||coeffs||_q.
double minimize_affine_over_ball(const Eigen::Ref<const RowVector>& coeffs, double offset,
                                 const Eigen::Ref<const Vector>& x0, double epsilon, Norm p);

double maximize_affine_over_ball(const Eigen::Ref<const RowVector>& coeffs, double offset,
                                 const Eigen::Ref<const Vector>& x0, double epsilon, Norm p);

/// True iff the lower margin bound of every target in `spec` stays strictly
/// positive over the ball of radius `epsilon` (bounds recomputed at `epsilon`).
bool is_certified(const Network& net, const InputSpec& spec, double epsilon, RelaxationMode mode);

struct BisectionOptions {
    double eps_max = 1.0;
    double tolerance = 1e-4;  // relative bracket width
    int max_iterations = 200;
};

/// Largest radius in [0, eps_max] for which a monotone predicate holds,
/// up to the relative tolerance. `certified_floor` is a radius already known
/// to satisfy the predicate.
double bisect_radius(const std::function<bool(double)>& predicate, const BisectionOptions& opts,
                     double certified_floor = 0.0);

struct WorstCaseCertificate {
    double epsilon_certified = 0.0;
    std::map<int, double> per_target_epsilon;
    Norm norm = Norm::linf;
    RelaxationMode mode = RelaxationMode::adaptive;
    double tolerance = 1e-4;
};

/// Certified radius by bisection, one run per target; the overall radius is
/// the minimum over targets. `spec.epsilon` is ignored.
WorstCaseCertificate certify_worst_case(const Network& net, const InputSpec& spec,
                                        RelaxationMode mode, const BisectionOptions& opts = {});

}  // namespace proven
