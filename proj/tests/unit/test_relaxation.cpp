#include "proven/errors.hpp"
#include "proven/relaxation.hpp"
#include "proven/worst_case.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <limits>

using namespace proven;
using namespace proven::testing;

namespace {

constexpr Activation kAllActivations[] = {Activation::relu, Activation::tanh, Activation::sigmoid,
                                          Activation::arctan, Activation::identity};

// Both lines must sandwich the activation on a dense grid of [l, u].
void check_lines_valid(Activation kind, double l, double u, RelaxationMode mode) {
    const NeuronRelaxation r = relax_activation(kind, l, u, mode);
    REQUIRE(std::isfinite(r.upper_slope));
    REQUIRE(std::isfinite(r.lower_slope));
    constexpr int kGrid = 2000;
    for (int i = 0; i <= kGrid; ++i) {
        const double s = l + (u - l) * i / kGrid;
        const double v = activate(kind, s);
        const double slack = 1e-12 * std::max(1.0, std::abs(v));
        CHECK(r.lower_slope * s + r.lower_intercept <= v + slack);
        CHECK(r.upper_slope * s + r.upper_intercept >= v - slack);
    }
}

void check_vec(const RowVector& got, std::initializer_list<double> want, double tol) {
    REQUIRE(got.size() == static_cast<Eigen::Index>(want.size()));
    Eigen::Index i = 0;
    for (double w : want) {
        CHECK(got[i] == doctest::Approx(w).epsilon(tol).scale(1.0));
        ++i;
    }
}

}  // namespace

TEST_CASE("ReLU relaxation on an unstable interval") {
    const NeuronRelaxation f = relax_activation(Activation::relu, -1.0, 1.0, RelaxationMode::fastlin);
    CHECK(f.upper_slope == 0.5);
    CHECK(f.upper_intercept == 0.5);
    CHECK(f.lower_slope == 0.5);
    CHECK(f.lower_intercept == 0.0);

    const NeuronRelaxation a = relax_activation(Activation::relu, -1.0, 2.0, RelaxationMode::adaptive);
    CHECK(a.lower_slope == 1.0);
    CHECK(a.lower_intercept == 0.0);
    CHECK(a.upper_slope == doctest::Approx(2.0 / 3.0));
    CHECK(a.upper_intercept == doctest::Approx(2.0 / 3.0));

    const NeuronRelaxation b = relax_activation(Activation::relu, -2.0, 1.0, RelaxationMode::adaptive);
    CHECK(b.lower_slope == 0.0);
}

TEST_CASE("ReLU relaxation on stable intervals is exact") {
    for (RelaxationMode mode : {RelaxationMode::fastlin, RelaxationMode::adaptive}) {
        const NeuronRelaxation on = relax_activation(Activation::relu, 0.5, 2.0, mode);
        CHECK(on.upper_slope == 1.0);
        CHECK(on.lower_slope == 1.0);
        CHECK(on.upper_intercept == 0.0);
        CHECK(on.lower_intercept == 0.0);
        const NeuronRelaxation off = relax_activation(Activation::relu, -3.0, -0.5, mode);
        CHECK(off.upper_slope == 0.0);
        CHECK(off.lower_slope == 0.0);
        CHECK(off.upper_intercept == 0.0);
    }
}

TEST_CASE("degenerate intervals collapse to constants") {
    for (Activation kind : {Activation::relu, Activation::tanh, Activation::sigmoid, Activation::arctan}) {
        const NeuronRelaxation r = relax_activation(kind, 0.3, 0.3, RelaxationMode::adaptive);
        CHECK(r.upper_slope == 0.0);
        CHECK(r.lower_slope == 0.0);
        CHECK(r.lower_intercept == doctest::Approx(activate(kind, 0.3)));
        CHECK(r.upper_intercept == doctest::Approx(activate(kind, 0.3)));
    }
    const NeuronRelaxation id = relax_activation(Activation::identity, -5.0, 5.0, RelaxationMode::fastlin);
    CHECK(id.upper_slope == 1.0);
    CHECK(id.lower_slope == 1.0);
    CHECK(id.upper_intercept == 0.0);
    CHECK(id.lower_intercept == 0.0);
}

TEST_CASE("invalid intervals are rejected") {
    CHECK_THROWS_AS(relax_activation(Activation::relu, 1.0, 0.0, RelaxationMode::adaptive), NumericError);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(relax_activation(Activation::tanh, nan, 1.0, RelaxationMode::adaptive), NumericError);
    CHECK_THROWS_AS(relax_activation(Activation::tanh, 0.0, nan, RelaxationMode::adaptive), NumericError);
}

TEST_CASE("tanh relaxation across zero is valid") {
    check_lines_valid(Activation::tanh, -0.8, 0.9, RelaxationMode::adaptive);
    check_lines_valid(Activation::tanh, -6.0, 0.1, RelaxationMode::adaptive);
    check_lines_valid(Activation::sigmoid, -0.01, 12.0, RelaxationMode::adaptive);
    check_lines_valid(Activation::arctan, -30.0, 30.0, RelaxationMode::adaptive);
}

TEST_CASE("random intervals: lines sandwich every activation") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> centre(0.0, 3.0);
    std::exponential_distribution<double> width(0.5);
    for (int trial = 0; trial < 400; ++trial) {
        const double c = centre(gen);
        const double w = width(gen);
        const double l = c - w;
        const double u = c + w * (trial % 3 == 0 ? 0.1 : 1.0);
        for (Activation kind : kAllActivations)
            for (RelaxationMode mode : {RelaxationMode::fastlin, RelaxationMode::adaptive})
                check_lines_valid(kind, l, u, mode);
        const NeuronRelaxation r = relax_activation(Activation::relu, l, u, RelaxationMode::adaptive);
        CHECK(r.upper_slope >= 0.0);
        CHECK(r.upper_slope <= 1.0);
        CHECK(r.lower_slope >= 0.0);
        CHECK(r.lower_slope <= 1.0);
    }
}

TEST_CASE("first-layer bounds are exact for an identity layer") {
    Layer l1;
    l1.weights = Matrix::Identity(2, 2);
    l1.bias = Vector::Zero(2);
    l1.activation = Activation::relu;
    Layer l2;
    l2.weights = Matrix::Identity(2, 2);
    l2.bias = Vector::Zero(2);
    const Network net({l1, l2});
    Vector x0(2);
    x0 << 0.5, -0.5;
    InputSpec spec = make_input_spec(net, x0, 0.1, Norm::linf);
    const PreactivationBounds b = compute_preactivation_bounds(net, spec, RelaxationMode::adaptive);
    CHECK(b.lower[0][0] == doctest::Approx(0.4));
    CHECK(b.lower[0][1] == doctest::Approx(-0.6));
    CHECK(b.upper[0][0] == doctest::Approx(0.6));
    CHECK(b.upper[0][1] == doctest::Approx(-0.4));
}

TEST_CASE("backward pass matches the hand-evaluated 2-2-2 fixture") {
    const Network net = toy_relu_network();
    const InputSpec spec = make_input_spec(net, toy_anchor(), 0.3, Norm::linf, {1});
    REQUIRE(spec.predicted == 0);
    constexpr double tol = 1e-12;

    for (RelaxationMode mode : {RelaxationMode::fastlin, RelaxationMode::adaptive}) {
        const PreactivationBounds b = compute_preactivation_bounds(net, spec, mode);
        CHECK(b.lower[0][0] == doctest::Approx(-0.2).epsilon(tol));
        CHECK(b.lower[0][1] == doctest::Approx(-0.55).epsilon(tol));
        CHECK(b.upper[0][0] == doctest::Approx(1.0).epsilon(tol));
        CHECK(b.upper[0][1] == doctest::Approx(0.95).epsilon(tol));
    }

    const MarginLinearBounds f = compute_margin_bounds(net, spec, 1, RelaxationMode::fastlin);
    check_vec(f.lower_coeffs, {0.45833333333333337, -4.416666666666666}, tol);
    check_vec(f.upper_coeffs, {0.45833333333333337, -4.416666666666666}, tol);
    CHECK(f.lower_offset == doctest::Approx(-0.22916666666666657).epsilon(tol));
    CHECK(f.upper_offset == doctest::Approx(0.8916666666666666).epsilon(tol));

    const MarginLinearBounds a = compute_margin_bounds(net, spec, 1, RelaxationMode::adaptive);
    check_vec(a.lower_coeffs, {0.7083333333333334, -4.666666666666666}, tol);
    check_vec(a.upper_coeffs, {0.0, -6.25}, tol);
    CHECK(a.lower_offset == doctest::Approx(-0.20416666666666655).epsilon(tol));
    CHECK(a.upper_offset == doctest::Approx(1.075).epsilon(tol));
}

TEST_CASE("all-identity network gives coinciding exact bounds") {
    std::mt19937_64 gen(4);
    const Network net = random_network(gen, {4, 6, 3}, Activation::identity);
    const Vector x0 = strict_anchor(gen, net);
    const InputSpec spec = make_input_spec(net, x0, 0.2, Norm::l2);
    const Matrix w = net.layers()[1].weights * net.layers()[0].weights;
    const Vector b = net.layers()[1].weights * net.layers()[0].bias + net.layers()[1].bias;
    for (RelaxationMode mode : {RelaxationMode::fastlin, RelaxationMode::adaptive}) {
        for (const MarginLinearBounds& m : compute_all_margin_bounds(net, spec, mode)) {
            const RowVector want = w.row(spec.predicted) - w.row(m.target);
            const double want_d = b[spec.predicted] - b[m.target];
            CHECK((m.lower_coeffs - want).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((m.upper_coeffs - want).cwiseAbs().maxCoeff() < 1e-12);
            CHECK(m.lower_offset == doctest::Approx(want_d));
            CHECK(m.upper_offset == doctest::Approx(want_d));
        }
    }
}

TEST_CASE("sampled soundness of layer and margin bounds") {
    std::mt19937_64 gen(1234);
    struct Case {
        std::vector<Eigen::Index> sizes;
        Activation act;
        Norm p;
        double eps;
    };
    const Case cases[] = {
        {{5, 8, 8, 3}, Activation::relu, Norm::linf, 0.1},
        {{5, 8, 8, 3}, Activation::relu, Norm::l2, 0.3},
        {{5, 8, 8, 3}, Activation::relu, Norm::l1, 0.5},
        {{4, 10, 4}, Activation::tanh, Norm::linf, 0.2},
        {{4, 10, 4}, Activation::sigmoid, Norm::l2, 0.4},
        {{4, 10, 6, 4}, Activation::arctan, Norm::linf, 0.15},
    };
    constexpr int kSamples = 20000;
    for (const Case& cs : cases) {
        const Network net = random_network(gen, cs.sizes, cs.act);
        const Vector x0 = strict_anchor(gen, net);
        const InputSpec spec = make_input_spec(net, x0, cs.eps, cs.p);
        for (RelaxationMode mode : {RelaxationMode::fastlin, RelaxationMode::adaptive}) {
            const RelaxedNetwork relaxed(net, spec, mode);
            std::vector<MarginLinearBounds> mlbs;
            for (int t : spec.targets) mlbs.push_back(relaxed.margin_bounds(t));
            const PreactivationBounds& b = relaxed.bounds();

            int violations = 0;
            for (int s = 0; s < kSamples; ++s) {
                const Vector x = ball_point(gen, x0, cs.eps, cs.p);
                Vector a = x;
                for (std::size_t k = 0; k + 1 < net.num_layers(); ++k) {
                    const Layer& layer = net.layers()[k];
                    const Vector z = layer.weights * a + layer.bias;
                    for (Eigen::Index i = 0; i < z.size(); ++i)
                        if (z[i] < b.lower[k][i] - 1e-10 || z[i] > b.upper[k][i] + 1e-10) ++violations;
                    a = z.unaryExpr([&](double v) { return activate(layer.activation, v); });
                }
                for (const MarginLinearBounds& m : mlbs) {
                    const double g = margin(net, x, spec.predicted, m.target);
                    if (m.lower_at(x) > g + 1e-10 || m.upper_at(x) < g - 1e-10) ++violations;
                }
            }
            CHECK(violations == 0);
        }
    }
}

TEST_CASE("brute-force grid oracle on a two-input network") {
    const Network net = toy_relu_network();
    const double eps = 0.3;
    const InputSpec spec = make_input_spec(net, toy_anchor(), eps, Norm::linf, {1});
    for (RelaxationMode mode : {RelaxationMode::fastlin, RelaxationMode::adaptive}) {
        const MarginLinearBounds m = compute_margin_bounds(net, spec, 1, mode);
        double true_min = std::numeric_limits<double>::infinity();
        constexpr int kSide = 301;
        for (int i = 0; i < kSide; ++i) {
            for (int j = 0; j < kSide; ++j) {
                Vector x = toy_anchor();
                x[0] += eps * (2.0 * i / (kSide - 1) - 1.0);
                x[1] += eps * (2.0 * j / (kSide - 1) - 1.0);
                const double g = margin(net, x, 0, 1);
                true_min = std::min(true_min, g);
                CHECK(m.lower_at(x) <= g + 1e-12);
                CHECK(m.upper_at(x) >= g - 1e-12);
            }
        }
        const double certified_min =
            minimize_affine_over_ball(m.lower_coeffs, m.lower_offset, toy_anchor(), eps, Norm::linf);
        CHECK(certified_min <= true_min + 1e-12);
    }
}

TEST_CASE("shrinking the ball never loosens the certified lower bound") {
    std::mt19937_64 gen(77);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const Network net = random_network(gen, {3, 8, 8, 3}, Activation::relu);
        const Vector x0 = strict_anchor(gen, net);
        const InputSpec spec = make_input_spec(net, x0, 0.0, Norm::linf);
        for (int t : spec.targets) {
            double prev = -std::numeric_limits<double>::infinity();
            for (double eps : {0.4, 0.2, 0.1, 0.05, 0.01}) {
                const MarginLinearBounds m =
                    compute_margin_bounds(net, spec.with_epsilon(eps), t, RelaxationMode::fastlin);
                const double lo = minimize_affine_over_ball(m.lower_coeffs, m.lower_offset, x0, eps,
                                                            Norm::linf);
                CHECK(lo >= prev - 1e-9);
                prev = lo;
                ++checked;
            }
        }
    }
    CHECK(checked > 0);
}

namespace {

// Scalar re-derivation of the backward pass for ReLU networks, written
// against the definitions only (no library relaxation code).
struct ScalarBound {
    double lo;
    double hi;
};

ScalarBound scalar_backward(const Network& net, const Vector& x0, double eps,
                            const std::vector<std::vector<double>>& lows,
                            const std::vector<std::vector<double>>& ups, std::size_t k,
                            std::vector<double> c, bool adaptive) {
    std::vector<double> al = c;
    std::vector<double> au = c;
    double dl = 0.0;
    double du = 0.0;
    for (std::size_t j = k + 1; j-- > 0;) {
        const Layer& layer = net.layers()[j];
        const auto rows = static_cast<std::size_t>(layer.weights.rows());
        const auto cols = static_cast<std::size_t>(layer.weights.cols());
        std::vector<double> nl(cols, 0.0);
        std::vector<double> nu(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            dl += al[r] * layer.bias[static_cast<Eigen::Index>(r)];
            du += au[r] * layer.bias[static_cast<Eigen::Index>(r)];
            for (std::size_t q = 0; q < cols; ++q) {
                const double w = layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q));
                nl[q] += al[r] * w;
                nu[q] += au[r] * w;
            }
        }
        al = nl;
        au = nu;
        if (j == 0) break;
        for (std::size_t q = 0; q < cols; ++q) {
            const double l = lows[j - 1][q];
            const double u = ups[j - 1][q];
            double us = 0.0, ui = 0.0, ls = 0.0;
            if (l >= 0.0) {
                us = ls = 1.0;
            } else if (u > 0.0) {
                us = u / (u - l);
                ui = -us * l;
                ls = adaptive ? (u >= -l ? 1.0 : 0.0) : us;
            }
            if (al[q] >= 0.0) {
                al[q] *= ls;
            } else {
                dl += al[q] * ui;
                al[q] *= us;
            }
            if (au[q] >= 0.0) {
                du += au[q] * ui;
                au[q] *= us;
            } else {
                au[q] *= ls;
            }
        }
    }
    ScalarBound out{dl, du};
    for (std::size_t q = 0; q < al.size(); ++q) {
        out.lo += al[q] * x0[static_cast<Eigen::Index>(q)] - eps * std::abs(al[q]);
        out.hi += au[q] * x0[static_cast<Eigen::Index>(q)] + eps * std::abs(au[q]);
    }
    return out;
}

}  // namespace

TEST_CASE("deep ReLU bounds match a scalar re-derivation") {
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 12; ++trial) {
        const Network net = random_network(gen, {4, 8, 8, 7, 3}, Activation::relu);
        const Vector x0 = strict_anchor(gen, net);
        const double eps = 0.05 + 0.02 * trial;
        const InputSpec spec = make_input_spec(net, x0, eps, Norm::linf);
        for (bool adaptive : {false, true}) {
            const RelaxationMode mode = adaptive ? RelaxationMode::adaptive : RelaxationMode::fastlin;
            std::vector<std::vector<double>> lows;
            std::vector<std::vector<double>> ups;
            for (std::size_t k = 0; k + 1 < net.num_layers(); ++k) {
                const auto n = static_cast<std::size_t>(net.layers()[k].weights.rows());
                lows.emplace_back(n);
                ups.emplace_back(n);
                for (std::size_t i = 0; i < n; ++i) {
                    std::vector<double> c(n, 0.0);
                    c[i] = 1.0;
                    const ScalarBound b = scalar_backward(net, x0, eps, lows, ups, k, c, adaptive);
                    lows[k][i] = b.lo;
                    ups[k][i] = b.hi;
                }
            }
            const PreactivationBounds pb = compute_preactivation_bounds(net, spec, mode);
            for (std::size_t k = 0; k < lows.size(); ++k) {
                for (std::size_t i = 0; i < lows[k].size(); ++i) {
                    CHECK(pb.lower[k][static_cast<Eigen::Index>(i)] == doctest::Approx(lows[k][i]).epsilon(1e-12).scale(1.0));
                    CHECK(pb.upper[k][static_cast<Eigen::Index>(i)] == doctest::Approx(ups[k][i]).epsilon(1e-12).scale(1.0));
                }
            }
            for (int t : spec.targets) {
                std::vector<double> c(3, 0.0);
                c[static_cast<std::size_t>(spec.predicted)] = 1.0;
                c[static_cast<std::size_t>(t)] = -1.0;
                const ScalarBound want = scalar_backward(net, x0, eps, lows, ups, net.num_layers() - 1, c, adaptive);
                const MarginLinearBounds m = compute_margin_bounds(net, spec, t, mode);
                CHECK(minimize_affine_over_ball(m.lower_coeffs, m.lower_offset, x0, eps, Norm::linf) ==
                      doctest::Approx(want.lo).epsilon(1e-12).scale(1.0));
                CHECK(maximize_affine_over_ball(m.upper_coeffs, m.upper_offset, x0, eps, Norm::linf) ==
                      doctest::Approx(want.hi).epsilon(1e-12).scale(1.0));
            }
        }
    }
}
