#include "proven/driver.hpp"
#include "proven/errors.hpp"
#include "proven/oracle.hpp"
#include "proven/probabilistic.hpp"
#include "proven/relaxation.hpp"
#include "proven/worst_case.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace proven;

namespace {

InputSpec spec_for(const Network& net, const Vector& x0, double epsilon, Norm norm,
                   std::vector<int> targets) {
    return make_input_spec(net, x0, epsilon, norm, std::move(targets));
}

NoiseModel noise_from(NoiseKind kind, double half_width, const std::optional<Matrix>& covariance) {
    if (kind == NoiseKind::bounded) return NoiseModel::bounded(half_width);
    if (!covariance) throw Error("gaussian noise needs a covariance matrix");
    return NoiseModel::gaussian(*covariance);
}

}  // namespace

PYBIND11_MODULE(_proven, m) {
    m.doc() = "Worst-case and probabilistic robustness certificates for feed-forward classifiers";

    static py::exception<Error> base(m, "ProvenError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ActivationError>(m, "ActivationError", base.ptr());
    py::register_exception<ClassIndexError>(m, "ClassIndexError", base.ptr());
    py::register_exception<TiedPredictionError>(m, "TiedPredictionError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<CovarianceError>(m, "CovarianceError", base.ptr());
    py::register_exception<ResolutionError>(m, "ResolutionError", base.ptr());

    py::enum_<Activation>(m, "Activation")
        .value("relu", Activation::relu)
        .value("tanh", Activation::tanh)
        .value("sigmoid", Activation::sigmoid)
        .value("arctan", Activation::arctan)
        .value("identity", Activation::identity);
    py::enum_<Norm>(m, "Norm").value("l1", Norm::l1).value("l2", Norm::l2).value("linf", Norm::linf);
    py::enum_<RelaxationMode>(m, "RelaxationMode")
        .value("fastlin", RelaxationMode::fastlin)
        .value("adaptive", RelaxationMode::adaptive);
    py::enum_<NoiseKind>(m, "NoiseKind")
        .value("bounded", NoiseKind::bounded)
        .value("gaussian", NoiseKind::gaussian);
    py::enum_<CertificateMethod>(m, "CertificateMethod")
        .value("hoeffding", CertificateMethod::hoeffding)
        .value("gaussian", CertificateMethod::gaussian)
        .value("convolution", CertificateMethod::convolution);
    py::enum_<Aggregation>(m, "Aggregation")
        .value("min_gamma", Aggregation::min_gamma)
        .value("union_bound", Aggregation::union_bound);

    py::class_<Network>(m, "Network")
        .def_static("from_json", [](const std::string& text) { return parse_network(text); })
        .def_static("load", [](const std::filesystem::path& p) { return load_network(p); })
        .def("to_json", [](const Network& n) { return serialize_network(n); })
        .def("save", [](const Network& n, const std::filesystem::path& p) { save_network(n, p); })
        .def_property_readonly("input_dim", &Network::input_dim)
        .def_property_readonly("output_dim", &Network::output_dim)
        .def_property_readonly("num_layers", &Network::num_layers)
        .def("layer", [](const Network& n, std::size_t k) {
            if (k >= n.num_layers()) throw py::index_error("layer index out of range");
            const Layer& l = n.layers()[k];
            return py::make_tuple(l.weights, l.bias, l.activation);
        })
        .def("forward", [](const Network& n, const Vector& x) { return forward(n, x); }, py::arg("x"))
        .def("margin", [](const Network& n, const Vector& x, int c, int t) { return margin(n, x, c, t); },
             py::arg("x"), py::arg("c"), py::arg("t"))
        .def("predicted_class", [](const Network& n, const Vector& x) { return predicted_class(n, x); },
             py::arg("x"));

    py::class_<MarginLinearBounds>(m, "MarginLinearBounds")
        .def_readonly("target", &MarginLinearBounds::target)
        .def_readonly("lower_coeffs", &MarginLinearBounds::lower_coeffs)
        .def_readonly("upper_coeffs", &MarginLinearBounds::upper_coeffs)
        .def_readonly("lower_offset", &MarginLinearBounds::lower_offset)
        .def_readonly("upper_offset", &MarginLinearBounds::upper_offset)
        .def("lower_at", [](const MarginLinearBounds& b, const Vector& x) { return b.lower_at(x); })
        .def("upper_at", [](const MarginLinearBounds& b, const Vector& x) { return b.upper_at(x); });

    m.def(
        "relax_activation",
        [](Activation kind, double l, double u, RelaxationMode mode) {
            const NeuronRelaxation r = relax_activation(kind, l, u, mode);
            return py::dict(py::arg("upper_slope") = r.upper_slope,
                            py::arg("upper_intercept") = r.upper_intercept,
                            py::arg("lower_slope") = r.lower_slope,
                            py::arg("lower_intercept") = r.lower_intercept);
        },
        py::arg("kind"), py::arg("l"), py::arg("u"), py::arg("mode") = RelaxationMode::adaptive);

    m.def(
        "preactivation_bounds",
        [](const Network& net, const Vector& x0, double epsilon, Norm norm, RelaxationMode mode) {
            const PreactivationBounds b =
                compute_preactivation_bounds(net, spec_for(net, x0, epsilon, norm, {}), mode);
            return py::make_tuple(b.lower, b.upper);
        },
        py::arg("net"), py::arg("x0"), py::arg("epsilon"), py::arg("norm") = Norm::linf,
        py::arg("mode") = RelaxationMode::adaptive);

    m.def(
        "margin_bounds",
        [](const Network& net, const Vector& x0, double epsilon, Norm norm, RelaxationMode mode,
           std::vector<int> targets) {
            return compute_all_margin_bounds(net, spec_for(net, x0, epsilon, norm, std::move(targets)),
                                             mode);
        },
        py::arg("net"), py::arg("x0"), py::arg("epsilon"), py::arg("norm") = Norm::linf,
        py::arg("mode") = RelaxationMode::adaptive, py::arg("targets") = std::vector<int>{});

    m.def("minimize_affine_over_ball", &minimize_affine_over_ball, py::arg("coeffs"),
          py::arg("offset"), py::arg("x0"), py::arg("epsilon"), py::arg("norm"));

    m.def(
        "certify_worst_case",
        [](const Network& net, const Vector& x0, Norm norm, RelaxationMode mode, double eps_max,
           double tolerance, std::vector<int> targets) {
            BisectionOptions opts;
            opts.eps_max = eps_max;
            opts.tolerance = tolerance;
            const WorstCaseCertificate c =
                certify_worst_case(net, spec_for(net, x0, 0.0, norm, std::move(targets)), mode, opts);
            return py::make_tuple(c.epsilon_certified, c.per_target_epsilon);
        },
        py::arg("net"), py::arg("x0"), py::arg("norm") = Norm::linf,
        py::arg("mode") = RelaxationMode::adaptive, py::arg("eps_max") = 1.0,
        py::arg("tolerance") = 1e-4, py::arg("targets") = std::vector<int>{});

    py::class_<ProbCertificate>(m, "ProbCertificate")
        .def_readonly("gamma_lower", &ProbCertificate::gamma_lower)
        .def_readonly("gamma_upper", &ProbCertificate::gamma_upper)
        .def_readonly("threshold", &ProbCertificate::threshold)
        .def_readonly("mu_lower", &ProbCertificate::mu_lower)
        .def_readonly("mu_upper", &ProbCertificate::mu_upper)
        .def_readonly("sigma_lower", &ProbCertificate::sigma_lower)
        .def_readonly("sigma_upper", &ProbCertificate::sigma_upper)
        .def_readonly("method", &ProbCertificate::method);

    m.def("hoeffding_bounds", &hoeffding_bounds, py::arg("bounds"), py::arg("x0"),
          py::arg("epsilon"), py::arg("threshold") = 0.0);
    m.def("gaussian_bounds", &gaussian_bounds, py::arg("bounds"), py::arg("x0"), py::arg("sigma"),
          py::arg("epsilon"), py::arg("threshold") = 0.0);
    m.def("convolution_bounds", &convolution_bounds, py::arg("bounds"), py::arg("x0"),
          py::arg("epsilon"), py::arg("threshold") = 0.0,
          py::arg("grid_points") = kDefaultConvolutionGrid);
    m.def(
        "uniform_sum_cdf",
        [](const RowVector& weights, double half_width, std::size_t grid_points, const Vector& z) {
            const DistributionCDF cdf = weighted_uniform_sum_cdf(weights, half_width, grid_points);
            return Vector(z.unaryExpr([&](double v) { return cdf(v); }));
        },
        py::arg("weights"), py::arg("half_width"), py::arg("grid_points"), py::arg("z"));

    m.def(
        "certify_proven_radius",
        [](const Network& net, const Vector& x0, double confidence, CertificateMethod method,
           RelaxationMode mode, Aggregation aggregation, double eps_max, double tolerance,
           std::optional<Matrix> covariance_shape, std::vector<int> targets) {
            ProvenSettings s;
            s.method = method;
            s.noise = method == CertificateMethod::gaussian ? NoiseKind::gaussian : NoiseKind::bounded;
            s.mode = mode;
            s.aggregation = aggregation;
            s.covariance_shape = std::move(covariance_shape);
            s.bisection.eps_max = eps_max;
            s.bisection.tolerance = tolerance;
            const InputSpec spec = spec_for(net, x0, 0.0, Norm::linf, std::move(targets));
            const double floor = certify_worst_case(net, spec, mode, s.bisection).epsilon_certified;
            const ProvenRadius r = certify_proven_radius(net, spec, s, confidence, floor);
            return py::make_tuple(r.epsilon, r.warnings);
        },
        py::arg("net"), py::arg("x0"), py::arg("confidence"),
        py::arg("method") = CertificateMethod::hoeffding, py::arg("mode") = RelaxationMode::adaptive,
        py::arg("aggregation") = Aggregation::min_gamma, py::arg("eps_max") = 1.0,
        py::arg("tolerance") = 1e-4, py::arg("covariance_shape") = std::nullopt,
        py::arg("targets") = std::vector<int>{});

    m.def(
        "mc_probability",
        [](const Network& net, const Vector& x0, int c, int t, double threshold, NoiseKind kind,
           double half_width, std::optional<Matrix> covariance, std::uint64_t n_samples,
           std::uint64_t seed) {
            const McEstimate e = mc_probability(net, x0, noise_from(kind, half_width, covariance), c,
                                                t, threshold, n_samples, seed);
            return py::dict(py::arg("p_hat") = e.p_hat, py::arg("std_error") = e.std_error,
                            py::arg("n_samples") = e.n_samples, py::arg("seed") = e.seed);
        },
        py::arg("net"), py::arg("x0"), py::arg("c"), py::arg("t"), py::arg("threshold") = 0.0,
        py::arg("noise") = NoiseKind::bounded, py::arg("half_width") = 0.0,
        py::arg("covariance") = std::nullopt, py::arg("n_samples") = 100000, py::arg("seed") = 0);

    m.def(
        "attack_search",
        [](const Network& net, const Vector& x0, double epsilon, Norm norm, std::uint64_t n_random,
           std::uint64_t seed) {
            return attack_search(net, spec_for(net, x0, epsilon, norm, {}), epsilon, n_random, seed);
        },
        py::arg("net"), py::arg("x0"), py::arg("epsilon"), py::arg("norm") = Norm::linf,
        py::arg("n_random") = 1000, py::arg("seed") = 0);

    // Batch entry point; returns the JSON report as text (wrapped by the
    // Python package into a dict).
    m.def(
        "_certify_files",
        [](const std::filesystem::path& model, const std::vector<std::filesystem::path>& inputs,
           Norm norm, RelaxationMode mode, NoiseKind noise, CertificateMethod method,
           Aggregation aggregation, std::vector<double> confidences, std::string targets,
           std::vector<int> explicit_targets, double eps_max, double tolerance, std::uint64_t seed,
           std::uint64_t validate_mc, std::size_t grid_points,
           std::optional<std::filesystem::path> covariance) {
            CertificationRequest req;
            req.model_path = model;
            req.input_paths = inputs;
            req.covariance_path = std::move(covariance);
            BatchOptions& o = req.options;
            o.norm = norm;
            o.settings.mode = mode;
            o.settings.noise = noise;
            o.settings.method = method;
            o.settings.aggregation = aggregation;
            o.settings.grid_points = grid_points;
            o.settings.bisection.eps_max = eps_max;
            o.settings.bisection.tolerance = tolerance;
            o.confidences = std::move(confidences);
            o.seed = seed;
            o.validate_mc = validate_mc;
            if (targets == "all")
                o.target_policy = TargetPolicy::all;
            else if (targets == "random")
                o.target_policy = TargetPolicy::random;
            else if (targets == "list")
                o.target_policy = TargetPolicy::explicit_list;
            else
                throw Error("targets must be 'all', 'random' or 'list'");
            o.explicit_targets = std::move(explicit_targets);
            Report report;
            {
                py::gil_scoped_release release;
                report = run_batch(req);
            }
            return py::make_tuple(report_to_json(report).dump(), report_to_csv(report));
        });
}
