#include "proven/driver.hpp"

#include "parallel.hpp"
#include "proven/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace proven {

std::string_view to_string(TargetPolicy policy) {
    switch (policy) {
        case TargetPolicy::all: return "all";
        case TargetPolicy::random: return "random";
        case TargetPolicy::explicit_list: return "explicit";
    }
    return "all";
}

std::string_view to_string(Aggregation agg) {
    return agg == Aggregation::min_gamma ? "min" : "union";
}

Aggregation parse_aggregation(std::string_view name) {
    if (name == "min" || name == "min_gamma") return Aggregation::min_gamma;
    if (name == "union" || name == "union_bound") return Aggregation::union_bound;
    throw Error("unknown aggregation '" + std::string(name) + "'");
}

double aggregate_targets(std::span<const double> gammas, Aggregation agg) {
    if (gammas.empty()) throw Error("cannot aggregate an empty target set");
    if (agg == Aggregation::min_gamma) return *std::min_element(gammas.begin(), gammas.end());
    double missing = 0.0;
    for (double g : gammas) missing += 1.0 - g;
    return std::max(0.0, 1.0 - missing);
}

NoiseModel noise_at(const ProvenSettings& settings, Eigen::Index n0, double epsilon) {
    if (settings.noise == NoiseKind::bounded) return NoiseModel::bounded(epsilon);
    const Matrix shape = settings.covariance_shape ? *settings.covariance_shape
                                                   : Matrix(Matrix::Identity(n0, n0));
    if (shape.rows() != n0) throw CovarianceError("covariance shape does not match the input");
    NoiseModel noise;
    noise.kind = NoiseKind::gaussian;
    noise.covariance = scale_covariance_to_epsilon(shape, epsilon);
    return noise;
}

namespace {

void check_compatible(const ProvenSettings& settings) {
    const bool gaussian_method = settings.method == CertificateMethod::gaussian;
    const bool gaussian_noise = settings.noise == NoiseKind::gaussian;
    if (gaussian_method != gaussian_noise)
        throw Error("certificate method '" + std::string(to_string(settings.method)) +
                    "' does not apply to " + std::string(to_string(settings.noise)) + " noise");
}

}  // namespace

std::vector<double> target_confidences(const Network& net, const InputSpec& spec, double epsilon,
                                       const ProvenSettings& settings) {
    check_compatible(settings);
    std::vector<double> gammas;
    gammas.reserve(spec.targets.size());

    if (epsilon == 0.0) {
        const Vector logits = forward(net, spec.x0);
        for (int t : spec.targets) gammas.push_back(logits[spec.predicted] > logits[t] ? 1.0 : 0.0);
        return gammas;
    }

    InputSpec probe = spec.with_epsilon(epsilon);
    probe.norm = Norm::linf;
    const RelaxedNetwork relaxed(net, probe, settings.mode);
    std::optional<NoiseModel> noise;
    if (settings.noise == NoiseKind::gaussian) noise = noise_at(settings, net.input_dim(), epsilon);

    for (int t : spec.targets) {
        const MarginLinearBounds mlb = relaxed.margin_bounds(t);
        if (settings.use_support_bound &&
            minimize_affine_over_ball(mlb.lower_coeffs, mlb.lower_offset, spec.x0, epsilon,
                                      Norm::linf) > 0.0) {
            gammas.push_back(1.0);
            continue;
        }
        switch (settings.method) {
            case CertificateMethod::hoeffding:
                gammas.push_back(hoeffding_bounds(mlb, spec.x0, epsilon, 0.0).gamma_lower);
                break;
            case CertificateMethod::gaussian:
                gammas.push_back(
                    gaussian_bounds(mlb, spec.x0, noise->covariance, epsilon, 0.0).gamma_lower);
                break;
            case CertificateMethod::convolution:
                gammas.push_back(
                    convolution_bounds(mlb, spec.x0, epsilon, 0.0, settings.grid_points)
                        .gamma_lower);
                break;
        }
    }
    return gammas;
}

ProvenRadius certify_proven_radius(const Network& net, const InputSpec& spec,
                                   const ProvenSettings& settings, double gamma,
                                   double certified_floor) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw NumericError("confidence must lie in (0, 1]");
    if (spec.targets.empty()) throw Error("no target classes to certify against");
    check_compatible(settings);

    auto passes = [&](double eps) {
        const std::vector<double> gammas = target_confidences(net, spec, eps, settings);
        return aggregate_targets(gammas, settings.aggregation) >= gamma;
    };

    ProvenRadius out;
    BisectionOptions opts = settings.bisection;
    const double floor = std::clamp(certified_floor, 0.0, opts.eps_max);
    double eps = bisect_radius(passes, opts, floor);

    // Verification sweep: the returned radius and 8 points below it.
    constexpr int kSweep = 8;
    constexpr int kMaxRetries = 4;
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
        std::optional<double> failing;
        for (int k = 1; k <= kSweep + 1; ++k) {
            const double probe = eps * static_cast<double>(k) / (kSweep + 1);
            if (probe <= floor || probe == 0.0) continue;
            if (!passes(probe)) {
                failing = probe;
                break;
            }
        }
        if (!failing) break;
        out.warnings.push_back("confidence is not monotone in epsilon near " +
                               std::to_string(*failing) + "; search restarted below it");
        if (attempt == kMaxRetries || *failing <= floor) {
            eps = floor;
            break;
        }
        opts.eps_max = *failing;
        eps = bisect_radius(passes, opts, floor);
        if (eps >= *failing) eps = floor;
    }

    if (eps == 0.0)
        out.warnings.push_back("no positive radius reaches confidence " + std::to_string(gamma));
    out.epsilon = eps;
    return out;
}

ColumnStats column_stats(std::span<const double> values) {
    ColumnStats stats;
    stats.count = values.size();
    if (values.empty()) return stats;
    stats.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                 static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - stats.mean) * (v - stats.mean);
    stats.std = std::sqrt(ss / static_cast<double>(values.size()));
    return stats;
}

std::vector<double> normalize_confidences(std::vector<double> confidences) {
    if (confidences.empty()) throw Error("at least one confidence level is required");
    for (double g : confidences)
        if (!(g > 0.0 && g <= 1.0))
            throw Error("confidence " + std::to_string(g) + " is outside (0, 1]");
    std::sort(confidences.begin(), confidences.end(), std::greater<>());
    confidences.erase(std::unique(confidences.begin(), confidences.end()), confidences.end());
    return confidences;
}

namespace {

std::vector<int> choose_targets(const Network& net, int predicted, const BatchOptions& options,
                                std::size_t input_index, std::vector<std::string>& warnings) {
    switch (options.target_policy) {
        case TargetPolicy::all: return {};
        case TargetPolicy::random: {
            CounterRng rng(options.seed, 0x7a11ULL + input_index);
            auto t = static_cast<int>(rng.below(static_cast<std::uint64_t>(net.output_dim() - 1)));
            if (t >= predicted) ++t;
            return {t};
        }
        case TargetPolicy::explicit_list: {
            std::vector<int> targets;
            for (int t : options.explicit_targets) {
                if (t == predicted)
                    warnings.push_back("target " + std::to_string(t) +
                                       " is the predicted class and was skipped");
                else
                    targets.push_back(t);
            }
            if (targets.empty()) throw Error("no explicit target differs from the predicted class");
            return targets;
        }
    }
    return {};
}

InputResult certify_input(const Network& net, const NamedInput& named,
                          const BatchOptions& options, const std::vector<double>& confidences,
                          std::size_t index) {
    InputResult result;
    result.name = named.name;
    result.label = named.input.label;
    try {
        const int predicted = predicted_class(net, named.input.x0);
        std::vector<int> targets = choose_targets(net, predicted, options, index, result.warnings);
        const InputSpec spec =
            make_input_spec(net, named.input.x0, 0.0, options.norm, std::move(targets));
        result.predicted = spec.predicted;
        result.targets = spec.targets;
        if (result.label && *result.label != spec.predicted)
            result.warnings.push_back("label " + std::to_string(*result.label) +
                                      " differs from the predicted class");

        const ProvenSettings& settings = options.settings;
        const WorstCaseCertificate wc =
            certify_worst_case(net, spec, settings.mode, settings.bisection);
        result.eps_worst_case = wc.epsilon_certified;
        result.per_target_worst_case = wc.per_target_epsilon;

        InputSpec spec_inf = spec;
        spec_inf.norm = Norm::linf;
        double floor = 0.0;
        if (settings.use_support_bound && options.norm == Norm::linf) floor = wc.epsilon_certified;

        for (std::size_t k = 0; k < confidences.size(); ++k) {
            const double gamma = confidences[k];
            ProvenRadius radius = certify_proven_radius(net, spec_inf, settings, gamma, floor);
            floor = radius.epsilon;
            for (std::string& w : radius.warnings)
                result.warnings.push_back("confidence " + std::to_string(gamma) + ": " + std::move(w));
            if (gamma == 1.0)
                result.warnings.push_back(
                    "confidence 1 is only reachable through the worst-case bound");

            ConfidenceResult cr;
            cr.confidence = gamma;
            cr.epsilon = convert_norm_certificate(radius.epsilon, options.norm, net.input_dim());
            if (options.validate_mc > 0 && radius.epsilon > 0.0) {
                const NoiseModel noise = noise_at(settings, net.input_dim(), radius.epsilon);
                const std::uint64_t seed = mix64(options.seed ^ mix64(index * 131 + k + 1));
                const std::vector<McEstimate> estimates =
                    mc_probability_targets(net, spec.x0, noise, spec.predicted, spec.targets, 0.0,
                                           options.validate_mc, seed);
                std::size_t worst = 0;
                for (std::size_t i = 1; i < estimates.size(); ++i)
                    if (estimates[i].p_hat < estimates[worst].p_hat) worst = i;
                cr.validation = estimates[worst];
                cr.validation_target = spec.targets[worst];
            }
            result.proven.push_back(std::move(cr));
        }

        result.improvement_pct =
            improvement_percent(result.proven.front().epsilon, result.eps_worst_case);
        result.ok = true;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
    return result;
}

}  // namespace

std::optional<double> improvement_percent(double proven, double worst) {
    if (!(worst > 0.0)) return std::nullopt;
    return (proven - worst) / worst * 100.0;
}

Report run_batch(const Network& net, const std::vector<NamedInput>& inputs,
                 const BatchOptions& options, std::string model_name) {
    Report report;
    report.model = std::move(model_name);
    report.options = options;
    report.options.confidences = normalize_confidences(options.confidences);
    check_compatible(options.settings);

    report.inputs.resize(inputs.size());
    detail::parallel_for(inputs.size(), [&](std::size_t i) {
        report.inputs[i] = certify_input(net, inputs[i], report.options,
                                         report.options.confidences, i);
    });

    std::vector<double> worst;
    std::vector<std::vector<double>> proven(report.options.confidences.size());
    std::vector<double> improvements;
    for (const InputResult& r : report.inputs) {
        if (!r.ok) {
            ++report.failures;
            continue;
        }
        worst.push_back(r.eps_worst_case);
        for (std::size_t k = 0; k < r.proven.size(); ++k) proven[k].push_back(r.proven[k].epsilon);
        if (r.improvement_pct) improvements.push_back(*r.improvement_pct);
    }
    report.worst_case = column_stats(worst);
    for (const auto& column : proven) {
        report.proven.push_back(column_stats(column));
        report.improvement_of_means.push_back(
            report.worst_case.count ? improvement_percent(report.proven.back().mean, report.worst_case.mean)
                                    : std::nullopt);
    }
    report.improvement_pct = column_stats(improvements);
    return report;
}

Report run_batch(const CertificationRequest& request) {
    const Network net = load_network(request.model_path);
    BatchOptions options = request.options;
    if (request.covariance_path)
        options.settings.covariance_shape = load_covariance(*request.covariance_path, net.input_dim());

    std::vector<NamedInput> inputs;
    std::vector<std::string> load_errors(request.input_paths.size());
    std::vector<bool> loaded(request.input_paths.size(), false);
    for (std::size_t i = 0; i < request.input_paths.size(); ++i) {
        const auto& path = request.input_paths[i];
        try {
            inputs.push_back({path.filename().string(), load_input(path)});
            loaded[i] = true;
        } catch (const std::exception& e) {
            load_errors[i] = e.what();
        }
    }

    Report report = run_batch(net, inputs, options, request.model_path.filename().string());

    // Re-insert unreadable inputs in their original positions.
    std::vector<InputResult> ordered;
    std::size_t next = 0;
    for (std::size_t i = 0; i < request.input_paths.size(); ++i) {
        if (loaded[i]) {
            ordered.push_back(std::move(report.inputs[next++]));
        } else {
            InputResult failed;
            failed.name = request.input_paths[i].filename().string();
            failed.error = load_errors[i];
            ordered.push_back(std::move(failed));
            ++report.failures;
        }
    }
    report.inputs = std::move(ordered);
    return report;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson optional_number(const std::optional<double>& v) {
    return v ? ojson(*v) : ojson(nullptr);
}

ojson stats_json(const ColumnStats& s) {
    return ojson{{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
}

}  // namespace

nlohmann::ordered_json report_to_json(const Report& report) {
    const BatchOptions& o = report.options;
    const ProvenSettings& s = o.settings;

    ojson provenance;
    provenance["model"] = report.model;
    provenance["norm"] = std::string(to_string(o.norm));
    provenance["probabilistic_norm"] = "inf";
    provenance["mode"] = std::string(to_string(s.mode));
    provenance["noise"] = std::string(to_string(s.noise));
    provenance["method"] = std::string(to_string(s.method));
    provenance["aggregation"] = std::string(to_string(s.aggregation));
    provenance["target_policy"] = std::string(to_string(o.target_policy));
    provenance["explicit_targets"] = o.explicit_targets;
    provenance["confidences"] = o.confidences;
    provenance["eps_max"] = s.bisection.eps_max;
    provenance["tolerance"] = s.bisection.tolerance;
    provenance["seed"] = o.seed;
    provenance["rng"] = "counter-splitmix64";
    provenance["threshold"] = 0.0;
    provenance["support_bound"] = s.use_support_bound;
    if (s.noise == NoiseKind::bounded) {
        provenance["noise_pdf_assumption"] = "uniform";
        if (s.method == CertificateMethod::convolution) provenance["grid_points"] = s.grid_points;
    } else {
        provenance["covariance"] = s.covariance_shape ? "file (scaled to max std eps/3)"
                                                      : "identity (std eps/3)";
        provenance["gaussian_caveat"] =
            "the normal law extends past the ball; about 0.3% of the mass per coordinate is "
            "outside it";
    }
    provenance["validate_mc"] = o.validate_mc;

    ojson inputs = ojson::array();
    for (const InputResult& r : report.inputs) {
        ojson entry;
        entry["name"] = r.name;
        entry["status"] = r.ok ? "ok" : "error";
        if (!r.ok) {
            entry["error"] = r.error;
            inputs.push_back(std::move(entry));
            continue;
        }
        entry["predicted_class"] = r.predicted;
        entry["label"] = r.label ? ojson(*r.label) : ojson(nullptr);
        entry["targets"] = r.targets;
        entry["eps_worst_case"] = r.eps_worst_case;
        ojson per_target = ojson::object();
        for (const auto& [t, eps] : r.per_target_worst_case) per_target[std::to_string(t)] = eps;
        entry["per_target_worst_case"] = std::move(per_target);
        ojson proven = ojson::array();
        for (const ConfidenceResult& c : r.proven) {
            ojson row{{"confidence", c.confidence}, {"epsilon", c.epsilon}};
            if (c.validation) {
                const McEstimate& mc = *c.validation;
                row["validation"] = {{"target", c.validation_target},
                                     {"p_hat", mc.p_hat},
                                     {"std_error", mc.std_error},
                                     {"n_samples", mc.n_samples},
                                     {"seed", mc.seed},
                                     {"consistent", mc.p_hat + 3.0 * mc.std_error >= c.confidence}};
            }
            proven.push_back(std::move(row));
        }
        entry["eps_proven"] = std::move(proven);
        entry["improvement_pct"] = optional_number(r.improvement_pct);
        entry["warnings"] = r.warnings;
        inputs.push_back(std::move(entry));
    }

    ojson batch;
    batch["count"] = report.inputs.size();
    batch["failures"] = report.failures;
    batch["eps_worst_case"] = stats_json(report.worst_case);
    ojson proven = ojson::array();
    for (std::size_t k = 0; k < report.proven.size(); ++k) {
        ojson row = stats_json(report.proven[k]);
        row["confidence"] = o.confidences[k];
        row["improvement_of_means_pct"] = optional_number(report.improvement_of_means[k]);
        proven.push_back(std::move(row));
    }
    batch["eps_proven"] = std::move(proven);
    batch["improvement_pct"] = stats_json(report.improvement_pct);

    ojson doc;
    doc["provenance"] = std::move(provenance);
    doc["inputs"] = std::move(inputs);
    doc["batch"] = std::move(batch);
    return doc;
}

namespace {

std::string fmt_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_number(*v) : ""; }

}  // namespace

std::string report_to_csv(const Report& report) {
    const auto& confidences = report.options.confidences;
    std::ostringstream out;
    out << "input,predicted,eps_worst_case";
    for (double g : confidences) out << ",eps_proven_" << fmt_number(g);
    out << ",improvement_pct\n";

    for (const InputResult& r : report.inputs) {
        out << r.name;
        if (!r.ok) {
            out << ",error";
            for (std::size_t k = 0; k < confidences.size() + 2; ++k) out << ',';
            out << '\n';
            continue;
        }
        out << ',' << r.predicted << ',' << fmt_number(r.eps_worst_case);
        for (const ConfidenceResult& c : r.proven) out << ',' << fmt_number(c.epsilon);
        out << ',' << fmt_optional(r.improvement_pct) << '\n';
    }

    out << "mean,," << fmt_number(report.worst_case.mean);
    for (const ColumnStats& s : report.proven) out << ',' << fmt_number(s.mean);
    out << ',' << fmt_number(report.improvement_pct.mean) << '\n';
    out << "std,," << fmt_number(report.worst_case.std);
    for (const ColumnStats& s : report.proven) out << ',' << fmt_number(s.std);
    out << ',' << fmt_number(report.improvement_pct.std) << '\n';
    // Improvement of each column's mean over the worst-case mean.
    out << "improvement_of_means_pct,,";
    for (const auto& v : report.improvement_of_means) out << ',' << fmt_optional(v);
    out << ",\n";
    return out.str();
}

TrialStatistics batch_mean_trials(std::span<const double> pool, std::size_t sample_size,
                                  std::size_t trials, std::uint64_t seed) {
    if (sample_size == 0 || sample_size > pool.size())
        throw Error("sample size must be in [1, pool size]");
    if (trials == 0) throw Error("need at least one trial");
    std::vector<double> means;
    means.reserve(trials);
    std::vector<std::size_t> index(pool.size());
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::iota(index.begin(), index.end(), std::size_t{0});
        CounterRng rng(seed, trial);
        double sum = 0.0;
        for (std::size_t i = 0; i < sample_size; ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(index[i], index[j]);
            sum += pool[index[i]];
        }
        means.push_back(sum / static_cast<double>(sample_size));
    }
    const ColumnStats stats = column_stats(means);
    return {stats.mean, stats.std};
}

}  // namespace proven
