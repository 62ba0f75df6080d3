#pragma once

#include "proven/network.hpp"
#include "proven/oracle.hpp"
#include "proven/probabilistic.hpp"
#include "proven/relaxation.hpp"
#include "proven/worst_case.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace proven {

enum class TargetPolicy { all, random, explicit_list };
enum class Aggregation { min_gamma, union_bound };

std::string_view to_string(TargetPolicy policy);
std::string_view to_string(Aggregation agg);
Aggregation parse_aggregation(std::string_view name);

/// min_gamma: min_t gamma_t. union_bound: max(0, 1 - sum_t (1 - gamma_t)).
double aggregate_targets(std::span<const double> gammas, Aggregation agg);

inline const std::vector<double> kDefaultConfidences{0.9999, 0.75, 0.50, 0.25, 0.05};

/// How probabilistic certificates are formed at a probed radius.
struct ProvenSettings {
    NoiseKind noise = NoiseKind::bounded;
    CertificateMethod method = CertificateMethod::hoeffding;
    RelaxationMode mode = RelaxationMode::adaptive;
    Aggregation aggregation = Aggregation::min_gamma;
    /// Gaussian only: covariance shape rescaled so max sqrt(Sigma_ii) = eps/3.
    /// Defaults to the identity shape.
    std::optional<Matrix> covariance_shape;
    std::size_t grid_points = kDefaultConvolutionGrid;
    /// A target whose lower bound is positive on the whole ball gets
    /// confidence 1 regardless of the method (the noise lives in the ball).
    bool use_support_bound = true;
    BisectionOptions bisection;
};

/// Noise model the settings imply at radius epsilon.
NoiseModel noise_at(const ProvenSettings& settings, Eigen::Index n0, double epsilon);

/// Per-target lower confidence P[g_t(X) > 0] >= gamma_t at radius `epsilon`
/// (l_inf ball, bounds recomputed there), in spec.targets order.
std::vector<double> target_confidences(const Network& net, const InputSpec& spec, double epsilon,
                                       const ProvenSettings& settings);

struct ProvenRadius {
    double epsilon = 0.0;
    std::vector<std::string> warnings;
};

/// Largest radius whose aggregated lower confidence is at least `gamma`,
/// by bisection plus a verification sweep below the result.
/// `certified_floor` is a radius already known to pass.
ProvenRadius certify_proven_radius(const Network& net, const InputSpec& spec,
                                   const ProvenSettings& settings, double gamma,
                                   double certified_floor = 0.0);

struct BatchOptions {
    Norm norm = Norm::linf;
    ProvenSettings settings;
    std::vector<double> confidences = kDefaultConfidences;
    TargetPolicy target_policy = TargetPolicy::all;
    std::vector<int> explicit_targets;
    std::uint64_t seed = 0;
    std::uint64_t validate_mc = 0;  // Monte-Carlo samples per check, 0 = off
};

struct NamedInput {
    std::string name;
    InputFile input;
};

struct ConfidenceResult {
    double confidence = 0.0;
    double epsilon = 0.0;
    std::optional<McEstimate> validation;  // weakest target at `epsilon`
    int validation_target = -1;
};

struct InputResult {
    std::string name;
    bool ok = false;
    std::string error;
    int predicted = -1;
    std::optional<int> label;
    std::vector<int> targets;
    double eps_worst_case = 0.0;
    std::map<int, double> per_target_worst_case;
    std::vector<ConfidenceResult> proven;
    std::optional<double> improvement_pct;
    std::vector<std::string> warnings;
};

/// 100 * (proven - worst) / worst; empty when the worst-case radius is 0.
std::optional<double> improvement_percent(double proven, double worst);

struct ColumnStats {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    std::size_t count = 0;
};

ColumnStats column_stats(std::span<const double> values);

struct Report {
    std::string model;
    BatchOptions options;
    std::vector<InputResult> inputs;
    ColumnStats worst_case;
    std::vector<ColumnStats> proven;  // one per confidence, sorted order
    ColumnStats improvement_pct;      // over per-input improvements
    std::vector<std::optional<double>> improvement_of_means;  // per confidence
    std::size_t failures = 0;
};

/// Confidence levels validated to (0, 1] and sorted strictly decreasing.
std::vector<double> normalize_confidences(std::vector<double> confidences);

Report run_batch(const Network& net, const std::vector<NamedInput>& inputs,
                 const BatchOptions& options, std::string model_name = "");

struct CertificationRequest {
    std::filesystem::path model_path;
    std::vector<std::filesystem::path> input_paths;
    std::optional<std::filesystem::path> covariance_path;
    BatchOptions options;
};

Report run_batch(const CertificationRequest& request);

nlohmann::ordered_json report_to_json(const Report& report);
std::string report_to_csv(const Report& report);

/// Mean and spread of the average of `sample_size` values drawn without
/// replacement from `pool`, over `trials` seeded trials.
struct TrialStatistics {
    double mean_of_means = 0.0;
    double std_of_means = 0.0;
};

TrialStatistics batch_mean_trials(std::span<const double> pool, std::size_t sample_size,
                                  std::size_t trials, std::uint64_t seed);

}  // namespace proven
