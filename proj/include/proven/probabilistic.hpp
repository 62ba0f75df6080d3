#pragma once

#include "proven/network.hpp"
#include "proven/relaxation.hpp"

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

namespace proven {

enum class NoiseKind { bounded, gaussian };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

/// Distribution of the perturbed input, always centred at the anchor x0.
///
/// `bounded`: independent coordinates, each uniform on [x0_i - eps, x0_i + eps]
/// (Hoeffding only uses boundedness and symmetry; the convolution path uses
/// the uniform density).
/// `gaussian`: N(x0, covariance) with a validated PSD covariance.
struct NoiseModel {
    NoiseKind kind = NoiseKind::bounded;
    double half_width = 0.0;
    Matrix covariance;

    static NoiseModel bounded(double half_width);
    static NoiseModel gaussian(Matrix covariance);
};

/// Symmetrizes and checks positive semidefiniteness (eigenvalues >= -1e-10,
/// then clamped at zero). Throws CovarianceError.
Matrix validate_covariance(const Eigen::Ref<const Matrix>& sigma);

/// Throws CovarianceError unless sqrt(Sigma_ii) <= epsilon/3 for every i.
void check_three_sigma(const Eigen::Ref<const Matrix>& sigma, double epsilon);

/// Rescales a covariance shape so its largest marginal std is epsilon/3.
Matrix scale_covariance_to_epsilon(const Eigen::Ref<const Matrix>& shape, double epsilon);

/// `{"diag": [...]}` or `{"full": [[...], ...]}`.
Matrix parse_covariance(std::string_view text, Eigen::Index n0);
Matrix load_covariance(const std::filesystem::path& path, Eigen::Index n0);

enum class CertificateMethod { hoeffding, gaussian, convolution };

std::string_view to_string(CertificateMethod method);
CertificateMethod parse_certificate_method(std::string_view name);

/// gamma_lower <= P[g_t(X) > threshold] <= gamma_upper.
struct ProbCertificate {
    double gamma_lower = 0.0;
    double gamma_upper = 1.0;
    double threshold = 0.0;
    double mu_lower = 0.0;
    double mu_upper = 0.0;
    double sigma_lower = 0.0;
    double sigma_upper = 0.0;
    CertificateMethod method = CertificateMethod::hoeffding;
    CertificateMethod upper_method = CertificateMethod::hoeffding;
};

ProbCertificate hoeffding_bounds(const MarginLinearBounds& mlb, const Eigen::Ref<const Vector>& x0,
                                 double epsilon, double threshold);

/// Normal CDF of the two linear surrogates. `epsilon` is the ball radius the
/// bounds were computed for; the covariance must obey the 3-sigma rule for it.
ProbCertificate gaussian_bounds(const MarginLinearBounds& mlb, const Eigen::Ref<const Vector>& x0,
                                const Eigen::Ref<const Matrix>& sigma, double epsilon,
                                double threshold);

/// CDF tabulated on a uniform grid; linear interpolation in between, exactly
/// 0 below `support_lo` and 1 above `support_hi`.
class DistributionCDF {
public:
    DistributionCDF(double start, double spacing, std::vector<double> values, double support_lo,
                    double support_hi);

    double operator()(double z) const;

    double start() const noexcept { return start_; }
    double spacing() const noexcept { return spacing_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double abscissa(std::size_t i) const noexcept { return start_ + spacing_ * static_cast<double>(i); }
    double support_lo() const noexcept { return support_lo_; }
    double support_hi() const noexcept { return support_hi_; }

private:
    double start_;
    double spacing_;
    std::vector<double> values_;
    double support_lo_;
    double support_hi_;
};

inline constexpr std::size_t kDefaultConvolutionGrid = std::size_t{1} << 14;

/// CDF of sum_i weights_i * U_i with U_i independent uniform on
/// [-half_width, half_width], by iterated numerical convolution.
DistributionCDF weighted_uniform_sum_cdf(const Eigen::Ref<const RowVector>& weights,
                                         double half_width,
                                         std::size_t grid_points = kDefaultConvolutionGrid);

/// Exact-CDF certificate for uniform bounded noise. Each side is rounded in
/// its conservative direction by the worst-case discretization error.
ProbCertificate convolution_bounds(const MarginLinearBounds& mlb,
                                   const Eigen::Ref<const Vector>& x0, double epsilon,
                                   double threshold,
                                   std::size_t grid_points = kDefaultConvolutionGrid);

/// Lower side from `lower`, upper side from `upper`; both must share the threshold.
ProbCertificate theorem_sandwich(const ProbCertificate& lower, const ProbCertificate& upper);

/// Radius of the l_p ball contained in the certified l_inf ball.
double convert_norm_certificate(double epsilon_inf, Norm target, Eigen::Index n0);

}  // namespace proven
