#include "proven/probabilistic.hpp"

#include "proven/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace proven {

std::string_view to_string(NoiseKind kind) {
    return kind == NoiseKind::bounded ? "bounded" : "gaussian";
}

NoiseKind parse_noise_kind(std::string_view name) {
    if (name == "bounded") return NoiseKind::bounded;
    if (name == "gaussian") return NoiseKind::gaussian;
    throw Error("unknown noise kind '" + std::string(name) + "'");
}

std::string_view to_string(CertificateMethod method) {
    switch (method) {
        case CertificateMethod::hoeffding: return "hoeffding";
        case CertificateMethod::gaussian: return "gaussian";
        case CertificateMethod::convolution: return "convolution";
    }
    return "hoeffding";
}

CertificateMethod parse_certificate_method(std::string_view name) {
    if (name == "hoeffding") return CertificateMethod::hoeffding;
    if (name == "gaussian") return CertificateMethod::gaussian;
    if (name == "convolution") return CertificateMethod::convolution;
    throw Error("unknown certificate method '" + std::string(name) + "'");
}

NoiseModel NoiseModel::bounded(double half_width) {
    if (!(half_width >= 0.0) || !std::isfinite(half_width))
        throw NumericError("noise half-width must be a finite nonnegative number");
    NoiseModel noise;
    noise.kind = NoiseKind::bounded;
    noise.half_width = half_width;
    return noise;
}

NoiseModel NoiseModel::gaussian(Matrix covariance) {
    NoiseModel noise;
    noise.kind = NoiseKind::gaussian;
    noise.covariance = validate_covariance(covariance);
    return noise;
}

Matrix validate_covariance(const Eigen::Ref<const Matrix>& sigma) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
        throw CovarianceError("covariance must be a non-empty square matrix");
    if (!sigma.allFinite()) throw CovarianceError("covariance has non-finite entries");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw CovarianceError("covariance is not symmetric");
    Matrix sym = 0.5 * (sigma + sigma.transpose());

    const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector& values = eig.eigenvalues();
    if (values.minCoeff() < -1e-10)
        throw CovarianceError("covariance is not positive semidefinite (eigenvalue " +
                              std::to_string(values.minCoeff()) + ")");
    if (values.minCoeff() < 0.0) {
        const Vector clamped = values.cwiseMax(0.0);
        sym = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
    }
    return sym;
}

void check_three_sigma(const Eigen::Ref<const Matrix>& sigma, double epsilon) {
    const double limit = epsilon / 3.0;
    for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
        const double sd = std::sqrt(std::max(0.0, sigma(i, i)));
        if (sd > limit * (1.0 + 1e-12))
            throw CovarianceError("3-sigma rule violated at coordinate " + std::to_string(i) +
                                  ": marginal std " + std::to_string(sd) +
                                  " exceeds epsilon/3 = " + std::to_string(limit) +
                                  " (99.7% of the mass must stay inside the ball)");
    }
}

Matrix scale_covariance_to_epsilon(const Eigen::Ref<const Matrix>& shape, double epsilon) {
    const double max_var = shape.diagonal().maxCoeff();
    if (!(max_var > 0.0)) return Matrix::Zero(shape.rows(), shape.cols());
    const double target_sd = epsilon / 3.0;
    return shape * (target_sd * target_sd / max_var);
}

Matrix parse_covariance(std::string_view text, Eigen::Index n0) {
    using json = nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    Matrix sigma;
    if (doc.is_object() && doc.contains("diag") && doc["diag"].is_array()) {
        const json& diag = doc["diag"];
        sigma = Matrix::Zero(static_cast<Eigen::Index>(diag.size()),
                             static_cast<Eigen::Index>(diag.size()));
        for (std::size_t i = 0; i < diag.size(); ++i) {
            if (!diag[i].is_number()) throw ParseError("diag entries must be numbers");
            sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag[i].get<double>();
        }
    } else if (doc.is_object() && doc.contains("full") && doc["full"].is_array()) {
        const json& rows = doc["full"];
        const auto n = static_cast<Eigen::Index>(rows.size());
        sigma.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const json& row = rows[static_cast<std::size_t>(i)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
                throw ParseError("covariance row " + std::to_string(i) + " has the wrong length");
            for (Eigen::Index j = 0; j < n; ++j) {
                const json& v = row[static_cast<std::size_t>(j)];
                if (!v.is_number()) throw ParseError("covariance entries must be numbers");
                sigma(i, j) = v.get<double>();
            }
        }
    } else {
        throw ParseError("covariance file needs a 'diag' or 'full' array");
    }
    if (sigma.rows() != n0)
        throw CovarianceError("covariance is " + std::to_string(sigma.rows()) +
                              "-dimensional, network input is " + std::to_string(n0));
    return validate_covariance(sigma);
}

Matrix load_covariance(const std::filesystem::path& path, Eigen::Index n0) {
    return parse_covariance(read_text_file(path), n0);
}

namespace {

double mu_of(const RowVector& coeffs, double offset, const Eigen::Ref<const Vector>& x0) {
    if (coeffs.size() != x0.size())
        throw DimensionError(0, "bound coefficients do not match the anchor dimension");
    return coeffs.dot(x0.transpose()) + offset;
}

// P[mu + Z > a] for a point mass (Z == 0).
double step(double mu, double a) { return mu > a ? 1.0 : 0.0; }

// With positive spread these bounds are strictly below 1, even when the
// exponential underflows; full confidence stays reserved for the support bound.
double below_one(double p) { return std::min(p, std::nextafter(1.0, 0.0)); }

}  // namespace

ProbCertificate hoeffding_bounds(const MarginLinearBounds& mlb, const Eigen::Ref<const Vector>& x0,
                                 double epsilon, double threshold) {
    if (!(epsilon >= 0.0)) throw NumericError("epsilon must be nonnegative");
    ProbCertificate cert;
    cert.method = cert.upper_method = CertificateMethod::hoeffding;
    cert.threshold = threshold;
    cert.mu_lower = mu_of(mlb.lower_coeffs, mlb.lower_offset, x0);
    cert.mu_upper = mu_of(mlb.upper_coeffs, mlb.upper_offset, x0);

    const double spread_l = epsilon * mlb.lower_coeffs.norm();
    const double spread_u = epsilon * mlb.upper_coeffs.norm();

    const double gap_l = cert.mu_lower - threshold;
    if (spread_l == 0.0)
        cert.gamma_lower = step(cert.mu_lower, threshold);
    else if (gap_l >= 0.0)
        cert.gamma_lower = below_one(-std::expm1(-(gap_l * gap_l) / (2.0 * spread_l * spread_l)));
    else
        cert.gamma_lower = 0.0;

    const double gap_u = threshold - cert.mu_upper;
    if (spread_u == 0.0)
        cert.gamma_upper = step(cert.mu_upper, threshold);
    else if (gap_u >= 0.0)
        cert.gamma_upper = std::exp(-(gap_u * gap_u) / (2.0 * spread_u * spread_u));
    else
        cert.gamma_upper = 1.0;
    return cert;
}

ProbCertificate gaussian_bounds(const MarginLinearBounds& mlb, const Eigen::Ref<const Vector>& x0,
                                const Eigen::Ref<const Matrix>& sigma, double epsilon,
                                double threshold) {
    if (sigma.rows() != x0.size() || sigma.cols() != x0.size())
        throw DimensionError(0, "covariance does not match the anchor dimension");
    check_three_sigma(sigma, epsilon);

    ProbCertificate cert;
    cert.method = cert.upper_method = CertificateMethod::gaussian;
    cert.threshold = threshold;
    cert.mu_lower = mu_of(mlb.lower_coeffs, mlb.lower_offset, x0);
    cert.mu_upper = mu_of(mlb.upper_coeffs, mlb.upper_offset, x0);
    cert.sigma_lower = std::sqrt(std::max(0.0, double(mlb.lower_coeffs * sigma * mlb.lower_coeffs.transpose())));
    cert.sigma_upper = std::sqrt(std::max(0.0, double(mlb.upper_coeffs * sigma * mlb.upper_coeffs.transpose())));

    auto tail = [threshold](double mu, double sd) {
        if (sd == 0.0) return step(mu, threshold);
        return 0.5 * std::erfc((threshold - mu) / (sd * std::sqrt(2.0)));
    };
    cert.gamma_lower = cert.sigma_lower > 0.0 ? below_one(tail(cert.mu_lower, cert.sigma_lower))
                                              : tail(cert.mu_lower, cert.sigma_lower);
    cert.gamma_upper = tail(cert.mu_upper, cert.sigma_upper);
    return cert;
}

DistributionCDF::DistributionCDF(double start, double spacing, std::vector<double> values,
                                 double support_lo, double support_hi)
    : start_(start),
      spacing_(spacing),
      values_(std::move(values)),
      support_lo_(support_lo),
      support_hi_(support_hi) {}

double DistributionCDF::operator()(double z) const {
    if (z <= support_lo_) return 0.0;
    if (z >= support_hi_) return 1.0;
    if (values_.empty() || spacing_ <= 0.0) return z >= start_ ? 1.0 : 0.0;
    const double first = start_;
    const double last = abscissa(values_.size() - 1);
    if (z < first) {
        const double w = (z - support_lo_) / (first - support_lo_);
        return w * values_.front();
    }
    if (z >= last) {
        if (support_hi_ <= last) return values_.back();
        const double w = (z - last) / (support_hi_ - last);
        return values_.back() + w * (1.0 - values_.back());
    }
    const double pos = (z - first) / spacing_;
    const auto i = std::min(static_cast<std::size_t>(pos), values_.size() - 2);
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * values_[i] + w * values_[i + 1];
}

namespace {

// Probability masses of a discretized random variable on the lattice h*k,
// k = offset, offset+1, ...
struct Lattice {
    long long offset = 0;
    std::vector<double> mass;
};

// Uniform on [-w, w] assigned to the nearest lattice cell [kh - h/2, kh + h/2].
Lattice discretize_uniform(double w, double h) {
    const auto m = static_cast<long long>(std::ceil(w / h - 0.5));
    Lattice lat;
    lat.offset = -m;
    lat.mass.resize(static_cast<std::size_t>(2 * m + 1));
    for (long long k = -m; k <= m; ++k) {
        const double lo = std::max(-w, (static_cast<double>(k) - 0.5) * h);
        const double hi = std::min(w, (static_cast<double>(k) + 0.5) * h);
        lat.mass[static_cast<std::size_t>(k + m)] = std::max(0.0, hi - lo) / (2.0 * w);
    }
    return lat;
}

Lattice convolve(const Lattice& a, const Lattice& b) {
    Lattice out;
    out.offset = a.offset + b.offset;
    out.mass.assign(a.mass.size() + b.mass.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.mass.size(); ++i) {
        const double ai = a.mass[i];
        if (ai == 0.0) continue;
        double* dst = out.mass.data() + i;
        for (std::size_t j = 0; j < b.mass.size(); ++j) dst[j] += ai * b.mass[j];
    }
    return out;
}

struct LatticeSum {
    Lattice lattice;
    double spacing = 0.0;
    double half_support = 0.0;
    double max_error = 0.0;  // |S - D| <= max_error surely
};

// Sum of independent uniforms on [-w_i, w_i], combined as a balanced tree.
LatticeSum lattice_sum(const std::vector<double>& widths, std::size_t grid_points) {
    if (grid_points < 2) throw ResolutionError("convolution grid needs at least 2 points");
    LatticeSum out;
    out.half_support = std::accumulate(widths.begin(), widths.end(), 0.0);
    out.lattice.mass = {1.0};
    if (out.half_support == 0.0) return out;

    const double h = 2.0 * out.half_support / static_cast<double>(grid_points);
    const double widest = *std::max_element(widths.begin(), widths.end());
    if (widest < h)
        throw ResolutionError("grid spacing " + std::to_string(h) +
                              " leaves fewer than 2 cells for the widest weighted component "
                              "(half-width " + std::to_string(widest) + ")");
    out.spacing = h;

    std::vector<Lattice> pieces;
    pieces.reserve(widths.size());
    for (double w : widths) {
        if (w == 0.0) continue;
        out.max_error += std::min(w, 0.5 * h);
        pieces.push_back(discretize_uniform(w, h));
    }
    while (pieces.size() > 1) {
        std::vector<Lattice> next;
        next.reserve((pieces.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < pieces.size(); i += 2)
            next.push_back(convolve(pieces[i], pieces[i + 1]));
        if (pieces.size() % 2 == 1) next.push_back(std::move(pieces.back()));
        pieces = std::move(next);
    }
    out.lattice = std::move(pieces.front());
    const double total = std::accumulate(out.lattice.mass.begin(), out.lattice.mass.end(), 0.0);
    for (double& p : out.lattice.mass) p /= total;
    return out;
}

std::vector<double> component_widths(const Eigen::Ref<const RowVector>& weights, double half_width) {
    std::vector<double> widths(static_cast<std::size_t>(weights.size()));
    for (Eigen::Index i = 0; i < weights.size(); ++i)
        widths[static_cast<std::size_t>(i)] = std::abs(weights[i]) * half_width;
    return widths;
}

// P[D > y] for the lattice variable D; `nudge` moves the cut to make the
// rounding of y/h err in a chosen direction.
double lattice_tail(const LatticeSum& sum, double y, double nudge) {
    if (sum.spacing == 0.0) return y < 0.0 ? 1.0 : 0.0;
    const double pos = y / sum.spacing + nudge;
    const long long first = static_cast<long long>(std::floor(pos)) + 1;
    const long long begin = std::max(first - sum.lattice.offset, 0LL);
    const auto n = static_cast<long long>(sum.lattice.mass.size());
    double tail = 0.0;
    for (long long i = n - 1; i >= begin; --i) tail += sum.lattice.mass[static_cast<std::size_t>(i)];
    return std::clamp(tail, 0.0, 1.0);
}

}  // namespace

DistributionCDF weighted_uniform_sum_cdf(const Eigen::Ref<const RowVector>& weights,
                                         double half_width, std::size_t grid_points) {
    if (!(half_width >= 0.0)) throw NumericError("half-width must be nonnegative");
    const LatticeSum sum = lattice_sum(component_widths(weights, half_width), grid_points);
    if (sum.spacing == 0.0) return DistributionCDF(0.0, 0.0, {}, 0.0, 0.0);

    // Midpoint convention: F(kh) = P[D < kh] + P[D = kh] / 2.
    std::vector<double> cdf(sum.lattice.mass.size());
    double below = 0.0;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        cdf[i] = std::min(1.0, below + 0.5 * sum.lattice.mass[i]);
        below += sum.lattice.mass[i];
    }
    return DistributionCDF(static_cast<double>(sum.lattice.offset) * sum.spacing, sum.spacing,
                           std::move(cdf), -sum.half_support, sum.half_support);
}

ProbCertificate convolution_bounds(const MarginLinearBounds& mlb,
                                   const Eigen::Ref<const Vector>& x0, double epsilon,
                                   double threshold, std::size_t grid_points) {
    if (!(epsilon >= 0.0)) throw NumericError("epsilon must be nonnegative");
    ProbCertificate cert;
    cert.method = cert.upper_method = CertificateMethod::convolution;
    cert.threshold = threshold;
    cert.mu_lower = mu_of(mlb.lower_coeffs, mlb.lower_offset, x0);
    cert.mu_upper = mu_of(mlb.upper_coeffs, mlb.upper_offset, x0);

    // g^L(X) = mu_L + S_L with S_L = sum_i A_i (X_i - x0_i); D_L approximates S_L
    // within max_error, so P[S_L > y] >= P[D_L > y + max_error].
    const LatticeSum lower = lattice_sum(component_widths(mlb.lower_coeffs, epsilon), grid_points);
    cert.gamma_lower = lattice_tail(lower, threshold - cert.mu_lower + lower.max_error, 1e-9);

    const LatticeSum upper = lattice_sum(component_widths(mlb.upper_coeffs, epsilon), grid_points);
    cert.gamma_upper = lattice_tail(upper, threshold - cert.mu_upper - upper.max_error, -1e-9);
    return cert;
}

ProbCertificate theorem_sandwich(const ProbCertificate& lower, const ProbCertificate& upper) {
    if (lower.threshold != upper.threshold)
        throw Error("cannot combine certificates with thresholds " +
                    std::to_string(lower.threshold) + " and " + std::to_string(upper.threshold));
    ProbCertificate out;
    out.threshold = lower.threshold;
    out.gamma_lower = lower.gamma_lower;
    out.mu_lower = lower.mu_lower;
    out.sigma_lower = lower.sigma_lower;
    out.method = lower.method;
    out.gamma_upper = upper.gamma_upper;
    out.mu_upper = upper.mu_upper;
    out.sigma_upper = upper.sigma_upper;
    out.upper_method = upper.upper_method;
    if (out.gamma_lower > out.gamma_upper + 1e-12)
        throw NumericError("lower confidence " + std::to_string(out.gamma_lower) +
                           " exceeds upper confidence " + std::to_string(out.gamma_upper));
    return out;
}

double convert_norm_certificate(double epsilon_inf, Norm target, Eigen::Index n0) {
    if (!(epsilon_inf >= 0.0)) throw NumericError("certified radius must be nonnegative");
    if (n0 < 1) throw NumericError("input dimension must be positive");
    switch (target) {
        // ||x||_inf <= ||x||_2 <= ||x||_1, so either ball of radius eps sits
        // inside the l_inf ball of the same radius.
        case Norm::l1:
        case Norm::l2:
        case Norm::linf: return epsilon_inf;
    }
    throw Error("unsupported norm");
}

}  // namespace proven
