#include "proven/oracle.hpp"

#include "parallel.hpp"
#include "proven/errors.hpp"

#include <algorithm>
#include <cmath>

namespace proven {

namespace {

constexpr std::uint64_t kChunk = 1 << 16;

}  // namespace

NoiseSampler::NoiseSampler(const NoiseModel& noise, Vector x0)
    : kind_(noise.kind), half_width_(noise.half_width), x0_(std::move(x0)) {
    if (kind_ == NoiseKind::gaussian) {
        if (noise.covariance.rows() != x0_.size())
            throw DimensionError(0, "covariance does not match the anchor dimension");
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(noise.covariance);
        factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
}

void NoiseSampler::sample(CounterRng& rng, Vector& out) const {
    const Eigen::Index n = x0_.size();
    out.resize(n);
    if (kind_ == NoiseKind::bounded) {
        for (Eigen::Index i = 0; i < n; ++i)
            out[i] = x0_[i] + half_width_ * (2.0 * rng.uniform() - 1.0);
        return;
    }
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
    out.noalias() = factor_ * z;
    out += x0_;
}

std::vector<McEstimate> mc_probability_targets(const Network& net,
                                               const Eigen::Ref<const Vector>& x0,
                                               const NoiseModel& noise, int c,
                                               const std::vector<int>& targets, double a,
                                               std::uint64_t n_samples, std::uint64_t seed) {
    if (n_samples < 1000) throw Error("Monte-Carlo estimates need at least 1000 samples");
    if (x0.size() != net.input_dim())
        throw DimensionError(0, "anchor input does not match the network input dimension");
    for (int t : targets)
        if (t < 0 || t >= net.output_dim() || t == c)
            throw ClassIndexError("invalid target class " + std::to_string(t));

    const NoiseSampler sampler(noise, x0);
    const std::size_t n_chunks = (n_samples + kChunk - 1) / kChunk;
    std::vector<std::vector<std::uint64_t>> counts(n_chunks,
                                                   std::vector<std::uint64_t>(targets.size(), 0));

    detail::parallel_for(n_chunks, [&](std::size_t chunk) {
        CounterRng rng(seed, chunk);
        ForwardWorkspace ws(net);
        Vector x(x0.size());
        const std::uint64_t begin = chunk * kChunk;
        const std::uint64_t end = std::min<std::uint64_t>(n_samples, begin + kChunk);
        auto& local = counts[chunk];
        for (std::uint64_t s = begin; s < end; ++s) {
            sampler.sample(rng, x);
            const auto logits = ws.evaluate(x);
            for (std::size_t k = 0; k < targets.size(); ++k)
                if (logits[c] - logits[targets[k]] > a) ++local[k];
        }
    });

    std::vector<McEstimate> out(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
        std::uint64_t hits = 0;
        for (const auto& chunk : counts) hits += chunk[k];
        McEstimate& est = out[k];
        est.n_samples = n_samples;
        est.seed = seed;
        est.p_hat = static_cast<double>(hits) / static_cast<double>(n_samples);
        // Continuity-corrected proportion keeps the error nonzero when every
        // sample (or none) lands on one side.
        const double p = (static_cast<double>(hits) + 0.5) / (static_cast<double>(n_samples) + 1.0);
        est.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(n_samples));
    }
    return out;
}

McEstimate mc_probability(const Network& net, const Eigen::Ref<const Vector>& x0,
                          const NoiseModel& noise, int c, int t, double a,
                          std::uint64_t n_samples, std::uint64_t seed) {
    return mc_probability_targets(net, x0, noise, c, {t}, a, n_samples, seed).front();
}

void sample_ball(CounterRng& rng, const Eigen::Ref<const Vector>& x0, double epsilon, Norm p,
                 Vector& out) {
    const Eigen::Index n = x0.size();
    out.resize(n);
    switch (p) {
        case Norm::linf:
            for (Eigen::Index i = 0; i < n; ++i) out[i] = x0[i] + epsilon * (2.0 * rng.uniform() - 1.0);
            return;
        case Norm::l2: {
            for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.normal();
            const double len = out.norm();
            const double radius = epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
            if (len > 0.0) out *= radius / len;
            out += x0;
            return;
        }
        case Norm::l1: {
            double total = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                out[i] = -std::log(1.0 - rng.uniform());
                total += out[i];
            }
            const double radius = epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                out[i] = x0[i] + sign * radius * out[i] / total;
            }
            return;
        }
    }
}

namespace {

bool misclassified(const Eigen::Ref<const Vector>& logits, int c) {
    for (Eigen::Index k = 0; k < logits.size(); ++k)
        if (k != c && logits[k] >= logits[c]) return true;
    return false;
}

// Step from x0 of length epsilon (in norm p) against the margin gradient.
void boundary_step(const Eigen::Ref<const Vector>& x0, const Vector& grad, double epsilon, Norm p,
                   Vector& out) {
    out = x0;
    switch (p) {
        case Norm::linf:
            for (Eigen::Index i = 0; i < grad.size(); ++i)
                out[i] -= epsilon * (grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0));
            return;
        case Norm::l2: {
            const double len = grad.norm();
            if (len > 0.0) out -= epsilon * grad / len;
            return;
        }
        case Norm::l1: {
            Eigen::Index j = 0;
            grad.cwiseAbs().maxCoeff(&j);
            out[j] -= epsilon * (grad[j] > 0.0 ? 1.0 : -1.0);
            return;
        }
    }
}

}  // namespace

std::optional<Vector> attack_search(const Network& net, const InputSpec& spec, double epsilon,
                                    std::uint64_t n_random, std::uint64_t seed) {
    if (!(epsilon >= 0.0)) throw NumericError("epsilon must be nonnegative");
    const int c = spec.predicted;
    const Eigen::Index n = net.input_dim();
    ForwardWorkspace ws(net);
    CounterRng rng(seed);
    const double step = 1e-4 * epsilon;

    Vector x(n);
    Vector probe(n);
    Vector grad(n);
    Vector corner(n);

    auto worst_margin = [&](const Eigen::Ref<const Vector>& logits, int& target) {
        double best = std::numeric_limits<double>::infinity();
        for (int t : spec.targets) {
            const double m = logits[c] - logits[t];
            if (m < best) {
                best = m;
                target = t;
            }
        }
        return best;
    };

    // Probe 0 starts at the anchor itself; the rest start at random ball points.
    for (std::uint64_t i = 0; i <= n_random; ++i) {
        if (i == 0)
            x = spec.x0;
        else
            sample_ball(rng, spec.x0, epsilon, spec.norm, x);
        if (misclassified(ws.evaluate(x), c)) return x;
        if (step == 0.0) continue;

        int t = spec.targets.empty() ? c : spec.targets.front();
        const double base = worst_margin(ws.evaluate(x), t);
        for (Eigen::Index j = 0; j < n; ++j) {
            probe = x;
            probe[j] += step;
            const auto logits = ws.evaluate(probe);
            grad[j] = (logits[c] - logits[t] - base) / step;
        }
        boundary_step(spec.x0, grad, epsilon, spec.norm, corner);
        if (misclassified(ws.evaluate(corner), c)) return corner;
    }
    return std::nullopt;
}

double exact_probability_grid(const Network& net, const Eigen::Ref<const Vector>& x0,
                              double half_width, int c, int t, double a,
                              std::uint64_t cells_per_dim) {
    const Eigen::Index n = net.input_dim();
    if (n > 4) throw DimensionError(0, "exhaustive grid integration supports at most 4 inputs");
    if (x0.size() != n) throw DimensionError(0, "anchor input does not match the network");
    if (c == t || c < 0 || t < 0 || c >= net.output_dim() || t >= net.output_dim())
        throw ClassIndexError("invalid class pair");
    if (cells_per_dim < 1) cells_per_dim = 1;
    constexpr std::uint64_t kMaxCells = std::uint64_t{1} << 24;

    ForwardWorkspace ws(net);
    auto integrate = [&](std::uint64_t cells) {
        std::uint64_t total = 1;
        for (Eigen::Index d = 0; d < n; ++d) total *= cells;
        const double h = 2.0 * half_width / static_cast<double>(cells);
        Vector x(n);
        std::uint64_t hits = 0;
        for (std::uint64_t idx = 0; idx < total; ++idx) {
            std::uint64_t rest = idx;
            for (Eigen::Index d = 0; d < n; ++d) {
                const std::uint64_t k = rest % cells;
                rest /= cells;
                x[d] = x0[d] - half_width + (static_cast<double>(k) + 0.5) * h;
            }
            const auto logits = ws.evaluate(x);
            if (logits[c] - logits[t] > a) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(total);
    };

    auto grid_size = [n](std::uint64_t cells) {
        std::uint64_t total = 1;
        for (Eigen::Index d = 0; d < n; ++d) total *= cells;
        return total;
    };

    double previous = integrate(cells_per_dim);
    while (grid_size(cells_per_dim * 2) <= kMaxCells) {
        cells_per_dim *= 2;
        const double current = integrate(cells_per_dim);
        if (std::abs(current - previous) < 1e-3) return current;
        previous = current;
    }
    return previous;
}

}  // namespace proven
