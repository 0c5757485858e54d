#include "rydberg/pair_statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rydberg/geometry.hpp"
#include "rydberg/random.hpp"

namespace rydberg {

namespace {

using std::numbers::pi;
using Quadrature = boost::math::quadrature::gauss_kronrod<double, 31>;

constexpr double kFourPiOverThree = 4.0 * pi / 3.0;
constexpr unsigned kMaxDepth = 15;
constexpr double kRelTol = 1e-12;

// Integrates f over [a, b] mapped onto [0, 1]. This Boost version compares an unscaled error
// estimate against a width-scaled tolerance, so narrow panels would otherwise never converge.
template <class F>
double integrate_unit(F& f, double a, double b, unsigned depth, double tol, double* l1 = nullptr) {
    const double width = b - a;
    auto g = [&](double t) { return f(a + width * t); };
    const double value = width * Quadrature::integrate(g, 0.0, 1.0, depth, tol, nullptr, l1);
    if (l1) *l1 *= width;
    return value;
}

// Integrates f over consecutive panels [points[i], points[i+1]]. The tolerance is global:
// a coarse pass sizes the total, then each panel is refined only to kRelTol of that total.
template <class F>
double integrate_panels(F&& f, const std::vector<double>& points) {
    std::vector<double> coarse(points.size(), 0.0);
    double scale = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        if (points[i + 1] <= points[i]) continue;
        double l1 = 0.0;
        coarse[i] = integrate_unit(f, points[i], points[i + 1], 0, 0.0, &l1);
        scale += l1;
    }
    if (scale == 0.0) return 0.0;

    double total = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        if (points[i + 1] <= points[i]) continue;
        const double magnitude = std::abs(coarse[i]);
        if (magnitude < 1e-3 * kRelTol * scale) {
            total += coarse[i];
            continue;
        }
        const double tol = std::min(1e-2, kRelTol * scale / magnitude);
        total += integrate_unit(f, points[i], points[i + 1], kMaxDepth, tol);
    }
    return total;
}

// int_0^1 |1 - 3x^2| exp(-k |1 - 3x^2|) dx.
// Near the magic angle x0 the integrand behaves like y exp(-k y) with y ~ 2 sqrt(3) |x - x0|,
// so for large k all the weight sits in a layer of width ~1/k around the kink.
double angular_integral(double k) {
    const double x0 = 1.0 / std::sqrt(3.0);
    const double layer = 1.0 / (2.0 * std::sqrt(3.0) * k);

    std::vector<double> points{0.0, x0, 1.0};
    for (double w = layer; w < 1.0; w *= 8.0) {
        if (x0 - w > 0.0) points.push_back(x0 - w);
        if (x0 + w < 1.0) points.push_back(x0 + w);
    }
    std::sort(points.begin(), points.end());

    auto integrand = [k](double x) {
        const double y = std::abs(1.0 - 3.0 * x * x);
        return y * std::exp(-k * y);
    };
    return integrate_panels(integrand, points);
}

void require_positive(double delta, const char* who) {
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw std::invalid_argument(std::string(who) + ": delta must be finite and > 0");
}

} // namespace

double nearest_neighbor_pdf(double r) {
    if (!(r >= 0.0)) throw std::invalid_argument("nearest_neighbor_pdf: r must be >= 0");
    return 4.0 * pi * r * r * std::exp(-kFourPiOverThree * r * r * r);
}

double pair_density_isotropic(double delta) {
    require_positive(delta, "pair_density_isotropic");
    return kFourPiOverThree / (delta * delta) * std::exp(-kFourPiOverThree / delta);
}

double pair_density_dipolar(double delta) {
    require_positive(delta, "pair_density_dipolar");
    const double k = kFourPiOverThree / delta;
    return kFourPiOverThree / (delta * delta) * angular_integral(k);
}

double pair_density(double delta, PairDistributionKind kind) {
    return kind == PairDistributionKind::Isotropic ? pair_density_isotropic(delta) : pair_density_dipolar(delta);
}

double cumulative_p(double delta, PairDistributionKind kind) {
    if (!(delta >= 0.0)) throw std::invalid_argument("cumulative_p: delta must be >= 0");
    if (delta == 0.0) return 0.0;
    if (std::isinf(delta)) return 1.0;

    // Geometric panels keep the 1/delta^2 tail and the 0+ region well resolved.
    std::vector<double> points{0.0};
    for (double b = 1e-3; b < delta; b *= 2.0) points.push_back(b);
    points.push_back(delta);

    auto density = [kind](double d) { return d > 0.0 ? pair_density(d, kind) : 0.0; };
    return std::clamp(integrate_panels(density, points), 0.0, 1.0);
}

PairCdfResult evaluate_pair_statistics(double delta, PairDistributionKind kind) {
    return {delta, pair_density(delta, kind), cumulative_p(delta, kind)};
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples) : samples_(std::move(samples)) {
    std::sort(samples_.begin(), samples_.end());
}

double EmpiricalCdf::operator()(double delta) const {
    if (samples_.empty()) return 0.0;
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), delta);
    return static_cast<double>(it - samples_.begin()) / static_cast<double>(samples_.size());
}

EmpiricalCdf empirical_pair_cdf(std::size_t n_atoms, std::size_t n_configs, PairDistributionKind kind,
                                std::uint64_t seed) {
    if (n_atoms < 2) throw std::invalid_argument("empirical_pair_cdf: n_atoms must be >= 2");
    std::vector<double> samples;
    samples.reserve(n_atoms * n_configs);
    for (std::size_t c = 0; c < n_configs; ++c) {
        const AtomConfiguration config = sample_configuration(n_atoms, derive_seed(seed, c));
        const auto& pos = config.positions();
        for (std::size_t i = 0; i < n_atoms; ++i) {
            double best_r2 = std::numeric_limits<double>::infinity();
            Vec3 best{};
            for (std::size_t j = 0; j < n_atoms; ++j) {
                if (j == i) continue;
                const Vec3 d = min_image_displacement(pos[i], pos[j], config.box_edge());
                const double r2 = d.dot(d);
                if (r2 < best_r2) {
                    best_r2 = r2;
                    best = d;
                }
            }
            const double v = kind == PairDistributionKind::Isotropic
                                 ? 1.0 / (best_r2 * std::sqrt(best_r2))
                                 : std::abs(dipolar_coupling(best, 1.0));
            samples.push_back(v);
        }
    }
    return EmpiricalCdf(std::move(samples));
}

} // namespace rydberg
