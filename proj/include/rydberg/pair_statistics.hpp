#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace rydberg {

/// Shape of the pair interaction whose nearest-neighbor statistics are evaluated.
/// Both kinds use c_d = 1 at unit density, i.e. energies in units of Vbar.
enum class PairDistributionKind { Isotropic, Dipolar };

struct PairCdfResult {
    double delta = 0.0;
    double density = 0.0;    // dP(|V| <= delta) / d delta
    double cumulative = 0.0; // P(|V| <= delta)
};

/// Nearest-neighbor distance density 4 pi r^2 exp(-4 pi r^3 / 3) of a unit-density Poisson gas.
double nearest_neighbor_pdf(double r);

/// Density of |V| = 1/r^3 for the nearest neighbor. Defined for delta > 0 (limit 0 at 0+).
double pair_density_isotropic(double delta);

/// Density of |V| = |1 - 3 cos^2 theta| / r^3 for the nearest neighbor, delta > 0.
/// The angular integral is split at the magic angle x = 1/sqrt(3) and evaluated
/// with adaptive Gauss-Kronrod quadrature to ~1e-10 relative accuracy.
double pair_density_dipolar(double delta);

double pair_density(double delta, PairDistributionKind kind);

/// P(|V| <= delta) obtained by integrating the density from 0 to delta.
double cumulative_p(double delta, PairDistributionKind kind);

PairCdfResult evaluate_pair_statistics(double delta, PairDistributionKind kind);

/// Sorted sample of nearest-neighbor |V| values gathered from random configurations.
class EmpiricalCdf {
public:
    explicit EmpiricalCdf(std::vector<double> samples);

    /// Fraction of samples <= delta.
    double operator()(double delta) const;
    const std::vector<double>& samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }

private:
    std::vector<double> samples_;
};

/// Monte Carlo estimate of the nearest-neighbor |V| distribution. Every atom of every
/// configuration contributes the coupling to its minimum-image nearest neighbor.
EmpiricalCdf empirical_pair_cdf(std::size_t n_atoms, std::size_t n_configs, PairDistributionKind kind,
                                std::uint64_t seed);

} // namespace rydberg
