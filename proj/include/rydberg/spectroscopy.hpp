#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rydberg/dynamics.hpp"
#include "rydberg/hilbert.hpp"

namespace rydberg {

/// Default detuning grid: 41 points on [-80, 80] merged with 81 points on [-20, 20].
std::vector<double> default_detuning_grid();

/// Sorted union of evenly spaced segments, each given as (lo, hi, points).
struct GridSegment {
    double lo;
    double hi;
    std::size_t points;
};
std::vector<double> make_detuning_grid(std::span<const GridSegment> segments);

/// One ensemble run: model, sample size and integration controls.
struct SpectrumRequest {
    ModelSpec model;
    std::size_t n_atoms = 10;
    /// Case II: atoms starting in s; the rest start in s'. Ignored otherwise.
    std::size_t n_s = 0;
    double T = 3.4;
    std::vector<double> detunings;
    std::size_t n_configs = 200;
    std::uint64_t seed = 1;
    double tol = 1e-8;
    std::size_t workers = 1;
    double r_min_reject = 0.0;
    /// Moving atoms: constant speed, random direction. Empty for a frozen gas.
    std::optional<double> speed;
    /// Rebuild interval for moving atoms; 0 means T / 200.
    double rebuild_dt = 0.0;
};

/// Observed species: s for Case I, p for Case II.
Species yield_species(ModelCase model_case);

/// Case I: all p. Case II: n_s atoms in s, the rest in s'.
Occupation initial_occupation(const SpectrumRequest& request);

struct ConfigDiagnostics {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    double min_pair_separation = 0.0;
    double max_norm_drift = 0.0;
    std::size_t steps = 0;
    std::size_t matvecs = 0;
    double wall_seconds = 0.0;
};

struct SpectrumCurve {
    std::vector<double> detunings;
    std::vector<double> yields;
    std::vector<double> std_errors;
    std::size_t n_configs = 0;
    SpectrumRequest request;
    /// Warnings raised while producing or transforming the curve.
    std::vector<std::string> notes;
    std::vector<ConfigDiagnostics> diagnostics;
};

/// Per-configuration yields, indexed [config][detuning].
struct EnsembleYields {
    std::vector<std::vector<double>> yields;
    std::vector<ConfigDiagnostics> diagnostics;
};

/// Evolves every (configuration, detuning) pair of the request and returns the raw yields.
/// Configuration c uses seed derive_seed(request.seed, c); a failed evolution throws
/// EnsembleError naming the configuration and detuning.
EnsembleYields ensemble_yields(const SpectrumRequest& request);

/// Mean and standard error per detuning, reduced in configuration order.
SpectrumCurve reduce_spectrum(const SpectrumRequest& request, const EnsembleYields& ensemble);

/// ensemble_yields followed by reduce_spectrum.
SpectrumCurve spectrum(const SpectrumRequest& request);

struct GaussianProfileSpec {
    double sigma = 500.0;
    std::size_t quadrature_points = 512;
    double r_max_over_sigma = 5.0;

    void validate() const;
};

/// Averages the homogeneous curve over a Gaussian cloud n(r) = 2 sqrt(2) nbar exp(-r^2/sigma^2):
///   f_G(D) = int f(D exp(r^2/sigma^2) / (2 sqrt 2)) exp(-r^2/sigma^2) r^2 dr / int exp(-r^2/sigma^2) r^2 dr
/// The raw curve is linearly interpolated; scaled detunings outside its support contribute 0
/// and the lost kernel weight is recorded in notes.
SpectrumCurve gaussian_convolve(const SpectrumCurve& curve, const GaussianProfileSpec& profile);

struct LineWidthResult {
    double fwhm = 0.0;
    double half_max = 0.0;
    double left_cross = 0.0;
    double right_cross = 0.0;
    double uncertainty = 0.0;
    double peak = 0.0;
    double peak_detuning = 0.0;
    double baseline = 0.0;
};

/// Full width at half maximum above the edge baseline. Baseline is the mean of the outermost
/// 10% of grid points on each side; crossings are linearly interpolated and the outermost
/// ones are used. Throws CurveSupportError when the curve never drops below half maximum on
/// one side, or has no interior maximum above its edges.
LineWidthResult extract_fwhm(const SpectrumCurve& curve);
LineWidthResult extract_fwhm(std::span<const double> detunings, std::span<const double> yields,
                             std::span<const double> std_errors);

/// (n1 - n2) / (n1 + n2) realized with integers n1 + n2 = total. Returns empty if impossible.
std::optional<std::pair<std::size_t, std::size_t>> split_for_ratio(double nu, std::size_t total);

struct RatioScanSpec {
    std::vector<double> nu_values;
    std::size_t n_atoms = 20;
};

struct RatioPoint {
    double nu = 0.0;
    std::size_t n_s = 0;
    std::size_t n_s_prime = 0;
    LineWidthResult width;
    SpectrumCurve curve;
};

/// Line width against population ratio for Case II. `base` supplies everything except n_atoms
/// and n_s. Each nu must be realizable with integer counts.
std::vector<RatioPoint> width_vs_ratio(const RatioScanSpec& scan, const SpectrumRequest& base);

struct FiniteSizePoint {
    std::size_t n_atoms = 0;
    LineWidthResult width;
};

struct FiniteSizeScan {
    std::vector<FiniteSizePoint> points;
    /// Least-squares fit w(N) = w_inf + slope / N.
    double extrapolated_width = 0.0;
    double slope = 0.0;
    double fit_residual = 0.0; // RMS
};

/// Widths at each size (ascending); Case II sizes are split evenly between s and s'.
FiniteSizeScan finite_size_scan(const SpectrumRequest& base, std::span<const std::size_t> sizes);

/// Fits w = a + b / N by least squares; needs at least two sizes.
FiniteSizeScan fit_inverse_size(std::vector<FiniteSizePoint> points);

} // namespace rydberg
