#pragma once

#include <chrono>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rydberg/geometry.hpp"
#include "rydberg/hilbert.hpp"

namespace rydberg {

using Complex = std::complex<double>;

class StateVector {
public:
    StateVector() = default;
    explicit StateVector(std::vector<Complex> amplitudes) : amplitudes_(std::move(amplitudes)) {}

    /// Unit vector on basis state `index`.
    static StateVector basis_state(std::size_t dim, std::size_t index);

    std::size_t dim() const noexcept { return amplitudes_.size(); }
    double norm() const;

    std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
    std::span<Complex> amplitudes() noexcept { return amplitudes_; }
    const Complex& operator[](std::size_t i) const { return amplitudes_[i]; }
    Complex& operator[](std::size_t i) { return amplitudes_[i]; }

private:
    std::vector<Complex> amplitudes_;
};

Complex inner_product(const StateVector& a, const StateVector& b); // <a|b>

struct EvolutionOptions {
    double tol = 1e-8;             // bound on the 2-norm error of the final state
    std::size_t krylov_dim = 30;   // Lanczos vectors per step
    std::size_t max_steps = 2'000'000;
    double min_step_fraction = 1e-14; // step below T * this counts as underflow
};

struct EvolutionReport {
    StateVector final_state;
    double norm_drift = 0.0;
    std::size_t steps_taken = 0;
    std::size_t matvecs = 0;
    std::chrono::duration<double> wall_time{};

    static constexpr double kNormTolerance = 1e-9;
    bool ok() const noexcept { return norm_drift <= kNormTolerance; }
};

/// psi(T) = exp(-i H T) psi0 by short-iterative Lanczos with adaptive steps.
///
/// Each step builds a Krylov space once and then takes the longest step whose a-posteriori
/// residual bound stays within tol * step / |T|, so the accumulated error is bounded by tol.
/// Isolated large couplings (close pairs) only show up as outlying Ritz values and do not
/// force tiny steps on their own. Negative T evolves backwards.
///
/// Throws std::invalid_argument for mismatched dimensions or non-finite matrix entries and
/// StiffnessError when the step size underflows.
EvolutionReport evolve(const SparseHamiltonian& h, const StateVector& psi0, double T,
                       const EvolutionOptions& options = {});
EvolutionReport evolve(const SparseHamiltonian& h, const StateVector& psi0, double T, double tol);

/// Piecewise-constant evolution for moving atoms. Each segment of length <= rebuild_dt uses
/// the Hamiltonian of the configuration at the segment midpoint. The configuration must
/// carry velocities.
EvolutionReport evolve_time_dependent(const HamiltonianTemplate& tmpl, const AtomConfiguration& config,
                                      const StateVector& psi0, double T, double detuning, double rebuild_dt,
                                      const EvolutionOptions& options = {});

/// Convenience form starting from the basis' initial state at model.detuning.
EvolutionReport evolve_time_dependent(const ModelSpec& model, const SectorBasis& basis,
                                      const AtomConfiguration& config, double T, double rebuild_dt,
                                      double tol = 1e-8);

/// |<psi_t|psi0>|^2
double survival_probability(const StateVector& psi_t, const StateVector& psi0);

/// Mean fraction of atoms in `species`: sum_i |c_i|^2 N_species(i) / n_atoms.
/// Throws std::invalid_argument if the species is not part of the model's alphabet.
double species_fraction(const StateVector& psi, const SectorBasis& basis, Species species, const ModelSpec& model);

/// Same, with per-state species counts precomputed.
double species_fraction(const StateVector& psi, std::span<const int> counts, std::size_t n_atoms);

/// <psi|H|psi>
double energy_expectation(const SparseHamiltonian& h, const StateVector& psi);

// ---------------------------------------------------------------------------
// Toy exchange model: dim = n_atoms, so dense diagonalization is cheap.

struct EigenvalueHistogram {
    std::vector<double> edges;  // bins + 1 edges
    std::vector<std::size_t> counts;
    std::size_t underflow = 0;
    std::size_t overflow = 0;
    std::size_t total = 0;
    /// Width of the central interval holding 90% of the pooled eigenvalues.
    double central90_width = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
    double mean = 0.0;
    double skewness = 0.0;
};

/// Pooled eigenvalues of the toy Hamiltonian over n_configs configurations (in units of mu_sp^2 n).
std::vector<double> toy_eigenvalues(std::size_t n_atoms, std::size_t n_configs, std::uint64_t seed,
                                    std::size_t workers = 1);

/// Histogram over [-range, range]; range = 0 picks the 99.5% two-sided quantile envelope.
EigenvalueHistogram eigenvalue_histogram(std::span<const double> eigenvalues, std::size_t bins, double range = 0.0);

EigenvalueHistogram eigenvalue_histogram(std::size_t n_atoms, std::size_t n_configs, std::size_t bins,
                                         std::uint64_t seed, std::size_t workers = 1);

struct DecayCurve {
    std::vector<double> times;
    std::vector<double> mean;
    std::vector<double> std_error;
    std::size_t n_configs = 0;
};

/// Ensemble-averaged survival probability of the single s excitation on its initial atom,
/// from the exact eigendecomposition of each configuration.
DecayCurve toy_decay_curve(std::size_t n_atoms, std::size_t n_configs, std::span<const double> times,
                           std::uint64_t seed, std::size_t workers = 1);

} // namespace rydberg
