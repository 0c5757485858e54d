#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rydberg/geometry.hpp"

namespace rydberg {

/// Internal state of one atom. All magnetic sublevels are m = 0.
enum class Species : std::uint8_t { P = 0, S = 1, SPrime = 2, PPrime = 3 };

enum class ModelCase { ToyExchange, CaseI, CaseII };

std::string_view to_string(Species s);
std::string_view to_string(ModelCase c);
Species parse_species(std::string_view name);
ModelCase parse_model_case(std::string_view name);

/// Which processes act and with which dipole moments.
///
///  ToyExchange: s + p <-> p + s                        (c_d = mu_sp^2)
///  CaseI:       p + p <-> s + s'                       (c_d = mu_sp mu_sp')
///               p + s <-> s + p,  p + s' <-> s' + p    (mu_sp^2, mu_sp'^2)
///  CaseII:      s + s' <-> p + p'                      (c_d = mu_sp mu_s'p')
///               p + s <-> s + p,  p' + s' <-> s' + p'  (mu_sp^2, mu_s'p'^2)
///
/// Energies are measured in units of energy_unit() (Vbar at unit density) and the
/// detuning is given in the same units.
struct ModelSpec {
    ModelCase model_case = ModelCase::CaseI;
    double mu_sp = 1.0;
    double mu_sp_prime = 1.0;
    double mu_s_prime_p_prime = 1.0;
    double detuning = 0.0;
    bool include_exchange = true;
    bool include_creation = true;

    /// Throws std::invalid_argument when the model is inconsistent.
    void validate() const;

    /// Vbar: product of the two dipole moments of the scanned process (mu_sp^2 for the toy).
    double energy_unit() const;
};

enum class ProcessKind : std::uint8_t { Creation = 0, ExchangeFirst = 1, ExchangeSecond = 2 };
inline constexpr std::size_t kProcessKinds = 3;

/// Directed two-atom rewrite (a, b) -> (c, d) on the ordered pair (j, k), j < k.
struct ProcessRule {
    Species from_j, from_k, to_j, to_k;
    ProcessKind kind;
};

/// Directed rules enabled by the model. The list is closed under reversal, so the
/// generated matrix is symmetric.
std::vector<ProcessRule> process_rules(const ModelSpec& model);

/// Raw c_d of a process class (product of dipole moments).
double coupling_constant(const ModelSpec& model, ProcessKind kind);

using Occupation = std::vector<Species>;

/// Number of created quanta: N_s for Case I, N_p for Case II, 0 for the toy model.
int creation_counter(std::span<const Species> state, const ModelSpec& model);

/// Sign attached to the creation counter in the rotating-frame diagonal: +1 (Case I), -1 (Case II).
int detuning_sign(const ModelSpec& model);

/// Basis of the sector reachable from an initial occupation, in lexicographic order.
///
/// States are stored packed, 2 bits per atom and 32 atoms per 64-bit chunk, first atom in
/// the most significant bits; numeric order of the chunks is lexicographic order of words.
class SectorBasis {
public:
    /// Breadth-first closure of `initial` under the model's processes.
    /// Throws std::invalid_argument for an occupation the model cannot start from.
    static SectorBasis enumerate(const ModelSpec& model, const Occupation& initial);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t n_atoms() const noexcept { return n_atoms_; }
    std::size_t initial_index() const noexcept { return initial_index_; }

    Species species(std::size_t state, std::size_t atom) const;
    Occupation state(std::size_t index) const;
    std::optional<std::size_t> index_of(const Occupation& word) const;

    /// Number of atoms of `s` in every basis state.
    std::vector<int> species_counts(Species s) const;

    // Packed-key access used by the Hamiltonian assembly.
    std::size_t chunks() const noexcept { return chunks_; }
    std::span<const std::uint64_t> key(std::size_t index) const {
        return {keys_.data() + index * chunks_, chunks_};
    }
    std::optional<std::size_t> index_of_key(std::span<const std::uint64_t> key) const;

private:
    SectorBasis() = default;

    std::size_t n_atoms_ = 0;
    std::size_t chunks_ = 0;
    std::size_t dim_ = 0;
    std::size_t initial_index_ = 0;
    std::vector<std::uint64_t> keys_;
};

/// Initial occupations used by the models.
Occupation toy_initial_state(std::size_t n_atoms, std::size_t s_atom = 0);
Occupation case1_initial_state(std::size_t n_atoms);
/// First n_s atoms in s, the remaining atoms in s'.
Occupation case2_initial_state(std::size_t n_s, std::size_t n_s_prime);

/// Row pointers and column indices of a sparse matrix; shared by every matrix with the pattern.
struct CsrPattern {
    std::size_t dim = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> cols;
};

/// Real symmetric off-diagonal part in compressed sparse row form.
struct CsrMatrix {
    std::shared_ptr<const CsrPattern> pattern;
    std::vector<double> values;
};

/// Rotating-frame Hamiltonian H = Delta * sign * counter + sum of pair couplings.
///
/// The off-diagonal block is shared between copies, so re-detuning is cheap.
class SparseHamiltonian {
public:
    SparseHamiltonian(std::shared_ptr<const CsrMatrix> offdiag, std::shared_ptr<const std::vector<double>> counters,
                      double detuning);

    std::size_t dim() const noexcept { return offdiag_->pattern->dim; }
    /// Stored nonzeros, counting nonzero diagonal entries.
    std::size_t nnz() const;
    std::size_t offdiag_nnz() const noexcept { return offdiag_->values.size(); }
    double detuning() const noexcept { return detuning_; }

    /// Same couplings, different detuning.
    SparseHamiltonian with_detuning(double detuning) const;

    double diagonal(std::size_t i) const { return detuning_ * (*counters_)[i]; }
    double entry(std::size_t i, std::size_t j) const;

    /// y = H x
    void apply(std::span<const std::complex<double>> x, std::span<std::complex<double>> y) const;

    /// Largest absolute row sum, an upper bound on the spectral radius.
    double inf_norm() const;
    bool all_finite() const;

    const CsrMatrix& offdiag() const noexcept { return *offdiag_; }

    /// Coordinate text dump: "row col value" per stored entry, diagonal included.
    void write_coordinate(std::ostream& os) const;

private:
    std::shared_ptr<const CsrMatrix> offdiag_;
    std::shared_ptr<const std::vector<double>> counters_;
    double detuning_;
};

/// Sparsity pattern of the model on a basis, with each nonzero tagged by (pair, process).
/// Built once per (model, basis); assemble() only evaluates couplings for a configuration.
class HamiltonianTemplate {
public:
    HamiltonianTemplate(const ModelSpec& model, const SectorBasis& basis);

    SparseHamiltonian assemble(const AtomConfiguration& config, double detuning) const;
    SparseHamiltonian assemble(const AtomConfiguration& config) const { return assemble(config, model_.detuning); }

    const ModelSpec& model() const noexcept { return model_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t n_atoms() const noexcept { return n_atoms_; }
    std::size_t offdiag_nnz() const noexcept { return terms_.size(); }

private:
    ModelSpec model_;
    std::size_t dim_;
    std::size_t n_atoms_;
    std::shared_ptr<const CsrPattern> pattern_;
    std::vector<std::uint32_t> terms_; // pair_index * kProcessKinds + kind, aligned with pattern_->cols
    std::shared_ptr<const std::vector<double>> counters_;
};

/// One-shot assembly at model.detuning.
SparseHamiltonian build_hamiltonian(const ModelSpec& model, const SectorBasis& basis, const AtomConfiguration& config);

/// Index of pair (j, k), j < k, in row-major upper-triangle order.
constexpr std::size_t pair_index(std::size_t j, std::size_t k, std::size_t n) {
    return j * n - j * (j + 1) / 2 + (k - j - 1);
}

} // namespace rydberg
