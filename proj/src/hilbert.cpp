#include "rydberg/hilbert.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace rydberg {

namespace {

constexpr std::size_t kAtomsPerChunk = 32;

using Key = std::vector<std::uint64_t>;

struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (std::uint64_t c : k) {
            h ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0xff51afd7ed558ccdULL;
        }
        return static_cast<std::size_t>(h ^ (h >> 33));
    }
};

constexpr unsigned shift_of(std::size_t atom) {
    return static_cast<unsigned>(2 * (kAtomsPerChunk - 1 - atom % kAtomsPerChunk));
}

Species get_species(std::span<const std::uint64_t> key, std::size_t atom) {
    return static_cast<Species>((key[atom / kAtomsPerChunk] >> shift_of(atom)) & 0x3ULL);
}

void set_species(std::span<std::uint64_t> key, std::size_t atom, Species s) {
    auto& chunk = key[atom / kAtomsPerChunk];
    const unsigned sh = shift_of(atom);
    chunk = (chunk & ~(0x3ULL << sh)) | (static_cast<std::uint64_t>(s) << sh);
}

Key pack(const Occupation& word) {
    Key key((word.size() + kAtomsPerChunk - 1) / kAtomsPerChunk, 0);
    for (std::size_t a = 0; a < word.size(); ++a) set_species(key, a, word[a]);
    return key;
}

bool key_less(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// rules_by_pair[from_j][from_k] lists the rules whose left-hand side is (from_j, from_k).
using RuleTable = std::array<std::array<std::vector<ProcessRule>, 4>, 4>;

RuleTable make_rule_table(const ModelSpec& model) {
    RuleTable table;
    for (const auto& r : process_rules(model))
        table[static_cast<int>(r.from_j)][static_cast<int>(r.from_k)].push_back(r);
    return table;
}

int count_species(std::span<const Species> state, Species s) {
    return static_cast<int>(std::count(state.begin(), state.end(), s));
}

void validate_initial(const ModelSpec& model, const Occupation& initial) {
    if (initial.empty()) throw std::invalid_argument("initial occupation is empty");
    const int n_p = count_species(initial, Species::P);
    const int n_s = count_species(initial, Species::S);
    const int n_sp = count_species(initial, Species::SPrime);
    const int n_pp = count_species(initial, Species::PPrime);
    switch (model.model_case) {
    case ModelCase::ToyExchange:
        if (n_s != 1 || n_p + 1 != static_cast<int>(initial.size()))
            throw std::invalid_argument("ToyExchange start must hold exactly one s among p atoms");
        break;
    case ModelCase::CaseI:
        if (n_pp != 0) throw std::invalid_argument("CaseI start may not contain p' atoms");
        if (n_s != n_sp) throw std::invalid_argument("CaseI start must have N_s == N_s'");
        break;
    case ModelCase::CaseII:
        if (n_p != n_pp) throw std::invalid_argument("CaseII start must have N_p == N_p'");
        break;
    }
}

} // namespace

std::string_view to_string(Species s) {
    switch (s) {
    case Species::P: return "p";
    case Species::S: return "s";
    case Species::SPrime: return "s'";
    case Species::PPrime: return "p'";
    }
    return "?";
}

std::string_view to_string(ModelCase c) {
    switch (c) {
    case ModelCase::ToyExchange: return "toy";
    case ModelCase::CaseI: return "case1";
    case ModelCase::CaseII: return "case2";
    }
    return "?";
}

Species parse_species(std::string_view name) {
    if (name == "p") return Species::P;
    if (name == "s") return Species::S;
    if (name == "s'" || name == "sp" || name == "s_prime") return Species::SPrime;
    if (name == "p'" || name == "pp" || name == "p_prime") return Species::PPrime;
    throw std::invalid_argument("unknown species: " + std::string(name));
}

ModelCase parse_model_case(std::string_view name) {
    if (name == "toy" || name == "ToyExchange") return ModelCase::ToyExchange;
    if (name == "case1" || name == "CaseI") return ModelCase::CaseI;
    if (name == "case2" || name == "CaseII") return ModelCase::CaseII;
    throw std::invalid_argument("unknown model case: " + std::string(name));
}

void ModelSpec::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(mu_sp)) throw std::invalid_argument("mu_sp must be finite and > 0");
    if (model_case == ModelCase::CaseI && !positive(mu_sp_prime))
        throw std::invalid_argument("mu_sp_prime must be finite and > 0");
    if (model_case == ModelCase::CaseII && !positive(mu_s_prime_p_prime))
        throw std::invalid_argument("mu_s_prime_p_prime must be finite and > 0");
    if (!std::isfinite(detuning)) throw std::invalid_argument("detuning must be finite");
    if (!include_exchange && !include_creation)
        throw std::invalid_argument("at least one of include_exchange / include_creation must be set");
    if (model_case == ModelCase::ToyExchange && !include_exchange)
        throw std::invalid_argument("ToyExchange has only the exchange process");
}

double ModelSpec::energy_unit() const {
    switch (model_case) {
    case ModelCase::ToyExchange: return mu_sp * mu_sp;
    case ModelCase::CaseI: return mu_sp * mu_sp_prime;
    case ModelCase::CaseII: return mu_sp * mu_s_prime_p_prime;
    }
    return 1.0;
}

std::vector<ProcessRule> process_rules(const ModelSpec& model) {
    using enum Species;
    std::vector<ProcessRule> rules;
    auto both_ways = [&rules](Species a, Species b, Species c, Species d, ProcessKind kind) {
        rules.push_back({a, b, c, d, kind});
        rules.push_back({c, d, a, b, kind});
    };
    switch (model.model_case) {
    case ModelCase::ToyExchange:
        both_ways(S, P, P, S, ProcessKind::ExchangeFirst);
        break;
    case ModelCase::CaseI:
        if (model.include_creation) {
            both_ways(P, P, S, SPrime, ProcessKind::Creation);
            both_ways(P, P, SPrime, S, ProcessKind::Creation);
        }
        if (model.include_exchange) {
            both_ways(P, S, S, P, ProcessKind::ExchangeFirst);
            both_ways(P, SPrime, SPrime, P, ProcessKind::ExchangeSecond);
        }
        break;
    case ModelCase::CaseII:
        if (model.include_creation) {
            both_ways(S, SPrime, P, PPrime, ProcessKind::Creation);
            both_ways(SPrime, S, PPrime, P, ProcessKind::Creation);
        }
        if (model.include_exchange) {
            both_ways(P, S, S, P, ProcessKind::ExchangeFirst);
            both_ways(PPrime, SPrime, SPrime, PPrime, ProcessKind::ExchangeSecond);
        }
        break;
    }
    return rules;
}

double coupling_constant(const ModelSpec& model, ProcessKind kind) {
    switch (model.model_case) {
    case ModelCase::ToyExchange:
        return model.mu_sp * model.mu_sp;
    case ModelCase::CaseI:
        switch (kind) {
        case ProcessKind::Creation: return model.mu_sp * model.mu_sp_prime;
        case ProcessKind::ExchangeFirst: return model.mu_sp * model.mu_sp;
        case ProcessKind::ExchangeSecond: return model.mu_sp_prime * model.mu_sp_prime;
        }
        break;
    case ModelCase::CaseII:
        switch (kind) {
        case ProcessKind::Creation: return model.mu_sp * model.mu_s_prime_p_prime;
        case ProcessKind::ExchangeFirst: return model.mu_sp * model.mu_sp;
        case ProcessKind::ExchangeSecond: return model.mu_s_prime_p_prime * model.mu_s_prime_p_prime;
        }
        break;
    }
    return 0.0;
}

int creation_counter(std::span<const Species> state, const ModelSpec& model) {
    switch (model.model_case) {
    case ModelCase::ToyExchange: return 0;
    case ModelCase::CaseI: return count_species(state, Species::S);
    case ModelCase::CaseII: return count_species(state, Species::P);
    }
    return 0;
}

int detuning_sign(const ModelSpec& model) {
    return model.model_case == ModelCase::CaseII ? -1 : 1;
}

// ---------------------------------------------------------------------------
// SectorBasis

SectorBasis SectorBasis::enumerate(const ModelSpec& model, const Occupation& initial) {
    model.validate();
    validate_initial(model, initial);

    const std::size_t n = initial.size();
    const RuleTable table = make_rule_table(model);

    std::unordered_set<Key, KeyHash> seen;
    std::deque<Key> frontier;
    Key start = pack(initial);
    seen.insert(start);
    frontier.push_back(start);

    while (!frontier.empty()) {
        Key current = std::move(frontier.front());
        frontier.pop_front();
        for (std::size_t j = 0; j < n; ++j) {
            const Species a = get_species(current, j);
            for (std::size_t k = j + 1; k < n; ++k) {
                const Species b = get_species(current, k);
                for (const auto& rule : table[static_cast<int>(a)][static_cast<int>(b)]) {
                    Key next = current;
                    set_species(next, j, rule.to_j);
                    set_species(next, k, rule.to_k);
                    if (seen.insert(next).second) frontier.push_back(std::move(next));
                }
            }
        }
    }

    std::vector<Key> sorted(seen.begin(), seen.end());
    std::sort(sorted.begin(), sorted.end());

    SectorBasis basis;
    basis.n_atoms_ = n;
    basis.chunks_ = start.size();
    basis.dim_ = sorted.size();
    basis.keys_.reserve(basis.dim_ * basis.chunks_);
    for (const auto& k : sorted) basis.keys_.insert(basis.keys_.end(), k.begin(), k.end());
    basis.initial_index_ = *basis.index_of_key(start);
    return basis;
}

Species SectorBasis::species(std::size_t state, std::size_t atom) const {
    if (state >= dim_ || atom >= n_atoms_) throw std::out_of_range("SectorBasis::species");
    return get_species(key(state), atom);
}

Occupation SectorBasis::state(std::size_t index) const {
    if (index >= dim_) throw std::out_of_range("SectorBasis::state");
    Occupation word(n_atoms_);
    const auto k = key(index);
    for (std::size_t a = 0; a < n_atoms_; ++a) word[a] = get_species(k, a);
    return word;
}

std::optional<std::size_t> SectorBasis::index_of_key(std::span<const std::uint64_t> k) const {
    std::size_t lo = 0, hi = dim_;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (key_less(key(mid), k)) lo = mid + 1;
        else hi = mid;
    }
    if (lo < dim_ && std::equal(k.begin(), k.end(), key(lo).begin())) return lo;
    return std::nullopt;
}

std::optional<std::size_t> SectorBasis::index_of(const Occupation& word) const {
    if (word.size() != n_atoms_) return std::nullopt;
    return index_of_key(pack(word));
}

std::vector<int> SectorBasis::species_counts(Species s) const {
    std::vector<int> counts(dim_, 0);
    for (std::size_t i = 0; i < dim_; ++i) {
        const auto k = key(i);
        int c = 0;
        for (std::size_t a = 0; a < n_atoms_; ++a) c += get_species(k, a) == s;
        counts[i] = c;
    }
    return counts;
}

Occupation toy_initial_state(std::size_t n_atoms, std::size_t s_atom) {
    if (s_atom >= n_atoms) throw std::invalid_argument("toy_initial_state: s_atom out of range");
    Occupation word(n_atoms, Species::P);
    word[s_atom] = Species::S;
    return word;
}

Occupation case1_initial_state(std::size_t n_atoms) {
    return Occupation(n_atoms, Species::P);
}

Occupation case2_initial_state(std::size_t n_s, std::size_t n_s_prime) {
    Occupation word(n_s, Species::S);
    word.insert(word.end(), n_s_prime, Species::SPrime);
    return word;
}

// ---------------------------------------------------------------------------
// SparseHamiltonian

SparseHamiltonian::SparseHamiltonian(std::shared_ptr<const CsrMatrix> offdiag,
                                     std::shared_ptr<const std::vector<double>> counters, double detuning)
    : offdiag_(std::move(offdiag)), counters_(std::move(counters)), detuning_(detuning) {
    if (!offdiag_ || !offdiag_->pattern || !counters_ || counters_->size() != offdiag_->pattern->dim)
        throw std::invalid_argument("SparseHamiltonian: inconsistent parts");
}

std::size_t SparseHamiltonian::nnz() const {
    std::size_t diag = 0;
    for (std::size_t i = 0; i < dim(); ++i) diag += diagonal(i) != 0.0;
    return offdiag_nnz() + diag;
}

SparseHamiltonian SparseHamiltonian::with_detuning(double detuning) const {
    return SparseHamiltonian(offdiag_, counters_, detuning);
}

double SparseHamiltonian::entry(std::size_t i, std::size_t j) const {
    if (i >= dim() || j >= dim()) throw std::out_of_range("SparseHamiltonian::entry");
    if (i == j) return diagonal(i);
    const auto& p = *offdiag_->pattern;
    const auto first = p.cols.begin() + static_cast<std::ptrdiff_t>(p.row_ptr[i]);
    const auto last = p.cols.begin() + static_cast<std::ptrdiff_t>(p.row_ptr[i + 1]);
    const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(j));
    if (it == last || *it != j) return 0.0;
    return offdiag_->values[static_cast<std::size_t>(it - p.cols.begin())];
}

void SparseHamiltonian::apply(std::span<const std::complex<double>> x, std::span<std::complex<double>> y) const {
    const auto& p = *offdiag_->pattern;
    const std::size_t n = p.dim;
    if (x.size() != n || y.size() != n) throw std::invalid_argument("SparseHamiltonian::apply: size mismatch");
    const double* vals = offdiag_->values.data();
    const std::uint32_t* cols = p.cols.data();
    const std::size_t* rp = p.row_ptr.data();
    const double* cnt = counters_->data();
    for (std::size_t i = 0; i < n; ++i) {
        double re = detuning_ * cnt[i] * x[i].real();
        double im = detuning_ * cnt[i] * x[i].imag();
        for (std::size_t e = rp[i]; e < rp[i + 1]; ++e) {
            const std::complex<double>& xc = x[cols[e]];
            re += vals[e] * xc.real();
            im += vals[e] * xc.imag();
        }
        y[i] = {re, im};
    }
}

double SparseHamiltonian::inf_norm() const {
    const auto& p = *offdiag_->pattern;
    double best = 0.0;
    for (std::size_t i = 0; i < p.dim; ++i) {
        double row = std::abs(diagonal(i));
        for (std::size_t e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) row += std::abs(offdiag_->values[e]);
        best = std::max(best, row);
    }
    return best;
}

bool SparseHamiltonian::all_finite() const {
    if (!std::isfinite(detuning_)) return false;
    return std::all_of(offdiag_->values.begin(), offdiag_->values.end(), [](double v) { return std::isfinite(v); });
}

void SparseHamiltonian::write_coordinate(std::ostream& os) const {
    const auto& p = *offdiag_->pattern;
    char buf[96];
    for (std::size_t i = 0; i < p.dim; ++i) {
        bool diag_written = diagonal(i) == 0.0;
        for (std::size_t e = p.row_ptr[i]; e <= p.row_ptr[i + 1]; ++e) {
            const bool at_end = e == p.row_ptr[i + 1];
            if (!diag_written && (at_end || p.cols[e] > i)) {
                std::snprintf(buf, sizeof buf, "%zu %zu %.17g\n", i, i, diagonal(i));
                os << buf;
                diag_written = true;
            }
            if (at_end) break;
            std::snprintf(buf, sizeof buf, "%zu %u %.17g\n", i, p.cols[e], offdiag_->values[e]);
            os << buf;
        }
    }
}

// ---------------------------------------------------------------------------
// HamiltonianTemplate

HamiltonianTemplate::HamiltonianTemplate(const ModelSpec& model, const SectorBasis& basis)
    : model_(model), dim_(basis.dim()), n_atoms_(basis.n_atoms()) {
    model_.validate();
    if (dim_ > UINT32_MAX) throw std::length_error("HamiltonianTemplate: basis too large");
    const std::size_t n = n_atoms_;
    if (n * (n - 1) / 2 * kProcessKinds > UINT32_MAX) throw std::length_error("HamiltonianTemplate: too many pairs");
    const RuleTable table = make_rule_table(model_);

    auto pattern = std::make_shared<CsrPattern>();
    pattern->dim = dim_;
    pattern->row_ptr.assign(dim_ + 1, 0);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> row; // (col, term)
    Key scratch(basis.chunks());
    for (std::size_t i = 0; i < dim_; ++i) {
        row.clear();
        const auto src = basis.key(i);
        for (std::size_t j = 0; j < n; ++j) {
            const Species a = get_species(src, j);
            for (std::size_t k = j + 1; k < n; ++k) {
                const Species b = get_species(src, k);
                for (const auto& rule : table[static_cast<int>(a)][static_cast<int>(b)]) {
                    std::copy(src.begin(), src.end(), scratch.begin());
                    set_species(scratch, j, rule.to_j);
                    set_species(scratch, k, rule.to_k);
                    const auto target = basis.index_of_key(scratch);
                    if (!target) throw std::logic_error("HamiltonianTemplate: process leaves the sector");
                    const auto term = static_cast<std::uint32_t>(pair_index(j, k, n) * kProcessKinds +
                                                                 static_cast<std::size_t>(rule.kind));
                    row.emplace_back(static_cast<std::uint32_t>(*target), term);
                }
            }
        }
        std::sort(row.begin(), row.end());
        for (const auto& [col, term] : row) {
            pattern->cols.push_back(col);
            terms_.push_back(term);
        }
        pattern->row_ptr[i + 1] = pattern->cols.size();
    }
    pattern_ = std::move(pattern);

    auto counters = std::make_shared<std::vector<double>>(dim_);
    const int sign = detuning_sign(model_);
    std::vector<Species> word(n);
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t a = 0; a < n; ++a) word[a] = get_species(basis.key(i), a);
        (*counters)[i] = sign * creation_counter(word, model_);
    }
    counters_ = std::move(counters);
}

SparseHamiltonian HamiltonianTemplate::assemble(const AtomConfiguration& config, double detuning) const {
    if (config.n_atoms() != n_atoms_)
        throw std::invalid_argument("HamiltonianTemplate::assemble: configuration has wrong atom count");

    const double unit = model_.energy_unit();
    std::array<double, kProcessKinds> scale{};
    for (std::size_t k = 0; k < kProcessKinds; ++k)
        scale[k] = coupling_constant(model_, static_cast<ProcessKind>(k)) / unit;

    const std::size_t n = n_atoms_;
    std::vector<double> couplings(n * (n - 1) / 2 * kProcessKinds);
    const auto& pos = config.positions();
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j + 1; k < n; ++k) {
            const double v = dipolar_coupling(min_image_displacement(pos[j], pos[k], config.box_edge()), 1.0);
            const std::size_t base = pair_index(j, k, n) * kProcessKinds;
            for (std::size_t p = 0; p < kProcessKinds; ++p) couplings[base + p] = v * scale[p];
        }
    }

    auto offdiag = std::make_shared<CsrMatrix>();
    offdiag->pattern = pattern_;
    offdiag->values.resize(terms_.size());
    for (std::size_t e = 0; e < terms_.size(); ++e) offdiag->values[e] = couplings[terms_[e]];
    return SparseHamiltonian(std::move(offdiag), counters_, detuning);
}

SparseHamiltonian build_hamiltonian(const ModelSpec& model, const SectorBasis& basis, const AtomConfiguration& config) {
    return HamiltonianTemplate(model, basis).assemble(config, model.detuning);
}

} // namespace rydberg
