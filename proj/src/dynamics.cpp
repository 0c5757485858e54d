#include "rydberg/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "rydberg/errors.hpp"
#include "rydberg/parallel.hpp"
#include "rydberg/random.hpp"

namespace rydberg {

namespace {

using Clock = std::chrono::steady_clock;

// conj(a) . b
Complex dot(std::span<const Complex> a, std::span<const Complex> b) {
    const double* ap = reinterpret_cast<const double*>(a.data());
    const double* bp = reinterpret_cast<const double*>(b.data());
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < 2 * a.size(); i += 2) {
        re += ap[i] * bp[i] + ap[i + 1] * bp[i + 1];
        im += ap[i] * bp[i + 1] - ap[i + 1] * bp[i];
    }
    return {re, im};
}

double norm2(std::span<const Complex> a) {
    double s = 0.0;
    for (const auto& z : a) s += std::norm(z);
    return std::sqrt(s);
}

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 8> kGlNodes{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                         -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                         0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlWeights{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                           0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                           0.2223810344533745, 0.1012285362903763};

// Projected propagator of one Lanczos step: T = Q diag(lambda) Q^T.
struct KrylovProjection {
    Eigen::MatrixXd vectors;
    Eigen::VectorXd lambda;
    Eigen::VectorXd first_row;   // Q(0, k)
    Eigen::VectorXd last_weight; // Q(m-1, k) Q(0, k)
    double residual_beta = 0.0;  // beta_m; zero after breakdown

    // |[exp(-i s T) e1]_{m-1}|
    double last_component(double s) const {
        Complex c{0.0, 0.0};
        for (Eigen::Index k = 0; k < lambda.size(); ++k)
            c += last_weight[k] * std::polar(1.0, -s * lambda[k]);
        return std::abs(c);
    }

    // beta_m * int_0^tau |c_{m-1}(s)| ds bounds the 2-norm error of the step.
    double error_bound(double tau) const {
        if (residual_beta == 0.0) return 0.0;
        constexpr int kPanels = 4;
        const double h = tau / kPanels;
        double integral = 0.0;
        for (int p = 0; p < kPanels; ++p) {
            const double mid = (p + 0.5) * h;
            for (std::size_t q = 0; q < kGlNodes.size(); ++q)
                integral += kGlWeights[q] * last_component(mid + 0.5 * h * kGlNodes[q]);
        }
        return residual_beta * integral * 0.5 * h;
    }
};

constexpr std::size_t kEarlyCheckStride = 4;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kSqrtEps = 1.4901161193847656e-08;

// Diagonalizes the m x m Lanczos tridiagonal, signed by the time direction.
KrylovProjection project(const std::vector<double>& alpha, const std::vector<double>& beta, std::size_t m,
                         double direction, double residual_beta) {
    const auto mi = static_cast<Eigen::Index>(m);
    Eigen::VectorXd diag(mi);
    Eigen::VectorXd sub(std::max<Eigen::Index>(mi - 1, 0));
    for (std::size_t j = 0; j < m; ++j) diag[static_cast<Eigen::Index>(j)] = direction * alpha[j];
    for (std::size_t j = 0; j + 1 < m; ++j) sub[static_cast<Eigen::Index>(j)] = direction * beta[j + 1];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (eig.info() != Eigen::Success) throw std::runtime_error("evolve: tridiagonal eigensolver failed");

    KrylovProjection proj;
    proj.vectors = eig.eigenvectors();
    proj.lambda = eig.eigenvalues();
    proj.first_row = proj.vectors.row(0).transpose();
    proj.last_weight = proj.vectors.row(mi - 1).transpose().cwiseProduct(proj.first_row);
    proj.residual_beta = residual_beta;
    return proj;
}

// Orthogonality-loss recurrence for the vector v_{j+1} = u / b about to join the basis.
// Fills next[0..j] from the rows of v_j (cur) and v_{j-1} (prev); true once any estimate
// exceeds sqrt(eps).
bool estimate_orthogonality(const std::vector<double>& alpha, const std::vector<double>& beta, std::size_t j,
                            double b, double hnorm, const std::vector<double>& prev,
                            const std::vector<double>& cur, std::vector<double>& next) {
    const double noise = kEps * hnorm;
    bool lost = false;
    for (std::size_t k = 0; k < j; ++k) {
        double t = beta[k + 1] * cur[k + 1] + (alpha[k] - alpha[j]) * cur[k] - beta[j] * prev[k];
        if (k > 0) t += beta[k] * cur[k - 1];
        next[k] = (t + std::copysign(noise, t)) / b;
        lost = lost || std::abs(next[k]) > kSqrtEps;
    }
    next[j] = noise / b;
    return lost;
}

} // namespace

StateVector StateVector::basis_state(std::size_t dim, std::size_t index) {
    if (index >= dim) throw std::out_of_range("StateVector::basis_state");
    std::vector<Complex> amps(dim, Complex{0.0, 0.0});
    amps[index] = 1.0;
    return StateVector(std::move(amps));
}

double StateVector::norm() const {
    return norm2(amplitudes_);
}

Complex inner_product(const StateVector& a, const StateVector& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("inner_product: dimension mismatch");
    return dot(a.amplitudes(), b.amplitudes());
}

EvolutionReport evolve(const SparseHamiltonian& h, const StateVector& psi0, double T, double tol) {
    EvolutionOptions options;
    options.tol = tol;
    return evolve(h, psi0, T, options);
}

EvolutionReport evolve(const SparseHamiltonian& h, const StateVector& psi0, double T,
                       const EvolutionOptions& options) {
    const auto start = Clock::now();
    const std::size_t n = h.dim();
    if (psi0.dim() != n) throw std::invalid_argument("evolve: state and Hamiltonian dimensions differ");
    if (!std::isfinite(T)) throw std::invalid_argument("evolve: T must be finite");
    if (!(options.tol > 0.0)) throw std::invalid_argument("evolve: tol must be > 0");
    if (options.krylov_dim < 2) throw std::invalid_argument("evolve: krylov_dim must be >= 2");
    if (!h.all_finite()) throw std::invalid_argument("evolve: Hamiltonian has non-finite entries");

    EvolutionReport report;
    report.final_state = psi0;
    const double norm0 = psi0.norm();
    if (T == 0.0 || norm0 == 0.0) {
        report.wall_time = Clock::now() - start;
        return report;
    }

    const double direction = T > 0.0 ? 1.0 : -1.0;
    const double total = std::abs(T);
    const std::size_t m_max = std::min(options.krylov_dim, n);
    const double breakdown = 1e-14 * std::max(1.0, h.inf_norm());

    // Lanczos vectors are the columns, so the final combination is one matrix-vector product.
    Eigen::MatrixXcd basis(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m_max + 1));
    auto column = [&](std::size_t j) { return std::span<Complex>(basis.col(static_cast<Eigen::Index>(j)).data(), n); };
    std::vector<Complex> psi(psi0.amplitudes().begin(), psi0.amplitudes().end());
    std::vector<double> alpha(m_max), beta(m_max + 1);
    // omega rows estimate |<v_i, v_k>| for the three newest vectors i.
    std::vector<double> omega_prev(m_max + 1), omega_cur(m_max + 1), omega_next(m_max + 1);
    const double hnorm = h.inf_norm();

    double elapsed = 0.0;
    double last_tau = 0.0;
    while (elapsed < total) {
        if (report.steps_taken >= options.max_steps) {
            std::ostringstream msg;
            msg << "evolve: exceeded " << options.max_steps << " steps at t = " << elapsed;
            throw StiffnessError(msg.str());
        }
        const double remaining = total - elapsed;

        // Plain three-term Lanczos. Stops early once the partial space already
        // covers the remaining interval within tolerance.
        const double beta0 = norm2(psi);
        for (std::size_t i = 0; i < n; ++i) basis(static_cast<Eigen::Index>(i), 0) = psi[i] / beta0;
        std::size_t m = m_max;
        double residual = 0.0;
        std::fill(omega_prev.begin(), omega_prev.end(), 0.0);
        std::fill(omega_cur.begin(), omega_cur.end(), 0.0);
        omega_cur[0] = 1.0;
        bool reorth_next = false;
        bool covers_remaining = false;
        for (std::size_t j = 0; j < m_max; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            h.apply(column(j), column(j + 1));
            ++report.matvecs;
            auto u = basis.col(jj + 1);
            alpha[j] = basis.col(jj).dot(u).real();
            u -= alpha[j] * basis.col(jj);
            if (j > 0) u -= beta[j] * basis.col(jj - 1);
            double b = u.norm();
            if (b > breakdown &&
                (reorth_next || estimate_orthogonality(alpha, beta, j, b, hnorm, omega_prev, omega_cur, omega_next))) {
                // Partial reorthogonalization: one Gram-Schmidt pass for this vector and the next.
                const Eigen::VectorXcd overlap = basis.leftCols(jj + 1).adjoint() * u;
                u.noalias() -= basis.leftCols(jj + 1) * overlap;
                b = u.norm();
                std::fill(omega_next.begin(), omega_next.begin() + static_cast<std::ptrdiff_t>(j + 1), kEps);
                reorth_next = !reorth_next;
            }
            omega_next[j + 1] = 1.0;
            std::swap(omega_prev, omega_cur);
            std::swap(omega_cur, omega_next);
            if (b <= breakdown) {
                m = j + 1;
                residual = 0.0;
                break;
            }
            beta[j + 1] = b;
            residual = b;
            if (j + 1 < m_max) {
                u /= b;
                if ((j + 1) % kEarlyCheckStride == 0 &&
                    project(alpha, beta, j + 1, direction, b).error_bound(remaining) <= options.tol * remaining / total) {
                    m = j + 1;
                    covers_remaining = true;
                    break;
                }
            }
        }

        // residual is zero after breakdown: the Krylov space is invariant and the step exact.
        KrylovProjection proj = project(alpha, beta, m, direction, residual);

        // Longest admissible step: error_bound(tau) <= tol * tau / total.
        auto admissible = [&](double tau) { return proj.error_bound(tau) <= options.tol * tau / total; };
        double tau = remaining;
        if (!covers_remaining && !admissible(tau)) {
            double lo = total * options.min_step_fraction;
            if (!admissible(lo)) {
                std::ostringstream msg;
                msg << "evolve: step size underflow at t = " << elapsed << " (||H||_inf = " << h.inf_norm() << ")";
                throw StiffnessError(msg.str());
            }
            double hi = tau;
            if (last_tau > lo && last_tau < hi) {
                if (admissible(last_tau)) lo = last_tau;
                else hi = last_tau;
            }
            for (int it = 0; it < 40 && hi > lo * (1.0 + 1e-3); ++it) {
                const double mid = std::sqrt(lo * hi);
                if (admissible(mid)) lo = mid;
                else hi = mid;
            }
            tau = lo;
        }

        // psi <- beta0 * V * Q exp(-i tau Lambda) Q^T e1
        Eigen::VectorXcd coeff(static_cast<Eigen::Index>(m));
        for (std::size_t j = 0; j < m; ++j) {
            Complex c{0.0, 0.0};
            for (Eigen::Index k = 0; k < proj.lambda.size(); ++k)
                c += proj.vectors(static_cast<Eigen::Index>(j), k) * proj.first_row[k] *
                     std::polar(1.0, -tau * proj.lambda[k]);
            coeff[static_cast<Eigen::Index>(j)] = beta0 * c;
        }
        Eigen::Map<Eigen::VectorXcd>(psi.data(), static_cast<Eigen::Index>(n)).noalias() =
            basis.leftCols(static_cast<Eigen::Index>(m)) * coeff;

        elapsed = tau >= remaining ? total : elapsed + tau;
        last_tau = tau;
        ++report.steps_taken;
    }

    report.final_state = StateVector(std::move(psi));
    report.norm_drift = std::abs(report.final_state.norm() - norm0) / norm0;
    report.wall_time = Clock::now() - start;
    return report;
}

EvolutionReport evolve_time_dependent(const HamiltonianTemplate& tmpl, const AtomConfiguration& config,
                                      const StateVector& psi0, double T, double detuning, double rebuild_dt,
                                      const EvolutionOptions& options) {
    const auto start = Clock::now();
    if (!(rebuild_dt > 0.0)) throw std::invalid_argument("evolve_time_dependent: rebuild_dt must be > 0");
    if (!config.has_velocities()) throw InvalidStateError("evolve_time_dependent: configuration has no velocities");
    if (!std::isfinite(T)) throw std::invalid_argument("evolve_time_dependent: T must be finite");

    EvolutionReport report;
    report.final_state = psi0;
    if (T == 0.0) return report;

    const auto segments = static_cast<std::size_t>(std::ceil(std::abs(T) / rebuild_dt - 1e-12));
    const double dt = T / static_cast<double>(std::max<std::size_t>(segments, 1));
    EvolutionOptions seg_options = options;
    seg_options.tol = options.tol / static_cast<double>(std::max<std::size_t>(segments, 1));

    StateVector psi = psi0;
    for (std::size_t s = 0; s < std::max<std::size_t>(segments, 1); ++s) {
        const double t_mid = (static_cast<double>(s) + 0.5) * dt;
        const AtomConfiguration moved = advance_positions(config, t_mid);
        const SparseHamiltonian h = tmpl.assemble(moved, detuning);
        EvolutionReport seg = evolve(h, psi, dt, seg_options);
        psi = std::move(seg.final_state);
        report.steps_taken += seg.steps_taken;
        report.matvecs += seg.matvecs;
    }
    const double norm0 = psi0.norm();
    report.final_state = std::move(psi);
    report.norm_drift = norm0 > 0.0 ? std::abs(report.final_state.norm() - norm0) / norm0 : 0.0;
    report.wall_time = Clock::now() - start;
    return report;
}

EvolutionReport evolve_time_dependent(const ModelSpec& model, const SectorBasis& basis,
                                      const AtomConfiguration& config, double T, double rebuild_dt, double tol) {
    const HamiltonianTemplate tmpl(model, basis);
    EvolutionOptions options;
    options.tol = tol;
    return evolve_time_dependent(tmpl, config, StateVector::basis_state(basis.dim(), basis.initial_index()), T,
                                 model.detuning, rebuild_dt, options);
}

double survival_probability(const StateVector& psi_t, const StateVector& psi0) {
    return std::clamp(std::norm(inner_product(psi_t, psi0)), 0.0, 1.0);
}

double species_fraction(const StateVector& psi, std::span<const int> counts, std::size_t n_atoms) {
    if (psi.dim() != counts.size()) throw std::invalid_argument("species_fraction: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) acc += std::norm(psi[i]) * counts[i];
    return acc / static_cast<double>(n_atoms);
}

double species_fraction(const StateVector& psi, const SectorBasis& basis, Species species, const ModelSpec& model) {
    bool allowed = false;
    switch (model.model_case) {
    case ModelCase::ToyExchange: allowed = species == Species::S || species == Species::P; break;
    case ModelCase::CaseI: allowed = species != Species::PPrime; break;
    case ModelCase::CaseII: allowed = true; break;
    }
    if (!allowed)
        throw std::invalid_argument("species_fraction: species " + std::string(to_string(species)) +
                                    " is not in the model alphabet");
    const auto counts = basis.species_counts(species);
    return species_fraction(psi, counts, basis.n_atoms());
}

double energy_expectation(const SparseHamiltonian& h, const StateVector& psi) {
    std::vector<Complex> hpsi(psi.dim());
    h.apply(psi.amplitudes(), hpsi);
    return dot(psi.amplitudes(), hpsi).real();
}

// ---------------------------------------------------------------------------
// Toy model

namespace {

Eigen::MatrixXd toy_matrix(const AtomConfiguration& config) {
    const auto n = static_cast<Eigen::Index>(config.n_atoms());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    const auto& pos = config.positions();
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = j + 1; k < n; ++k) {
            const double v = dipolar_coupling(
                min_image_displacement(pos[static_cast<std::size_t>(j)], pos[static_cast<std::size_t>(k)],
                                       config.box_edge()),
                1.0);
            h(j, k) = v;
            h(k, j) = v;
        }
    return h;
}

} // namespace

std::vector<double> toy_eigenvalues(std::size_t n_atoms, std::size_t n_configs, std::uint64_t seed,
                                    std::size_t workers) {
    if (n_atoms < 2) throw std::invalid_argument("toy_eigenvalues: n_atoms must be >= 2");
    std::vector<std::vector<double>> per_config(n_configs);
    parallel_for(n_configs, workers, [&](std::size_t c) {
        const auto config = sample_configuration(n_atoms, derive_seed(seed, c));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(toy_matrix(config), Eigen::EigenvaluesOnly);
        per_config[c].assign(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
    });
    std::vector<double> pooled;
    pooled.reserve(n_atoms * n_configs);
    for (const auto& v : per_config) pooled.insert(pooled.end(), v.begin(), v.end());
    return pooled;
}

EigenvalueHistogram eigenvalue_histogram(std::span<const double> eigenvalues, std::size_t bins, double range) {
    if (bins == 0) throw std::invalid_argument("eigenvalue_histogram: bins must be >= 1");
    if (eigenvalues.empty()) throw std::invalid_argument("eigenvalue_histogram: no eigenvalues");
    std::vector<double> sorted(eigenvalues.begin(), eigenvalues.end());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&sorted](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double f = pos - static_cast<double>(i);
        return i + 1 < sorted.size() ? sorted[i] * (1.0 - f) + sorted[i + 1] * f : sorted.back();
    };

    EigenvalueHistogram hist;
    hist.total = sorted.size();
    hist.q05 = quantile(0.05);
    hist.q95 = quantile(0.95);
    hist.central90_width = hist.q95 - hist.q05;

    double mean = 0.0;
    for (double e : sorted) mean += e;
    mean /= static_cast<double>(sorted.size());
    double m2 = 0.0, m3 = 0.0;
    for (double e : sorted) {
        const double d = e - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(sorted.size());
    m3 /= static_cast<double>(sorted.size());
    hist.mean = mean;
    hist.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;

    if (range <= 0.0) range = std::max(std::abs(quantile(0.0025)), std::abs(quantile(0.9975)));
    if (range <= 0.0) range = 1.0;
    hist.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b)
        hist.edges[b] = -range + 2.0 * range * static_cast<double>(b) / static_cast<double>(bins);
    hist.counts.assign(bins, 0);
    for (double e : sorted) {
        if (e < -range) ++hist.underflow;
        else if (e >= range) ++hist.overflow;
        else {
            auto b = static_cast<std::size_t>((e + range) / (2.0 * range) * static_cast<double>(bins));
            ++hist.counts[std::min(b, bins - 1)];
        }
    }
    return hist;
}

EigenvalueHistogram eigenvalue_histogram(std::size_t n_atoms, std::size_t n_configs, std::size_t bins,
                                         std::uint64_t seed, std::size_t workers) {
    const auto eigenvalues = toy_eigenvalues(n_atoms, n_configs, seed, workers);
    return eigenvalue_histogram(eigenvalues, bins);
}

DecayCurve toy_decay_curve(std::size_t n_atoms, std::size_t n_configs, std::span<const double> times,
                           std::uint64_t seed, std::size_t workers) {
    if (n_atoms < 2) throw std::invalid_argument("toy_decay_curve: n_atoms must be >= 2");
    if (n_configs == 0) throw std::invalid_argument("toy_decay_curve: n_configs must be >= 1");
    const auto n = static_cast<Eigen::Index>(n_atoms);
    const auto nt = static_cast<Eigen::Index>(times.size());

    // per_config[c][t]: survival averaged over every atom of configuration c taken as the s atom.
    std::vector<std::vector<double>> per_config(n_configs);
    parallel_for(n_configs, workers, [&](std::size_t c) {
        const auto config = sample_configuration(n_atoms, derive_seed(seed, c));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(toy_matrix(config));
        const Eigen::MatrixXd weights = eig.eigenvectors().cwiseAbs2(); // |U_{i n}|^2
        Eigen::MatrixXcd phases(nt, n);
        for (Eigen::Index t = 0; t < nt; ++t)
            for (Eigen::Index k = 0; k < n; ++k)
                phases(t, k) = std::polar(1.0, -times[static_cast<std::size_t>(t)] * eig.eigenvalues()[k]);
        const Eigen::MatrixXcd amplitude = phases * weights.transpose().cast<Complex>(); // (t, atom)
        auto& out = per_config[c];
        out.resize(times.size());
        for (Eigen::Index t = 0; t < nt; ++t) out[static_cast<std::size_t>(t)] = amplitude.row(t).cwiseAbs2().mean();
    });

    DecayCurve curve;
    curve.times.assign(times.begin(), times.end());
    curve.n_configs = n_configs;
    curve.mean.assign(times.size(), 0.0);
    curve.std_error.assign(times.size(), 0.0);
    for (std::size_t t = 0; t < times.size(); ++t) {
        double sum = 0.0, sum2 = 0.0;
        for (const auto& pc : per_config) {
            sum += pc[t];
            sum2 += pc[t] * pc[t];
        }
        const double nc = static_cast<double>(n_configs);
        const double mean = sum / nc;
        curve.mean[t] = mean;
        curve.std_error[t] = n_configs > 1 ? std::sqrt(std::max(0.0, (sum2 - nc * mean * mean) / (nc - 1.0)) / nc) : 0.0;
    }
    return curve;
}

} // namespace rydberg
