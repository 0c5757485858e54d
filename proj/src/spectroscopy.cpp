#include "rydberg/spectroscopy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

#include "rydberg/errors.hpp"
#include "rydberg/parallel.hpp"
#include "rydberg/random.hpp"

namespace rydberg {

namespace {

void validate_request(const SpectrumRequest& r) {
    r.model.validate();
    if (r.model.model_case == ModelCase::ToyExchange)
        throw std::invalid_argument("spectrum: the toy exchange model has no creation line");
    if (r.n_atoms < 2) throw std::invalid_argument("spectrum: n_atoms must be >= 2");
    if (r.n_configs == 0) throw std::invalid_argument("spectrum: n_configs must be >= 1");
    if (r.detunings.empty()) throw std::invalid_argument("spectrum: detuning grid is empty");
    if (!(r.T >= 0.0) || !std::isfinite(r.T)) throw std::invalid_argument("spectrum: T must be finite and >= 0");
    if (r.model.model_case == ModelCase::CaseII && r.n_s > r.n_atoms)
        throw std::invalid_argument("spectrum: n_s exceeds n_atoms");
    if (r.speed && !(*r.speed >= 0.0)) throw std::invalid_argument("spectrum: speed must be >= 0");
    if (r.rebuild_dt < 0.0) throw std::invalid_argument("spectrum: rebuild_dt must be >= 0");
}

// Random assignment of the s / s' roles: the first n_s atoms of the permuted configuration are s.
std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Engine engine = make_engine(seed, StreamTag::SpeciesAssignment);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(engine, i)]);
    return order;
}

double interpolate(std::span<const double> x, std::span<const double> y, double at, bool& outside) {
    if (at < x.front() || at > x.back()) {
        outside = true;
        return 0.0;
    }
    outside = false;
    auto it = std::upper_bound(x.begin(), x.end(), at);
    if (it == x.end()) return y.back();
    const auto i = static_cast<std::size_t>(it - x.begin());
    if (i == 0) return y.front();
    const double f = (at - x[i - 1]) / (x[i] - x[i - 1]);
    return y[i - 1] + f * (y[i] - y[i - 1]);
}

} // namespace

std::vector<double> make_detuning_grid(std::span<const GridSegment> segments) {
    std::vector<double> grid;
    for (const auto& s : segments) {
        if (s.points == 0) continue;
        if (s.points == 1) {
            grid.push_back(s.lo);
            continue;
        }
        for (std::size_t i = 0; i < s.points; ++i)
            grid.push_back(s.lo + (s.hi - s.lo) * static_cast<double>(i) / static_cast<double>(s.points - 1));
    }
    std::sort(grid.begin(), grid.end());
    // merge points closer than a relative 1e-9 of the spacing scale
    std::vector<double> merged;
    for (double g : grid)
        if (merged.empty() || g - merged.back() > 1e-9 * std::max(1.0, std::abs(g))) merged.push_back(g);
    return merged;
}

std::vector<double> default_detuning_grid() {
    const GridSegment segments[] = {{-80.0, 80.0, 41}, {-20.0, 20.0, 81}};
    return make_detuning_grid(segments);
}

Species yield_species(ModelCase model_case) {
    switch (model_case) {
    case ModelCase::CaseI: return Species::S;
    case ModelCase::CaseII: return Species::P;
    case ModelCase::ToyExchange: return Species::S;
    }
    return Species::S;
}

Occupation initial_occupation(const SpectrumRequest& r) {
    switch (r.model.model_case) {
    case ModelCase::CaseI: return case1_initial_state(r.n_atoms);
    case ModelCase::CaseII: return case2_initial_state(r.n_s, r.n_atoms - r.n_s);
    case ModelCase::ToyExchange: return toy_initial_state(r.n_atoms);
    }
    return {};
}

EnsembleYields ensemble_yields(const SpectrumRequest& request) {
    validate_request(request);
    std::vector<double> grid = request.detunings;
    if (!std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end())
        throw std::invalid_argument("spectrum: detuning grid must be strictly increasing");

    const SectorBasis basis = SectorBasis::enumerate(request.model, initial_occupation(request));
    const HamiltonianTemplate tmpl(request.model, basis);
    const std::vector<int> counts = basis.species_counts(yield_species(request.model.model_case));
    const StateVector psi0 = StateVector::basis_state(basis.dim(), basis.initial_index());
    const bool moving = request.speed.has_value() && *request.speed > 0.0;
    const double rebuild_dt = request.rebuild_dt > 0.0 ? request.rebuild_dt : request.T / 200.0;
    const bool random_roles = request.model.model_case == ModelCase::CaseII;

    EvolutionOptions options;
    options.tol = request.tol;

    EnsembleYields out;
    out.yields.assign(request.n_configs, std::vector<double>(grid.size(), 0.0));
    out.diagnostics.resize(request.n_configs);

    parallel_for(request.n_configs, request.workers, [&](std::size_t c) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t seed = derive_seed(request.seed, c);
        SamplingOptions sampling;
        sampling.r_min_reject = request.r_min_reject;
        if (moving) sampling.speed = *request.speed;
        AtomConfiguration config = sample_configuration(request.n_atoms, seed, sampling);
        if (random_roles) config = config.permuted(random_permutation(request.n_atoms, seed));

        ConfigDiagnostics diag;
        diag.index = c;
        diag.seed = seed;
        diag.min_pair_separation = config.min_pair_separation();

        std::optional<SparseHamiltonian> frozen;
        if (!moving) frozen.emplace(tmpl.assemble(config, 0.0));

        for (std::size_t d = 0; d < grid.size(); ++d) {
            try {
                EvolutionReport rep =
                    moving ? evolve_time_dependent(tmpl, config, psi0, request.T, grid[d], rebuild_dt, options)
                           : evolve(frozen->with_detuning(grid[d]), psi0, request.T, options);
                if (!rep.ok()) {
                    std::ostringstream msg;
                    msg << "norm drift " << rep.norm_drift << " exceeds " << EvolutionReport::kNormTolerance;
                    throw std::runtime_error(msg.str());
                }
                out.yields[c][d] = species_fraction(rep.final_state, counts, request.n_atoms);
                diag.max_norm_drift = std::max(diag.max_norm_drift, rep.norm_drift);
                diag.steps += rep.steps_taken;
                diag.matvecs += rep.matvecs;
            } catch (const StiffnessError& e) {
                std::ostringstream msg;
                msg << "configuration " << c << " at detuning " << grid[d] << ": " << e.what()
                    << " (closest pair separation " << diag.min_pair_separation << ")";
                throw EnsembleError(msg.str(), c, grid[d]);
            } catch (const EnsembleError&) {
                throw;
            } catch (const std::exception& e) {
                std::ostringstream msg;
                msg << "configuration " << c << " at detuning " << grid[d] << ": " << e.what();
                throw EnsembleError(msg.str(), c, grid[d]);
            }
        }
        diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.diagnostics[c] = diag;
    });
    return out;
}

SpectrumCurve reduce_spectrum(const SpectrumRequest& request, const EnsembleYields& ensemble) {
    SpectrumCurve curve;
    curve.request = request;
    curve.detunings = request.detunings;
    curve.n_configs = ensemble.yields.size();
    curve.diagnostics = ensemble.diagnostics;
    const std::size_t nd = curve.detunings.size();
    curve.yields.assign(nd, 0.0);
    curve.std_errors.assign(nd, 0.0);
    const double nc = static_cast<double>(curve.n_configs);
    for (std::size_t d = 0; d < nd; ++d) {
        double sum = 0.0;
        for (const auto& row : ensemble.yields) sum += row[d];
        const double mean = sum / nc;
        double ss = 0.0;
        for (const auto& row : ensemble.yields) ss += (row[d] - mean) * (row[d] - mean);
        curve.yields[d] = std::clamp(mean, 0.0, 1.0);
        curve.std_errors[d] = curve.n_configs > 1 ? std::sqrt(ss / (nc - 1.0) / nc) : 0.0;
    }
    return curve;
}

SpectrumCurve spectrum(const SpectrumRequest& request) {
    return reduce_spectrum(request, ensemble_yields(request));
}

void GaussianProfileSpec::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("GaussianProfileSpec: sigma must be > 0");
    if (!(r_max_over_sigma >= 4.0)) throw std::invalid_argument("GaussianProfileSpec: r_max_over_sigma must be >= 4");
    if (quadrature_points < 16) throw std::invalid_argument("GaussianProfileSpec: need at least 16 quadrature points");
}

SpectrumCurve gaussian_convolve(const SpectrumCurve& curve, const GaussianProfileSpec& profile) {
    profile.validate();
    if (curve.detunings.size() < 2) throw CurveSupportError("gaussian_convolve: curve needs at least two points");

    // Composite 8-point Gauss-Legendre over r in [0, r_max].
    using Rule = boost::math::quadrature::gauss<double, 8>;
    const std::size_t panels = std::max<std::size_t>(1, profile.quadrature_points / 8);
    const double r_max = profile.r_max_over_sigma * profile.sigma;
    const double width = r_max / static_cast<double>(panels);
    const double inv_sigma2 = 1.0 / (profile.sigma * profile.sigma);
    const double inv_peak = 1.0 / (2.0 * std::sqrt(2.0));

    struct Node {
        double stretch; // exp(r^2/sigma^2) / (2 sqrt 2)
        double weight;  // exp(-r^2/sigma^2) r^2 dr
    };
    std::vector<Node> nodes;
    nodes.reserve(panels * 8);
    double norm = 0.0;
    const auto& abscissa = Rule::abscissa();
    const auto& weights = Rule::weights();
    for (std::size_t p = 0; p < panels; ++p) {
        const double mid = (static_cast<double>(p) + 0.5) * width;
        for (std::size_t q = 0; q < abscissa.size(); ++q) {
            for (int sgn : {-1, 1}) {
                if (abscissa[q] == 0.0 && sgn < 0) continue;
                const double r = mid + sgn * 0.5 * width * abscissa[q];
                const double g = r * r * inv_sigma2;
                const double w = weights[q] * 0.5 * width * std::exp(-g) * r * r;
                nodes.push_back({std::exp(g) * inv_peak, w});
                norm += w;
            }
        }
    }

    SpectrumCurve out = curve;
    double worst_lost = 0.0;
    for (std::size_t d = 0; d < curve.detunings.size(); ++d) {
        double acc = 0.0, err = 0.0, lost = 0.0;
        for (const auto& node : nodes) {
            bool outside = false;
            const double at = curve.detunings[d] * node.stretch;
            acc += node.weight * interpolate(curve.detunings, curve.yields, at, outside);
            if (outside) {
                lost += node.weight;
            } else if (!curve.std_errors.empty()) {
                err += node.weight * interpolate(curve.detunings, curve.std_errors, at, outside);
            }
        }
        out.yields[d] = acc / norm;
        if (!out.std_errors.empty()) out.std_errors[d] = err / norm;
        worst_lost = std::max(worst_lost, lost / norm);
    }
    if (worst_lost > 0.0) {
        std::ostringstream msg;
        msg << "gaussian_convolve: scaled detunings beyond the curve support were taken as 0; "
               "largest kernel weight affected = "
            << worst_lost;
        out.notes.push_back(msg.str());
    }
    return out;
}

LineWidthResult extract_fwhm(const SpectrumCurve& curve) {
    return extract_fwhm(curve.detunings, curve.yields, curve.std_errors);
}

LineWidthResult extract_fwhm(std::span<const double> x, std::span<const double> y, std::span<const double> se) {
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n) throw CurveSupportError("extract_fwhm: need at least three matched points");
    const bool have_errors = se.size() == n;

    const std::size_t edge = std::max<std::size_t>(1, n / 10);
    double baseline = 0.0, baseline_var = 0.0;
    for (std::size_t i = 0; i < edge; ++i) {
        baseline += y[i] + y[n - 1 - i];
        if (have_errors) baseline_var += se[i] * se[i] + se[n - 1 - i] * se[n - 1 - i];
    }
    baseline /= static_cast<double>(2 * edge);
    baseline_var /= static_cast<double>(4 * edge * edge);

    const auto peak_it = std::max_element(y.begin(), y.end());
    const auto ip = static_cast<std::size_t>(peak_it - y.begin());
    const double peak = *peak_it;
    if (ip < edge || ip >= n - edge || !(peak > baseline))
        throw CurveSupportError("extract_fwhm: no interior maximum above the edge baseline");

    LineWidthResult res;
    res.peak = peak;
    res.peak_detuning = x[ip];
    res.baseline = baseline;
    res.half_max = baseline + 0.5 * (peak - baseline);
    const double h = res.half_max;
    // var(h) = (var(peak) + var(baseline)) / 4
    const double h_var = have_errors ? 0.25 * (se[ip] * se[ip] + baseline_var) : 0.0;

    // Crossing between i and i+1; returns position and its variance.
    auto crossing = [&](std::size_t i) {
        const double dx = x[i + 1] - x[i];
        const double dy = y[i + 1] - y[i];
        const double f = (h - y[i]) / dy;
        const double pos = x[i] + f * dx;
        double var = 0.0;
        if (have_errors) {
            // d pos / d y_i = dx (f - 1) / dy, d pos / d y_{i+1} = -dx f / dy, d pos / d h = dx / dy
            const double a = dx * (f - 1.0) / dy;
            const double b = -dx * f / dy;
            const double c = dx / dy;
            var = a * a * se[i] * se[i] + b * b * se[i + 1] * se[i + 1] + c * c * h_var;
        }
        return std::pair{pos, var};
    };

    // Outermost crossing on the left: first upward crossing scanning from the left edge.
    std::optional<std::pair<double, double>> left, right;
    for (std::size_t i = 0; i < ip; ++i) {
        if (y[i] < h && y[i + 1] >= h) {
            left = crossing(i);
            break;
        }
    }
    for (std::size_t i = n - 1; i > ip; --i) {
        if (y[i] < h && y[i - 1] >= h) {
            right = crossing(i - 1);
            break;
        }
    }
    if (!left || !right)
        throw CurveSupportError("extract_fwhm: curve does not fall below half maximum on both sides; widen the grid");

    res.left_cross = left->first;
    res.right_cross = right->first;
    res.fwhm = res.right_cross - res.left_cross;
    res.uncertainty = std::sqrt(left->second + right->second);
    return res;
}

std::optional<std::pair<std::size_t, std::size_t>> split_for_ratio(double nu, std::size_t total) {
    if (!(nu >= -1.0 && nu <= 1.0) || total == 0) return std::nullopt;
    const double n1 = 0.5 * static_cast<double>(total) * (1.0 + nu);
    const double rounded = std::round(n1);
    if (std::abs(n1 - rounded) > 1e-9 * static_cast<double>(total)) return std::nullopt;
    const auto a = static_cast<std::size_t>(rounded);
    return std::pair{a, total - a};
}

std::vector<RatioPoint> width_vs_ratio(const RatioScanSpec& scan, const SpectrumRequest& base) {
    if (base.model.model_case != ModelCase::CaseII)
        throw std::invalid_argument("width_vs_ratio: requires the Case II model");
    std::vector<RatioPoint> out;
    for (double nu : scan.nu_values) {
        const auto split = split_for_ratio(nu, scan.n_atoms);
        if (!split) {
            std::ostringstream msg;
            msg << "width_vs_ratio: nu = " << nu << " has no integer split of " << scan.n_atoms << " atoms";
            throw std::invalid_argument(msg.str());
        }
        SpectrumRequest req = base;
        req.n_atoms = scan.n_atoms;
        req.n_s = split->first;
        RatioPoint point;
        point.nu = nu;
        point.n_s = split->first;
        point.n_s_prime = split->second;
        point.curve = spectrum(req);
        point.width = extract_fwhm(point.curve);
        out.push_back(std::move(point));
    }
    return out;
}

FiniteSizeScan fit_inverse_size(std::vector<FiniteSizePoint> points) {
    if (points.size() < 2) throw std::invalid_argument("fit_inverse_size: need at least two sizes");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(points.size());
    for (const auto& p : points) {
        const double xi = 1.0 / static_cast<double>(p.n_atoms);
        sx += xi;
        sy += p.width.fwhm;
        sxx += xi * xi;
        sxy += xi * p.width.fwhm;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_inverse_size: sizes must differ");
    FiniteSizeScan scan;
    scan.slope = (n * sxy - sx * sy) / denom;
    scan.extrapolated_width = (sy - scan.slope * sx) / n;
    double rss = 0.0;
    for (const auto& p : points) {
        const double r = p.width.fwhm - (scan.extrapolated_width + scan.slope / static_cast<double>(p.n_atoms));
        rss += r * r;
    }
    scan.fit_residual = std::sqrt(rss / n);
    scan.points = std::move(points);
    return scan;
}

FiniteSizeScan finite_size_scan(const SpectrumRequest& base, std::span<const std::size_t> sizes) {
    if (sizes.empty()) throw std::invalid_argument("finite_size_scan: no sizes");
    if (!std::is_sorted(sizes.begin(), sizes.end())) throw std::invalid_argument("finite_size_scan: sizes must ascend");
    std::vector<FiniteSizePoint> points;
    for (std::size_t n : sizes) {
        SpectrumRequest req = base;
        req.n_atoms = n;
        if (req.model.model_case == ModelCase::CaseII) req.n_s = n / 2;
        points.push_back({n, extract_fwhm(spectrum(req))});
    }
    if (points.size() < 2) {
        FiniteSizeScan scan;
        scan.points = std::move(points);
        scan.extrapolated_width = scan.points.front().width.fwhm;
        return scan;
    }
    return fit_inverse_size(std::move(points));
}

} // namespace rydberg
