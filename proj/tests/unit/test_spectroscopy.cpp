#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rydberg/errors.hpp"
#include "rydberg/random.hpp"
#include "rydberg/spectroscopy.hpp"

using namespace rydberg;

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return x;
}

SpectrumCurve curve_from(std::vector<double> x, auto f) {
    SpectrumCurve c;
    c.detunings = std::move(x);
    for (double d : c.detunings) c.yields.push_back(f(d));
    c.std_errors.assign(c.detunings.size(), 0.0);
    return c;
}

SpectrumRequest small_case1(std::size_t n_atoms, std::size_t configs) {
    SpectrumRequest r;
    r.model.model_case = ModelCase::CaseI;
    r.model.mu_sp = 1.02;
    r.model.mu_sp_prime = 0.98;
    r.n_atoms = n_atoms;
    r.n_configs = configs;
    r.seed = 17;
    r.detunings = linspace(-40.0, 40.0, 17);
    return r;
}

} // namespace

TEST_CASE("detuning grids merge duplicate points") {
    const auto grid = default_detuning_grid();
    CHECK(grid.size() == 111u);
    CHECK(grid.front() == -80.0);
    CHECK(grid.back() == 80.0);
    CHECK(std::is_sorted(grid.begin(), grid.end()));
    CHECK(std::adjacent_find(grid.begin(), grid.end()) == grid.end());
    CHECK(std::find(grid.begin(), grid.end(), 0.0) != grid.end());
    const GridSegment segs[] = {{-2, 2, 5}, {-1, 1, 3}};
    CHECK(make_detuning_grid(segs) == std::vector<double>{-2, -1, 0, 1, 2});
}

TEST_CASE("FWHM of a Lorentzian") {
    const double gamma = 5.0;
    const auto c = curve_from(linspace(-2000, 2000, 40001), [gamma](double d) { return 1.0 / (1.0 + d * d / (gamma * gamma)); });
    const auto w = extract_fwhm(c);
    CHECK(w.fwhm == doctest::Approx(2.0 * gamma).epsilon(1e-3));
    CHECK(w.peak_detuning == 0.0);
    CHECK(w.uncertainty == 0.0);
}

TEST_CASE("FWHM of a triangle") {
    const double a = 12.0;
    const auto c = curve_from(linspace(-50, 50, 101), [a](double d) { return std::max(0.0, 1.0 - std::abs(d) / a); });
    const auto w = extract_fwhm(c);
    CHECK(w.fwhm == doctest::Approx(a).epsilon(1e-12));
    CHECK(w.baseline == 0.0);
    CHECK(w.half_max == doctest::Approx(0.5));
}

TEST_CASE("FWHM uses the baseline and outermost crossings") {
    // Peak of 1 on a 0.2 floor, with a dip below half maximum inside the line.
    auto f = [](double d) {
        const double bump = std::max(0.0, 1.0 - std::abs(d) / 20.0);
        const double dip = std::abs(d - 6.0) < 1.0 ? 0.5 : 0.0;
        return 0.2 + 0.8 * std::max(0.0, bump - dip);
    };
    const auto w = extract_fwhm(curve_from(linspace(-60, 60, 241), f));
    CHECK(w.baseline == doctest::Approx(0.2));
    CHECK(w.half_max == doctest::Approx(0.6));
    CHECK(w.left_cross == doctest::Approx(-10.0));
    CHECK(w.right_cross == doctest::Approx(10.0));
}

TEST_CASE("FWHM uncertainty scales with the point errors") {
    auto c = curve_from(linspace(-50, 50, 101), [](double d) { return std::exp(-d * d / 200.0); });
    c.std_errors.assign(c.detunings.size(), 0.01);
    const double u1 = extract_fwhm(c).uncertainty;
    c.std_errors.assign(c.detunings.size(), 0.02);
    const double u2 = extract_fwhm(c).uncertainty;
    CHECK(u1 > 0.0);
    CHECK(u2 == doctest::Approx(2.0 * u1));
}

TEST_CASE("FWHM reports unsupported curves") {
    const auto edge_peak = curve_from(linspace(0, 10, 11), [](double d) { return 10.0 - d; });
    CHECK_THROWS_AS(extract_fwhm(edge_peak), CurveSupportError);
    // Right wing never falls back below half maximum.
    const auto wide = curve_from(linspace(-10, 10, 41), [](double d) { return d < 0.0 ? std::exp(-d * d / 4.0) : 1.0 - 0.001 * d; });
    CHECK_THROWS_AS(extract_fwhm(wide), CurveSupportError);
}

TEST_CASE("Gaussian convolution keeps constants and is sigma independent") {
    const auto flat = curve_from(std::vector<double>{-1e13, -5.0, 0.0, 5.0, 1e13}, [](double) { return 0.3; });
    const auto out = gaussian_convolve(flat, {});
    for (std::size_t i = 1; i < 4; ++i) CHECK(out.yields[i] == doctest::Approx(0.3).epsilon(1e-10));

    auto c = curve_from(linspace(-80, 80, 81), [](double d) { return 0.3 / (1.0 + d * d / 100.0); });
    GaussianProfileSpec a, b;
    a.sigma = 250.0;
    b.sigma = 500.0;
    const auto ca = gaussian_convolve(c, a), cb = gaussian_convolve(c, b);
    for (std::size_t i = 0; i < c.yields.size(); ++i) CHECK(std::abs(ca.yields[i] - cb.yields[i]) <= 1e-12);
    CHECK_FALSE(ca.notes.empty()); // far wings are cut by the grid
}

TEST_CASE("Gaussian convolution is linear, bounded and narrows the line") {
    const auto x = linspace(-80, 80, 161);
    const auto f = curve_from(x, [](double d) { return 0.3 / (1.0 + d * d / 100.0); });
    const auto g = curve_from(x, [](double d) { return 0.1 * std::exp(-d * d / 400.0); });
    auto h = f;
    for (std::size_t i = 0; i < x.size(); ++i) h.yields[i] = 2.0 * f.yields[i] + 3.0 * g.yields[i];
    const auto cf = gaussian_convolve(f, {}), cg = gaussian_convolve(g, {}), ch = gaussian_convolve(h, {});
    const double fmax = *std::max_element(f.yields.begin(), f.yields.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(ch.yields[i] == doctest::Approx(2.0 * cf.yields[i] + 3.0 * cg.yields[i]).epsilon(1e-12));
        CHECK(cf.yields[i] >= 0.0);
        CHECK(cf.yields[i] <= fmax + 1e-15);
    }
    CHECK(extract_fwhm(cf).fwhm < extract_fwhm(f).fwhm);
    GaussianProfileSpec bad;
    bad.r_max_over_sigma = 2.0;
    CHECK_THROWS_AS(gaussian_convolve(f, bad), std::invalid_argument);
}

TEST_CASE("two-atom spectrum equals the averaged Rabi formula") {
    auto r = small_case1(2, 6);
    r.detunings = {-10.0, 0.0, 3.0};
    r.tol = 1e-11;
    const auto curve = spectrum(r);
    for (std::size_t d = 0; d < r.detunings.size(); ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < r.n_configs; ++c) {
            const auto config = sample_configuration(2, derive_seed(r.seed, c));
            const double v = dipolar_coupling(min_image_displacement(config.position(0), config.position(1), config.box_edge()),
                                              1.0);
            const double delta = r.detunings[d];
            const double omega2 = 2.0 * v * v + 0.25 * delta * delta;
            acc += 0.5 * 2.0 * v * v / omega2 * std::pow(std::sin(std::sqrt(omega2) * r.T), 2);
        }
        CHECK(curve.yields[d] == doctest::Approx(acc / static_cast<double>(r.n_configs)).epsilon(1e-8));
    }
}

TEST_CASE("spectra are deterministic and independent of scheduling") {
    auto r = small_case1(5, 6);
    const auto a = spectrum(r);
    const auto b = spectrum(r);
    r.workers = 3;
    const auto c = spectrum(r);
    CHECK(a.yields == b.yields);
    CHECK(a.yields == c.yields);
    CHECK(a.std_errors == c.std_errors);

    auto ensemble = ensemble_yields(r);
    std::reverse(ensemble.yields.begin(), ensemble.yields.end());
    const auto reshuffled = reduce_spectrum(r, ensemble);
    for (std::size_t d = 0; d < a.yields.size(); ++d) CHECK(reshuffled.yields[d] == doctest::Approx(a.yields[d]).epsilon(1e-12));
}

TEST_CASE("the exchange toggle changes the resonant yield") {
    auto r = small_case1(6, 8);
    r.detunings = {-1.0, 0.0, 1.0};
    const auto with = spectrum(r);
    r.model.include_exchange = false;
    const auto without = spectrum(r);
    CHECK(std::abs(with.yields[1] - without.yields[1]) > 1e-3);
}

TEST_CASE("spectrum requests are validated") {
    auto r = small_case1(4, 2);
    r.model.model_case = ModelCase::ToyExchange;
    CHECK_THROWS_AS(spectrum(r), std::invalid_argument);
    r = small_case1(4, 2);
    r.detunings = {1.0, 0.0};
    CHECK_THROWS_AS(spectrum(r), std::invalid_argument);
    r = small_case1(4, 0);
    CHECK_THROWS_AS(spectrum(r), std::invalid_argument);
}

TEST_CASE("Case II role swap with swapped dipole moments leaves the p yield unchanged") {
    ModelSpec a;
    a.model_case = ModelCase::CaseII;
    a.mu_sp = 2.0;
    a.mu_s_prime_p_prime = 0.5;
    ModelSpec b = a;
    std::swap(b.mu_sp, b.mu_s_prime_p_prime);
    const auto config = sample_configuration(6, 23);
    const Occupation start_a = case2_initial_state(4, 2);
    Occupation start_b = start_a;
    for (auto& s : start_b) s = s == Species::S ? Species::SPrime : Species::S;
    const auto basis_a = SectorBasis::enumerate(a, start_a);
    const auto basis_b = SectorBasis::enumerate(b, start_b);
    for (double delta : {-15.0, 0.0, 8.0}) {
        const auto ra = evolve(HamiltonianTemplate(a, basis_a).assemble(config, delta),
                               StateVector::basis_state(basis_a.dim(), basis_a.initial_index()), 0.36, 1e-11);
        const auto rb = evolve(HamiltonianTemplate(b, basis_b).assemble(config, delta),
                               StateVector::basis_state(basis_b.dim(), basis_b.initial_index()), 0.36, 1e-11);
        CHECK(species_fraction(ra.final_state, basis_a, Species::P, a) ==
              doctest::Approx(species_fraction(rb.final_state, basis_b, Species::PPrime, b)).epsilon(1e-9));
    }
}

TEST_CASE("population ratios map to integer splits") {
    CHECK(split_for_ratio(0.0, 20) == std::pair<std::size_t, std::size_t>{10, 10});
    CHECK(split_for_ratio(0.5, 20) == std::pair<std::size_t, std::size_t>{15, 5});
    CHECK(split_for_ratio(-1.0, 20) == std::pair<std::size_t, std::size_t>{0, 20});
    CHECK_FALSE(split_for_ratio(0.0, 21).has_value());
    CHECK(split_for_ratio(0.3, 20) == std::pair<std::size_t, std::size_t>{13, 7});
    CHECK_FALSE(split_for_ratio(0.33, 20).has_value());
    CHECK_FALSE(split_for_ratio(1.5, 20).has_value());

    SpectrumRequest base = small_case1(4, 1);
    RatioScanSpec scan{{0.0}, 4};
    CHECK_THROWS_AS(width_vs_ratio(scan, base), std::invalid_argument);
    base.model.model_case = ModelCase::CaseII;
    scan.nu_values = {0.3};
    CHECK_THROWS_AS(width_vs_ratio(scan, base), std::invalid_argument);
}

TEST_CASE("inverse-size fit recovers exact data") {
    std::vector<FiniteSizePoint> pts;
    for (std::size_t n : {6u, 8u, 10u}) {
        FiniteSizePoint p;
        p.n_atoms = n;
        p.width.fwhm = 30.0 + 40.0 / static_cast<double>(n);
        pts.push_back(p);
    }
    const auto fit = fit_inverse_size(pts);
    CHECK(fit.extrapolated_width == doctest::Approx(30.0));
    CHECK(fit.slope == doctest::Approx(40.0));
    CHECK(fit.fit_residual < 1e-10);
    CHECK_THROWS_AS(fit_inverse_size({pts.front()}), std::invalid_argument);
}

TEST_CASE("finite-size scans are deterministic") {
    SpectrumRequest r = small_case1(4, 4);
    r.detunings = linspace(-80, 80, 33);
    const std::size_t sizes[] = {3, 4};
    const auto a = finite_size_scan(r, sizes);
    const auto b = finite_size_scan(r, sizes);
    REQUIRE(a.points.size() == 2u);
    CHECK(a.points[0].width.fwhm == b.points[0].width.fwhm);
    CHECK(a.extrapolated_width == b.extrapolated_width);
    const std::size_t unsorted[] = {4, 3};
    CHECK_THROWS_AS(finite_size_scan(r, unsorted), std::invalid_argument);
}
