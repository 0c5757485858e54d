#include "rydberg/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rydberg/dynamics.hpp"
#include "rydberg/errors.hpp"
#include "rydberg/pair_statistics.hpp"

namespace rydberg::cli {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct SubcommandName {
    Subcommand value;
    std::string_view name;
};

constexpr SubcommandName kSubcommands[] = {
    {Subcommand::ToyDecay, "toy-decay"},     {Subcommand::ToyBand, "toy-band"},
    {Subcommand::Spectrum, "spectrum"},      {Subcommand::Convolve, "convolve"},
    {Subcommand::PairDist, "pairdist"},      {Subcommand::WidthVsNu, "width-vs-nu"},
    {Subcommand::FiniteSize, "finite-size"}, {Subcommand::Motion, "motion"},
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool is_toy(Subcommand s) { return s == Subcommand::ToyDecay || s == Subcommand::ToyBand; }

// Reads typed values out of the key/value map, recording every problem.
class Reader {
public:
    Reader(const KeyValues& kv, std::vector<std::string>& errors) : kv_(kv), errors_(errors) {}

    const std::string* raw(const std::string& key) const {
        const auto it = kv_.find(key);
        return it == kv_.end() ? nullptr : &it->second;
    }

    void number(const std::string& key, double& out) {
        if (const auto* s = raw(key)) {
            if (auto v = parse_double(*s)) out = *v;
            else fail(key, "not a number: '" + *s + "'");
        }
    }

    void count(const std::string& key, std::size_t& out) {
        if (const auto* s = raw(key)) {
            if (auto v = parse_unsigned(*s)) out = static_cast<std::size_t>(*v);
            else fail(key, "not a non-negative integer: '" + *s + "'");
        }
    }

    void seed(const std::string& key, std::optional<std::uint64_t>& out) {
        if (const auto* s = raw(key)) {
            if (auto v = parse_unsigned(*s)) out = *v;
            else fail(key, "not a non-negative integer: '" + *s + "'");
        }
    }

    void flag(const std::string& key, bool& out) {
        if (const auto* s = raw(key)) {
            if (*s == "true" || *s == "1" || *s == "yes" || *s == "on") out = true;
            else if (*s == "false" || *s == "0" || *s == "no" || *s == "off") out = false;
            else fail(key, "not a boolean: '" + *s + "'");
        }
    }

    void numbers(const std::string& key, std::vector<double>& out) {
        if (const auto* s = raw(key)) {
            std::vector<double> values;
            for (const auto& item : split(*s, ',')) {
                if (auto v = parse_double(item)) values.push_back(*v);
                else return fail(key, "not a number list: '" + *s + "'");
            }
            out = std::move(values);
        }
    }

    void counts(const std::string& key, std::vector<std::size_t>& out) {
        if (const auto* s = raw(key)) {
            std::vector<std::size_t> values;
            for (const auto& item : split(*s, ',')) {
                if (auto v = parse_unsigned(item)) values.push_back(static_cast<std::size_t>(*v));
                else return fail(key, "not an integer list: '" + *s + "'");
            }
            out = std::move(values);
        }
    }

    void grid(const std::string& key, std::vector<GridSegment>& out) {
        const auto* s = raw(key);
        if (!s || *s == "default") return;
        std::vector<GridSegment> segments;
        for (const auto& item : split(*s, ',')) {
            const auto parts = split(item, ':');
            std::optional<double> lo, hi;
            std::optional<std::uint64_t> points;
            if (parts.size() == 3) {
                lo = parse_double(parts[0]);
                hi = parse_double(parts[1]);
                points = parse_unsigned(parts[2]);
            }
            if (!lo || !hi || !points) return fail(key, "expected 'default' or lo:hi:points[,lo:hi:points...], got '" + *s + "'");
            segments.push_back({*lo, *hi, static_cast<std::size_t>(*points)});
        }
        out = std::move(segments);
    }

    void fail(const std::string& key, const std::string& message) { errors_.push_back(key + ": " + message); }

private:
    static std::optional<double> parse_double(const std::string& s) {
        if (s.empty()) return std::nullopt;
        std::size_t used = 0;
        try {
            const double v = std::stod(s, &used);
            if (used != s.size()) return std::nullopt;
            return v;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    static std::optional<std::uint64_t> parse_unsigned(const std::string& s) {
        std::uint64_t v = 0;
        const auto* end = s.data() + s.size();
        const auto [ptr, ec] = std::from_chars(s.data(), end, v);
        if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
        return v;
    }

    const KeyValues& kv_;
    std::vector<std::string>& errors_;
};

// ---------------------------------------------------------------------------
// Artifact writing

class Artifacts {
public:
    Artifacts(const RunConfig& config) : config_(config) {}

    void write(const std::string& name, const std::string& content) {
        const fs::path path = config_.out / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
        os << content;
        if (!os) throw std::ios_base::failure("failed writing " + path.string());
        written_.emplace_back(name, content.size());
    }

    const std::vector<std::pair<std::string, std::size_t>>& written() const { return written_; }

private:
    const RunConfig& config_;
    std::vector<std::pair<std::string, std::size_t>> written_;
};

std::string units_note(const RunConfig& c) {
    if (c.subcommand == Subcommand::PairDist) return "coupling magnitudes |V| in units of c_d n";
    switch (c.model.model_case) {
    case ModelCase::ToyExchange: return "energies in Vbar = mu_sp^2 n, times in 1/Vbar";
    case ModelCase::CaseI: return "detunings and widths in Vbar = mu_sp mu_sp' n, times in 1/Vbar";
    case ModelCase::CaseII: return "detunings and widths in Vbar = mu_sp mu_s'p' n, times in 1/Vbar";
    }
    return {};
}

class Csv {
public:
    Csv(const RunConfig& config, const std::string& title, const std::vector<std::string>& columns) {
        os_ << "# rydberg_linewidth " << kVersion << "\n";
        os_ << "# " << title << "\n";
        os_ << "# units: " << units_note(config) << "\n";
        for (const auto& [k, v] : config.to_key_values()) os_ << "# " << k << " = " << v << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
        os_ << "\n";
    }

    void row(std::initializer_list<double> values) {
        bool first = true;
        for (double v : values) {
            os_ << (first ? "" : ",") << format_double(v);
            first = false;
        }
        os_ << "\n";
    }

    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
};

Json width_json(const LineWidthResult& w) {
    const double half_left = w.peak_detuning - w.left_cross;
    const double half_right = w.right_cross - w.peak_detuning;
    return Json{{"fwhm", w.fwhm},
                {"uncertainty", w.uncertainty},
                {"half_max", w.half_max},
                {"baseline", w.baseline},
                {"peak", w.peak},
                {"peak_detuning", w.peak_detuning},
                {"left_cross", w.left_cross},
                {"right_cross", w.right_cross},
                {"asymmetry", w.fwhm > 0.0 ? std::abs(half_left - half_right) / w.fwhm : 0.0}};
}

Json try_width(const SpectrumCurve& curve, std::vector<std::string>& notes) {
    try {
        return width_json(extract_fwhm(curve));
    } catch (const CurveSupportError& e) {
        notes.push_back(e.what());
        return nullptr;
    }
}

std::optional<double> interpolate_yield(const SpectrumCurve& c, double at) {
    const auto& x = c.detunings;
    if (x.empty() || at < x.front() || at > x.back()) return std::nullopt;
    const auto it = std::lower_bound(x.begin(), x.end(), at);
    const auto i = static_cast<std::size_t>(it - x.begin());
    if (x[i] == at || i == 0) return c.yields[i];
    const double f = (at - x[i - 1]) / (x[i] - x[i - 1]);
    return c.yields[i - 1] + f * (c.yields[i] - c.yields[i - 1]);
}

std::string spectrum_csv(const RunConfig& config, const std::string& title, const SpectrumCurve& c) {
    Csv csv(config, title, {"detuning", "yield", "std_error"});
    for (std::size_t i = 0; i < c.detunings.size(); ++i) csv.row({c.detunings[i], c.yields[i], c.std_errors[i]});
    return csv.str();
}

void append_diagnostics(std::string& out, const std::string& label, const SpectrumCurve& c) {
    for (const auto& d : c.diagnostics) {
        Json line{{"run", label},
                  {"config", d.index},
                  {"seed", d.seed},
                  {"min_pair_separation", d.min_pair_separation},
                  {"max_norm_drift", d.max_norm_drift},
                  {"steps", d.steps},
                  {"matvecs", d.matvecs}};
        out += line.dump() + "\n";
    }
}

Json summary_head(const RunConfig& config) {
    Json j;
    j["subcommand"] = std::string(to_string(config.subcommand));
    if (config.subcommand != Subcommand::PairDist) j["model"] = std::string(rydberg::to_string(config.model.model_case));
    j["seed"] = *config.seed;
    j["n_configs"] = config.n_configs;
    j["n_atoms"] = config.n_atoms;
    if (config.model.model_case == ModelCase::CaseII) j["n_s"] = config.n_s;
    if (!is_toy(config.subcommand) && config.subcommand != Subcommand::PairDist) j["T"] = config.T;
    return j;
}

// ---------------------------------------------------------------------------
// Plot scripts: standalone, reading only CSV artifacts.

std::string plot_script(const std::string& body) {
    return "#!/usr/bin/env python3\n"
           "import numpy as np\n"
           "import matplotlib\n"
           "matplotlib.use('Agg')\n"
           "import matplotlib.pyplot as plt\n\n"
           "def load(name):\n"
           "    with open(name, encoding='utf-8') as f:\n"
           "        rows = [l for l in f if not l.startswith('#')]\n"
           "    return np.array([[float(v) for v in r.split(',')] for r in rows[1:]])\n\n" +
           body;
}

std::string spectrum_plot(const std::vector<std::pair<std::string, std::string>>& files, const std::string& png) {
    std::string body = "fig, ax = plt.subplots()\n";
    for (const auto& [file, label] : files)
        body += "d = load('" + file + "')\nax.errorbar(d[:, 0], d[:, 1], yerr=d[:, 2], fmt='.-', label='" + label + "')\n";
    body += "ax.set_xlabel('detuning / Vbar')\nax.set_ylabel('yield')\nax.legend()\nfig.savefig('" + png + "', dpi=150)\n";
    return plot_script(body);
}

// ---------------------------------------------------------------------------
// Subcommands. Each fills the artifact set and the summary.

struct Outputs {
    Json summary;
    std::string diagnostics;
};

void run_spectrum(const RunConfig& config, Artifacts& art, Outputs& out) {
    const SpectrumCurve curve = spectrum(config.spectrum_request());
    art.write("spectrum.csv", spectrum_csv(config, "homogeneous spectrum", curve));
    std::vector<std::string> notes = curve.notes;
    out.summary["width"] = try_width(curve, notes);
    if (auto y = interpolate_yield(curve, 40.0)) out.summary["yield_at_40"] = *y;
    if (auto y = interpolate_yield(curve, -40.0)) out.summary["yield_at_minus_40"] = *y;
    out.summary["notes"] = notes;
    append_diagnostics(out.diagnostics, "spectrum", curve);
    if (config.plot) art.write("plot.py", spectrum_plot({{"spectrum.csv", "homogeneous"}}, "spectrum.png"));
}

void run_convolve(const RunConfig& config, Artifacts& art, Outputs& out) {
    const SpectrumCurve curve = spectrum(config.spectrum_request());
    const SpectrumCurve conv = gaussian_convolve(curve, config.profile);
    art.write("spectrum.csv", spectrum_csv(config, "homogeneous spectrum", curve));
    art.write("convolved.csv", spectrum_csv(config, "Gaussian-profile averaged spectrum", conv));
    std::vector<std::string> notes = conv.notes;
    out.summary["sigma"] = config.profile.sigma;
    out.summary["homogeneous_width"] = try_width(curve, notes);
    out.summary["convolved_width"] = try_width(conv, notes);
    out.summary["notes"] = notes;
    append_diagnostics(out.diagnostics, "spectrum", curve);
    if (config.plot)
        art.write("plot.py", spectrum_plot({{"spectrum.csv", "homogeneous"}, {"convolved.csv", "convolved"}}, "convolved.png"));
}

void run_motion(const RunConfig& config, Artifacts& art, Outputs& out) {
    SpectrumRequest frozen_req = config.spectrum_request();
    frozen_req.speed.reset();
    SpectrumRequest moving_req = config.spectrum_request();
    moving_req.speed = config.speed;
    const SpectrumCurve frozen = spectrum(frozen_req);
    const SpectrumCurve moving = spectrum(moving_req);
    Csv csv(config, "frozen and moving-atom spectra", {"detuning", "yield_frozen", "std_error_frozen", "yield_moving", "std_error_moving"});
    for (std::size_t i = 0; i < frozen.detunings.size(); ++i)
        csv.row({frozen.detunings[i], frozen.yields[i], frozen.std_errors[i], moving.yields[i], moving.std_errors[i]});
    art.write("motion.csv", csv.str());
    std::vector<std::string> notes;
    const Json wf = try_width(frozen, notes);
    const Json wm = try_width(moving, notes);
    out.summary["speed"] = config.speed;
    out.summary["rebuild_dt"] = config.rebuild_dt > 0.0 ? config.rebuild_dt : config.T / 200.0;
    out.summary["frozen_width"] = wf;
    out.summary["moving_width"] = wm;
    if (!wf.is_null() && !wm.is_null()) {
        const double f = wf["fwhm"], m = wm["fwhm"];
        out.summary["relative_broadening"] = m / f - 1.0;
    }
    out.summary["notes"] = notes;
    append_diagnostics(out.diagnostics, "frozen", frozen);
    append_diagnostics(out.diagnostics, "moving", moving);
    if (config.plot)
        art.write("plot.py", plot_script("d = load('motion.csv')\nfig, ax = plt.subplots()\n"
                                         "ax.errorbar(d[:, 0], d[:, 1], yerr=d[:, 2], fmt='.-', label='frozen')\n"
                                         "ax.errorbar(d[:, 0], d[:, 3], yerr=d[:, 4], fmt='.-', label='moving')\n"
                                         "ax.set_xlabel('detuning / Vbar')\nax.set_ylabel('yield')\nax.legend()\n"
                                         "fig.savefig('motion.png', dpi=150)\n"));
}

void run_width_vs_nu(const RunConfig& config, Artifacts& art, Outputs& out) {
    const SpectrumRequest base = config.spectrum_request();
    Csv table(config, config.convolved_ratio_widths ? "width vs population ratio (convolved spectra)"
                                                    : "width vs population ratio (homogeneous spectra)",
              {"nu", "n_s", "n_s_prime", "fwhm", "uncertainty"});
    Csv spectra(config, "spectra per population ratio", {"nu", "detuning", "yield", "std_error"});
    Json points = Json::array();
    std::vector<std::string> notes;
    for (double nu : config.nu_values) {
        const auto split_counts = split_for_ratio(nu, config.n_atoms);
        SpectrumRequest req = base;
        req.n_s = split_counts->first;
        SpectrumCurve curve = spectrum(req);
        append_diagnostics(out.diagnostics, "nu=" + format_double(nu), curve);
        if (config.convolved_ratio_widths) curve = gaussian_convolve(curve, config.profile);
        for (std::size_t i = 0; i < curve.detunings.size(); ++i)
            spectra.row({nu, curve.detunings[i], curve.yields[i], curve.std_errors[i]});
        const Json w = try_width(curve, notes);
        const double nan = std::nan("");
        table.row({nu, static_cast<double>(split_counts->first), static_cast<double>(split_counts->second),
                   w.is_null() ? nan : w["fwhm"].get<double>(), w.is_null() ? nan : w["uncertainty"].get<double>()});
        points.push_back(Json{{"nu", nu}, {"n_s", split_counts->first}, {"n_s_prime", split_counts->second}, {"width", w}});
    }
    art.write("ratio.csv", table.str());
    art.write("ratio_spectra.csv", spectra.str());
    out.summary["widths_from"] = config.convolved_ratio_widths ? "convolved" : "homogeneous";
    out.summary["points"] = points;
    out.summary["notes"] = notes;
    if (config.plot)
        art.write("plot.py", plot_script("d = load('ratio.csv')\nfig, ax = plt.subplots()\n"
                                         "ax.errorbar(d[:, 0], d[:, 3], yerr=d[:, 4], fmt='o-')\n"
                                         "ax.set_xlabel('nu')\nax.set_ylabel('FWHM / Vbar')\n"
                                         "fig.savefig('ratio.png', dpi=150)\n"));
}

void run_finite_size(const RunConfig& config, Artifacts& art, Outputs& out) {
    const SpectrumRequest base = config.spectrum_request();
    std::vector<FiniteSizePoint> points;
    Csv csv(config, "width vs atom number", {"n_atoms", "fwhm", "uncertainty"});
    for (std::size_t n : config.sizes) {
        SpectrumRequest req = base;
        req.n_atoms = n;
        if (req.model.model_case == ModelCase::CaseII) req.n_s = n / 2;
        const SpectrumCurve curve = spectrum(req);
        append_diagnostics(out.diagnostics, "n=" + std::to_string(n), curve);
        const LineWidthResult w = extract_fwhm(curve);
        points.push_back({n, w});
        csv.row({static_cast<double>(n), w.fwhm, w.uncertainty});
    }
    const FiniteSizeScan fit = fit_inverse_size(points);
    art.write("finite_size.csv", csv.str());
    Json pts = Json::array();
    for (const auto& p : fit.points) pts.push_back(Json{{"n_atoms", p.n_atoms}, {"width", width_json(p.width)}});
    out.summary["points"] = pts;
    out.summary["extrapolated_width"] = fit.extrapolated_width;
    out.summary["slope"] = fit.slope;
    out.summary["fit_residual"] = fit.fit_residual;
    const double w_last = fit.points.back().width.fwhm;
    out.summary["relative_change_to_largest"] = (fit.extrapolated_width - w_last) / w_last;
    if (config.plot)
        art.write("plot.py", plot_script("d = load('finite_size.csv')\nfig, ax = plt.subplots()\n"
                                         "ax.errorbar(1.0 / d[:, 0], d[:, 1], yerr=d[:, 2], fmt='o')\n"
                                         "ax.set_xlabel('1 / N')\nax.set_ylabel('FWHM / Vbar')\n"
                                         "fig.savefig('finite_size.png', dpi=150)\n"));
}

void run_toy_decay(const RunConfig& config, Artifacts& art, Outputs& out) {
    std::vector<double> times(config.t_points);
    for (std::size_t i = 0; i < times.size(); ++i)
        times[i] = config.t_max * static_cast<double>(i) / static_cast<double>(config.t_points - 1);
    const DecayCurve curve = toy_decay_curve(config.n_atoms, config.n_configs, times, *config.seed, config.workers);
    Csv csv(config, "survival probability of the initial s atom", {"time", "survival", "std_error"});
    for (std::size_t i = 0; i < times.size(); ++i) csv.row({times[i], curve.mean[i], curve.std_error[i]});
    art.write("decay.csv", csv.str());

    auto at = [&](double t) -> std::optional<double> {
        if (t > times.back()) return std::nullopt;
        const auto it = std::lower_bound(times.begin(), times.end(), t);
        const auto i = static_cast<std::size_t>(it - times.begin());
        if (i == 0 || times[i] == t) return curve.mean[i];
        const double f = (t - times[i - 1]) / (times[i] - times[i - 1]);
        return curve.mean[i - 1] + f * (curve.mean[i] - curve.mean[i - 1]);
    };
    if (auto p = at(0.2)) out.summary["survival_at_0.2"] = *p;
    out.summary["survival_final"] = curve.mean.back();
    std::size_t rises = 0;
    for (std::size_t i = 1; i < times.size(); ++i)
        if (curve.mean[i] > curve.mean[i - 1] + 2.0 * std::max(curve.std_error[i], curve.std_error[i - 1])) ++rises;
    out.summary["significant_rises"] = rises;
    if (config.plot)
        art.write("plot.py", plot_script("d = load('decay.csv')\nfig, ax = plt.subplots()\n"
                                         "ax.errorbar(d[:, 0], d[:, 1], yerr=d[:, 2], fmt='-')\n"
                                         "ax.set_xlabel('t Vbar')\nax.set_ylabel('survival')\n"
                                         "fig.savefig('decay.png', dpi=150)\n"));
}

void run_toy_band(const RunConfig& config, Artifacts& art, Outputs& out) {
    const auto eigenvalues = toy_eigenvalues(config.n_atoms, config.n_configs, *config.seed, config.workers);
    const EigenvalueHistogram h = eigenvalue_histogram(eigenvalues, config.bins);
    Csv csv(config, "pooled eigenvalue histogram", {"bin_lo", "bin_hi", "count", "density"});
    const double width = h.edges[1] - h.edges[0];
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        csv.row({h.edges[b], h.edges[b + 1], static_cast<double>(h.counts[b]),
                 static_cast<double>(h.counts[b]) / (static_cast<double>(h.total) * width)});
    art.write("band.csv", csv.str());
    out.summary["central90_width"] = h.central90_width;
    out.summary["q05"] = h.q05;
    out.summary["q95"] = h.q95;
    out.summary["mean"] = h.mean;
    out.summary["skewness"] = h.skewness;
    out.summary["eigenvalues"] = h.total;
    out.summary["underflow"] = h.underflow;
    out.summary["overflow"] = h.overflow;
    if (config.plot)
        art.write("plot.py", plot_script("d = load('band.csv')\nfig, ax = plt.subplots()\n"
                                         "ax.stairs(d[:, 3], np.append(d[:, 0], d[-1, 1]))\n"
                                         "ax.set_xlabel('E / Vbar')\nax.set_ylabel('density')\n"
                                         "fig.savefig('band.png', dpi=150)\n"));
}

void run_pairdist(const RunConfig& config, Artifacts& art, Outputs& out) {
    std::optional<EmpiricalCdf> empirical;
    if (config.n_configs > 0 && config.n_atoms >= 2)
        empirical = empirical_pair_cdf(config.n_atoms, config.n_configs, PairDistributionKind::Dipolar, *config.seed);
    std::vector<std::string> columns{"delta", "density_isotropic", "cumulative_isotropic", "density_dipolar", "cumulative_dipolar"};
    if (empirical) columns.push_back("empirical_dipolar");
    Csv csv(config, "nearest-neighbor coupling distribution", columns);
    const double ratio = std::pow(config.delta_max / config.delta_min, 1.0 / static_cast<double>(config.delta_points - 1));
    for (std::size_t i = 0; i < config.delta_points; ++i) {
        const double d = config.delta_min * std::pow(ratio, static_cast<double>(i));
        const auto iso = evaluate_pair_statistics(d, PairDistributionKind::Isotropic);
        const auto dip = evaluate_pair_statistics(d, PairDistributionKind::Dipolar);
        if (empirical) csv.row({d, iso.density, iso.cumulative, dip.density, dip.cumulative, (*empirical)(d)});
        else csv.row({d, iso.density, iso.cumulative, dip.density, dip.cumulative});
    }
    art.write("pairdist.csv", csv.str());
    out.summary["dipolar_density_near_zero"] = pair_density_dipolar(1e-6);
    out.summary["tail_above_40"] = 1.0 - cumulative_p(40.0, PairDistributionKind::Dipolar);
    out.summary["delta2_density_isotropic_at_1e4"] = 1e8 * pair_density_isotropic(1e4);
    out.summary["delta2_density_dipolar_at_1e4"] = 1e8 * pair_density_dipolar(1e4);
    if (empirical) out.summary["empirical_samples"] = empirical->size();
    if (config.plot)
        art.write("plot.py", plot_script("d = load('pairdist.csv')\nfig, ax = plt.subplots()\n"
                                         "ax.semilogx(d[:, 0], d[:, 2], label='isotropic')\n"
                                         "ax.semilogx(d[:, 0], d[:, 4], label='dipolar')\n"
                                         "if d.shape[1] > 5:\n    ax.semilogx(d[:, 0], d[:, 5], '.', label='sampled')\n"
                                         "ax.set_xlabel('|V| / Vbar')\nax.set_ylabel('P')\nax.legend()\n"
                                         "fig.savefig('pairdist.png', dpi=150)\n"));
}

} // namespace

std::string_view to_string(Subcommand s) {
    for (const auto& e : kSubcommands)
        if (e.value == s) return e.name;
    return "unknown";
}

std::optional<Subcommand> parse_subcommand(std::string_view name) {
    for (const auto& e : kSubcommands)
        if (e.name == name) return e.value;
    return std::nullopt;
}

const std::vector<Subcommand>& all_subcommands() {
    static const std::vector<Subcommand> all = [] {
        std::vector<Subcommand> v;
        for (const auto& e : kSubcommands) v.push_back(e.value);
        return v;
    }();
    return all;
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys{
        "model",      "mu_sp",        "mu_sp_prime",  "mu_s_prime_p_prime", "exchange",   "creation",
        "n_atoms",    "n_s",          "T",            "grid",               "n_configs",  "seed",
        "workers",    "tol",          "r_min_reject", "speed",              "rebuild_dt", "sigma",
        "quadrature_points", "r_max_over_sigma", "t_max", "t_points", "bins", "delta_min",
        "delta_max",  "delta_points", "nu_values",    "sizes",              "ratio_widths", "out",
        "plot"};
    return keys;
}

KeyValues parse_config_text(std::istream& is) {
    KeyValues kv;
    std::string line;
    std::size_t number = 0;
    while (std::getline(is, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos || trim(text.substr(0, eq)).empty())
            throw std::runtime_error("config line " + std::to_string(number) + ": expected 'key = value'");
        kv[trim(text.substr(0, eq))] = trim(text.substr(eq + 1));
    }
    return kv;
}

KeyValues read_config_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config file " + path.string());
    return parse_config_text(is);
}

RunConfig RunConfig::from_key_values(Subcommand subcommand, const KeyValues& kv) {
    RunConfig c;
    c.subcommand = subcommand;
    Reader r(kv, c.parse_errors);

    for (const auto& [key, value] : kv)
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end())
            c.parse_errors.push_back(key + ": unknown key");

    ModelCase model_case = is_toy(subcommand)                    ? ModelCase::ToyExchange
                           : subcommand == Subcommand::WidthVsNu ? ModelCase::CaseII
                                                                 : ModelCase::CaseI;
    if (const auto* m = r.raw("model")) {
        try {
            model_case = parse_model_case(*m);
        } catch (const std::invalid_argument&) {
            r.fail("model", "expected toy, case1 or case2, got '" + *m + "'");
        }
    }

    // Reference parameter sets per model.
    c.model.model_case = model_case;
    switch (model_case) {
    case ModelCase::ToyExchange:
        c.model.mu_sp = 1.0;
        c.n_atoms = 256;
        c.T = 1.0;
        break;
    case ModelCase::CaseI:
        c.model.mu_sp = 1.02;
        c.model.mu_sp_prime = 0.98;
        c.n_atoms = 10;
        c.T = 3.4;
        break;
    case ModelCase::CaseII:
        c.model.mu_sp = 2.0;
        c.model.mu_s_prime_p_prime = 0.5;
        c.n_atoms = 20;
        c.T = 0.36;
        break;
    }
    if (subcommand == Subcommand::Motion) c.speed = 0.05;
    if (subcommand == Subcommand::PairDist) {
        c.n_configs = 0;
        c.n_atoms = 256;
    }

    r.number("mu_sp", c.model.mu_sp);
    r.number("mu_sp_prime", c.model.mu_sp_prime);
    r.number("mu_s_prime_p_prime", c.model.mu_s_prime_p_prime);
    r.flag("exchange", c.model.include_exchange);
    r.flag("creation", c.model.include_creation);
    if (model_case == ModelCase::ToyExchange) c.model.include_creation = false;
    r.count("n_atoms", c.n_atoms);
    c.n_s = c.n_atoms / 2;
    r.count("n_s", c.n_s);
    r.number("T", c.T);
    r.grid("grid", c.grid);
    r.count("n_configs", c.n_configs);
    r.seed("seed", c.seed);
    r.count("workers", c.workers);
    r.number("tol", c.tol);
    r.number("r_min_reject", c.r_min_reject);
    r.number("speed", c.speed);
    r.number("rebuild_dt", c.rebuild_dt);
    r.number("sigma", c.profile.sigma);
    r.count("quadrature_points", c.profile.quadrature_points);
    r.number("r_max_over_sigma", c.profile.r_max_over_sigma);
    r.number("t_max", c.t_max);
    r.count("t_points", c.t_points);
    r.count("bins", c.bins);
    r.number("delta_min", c.delta_min);
    r.number("delta_max", c.delta_max);
    r.count("delta_points", c.delta_points);
    r.numbers("nu_values", c.nu_values);
    r.counts("sizes", c.sizes);
    if (const auto* w = r.raw("ratio_widths")) {
        if (*w == "homogeneous") c.convolved_ratio_widths = false;
        else if (*w == "convolved") c.convolved_ratio_widths = true;
        else r.fail("ratio_widths", "expected homogeneous or convolved, got '" + *w + "'");
    }
    if (const auto* o = r.raw("out")) c.out = *o;
    r.flag("plot", c.plot);
    return c;
}

KeyValues RunConfig::to_key_values() const {
    KeyValues kv;
    auto list = [](const auto& values) {
        std::string s;
        for (const auto& v : values) {
            if (!s.empty()) s += ",";
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) s += format_double(v);
            else s += std::to_string(v);
        }
        return s;
    };
    kv["model"] = std::string(rydberg::to_string(model.model_case));
    kv["mu_sp"] = format_double(model.mu_sp);
    kv["mu_sp_prime"] = format_double(model.mu_sp_prime);
    kv["mu_s_prime_p_prime"] = format_double(model.mu_s_prime_p_prime);
    kv["exchange"] = model.include_exchange ? "true" : "false";
    kv["creation"] = model.include_creation ? "true" : "false";
    kv["n_atoms"] = std::to_string(n_atoms);
    kv["n_s"] = std::to_string(n_s);
    kv["T"] = format_double(T);
    if (grid.empty()) {
        kv["grid"] = "default";
    } else {
        std::string g;
        for (const auto& s : grid)
            g += (g.empty() ? "" : ",") + format_double(s.lo) + ":" + format_double(s.hi) + ":" + std::to_string(s.points);
        kv["grid"] = g;
    }
    kv["n_configs"] = std::to_string(n_configs);
    kv["seed"] = seed ? std::to_string(*seed) : "";
    kv["workers"] = std::to_string(workers);
    kv["tol"] = format_double(tol);
    kv["r_min_reject"] = format_double(r_min_reject);
    kv["speed"] = format_double(speed);
    kv["rebuild_dt"] = format_double(rebuild_dt);
    kv["sigma"] = format_double(profile.sigma);
    kv["quadrature_points"] = std::to_string(profile.quadrature_points);
    kv["r_max_over_sigma"] = format_double(profile.r_max_over_sigma);
    kv["t_max"] = format_double(t_max);
    kv["t_points"] = std::to_string(t_points);
    kv["bins"] = std::to_string(bins);
    kv["delta_min"] = format_double(delta_min);
    kv["delta_max"] = format_double(delta_max);
    kv["delta_points"] = std::to_string(delta_points);
    kv["nu_values"] = list(nu_values);
    kv["sizes"] = list(sizes);
    kv["ratio_widths"] = convolved_ratio_widths ? "convolved" : "homogeneous";
    kv["out"] = out.string();
    kv["plot"] = plot ? "true" : "false";
    return kv;
}

std::vector<double> RunConfig::detunings() const {
    if (grid.empty()) return default_detuning_grid();
    return make_detuning_grid(grid);
}

SpectrumRequest RunConfig::spectrum_request() const {
    SpectrumRequest r;
    r.model = model;
    r.n_atoms = n_atoms;
    r.n_s = n_s;
    r.T = T;
    r.detunings = detunings();
    r.n_configs = n_configs;
    r.seed = seed.value_or(0);
    r.tol = tol;
    r.workers = workers;
    r.r_min_reject = r_min_reject;
    if (speed > 0.0) r.speed = speed;
    r.rebuild_dt = rebuild_dt;
    return r;
}

std::vector<Violation> validate(const RunConfig& c) {
    std::vector<Violation> v;
    auto add = [&v](std::string field, std::string message) { v.push_back({std::move(field), std::move(message)}); };
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };

    for (const auto& e : c.parse_errors) {
        const auto colon = e.find(':');
        add(e.substr(0, colon), trim(e.substr(colon + 1)));
    }
    if (!c.seed) add("seed", "required; runs are never seeded from the clock");

    const ModelCase mc = c.model.model_case;
    const bool toy = is_toy(c.subcommand);
    const bool pairdist = c.subcommand == Subcommand::PairDist;
    if (toy && mc != ModelCase::ToyExchange) add("model", std::string(to_string(c.subcommand)) + " requires model = toy");
    if (!toy && !pairdist && mc == ModelCase::ToyExchange)
        add("model", std::string(to_string(c.subcommand)) + " needs case1 or case2; the toy model has no creation line");
    if (c.subcommand == Subcommand::WidthVsNu && mc != ModelCase::CaseII) add("model", "width-vs-nu requires model = case2");

    if (!positive(c.model.mu_sp)) add("mu_sp", "must be finite and > 0");
    if (mc == ModelCase::CaseI && !positive(c.model.mu_sp_prime)) add("mu_sp_prime", "must be finite and > 0");
    if (mc == ModelCase::CaseII && !positive(c.model.mu_s_prime_p_prime)) add("mu_s_prime_p_prime", "must be finite and > 0");
    if (!toy && !c.model.include_exchange && !c.model.include_creation)
        add("creation", "at least one of exchange / creation must be enabled");

    const std::size_t min_atoms = 2;
    if (c.subcommand != Subcommand::FiniteSize && c.n_atoms < min_atoms && !(pairdist && c.n_configs == 0))
        add("n_atoms", "must be >= 2");
    if (!pairdist && !(c.n_configs >= 1)) add("n_configs", "must be >= 1");
    if (c.workers < 1) add("workers", "must be >= 1");
    if (!(c.tol > 0.0 && c.tol < 1.0)) add("tol", "must lie in (0, 1)");

    const bool spectral = !toy && !pairdist;
    if (spectral) {
        if (!positive(c.T)) add("T", "must be finite and > 0");
        if (!(c.r_min_reject >= 0.0)) add("r_min_reject", "must be >= 0");
        if (!(c.rebuild_dt >= 0.0) || !std::isfinite(c.rebuild_dt)) add("rebuild_dt", "must be finite and >= 0");
        for (const auto& s : c.grid) {
            if (!std::isfinite(s.lo) || !std::isfinite(s.hi) || s.points == 0 || (s.points > 1 && !(s.hi > s.lo)))
                add("grid", "each segment needs finite lo < hi and points >= 1");
        }
        if (c.detunings().size() < 3) add("grid", "needs at least three distinct detunings");
        if (mc == ModelCase::CaseII && c.subcommand != Subcommand::WidthVsNu && c.subcommand != Subcommand::FiniteSize) {
            if (c.n_s > c.n_atoms) add("n_s", "exceeds n_atoms");
        }
    }
    if (c.subcommand == Subcommand::Motion && !positive(c.speed)) add("speed", "motion needs speed > 0");
    if (c.subcommand != Subcommand::Motion && !(c.speed >= 0.0)) add("speed", "must be >= 0");
    if (c.subcommand == Subcommand::Convolve || (c.subcommand == Subcommand::WidthVsNu && c.convolved_ratio_widths)) {
        try {
            c.profile.validate();
        } catch (const std::invalid_argument& e) {
            add("sigma", e.what());
        }
    }
    if (c.subcommand == Subcommand::WidthVsNu) {
        if (c.nu_values.empty()) add("nu_values", "needs at least one value");
        for (double nu : c.nu_values)
            if (!split_for_ratio(nu, c.n_atoms))
                add("nu_values", "nu = " + format_double(nu) + " has no integer split of " + std::to_string(c.n_atoms) + " atoms");
    }
    if (c.subcommand == Subcommand::FiniteSize) {
        if (c.sizes.size() < 2) add("sizes", "needs at least two sizes for the 1/N fit");
        if (!std::is_sorted(c.sizes.begin(), c.sizes.end()) || std::adjacent_find(c.sizes.begin(), c.sizes.end()) != c.sizes.end())
            add("sizes", "must be strictly ascending");
        if (!c.sizes.empty() && c.sizes.front() < 2) add("sizes", "every size must be >= 2");
    }
    if (c.subcommand == Subcommand::ToyDecay) {
        if (!positive(c.t_max)) add("t_max", "must be finite and > 0");
        if (c.t_points < 2) add("t_points", "must be >= 2");
    }
    if (c.subcommand == Subcommand::ToyBand && c.bins < 1) add("bins", "must be >= 1");
    if (pairdist) {
        if (!positive(c.delta_min)) add("delta_min", "must be finite and > 0");
        if (!(positive(c.delta_max) && c.delta_max > c.delta_min)) add("delta_max", "must be finite and > delta_min");
        if (c.delta_points < 2) add("delta_points", "must be >= 2");
    }
    if (c.out.empty()) add("out", "output directory must be given");
    return v;
}

int run(const RunConfig& config, std::ostream& log) {
    const auto violations = validate(config);
    if (!violations.empty()) {
        for (const auto& v : violations) log << "invalid config: " << v.field << ": " << v.message << "\n";
        return kInvalidConfig;
    }

    const auto start = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(config.out, ec);
    if (ec) {
        log << "cannot create output directory " << config.out << ": " << ec.message() << "\n";
        return kIoError;
    }

    Artifacts art(config);
    Outputs out;
    out.summary = summary_head(config);
    int status = kOk;
    Json failure;
    try {
        switch (config.subcommand) {
        case Subcommand::ToyDecay: run_toy_decay(config, art, out); break;
        case Subcommand::ToyBand: run_toy_band(config, art, out); break;
        case Subcommand::Spectrum: run_spectrum(config, art, out); break;
        case Subcommand::Convolve: run_convolve(config, art, out); break;
        case Subcommand::PairDist: run_pairdist(config, art, out); break;
        case Subcommand::WidthVsNu: run_width_vs_nu(config, art, out); break;
        case Subcommand::FiniteSize: run_finite_size(config, art, out); break;
        case Subcommand::Motion: run_motion(config, art, out); break;
        }
    } catch (const EnsembleError& e) {
        status = kRunFailed;
        failure = Json{{"error", e.what()}, {"config_index", e.config_index()}, {"detuning", e.detuning()}};
    } catch (const std::ios_base::failure& e) {
        log << "i/o error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        status = kRunFailed;
        failure = Json{{"error", e.what()}};
    }

    try {
        if (status == kOk) {
            art.write("summary.json", out.summary.dump(2) + "\n");
        } else {
            failure["subcommand"] = std::string(to_string(config.subcommand));
            art.write("failure.json", failure.dump(2) + "\n");
            log << "run failed: " << failure["error"].get<std::string>() << "\n";
        }
        if (!out.diagnostics.empty()) art.write("diagnostics.jsonl", out.diagnostics);

        std::string echo;
        for (const auto& [k, v] : config.to_key_values()) echo += k + " = " + v + "\n";
        art.write("run_config.txt", "# " + std::string(to_string(config.subcommand)) + "\n" + echo);

        Json manifest;
        manifest["version"] = std::string(kVersion);
        manifest["subcommand"] = std::string(to_string(config.subcommand));
        manifest["status"] = status;
        manifest["config"] = config.to_key_values();
        Json files = Json::array();
        for (const auto& [name, bytes] : art.written()) files.push_back(Json{{"name", name}, {"bytes", bytes}});
        manifest["artifacts"] = files;
        manifest["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        art.write("manifest.json", manifest.dump(2) + "\n");
    } catch (const std::ios_base::failure& e) {
        log << "i/o error: " << e.what() << "\n";
        return kIoError;
    }
    return status;
}

} // namespace rydberg::cli
