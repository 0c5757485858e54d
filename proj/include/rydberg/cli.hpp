#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rydberg/hilbert.hpp"
#include "rydberg/spectroscopy.hpp"

namespace rydberg::cli {

enum class Subcommand { ToyDecay, ToyBand, Spectrum, Convolve, PairDist, WidthVsNu, FiniteSize, Motion };

std::string_view to_string(Subcommand s);
std::optional<Subcommand> parse_subcommand(std::string_view name);
const std::vector<Subcommand>& all_subcommands();

/// Flat key/value settings: config-file entries overlaid by command-line flags.
using KeyValues = std::map<std::string, std::string>;

/// Every key a run accepts, in the order they are echoed.
const std::vector<std::string>& known_keys();

/// Parses "key = value" lines; '#' starts a comment. Throws std::runtime_error naming the
/// line on malformed input.
KeyValues parse_config_text(std::istream& is);
KeyValues read_config_file(const std::filesystem::path& path);

/// Fully resolved run description. Unset keys take the defaults of the chosen model,
/// which reproduce the reference parameter sets (Case I: T = 3.4, N = 10; Case II:
/// T = 0.36, N = 20; toy: N = 256).
struct RunConfig {
    Subcommand subcommand = Subcommand::Spectrum;
    ModelSpec model;
    std::size_t n_atoms = 10;
    std::size_t n_s = 0;
    double T = 3.4;
    std::vector<GridSegment> grid;
    std::size_t n_configs = 1000;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    double tol = 1e-8;
    double r_min_reject = 0.0;
    double speed = 0.0;
    double rebuild_dt = 0.0;
    GaussianProfileSpec profile;
    double t_max = 1.0;
    std::size_t t_points = 101;
    std::size_t bins = 100;
    double delta_min = 0.01;
    double delta_max = 1e4;
    std::size_t delta_points = 121;
    std::vector<double> nu_values{0.0, 0.2, 0.4, 0.6, 0.8, 0.9};
    std::vector<std::size_t> sizes{6, 8, 10};
    bool convolved_ratio_widths = false;
    std::filesystem::path out = "run";
    bool plot = true;

    /// Problems found while reading key/values (unknown keys, unparsable numbers).
    std::vector<std::string> parse_errors;

    /// Builds a config from key/values; parse problems are kept for validate().
    static RunConfig from_key_values(Subcommand subcommand, const KeyValues& kv);

    /// Canonical key/value echo; feeding it back through from_key_values reproduces the run.
    KeyValues to_key_values() const;

    std::vector<double> detunings() const;
    SpectrumRequest spectrum_request() const;
};

struct Violation {
    std::string field;
    std::string message;
};

/// All problems with the config; empty means runnable.
std::vector<Violation> validate(const RunConfig& config);

enum ExitStatus : int { kOk = 0, kInvalidConfig = 1, kRunFailed = 2, kIoError = 3 };

/// Validates, runs the subcommand and writes its artifacts into config.out:
///   <name>.csv        data with a '#' metadata header
///   summary.json      derived numbers (widths, uncertainties, seeds)
///   diagnostics.jsonl per-configuration integrator statistics (spectrum-based runs)
///   run_config.txt    canonical key = value echo, re-runnable as a config file
///   manifest.json     config echo, code version, artifact list and elapsed time
///   plot.py           standalone script reading only the CSV files
/// Every file except manifest.json is byte-identical for identical configs. On a failed
/// physics run failure.json records the error and the status is kRunFailed.
int run(const RunConfig& config, std::ostream& log);

inline constexpr std::string_view kVersion = "0.1.0";

} // namespace rydberg::cli
