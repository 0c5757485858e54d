#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rydberg {

/// Two atoms share a position (or its periodic image); the dipolar coupling is undefined.
class SingularGeometryError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Operation requires state the object does not carry (e.g. velocities on a frozen gas).
class InvalidStateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// The integrator could not meet its tolerance with a representable step size.
class StiffnessError : public std::runtime_error {
public:
    StiffnessError(const std::string& what, double min_pair_separation = -1.0)
        : std::runtime_error(what), min_pair_separation_(min_pair_separation) {}

    /// Smallest minimum-image pair distance of the offending configuration, or -1 if unknown.
    double min_pair_separation() const noexcept { return min_pair_separation_; }

private:
    double min_pair_separation_;
};

/// A spectrum does not cover enough detuning range for the requested analysis.
class CurveSupportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An evolution inside an ensemble run failed; records where.
class EnsembleError : public std::runtime_error {
public:
    EnsembleError(const std::string& what, std::size_t config_index, double detuning)
        : std::runtime_error(what), config_index_(config_index), detuning_(detuning) {}

    std::size_t config_index() const noexcept { return config_index_; }
    double detuning() const noexcept { return detuning_; }

private:
    std::size_t config_index_;
    double detuning_;
};

} // namespace rydberg
