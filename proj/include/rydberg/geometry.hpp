#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace rydberg {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend constexpr bool operator==(Vec3 a, Vec3 b) = default;

    constexpr double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

/// Positions (and optional velocities) of atoms in a periodic cube at unit density.
///
/// Lengths are in units of n^{-1/3}, so the cube edge is n_atoms^{1/3}. All positions
/// are kept inside [0, box_edge)^3; velocities, when present, describe ballistic motion.
class AtomConfiguration {
public:
    AtomConfiguration(std::vector<Vec3> positions, std::uint64_t seed,
                      std::optional<std::vector<Vec3>> velocities = std::nullopt);

    std::size_t n_atoms() const noexcept { return positions_.size(); }
    double box_edge() const noexcept { return box_edge_; }
    std::uint64_t seed() const noexcept { return seed_; }

    const std::vector<Vec3>& positions() const noexcept { return positions_; }
    const Vec3& position(std::size_t i) const { return positions_.at(i); }

    bool has_velocities() const noexcept { return velocities_.has_value(); }
    const std::vector<Vec3>& velocities() const;

    /// Smallest minimum-image distance over all pairs; +inf for a single atom.
    double min_pair_separation() const;

    /// Reorders atoms: new atom i is old atom order[i].
    AtomConfiguration permuted(const std::vector<std::size_t>& order) const;

private:
    std::vector<Vec3> positions_;
    std::optional<std::vector<Vec3>> velocities_;
    double box_edge_;
    std::uint64_t seed_;
};

/// Edge of the cube holding n atoms at unit density.
double unit_density_box_edge(std::size_t n_atoms);

struct SamplingOptions {
    /// Speed of every atom (random direction). Empty means a frozen gas.
    std::optional<double> speed;
    /// Resample until all pairs are at least this far apart. 0 disables the guard.
    double r_min_reject = 0.0;
};

/// Draws n_atoms i.i.d. uniform positions in the unit-density cube.
/// Positions and velocities come from separate streams of `seed`, so adding
/// velocities leaves the positions untouched.
AtomConfiguration sample_configuration(std::size_t n_atoms, std::uint64_t seed,
                                       const SamplingOptions& options = {});

/// Displacement from a to b through the nearest periodic image; components in [-L/2, L/2).
Vec3 min_image_displacement(const Vec3& a, const Vec3& b, double box_edge);

/// c_d (1 - 3 cos^2 theta) / r^3 with cos theta measured from the z axis.
/// Throws SingularGeometryError for a zero displacement.
double dipolar_coupling(const Vec3& displacement, double c_d);

/// Ballistic step: x += v dt, wrapped back into the cube.
AtomConfiguration advance_positions(const AtomConfiguration& config, double dt);

/// Plain-text form: `#` header lines with n_atoms, box_edge, seed and has_velocities,
/// then one "x y z" (or "x y z vx vy vz") line per atom.
void write_configuration(std::ostream& os, const AtomConfiguration& config);
AtomConfiguration read_configuration(std::istream& is);

} // namespace rydberg
