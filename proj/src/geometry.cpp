#include "rydberg/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rydberg/errors.hpp"
#include "rydberg/random.hpp"

namespace rydberg {

namespace {

double wrap_coordinate(double x, double edge) {
    double w = x - edge * std::floor(x / edge);
    // x slightly below a multiple of edge can round up to exactly edge
    if (w >= edge) w = 0.0;
    return w;
}

Vec3 wrap(const Vec3& v, double edge) {
    return {wrap_coordinate(v.x, edge), wrap_coordinate(v.y, edge), wrap_coordinate(v.z, edge)};
}

Vec3 random_direction(Engine& engine) {
    const double cos_t = 2.0 * uniform01(engine) - 1.0;
    const double phi = 2.0 * std::numbers::pi * uniform01(engine);
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    return {sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t};
}

} // namespace

double unit_density_box_edge(std::size_t n_atoms) {
    return std::cbrt(static_cast<double>(n_atoms));
}

AtomConfiguration::AtomConfiguration(std::vector<Vec3> positions, std::uint64_t seed,
                                     std::optional<std::vector<Vec3>> velocities)
    : positions_(std::move(positions)),
      velocities_(std::move(velocities)),
      box_edge_(unit_density_box_edge(positions_.size())),
      seed_(seed) {
    if (positions_.empty()) throw std::invalid_argument("AtomConfiguration: no atoms");
    if (velocities_ && velocities_->size() != positions_.size())
        throw std::invalid_argument("AtomConfiguration: velocity count differs from atom count");
    for (const auto& p : positions_) {
        for (double c : {p.x, p.y, p.z}) {
            if (!(c >= 0.0 && c < box_edge_))
                throw std::invalid_argument("AtomConfiguration: position outside [0, box_edge)");
        }
    }
}

const std::vector<Vec3>& AtomConfiguration::velocities() const {
    if (!velocities_) throw InvalidStateError("configuration has no velocities");
    return *velocities_;
}

double AtomConfiguration::min_pair_separation() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < positions_.size(); ++j)
        for (std::size_t k = j + 1; k < positions_.size(); ++k)
            best = std::min(best, min_image_displacement(positions_[j], positions_[k], box_edge_).norm());
    return best;
}

AtomConfiguration AtomConfiguration::permuted(const std::vector<std::size_t>& order) const {
    if (order.size() != positions_.size()) throw std::invalid_argument("permuted: wrong order size");
    std::vector<Vec3> pos(order.size());
    std::optional<std::vector<Vec3>> vel;
    if (velocities_) vel.emplace(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        pos[i] = positions_.at(order[i]);
        if (vel) (*vel)[i] = (*velocities_)[order[i]];
    }
    return AtomConfiguration(std::move(pos), seed_, std::move(vel));
}

AtomConfiguration sample_configuration(std::size_t n_atoms, std::uint64_t seed,
                                       const SamplingOptions& options) {
    if (n_atoms == 0) throw std::invalid_argument("sample_configuration: n_atoms must be >= 1");
    if (options.r_min_reject < 0.0) throw std::invalid_argument("sample_configuration: r_min_reject < 0");
    if (options.speed && !(*options.speed >= 0.0 && std::isfinite(*options.speed)))
        throw std::invalid_argument("sample_configuration: speed must be finite and >= 0");

    const double edge = unit_density_box_edge(n_atoms);
    Engine engine = make_engine(seed, StreamTag::Positions);

    std::vector<Vec3> positions(n_atoms);
    constexpr int kMaxAttempts = 100000;
    for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxAttempts)
            throw std::invalid_argument("sample_configuration: r_min_reject too large to satisfy");
        for (auto& p : positions)
            p = wrap({edge * uniform01(engine), edge * uniform01(engine), edge * uniform01(engine)}, edge);
        if (options.r_min_reject == 0.0) break;
        AtomConfiguration trial(positions, seed);
        if (trial.min_pair_separation() >= options.r_min_reject) break;
    }

    std::optional<std::vector<Vec3>> velocities;
    if (options.speed) {
        Engine vel_engine = make_engine(seed, StreamTag::Velocities);
        velocities.emplace(n_atoms);
        for (auto& v : *velocities) v = *options.speed * random_direction(vel_engine);
    }
    return AtomConfiguration(std::move(positions), seed, std::move(velocities));
}

Vec3 min_image_displacement(const Vec3& a, const Vec3& b, double box_edge) {
    auto fold = [box_edge](double d) { return d - box_edge * std::floor(d / box_edge + 0.5); };
    const Vec3 d = b - a;
    return {fold(d.x), fold(d.y), fold(d.z)};
}

double dipolar_coupling(const Vec3& displacement, double c_d) {
    const double r2 = displacement.dot(displacement);
    if (r2 == 0.0) throw SingularGeometryError("dipolar_coupling: zero separation");
    const double r = std::sqrt(r2);
    const double z2 = displacement.z * displacement.z;
    return c_d * (r2 - 3.0 * z2) / (r2 * r2 * r);
}

AtomConfiguration advance_positions(const AtomConfiguration& config, double dt) {
    const auto& vel = config.velocities();
    if (dt == 0.0) return config;
    std::vector<Vec3> pos(config.n_atoms());
    for (std::size_t i = 0; i < pos.size(); ++i)
        pos[i] = wrap(config.positions()[i] + dt * vel[i], config.box_edge());
    return AtomConfiguration(std::move(pos), config.seed(), vel);
}

void write_configuration(std::ostream& os, const AtomConfiguration& config) {
    char buf[160];
    os << "# n_atoms " << config.n_atoms() << '\n';
    std::snprintf(buf, sizeof buf, "# box_edge %.17g\n", config.box_edge());
    os << buf;
    os << "# seed " << config.seed() << '\n';
    os << "# has_velocities " << (config.has_velocities() ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < config.n_atoms(); ++i) {
        const Vec3& p = config.positions()[i];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x, p.y, p.z);
        os << buf;
        if (config.has_velocities()) {
            const Vec3& v = config.velocities()[i];
            std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g", v.x, v.y, v.z);
            os << buf;
        }
        os << '\n';
    }
}

AtomConfiguration read_configuration(std::istream& is) {
    std::size_t n_atoms = 0;
    std::uint64_t seed = 0;
    bool has_velocities = false;
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;

    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string hash, key;
            ls >> hash >> key;
            if (key == "n_atoms") ls >> n_atoms;
            else if (key == "seed") ls >> seed;
            else if (key == "has_velocities") { int flag = 0; ls >> flag; has_velocities = flag != 0; }
            continue;
        }
        Vec3 p;
        if (!(ls >> p.x >> p.y >> p.z)) throw std::invalid_argument("read_configuration: malformed line: " + line);
        positions.push_back(p);
        if (has_velocities) {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z))
                throw std::invalid_argument("read_configuration: missing velocity: " + line);
            velocities.push_back(v);
        }
    }
    if (positions.size() != n_atoms)
        throw std::invalid_argument("read_configuration: header n_atoms does not match body");
    std::optional<std::vector<Vec3>> vel;
    if (has_velocities) vel = std::move(velocities);
    return AtomConfiguration(std::move(positions), seed, std::move(vel));
}

} // namespace rydberg
