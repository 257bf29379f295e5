#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "heatball/lattice.hpp"

namespace heatball {

// Uniform space-time grid on [-x_extent, x_extent]^{d-1} x [t_min, t_max]
// with the parabolic coupling dt = dx^2. Time level i sits at t_min + i*dt;
// lateral node j on each axis at (j - nx/2) * dx, so x = 0 is always a node.
struct SpaceTimeGrid {
    int d = 2;
    double x_extent = 3.0;
    double dx = 0.01;
    double dt = 1e-4;
    double t_min = 1e-4;
    double t_max = 3.0;
    std::int64_t nx = 0;        // nodes per lateral axis
    std::int64_t nt = 0;        // time levels
    std::int64_t lat_count = 0; // nodes per time slice

    // t_min <= 0 selects the first level above 0 (t_min = dt), which makes the
    // below-grid data exact: the majorant equals t - a|x|^2 for t <= 0.
    static SpaceTimeGrid make(int d, double x_extent, double t_max, double dx,
                              double t_min = 0.0);

    double lateral_coord(std::int64_t j) const { return (j - nx / 2) * dx; }
    double time_coord(std::int64_t i) const { return t_min + i * dt; }
    double cell_volume() const; // dx^{d-1} * dt

    std::int64_t flat_lateral(std::span<const std::int64_t> idx) const;
    void lateral_multi(std::int64_t flat, std::span<std::int64_t> out) const;
};

struct ScalarField {
    SpaceTimeGrid grid;
    std::vector<double> values; // indexed [time][lateral]

    double at(std::int64_t it, std::int64_t lat) const {
        return values[static_cast<std::size_t>(it * grid.lat_count + lat)];
    }
    double& at(std::int64_t it, std::int64_t lat) {
        return values[static_cast<std::size_t>(it * grid.lat_count + lat)];
    }
};

// Fundamental solution of the drifted heat operator:
// (beta/(pi t))^{(d-1)/2} exp(-beta |x|^2 / t) for t > 0, 0 for t < 0.
// At t = 0 the removable limit 0 is used for x != 0; (0,0) is singular.
double fundamental_solution(std::span<const double> x, double t, const ModelParams& params);

// Obstacle gamma(x,t) = t - a|x|^2 - (k/p) * Phi(x,t) with the variant's
// lateral coefficient a and Gaussian constant beta. Requires t > 0.
double obstacle(std::span<const double> x, double t, const ModelParams& params);

ScalarField obstacle_field(const SpaceTimeGrid& grid, const ModelParams& params);

struct MajorantGridOptions {
    double tolerance = 1e-12;     // per-slice sup-norm stopping threshold
    double omega = 1.5;           // projected SOR relaxation factor in [1,2)
    std::int64_t max_slice_iterations = 100'000;
    bool check_boundary = true;   // throw BoundaryContact when {s > gamma} touches
    // Values of s on the level below the grid. Empty selects the roof
    // t0 - a|x|^2, the exact continuation of the point-source problem.
    std::vector<double> below_data;
};

// Least supercaloric majorant of gamma on the grid. Discretizes the heat
// operator with lateral second differences and a backward time difference;
// dt = dx^2 makes the caloric update a convex combination, so slices can be
// solved in one upward march. Below-grid data is the roof t - a|x|^2 (exact
// when t_min = dt).
ScalarField least_supercaloric_majorant(const SpaceTimeGrid& grid, const ScalarField& gamma,
                                        const ModelParams& params,
                                        const MajorantGridOptions& opts = {});

// Discrete heat operator on grid functions at an interior node, matching the
// solver's stencil. Used by operator-identity checks.
double grid_heat_op(const ScalarField& f, std::int64_t it, std::int64_t lat,
                    const ModelParams& params);

struct LimitShape {
    SpaceTimeGrid grid;
    std::vector<std::uint8_t> mask; // 1 where s - gamma > threshold
    std::int64_t count = 0;
    double measure = 0.0;
    double threshold = 0.0;

    bool member(std::int64_t it, std::int64_t lat) const {
        return mask[static_cast<std::size_t>(it * grid.lat_count + lat)] != 0;
    }
};

// Nodes with s - gamma > threshold; threshold < 0 selects 1e-8 * max(s-gamma).
LimitShape extract_limit_shape(const ScalarField& s, const ScalarField& gamma,
                               double threshold = -1.0);

struct HeatBallSpec {
    std::vector<double> center_x; // d-1 lateral coordinates
    double center_t = 0.0;
    double radius = 1.0;
};

// Sublevel region of the fundamental solution used by the mean value
// operator; reaches into the past of the center.
class HeatBall {
public:
    HeatBall(const HeatBallSpec& spec, const ModelParams& params);

    bool contains(std::span<const double> y, double s) const;
    double time_extent() const { return time_extent_; } // tau range is (0, extent]
    double lateral_radius(double tau) const;            // max |x-y| at lag tau

private:
    HeatBallSpec spec_;
    ModelParams params_;
    double level_;
    double time_extent_;
};

inline HeatBall heat_ball(const HeatBallSpec& spec, const ModelParams& params) {
    return HeatBall(spec, params);
}

struct QuadratureOptions {
    int points = 20;       // Gauss-Legendre nodes per panel and per lateral axis
    double tol = 1e-9;     // stop when the next near-center shell adds less than this
    int max_panels = 60;
};

using SpaceTimeFn = std::function<double(std::span<const double> y, double s)>;

// Weighted mean value over the heat ball:
//   (beta / r^{d-1}) * Int_E f(y,s) |x-y|^2 / (t-s)^2 dy ds.
// Reproduces solutions of the drifted heat equation at the center. The kernel
// is singular at the center; integration excludes a shrinking parabolic
// neighborhood and refines until the excluded shell is negligible.
double mean_value_operator(const SpaceTimeFn& f, const HeatBallSpec& spec,
                           const ModelParams& params, const QuadratureOptions& opts = {});

// Multilinear interpolation adapter so grid fields can feed the operator.
SpaceTimeFn field_sampler(const ScalarField& field);

} // namespace heatball
