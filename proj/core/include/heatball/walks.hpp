#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "heatball/lattice.hpp"

namespace heatball {

// State of one drifted random walk. The stream id plus the step counter fully
// determine every future draw, so walks are replayable from any snapshot.
struct WalkState {
    Site position;
    std::uint64_t steps_taken = 0;
    std::uint64_t rng_stream = 0;
};

WalkState walk_start(const ModelParams& params, std::uint64_t walk_index);

// Advances one step sampled from the one-step law.
WalkState step(const WalkState& state, const ModelParams& params);

// Hot-path variant with a cached step law.
inline void step_inplace(WalkState& state, const StepLaw& law, std::uint64_t seed) {
    const double u = counter_double(seed, rng_space::kWalks + state.rng_stream, state.steps_taken);
    const auto& e = law.sample(u);
    state.position.c[static_cast<std::size_t>(e.axis)] += e.delta;
    ++state.steps_taken;
}

struct GreenEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t n_samples = 0;
    // NaturalLazy only: bound on the expected visits ignored beyond the
    // horizon, and whether it exceeded the requested precision.
    double tail_bound = 0.0;
    bool horizon_warning = false;
};

struct GreenMcOptions {
    double horizon_factor = 20.0;  // NaturalLazy horizon = factor * max(|z_d|,1) / p
    double precision_goal = 1e-3;  // warn when the tail bound exceeds this
    int threads = 1;
};

// Monte Carlo estimate of g(0,z): expected number of visits to z by the walk
// started at the origin. Monotone walks stop once the drift coordinate passes
// z_d; NaturalLazy walks run to a horizon and report a geometric tail bound.
GreenEstimate green_mc(const Site& z, const ModelParams& params, std::int64_t n_samples,
                       const GreenMcOptions& opts = {});

// Deterministic Green's function table for the Monotone walk.
//
// The walk enters layer m exactly once; q_m is the lateral law of that entry
// point, propagated by convolution with the geometric(p)-killed lateral
// displacement kernel. Within a layer, visit counts follow the killed lateral
// Green's function, so g(0,(w,m)) = (q_m * g_layer)(w).
class GreenTable {
public:
    GreenTable(const ModelParams& params, Coord lateral_radius, Coord max_layer,
               double truncation_tol = 1e-12);

    double g(const Site& z) const;          // 0 for z_d < 0 or outside the table
    double layer_entry_mass(Coord m) const; // sum of q_m, 1 up to truncation
    double layer_visit_sum(Coord m) const;  // sum over the layer of g(0,.)
    Coord max_layer() const { return max_layer_; }
    Coord lateral_radius() const { return lateral_radius_; }
    double truncation_loss() const { return truncation_loss_; }

    std::function<double(const Site&)> as_function() const;

private:
    int d_;
    Coord lateral_radius_;
    Coord max_layer_;
    std::int64_t lat_size_ = 0;   // nodes per lateral axis = 2R+1
    std::int64_t lat_count_ = 0;  // nodes per layer
    std::vector<double> values_;  // g(0, (w,m)) indexed [m][lateral]
    std::vector<double> entry_mass_;
    double truncation_loss_ = 0.0;

    std::int64_t lateral_index(const Site& z) const;
};

// g(0,z) for the Monotone walk via the layer dynamic program. Throws
// TruncationError when the requested tolerance is unattainable at the radius.
double green_dp(const Site& z, const ModelParams& params, Coord lateral_radius,
                double truncation_tol = 1e-12);

// Lateral radius that keeps the table truncation below ~1e-12 up to the given
// layer (about ten per-axis standard deviations of the entry distribution).
Coord suggested_green_radius(const ModelParams& params, Coord max_layer);

// Continuum limit of the normalised Green's function:
// (1/p) (beta/(pi t))^{(d-1)/2} exp(-beta |x|^2 / t), positive sign.
double continuum_green(std::span<const double> x, double t, const ModelParams& params);

} // namespace heatball
