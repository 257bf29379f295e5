#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "heatball/lattice.hpp"

namespace heatball {

enum class SweepOrder { FifoQueue, LayerSweep, RandomPermutation };

std::string to_string(SweepOrder order);
SweepOrder sweep_order_from_string(const std::string& name);

struct ToppleConfig {
    // A site topples while its mass exceeds 1; stabilization stops when the
    // largest excess over 1 is at most this tolerance.
    double excess_tolerance = 1e-9;
    SweepOrder sweep_order = SweepOrder::FifoQueue;
    std::int64_t max_sweeps = 50'000'000;

    void validate() const;
};

struct SandpileResult {
    MassField final_mass; // nu
    MassField odometer;   // u
    std::int64_t sweeps = 0;
    double max_residual_excess = 0.0;
};

// Single toppling: z keeps mass 1, the excess goes to the neighbors in the
// proportions of the one-step law, and the odometer at z grows by the excess.
// Throws NotFullError when mass(z) <= 1.
void topple(MassField& mass, MassField& odometer, const Site& z, const ModelParams& params);

// Stabilizes a finite-mass configuration by repeated topplings in the chosen
// sweep order. Throws NonConvergence when max_sweeps is exhausted with a
// residual above tolerance.
SandpileResult stabilize(const MassField& initial, const ModelParams& params,
                         const ToppleConfig& cfg = {});

// Convenience: mass n at the origin (times params.k).
SandpileResult stabilize_point_mass(double n, const ModelParams& params,
                                    const ToppleConfig& cfg = {});

struct ClusterSet {
    std::vector<Site> sites; // sorted lexicographically

    std::size_t size() const { return sites.size(); }
    bool empty() const { return sites.empty(); }
    bool contains(const Site& z) const;

    static ClusterSet from_sites(std::vector<Site> sites); // sorts + dedups
};

// Sites whose final mass exceeds the threshold (D_n up to floating dust).
ClusterSet extract_cluster(const SandpileResult& result, double threshold = 1e-9);

// Lattice box for the obstacle-side odometer computation: lateral cube of the
// given radius times drift layers [drift_lo, drift_hi].
struct LatticeBox {
    Coord lat_radius = 0;
    Coord drift_lo = 0;
    Coord drift_hi = 0;
};

struct MajorantOptions {
    double tol_scale = 1e-10;          // sup-norm stop at tol_scale * n
    std::int64_t max_iterations = 200'000;
    double contact_tol_scale = 1e-12;  // BoxTooSmall when u exceeds this * n one ring inside
};

// Independent odometer: builds gamma_n(z) = z_d - a*sum z_i^2 - n*g(0,z) on
// the box and computes its least discrete-supercaloric majorant by obstacle
// projection sweeps; returns max(s - gamma_n, 0).
MassField odometer_via_majorant(double n, const ModelParams& params, const LatticeBox& box,
                                const std::function<double(const Site&)>& green,
                                const MajorantOptions& opts = {});

} // namespace heatball
