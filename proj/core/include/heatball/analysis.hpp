#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "heatball/continuum.hpp"
#include "heatball/lattice.hpp"
#include "heatball/sandpile.hpp"

namespace heatball {

// Anisotropic normalization: lattice site c maps to the half-open cell
//   prod_i [c_i * n^{-1/(d+1)}, (c_i+1) * n^{-1/(d+1)})
//        x [c_d * n^{-2/(d+1)}, (c_d+1) * n^{-2/(d+1)}),
// so an n-site cluster has total normalized volume 1.
struct NormalizedSet {
    std::vector<Site> sites; // sorted
    std::int64_t n = 1;
    int d = 2;
    double lateral_scale = 1.0; // n^{-1/(d+1)}
    double time_scale = 1.0;    // n^{-2/(d+1)}

    double cell_volume() const;
    std::size_t size() const { return sites.size(); }
};

NormalizedSet normalize(const ClusterSet& cluster, std::int64_t n, int d);

// Round-trip of the scaling map: the lattice site whose cell contains the
// point (floor map).
Site preimage_site(const NormalizedSet& set, std::span<const double> x, double t);

// Flat point set in R^dim (row-major coords).
struct PointSet {
    int dim = 2;
    std::vector<double> coords;

    std::size_t size() const { return coords.empty() ? 0 : coords.size() / static_cast<std::size_t>(dim); }
    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    void push(std::span<const double> p) { coords.insert(coords.end(), p.begin(), p.end()); }
};

// Axis-aligned window in R^{d-1} x R (d entries, time last).
struct Window {
    std::vector<double> lo, hi;
    bool contains(std::span<const double> p) const;

    // [-half,half]^{d-1} x [t_lo, t_hi]
    static Window lateral_box(int d, double half, double t_lo, double t_hi);
};

// Cell centers of a normalized cluster, optionally clipped to a window.
PointSet cell_centers(const NormalizedSet& set, const Window* clip = nullptr);

// Grid node coordinates of a limit shape, optionally clipped.
PointSet shape_points(const LimitShape& shape, const Window* clip = nullptr);

double half_cell_diagonal(const NormalizedSet& set);
double half_cell_diagonal(const SpaceTimeGrid& grid);

// Symmetric Hausdorff distance between finite point sets, Euclidean metric.
double hausdorff(const PointSet& A, const PointSet& B);

struct TestFunction {
    std::string name;
    SpaceTimeFn fn;
};

// Caloric family for the mean value property on D: solutions of
// kappa * Lap(phi) + p * d(phi)/dt = 0 (constants, lateral monomials and the
// exponential family exp(a x_1 - kappa a^2 t / p)).
std::vector<TestFunction> caloric_test_family(const ModelParams& params,
                                              const std::vector<double>& exp_coeffs = {0.25, 0.5,
                                                                                       1.0});

struct MeanValueEntry {
    std::string name;
    double integral = 0.0;
    double reference = 0.0; // |D| * phi(0)
    double rel_error = 0.0; // |integral - reference| / (|D| * sup_D |phi|)
};

struct MeanValueReport {
    double volume = 0.0;
    std::vector<MeanValueEntry> entries;
    double max_rel_error = 0.0;
};

MeanValueReport verify_mean_value(const LimitShape& D, const ModelParams& params,
                                  const std::vector<TestFunction>& fns);

// C-infinity bump with compact support, for the weak PDE check.
struct SmoothBump {
    std::vector<double> center_x; // d-1 entries
    double center_t = 0.0;
    double radius_x = 1.0;
    double radius_t = 1.0;
    double amplitude = 1.0;

    double operator()(std::span<const double> x, double t) const;

    // kappa * Lap(h) + p * dh/dt, the adjoint heat action on the test function
    // (fourth-order central differences; the bump is smooth).
    double continuum_action(std::span<const double> x, double t, const ModelParams& params) const;
};

struct WeakPdeReport {
    double lhs_discrete = 0.0;   // (1/n) sum u_n K~(h_n): exact bookkeeping pairing
    double lhs_continuum = 0.0;  // (1/n) sum (n^{-2/(d+1)} u_n) (kappa Lap + p d/dt)h
    double rhs = 0.0;            // (1/n) sum_{u>0} h_n - h(0)
    double residual_discrete = 0.0;
    double residual = 0.0;       // |lhs_continuum - rhs|: shrinks like n^{-1/(d+1)}
    double rhs_scale = 0.0;      // |(1/n) sum_{u>0} h_n|
};

WeakPdeReport verify_weak_pde(const MassField& odometer, double n, const ModelParams& params,
                              const SmoothBump& h);

// |sum eta*K(u) - (sum eta*nu - sum eta*nu0)| : exact mass bookkeeping, zero
// up to floating accumulation for any finite-support eta.
double discrete_identity_residual(const SandpileResult& result, const MassField& initial,
                                  const MassField& eta, const ModelParams& params);

struct BoundingBox {
    double lateral_radius = 0.0; // sup-norm over lateral cell corners
    double time_extent = 0.0;    // max drift cell corner
};

BoundingBox bounding_box(const NormalizedSet& set);

struct RescaleOptions {
    double mu_lo = 0.6, mu_hi = 1.5;
    double lambda_lo = 0.6, lambda_hi = 2.6;
    int scan_steps = 33;
    std::int64_t fit_subsample_t = 8;  // node strides used during the fit
    std::int64_t fit_subsample_x = 2;
    double fail_threshold = 0.20;
};

struct RescaleFit {
    double mu = 1.0;
    double lambda = 1.0;
    double residual = 0.0; // symmetric-difference volume / |D2|
    double lambda_over_mu2 = 1.0;
};

// Fits x -> mu x, t -> lambda t minimizing the symmetric difference between
// the transformed D1 and D2. Throws FitFailure above the threshold.
RescaleFit rescaling_check(const LimitShape& D1, const LimitShape& D2,
                           const RescaleOptions& opts = {});

// |A delta B| / |B| on the shared lattice.
double symmetric_difference_fraction(const ClusterSet& A, const ClusterSet& B);

} // namespace heatball
