#include <doctest.h>

#include <cmath>

#include "heatball/analysis.hpp"
#include "heatball/idla.hpp"
#include "heatball/rng.hpp"

using namespace heatball;

namespace {

ModelParams monotone_d2(double p = 0.2) {
    ModelParams params;
    params.d = 2;
    params.p = p;
    params.variant = Variant::Monotone;
    params.seed = 17;
    return params;
}

Site site2(Coord x, Coord t) {
    Site z = Site::origin(2);
    z[0] = x;
    z[1] = t;
    return z;
}

PointSet points2(std::initializer_list<std::pair<double, double>> pts) {
    PointSet ps;
    ps.dim = 2;
    for (const auto& [x, t] : pts) {
        ps.coords.push_back(x);
        ps.coords.push_back(t);
    }
    return ps;
}

} // namespace

TEST_CASE("normalize: cell geometry for n = 8, d = 2") {
    ClusterSet cluster = ClusterSet::from_sites({site2(3, 7)});
    const auto set = normalize(cluster, 8, 2);
    CHECK(set.lateral_scale == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(set.time_scale == doctest::Approx(0.25).epsilon(1e-12));
    // site (3,7) -> [1.5,2.0) x [1.75,2.0)
    const auto centers = cell_centers(set);
    REQUIRE(centers.size() == 1);
    CHECK(centers.point(0)[0] == doctest::Approx(1.75).epsilon(1e-12));
    CHECK(centers.point(0)[1] == doctest::Approx(1.875).epsilon(1e-12));

    // round trip: interior points map back to the source site
    const std::vector<double> x{1.8};
    CHECK(preimage_site(set, x, 1.9) == site2(3, 7));
}

TEST_CASE("normalize preserves counting measure: n cells of volume 1/n") {
    const auto run = build_cluster(250, monotone_d2());
    const auto set = normalize(run.cluster(), 250, 2);
    CHECK(set.cell_volume() * static_cast<double>(set.size()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("hausdorff: identical sets, unit offset, empty rejection") {
    const auto a = points2({{0.0, 0.0}, {1.0, 0.5}});
    CHECK(hausdorff(a, a) == 0.0);
    const auto b = points2({{0.0, 0.0}});
    const auto c = points2({{1.0, 0.0}});
    CHECK(hausdorff(b, c) == doctest::Approx(1.0).epsilon(1e-12));
    PointSet empty;
    empty.dim = 2;
    CHECK_THROWS_AS(hausdorff(b, empty), EmptySetError);
}

TEST_CASE("hausdorff behaves like a metric on random triples") {
    RngStream rng(31, 0);
    for (int trial = 0; trial < 10; ++trial) {
        auto random_points = [&](int count) {
            PointSet ps;
            ps.dim = 2;
            for (int i = 0; i < count; ++i) {
                ps.coords.push_back(rng.next_double() * 4.0 - 2.0);
                ps.coords.push_back(rng.next_double() * 2.0);
            }
            return ps;
        };
        const auto A = random_points(12), B = random_points(9), C = random_points(15);
        const double ab = hausdorff(A, B), ba = hausdorff(B, A);
        CHECK(ab == ba); // symmetry
        CHECK(hausdorff(A, C) <= ab + hausdorff(B, C) + 1e-12); // triangle
    }
}

TEST_CASE("bounding box of the single origin cell at n = 1") {
    ClusterSet cluster = ClusterSet::from_sites({site2(0, 0)});
    const auto box = bounding_box(normalize(cluster, 1, 2));
    CHECK(box.lateral_radius == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(box.time_extent == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("symmetric difference fraction") {
    const auto A = ClusterSet::from_sites({site2(0, 0), site2(1, 0), site2(0, 1)});
    const auto B = ClusterSet::from_sites({site2(0, 0), site2(1, 0), site2(2, 0)});
    CHECK(symmetric_difference_fraction(A, B) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(symmetric_difference_fraction(A, A) == 0.0);
}

TEST_CASE("mean value verification on the computed shape (coarse grid)") {
    const auto params = monotone_d2();
    const auto grid = SpaceTimeGrid::make(2, 3.0, 1.0, 0.04);
    const auto gamma = obstacle_field(grid, params);
    const auto s = least_supercaloric_majorant(grid, gamma, params);
    const auto shape = extract_limit_shape(s, gamma);

    const auto report = verify_mean_value(shape, params, caloric_test_family(params));
    REQUIRE(report.entries.size() >= 4);
    // phi = 1 is exact by construction
    CHECK(report.entries[0].name == "const");
    CHECK(report.entries[0].rel_error == 0.0);
    // phi = x1 vanishes by reflection symmetry
    CHECK(report.entries[1].rel_error < 1e-12);
    // exponential family within the coarse-grid budget
    for (const auto& e : report.entries) CHECK(e.rel_error < 0.02);
}

TEST_CASE("weak pde: zero bump gives zero residual") {
    const auto params = monotone_d2();
    const auto res = stabilize_point_mass(500.0, params);
    SmoothBump h;
    h.center_x = {0.0};
    h.center_t = 0.15;
    h.radius_x = 0.5;
    h.radius_t = 0.1;
    h.amplitude = 0.0;
    const auto report = verify_weak_pde(res.odometer, 500.0, params, h);
    CHECK(report.lhs_discrete == 0.0);
    CHECK(report.lhs_continuum == 0.0);
    CHECK(report.rhs == 0.0);
    CHECK(report.residual == 0.0);
}

TEST_CASE("weak pde: interior bump residual is small and scales correctly") {
    const auto params = monotone_d2();
    ToppleConfig cfg;
    cfg.excess_tolerance = 1e-10;
    const double n = 2000.0;
    const auto res = stabilize_point_mass(n, params, cfg);

    SmoothBump h;
    h.center_x = {0.0};
    h.center_t = 0.18;
    h.radius_x = 0.8;
    h.radius_t = 0.08;
    const auto report = verify_weak_pde(res.odometer, n, params, h);
    CHECK(report.rhs_scale > 0.0);
    // the sampled-lattice pairing is exact bookkeeping
    CHECK(report.residual_discrete <= 1e-9);
    // the continuum-action pairing carries the discretization error
    CHECK(report.residual <= 0.08 * report.rhs_scale);
    CHECK(report.residual > 0.0);
}

TEST_CASE("exact discrete identity for random test fields") {
    const auto params = monotone_d2();
    const double n = 1000.0;
    MassField initial;
    initial.set(site2(0, 0), n);
    const auto res = stabilize(initial, params);
    RngStream rng(5, 0);
    for (int trial = 0; trial < 3; ++trial) {
        MassField eta;
        for (int i = 0; i < 200; ++i) {
            const Coord x = static_cast<Coord>(rng.next_below(61)) - 30;
            const Coord t = static_cast<Coord>(rng.next_below(120));
            eta.set(site2(x, t), 2.0 * rng.next_double() - 1.0);
        }
        CHECK(discrete_identity_residual(res, initial, eta, params) <= 1e-7 * n);
    }
}

TEST_CASE("rescaling: identical shapes fit the identity map") {
    const auto params = monotone_d2();
    const auto grid = SpaceTimeGrid::make(2, 3.0, 1.0, 0.04);
    const auto gamma = obstacle_field(grid, params);
    const auto s = least_supercaloric_majorant(grid, gamma, params);
    const auto shape = extract_limit_shape(s, gamma);

    RescaleOptions opts;
    opts.fit_subsample_t = 4;
    const auto fit = rescaling_check(shape, shape, opts);
    CHECK(std::abs(fit.mu - 1.0) < 0.02);
    CHECK(std::abs(fit.lambda - 1.0) < 0.04);
    CHECK(fit.residual < 0.02);
}

TEST_CASE("rescaling between p=0.2 and p=0.3 recovers the beta ratio") {
    const auto paramsA = monotone_d2(0.2);
    const auto paramsB = monotone_d2(0.3);
    const auto grid = SpaceTimeGrid::make(2, 3.0, 1.0, 0.02);
    const auto gA = obstacle_field(grid, paramsA);
    const auto sA = least_supercaloric_majorant(grid, gA, paramsA);
    const auto DA = extract_limit_shape(sA, gA);
    const auto gB = obstacle_field(grid, paramsB);
    const auto sB = least_supercaloric_majorant(grid, gB, paramsB);
    const auto DB = extract_limit_shape(sB, gB);

    const auto fit = rescaling_check(DA, DB);
    const double beta_ratio = paramsB.beta() / paramsA.beta();
    CHECK(beta_ratio == doctest::Approx(1.714286).epsilon(1e-5));
    CHECK(std::abs(fit.lambda_over_mu2 - beta_ratio) / beta_ratio < 0.05);
    CHECK(fit.residual < 0.05);
    // swapping the shapes inverts the map
    const auto inverse = rescaling_check(DB, DA);
    CHECK(inverse.mu * fit.mu == doctest::Approx(1.0).epsilon(0.03));
    CHECK(inverse.lambda * fit.lambda == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("iDLA cluster tracks the sandpile cluster at n = 4000") {
    const auto params = monotone_d2();
    const auto run = build_cluster(4000, params);
    const auto sand = extract_cluster(stabilize_point_mass(4000.0, params));
    const double frac = symmetric_difference_fraction(run.cluster(), sand);
    CHECK(frac < 0.25);

    const auto boxA = bounding_box(normalize(run.cluster(), 4000, 2));
    const auto boxB = bounding_box(normalize(sand, 4000, 2));
    CHECK(std::abs(boxA.lateral_radius - boxB.lateral_radius) / boxB.lateral_radius < 0.15);
    CHECK(std::abs(boxA.time_extent - boxB.time_extent) / boxB.time_extent < 0.15);
}
