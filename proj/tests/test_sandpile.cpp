#include <doctest.h>

#include <cmath>

#include "heatball/sandpile.hpp"
#include "heatball/walks.hpp"

using namespace heatball;

namespace {

ModelParams monotone_d2(double p = 0.2) {
    ModelParams params;
    params.d = 2;
    params.p = p;
    params.variant = Variant::Monotone;
    params.seed = 99;
    return params;
}

Site site2(Coord x, Coord t) {
    Site z = Site::origin(2);
    z[0] = x;
    z[1] = t;
    return z;
}

double max_mass_relation_residual(const SandpileResult& res, const MassField& initial,
                                  const ModelParams& params) {
    // check nu - nu0 = K(u) on the union of supports padded by one step
    MassField seen;
    double worst = 0.0;
    auto visit = [&](const Site& z) {
        if (seen.contains(z)) return;
        seen.set(z, 1.0);
        const double lhs = res.final_mass.at(z) - initial.at(z);
        worst = std::max(worst, std::abs(lhs - heat_op(res.odometer, z, params)));
    };
    for (const auto& field : {res.final_mass, res.odometer, initial})
        for (const auto& [site, value] : field) {
            visit(site);
            for (int a = 0; a < params.d; ++a) {
                visit(site.shifted(a, 1));
                visit(site.shifted(a, -1));
            }
        }
    return worst;
}

} // namespace

TEST_CASE("topple: single toppling of mass 2 at the origin") {
    const auto params = monotone_d2();
    MassField mass, odometer;
    mass.set(site2(0, 0), 2.0);
    const double w_before = weight_functional(mass);
    topple(mass, odometer, site2(0, 0), params);
    CHECK(mass.at(site2(0, 0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mass.at(site2(1, 0)) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(mass.at(site2(-1, 0)) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(mass.at(site2(0, 1)) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(odometer.at(site2(0, 0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mass.total() == doctest::Approx(2.0).epsilon(1e-15));
    // the weight functional grows by exactly the emitted mass
    CHECK(weight_functional(mass) - w_before == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("topple requires mass above 1") {
    const auto params = monotone_d2();
    MassField mass, odometer;
    mass.set(site2(0, 0), 1.0);
    CHECK_THROWS_AS(topple(mass, odometer, site2(0, 0), params), NotFullError);
}

TEST_CASE("stabilize: subcritical mass does nothing") {
    const auto params = monotone_d2();
    MassField initial;
    initial.set(site2(0, 0), 1.0);
    const auto res = stabilize(initial, params);
    CHECK(res.final_mass.at(site2(0, 0)) == 1.0);
    CHECK(res.odometer.empty());
    CHECK(res.max_residual_excess == 0.0);
}

TEST_CASE("stabilize: the two-mass example topples once") {
    const auto params = monotone_d2();
    MassField initial;
    initial.set(site2(0, 0), 2.0);
    const auto res = stabilize(initial, params);
    CHECK(res.final_mass.at(site2(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.final_mass.at(site2(1, 0)) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(res.final_mass.at(site2(-1, 0)) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(res.final_mass.at(site2(0, 1)) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(res.odometer.at(site2(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));

    const auto cluster = extract_cluster(res);
    CHECK(cluster.size() == 4);
    CHECK(cluster.contains(site2(0, 0)));
    CHECK(cluster.contains(site2(0, 1)));
    CHECK(!cluster.contains(site2(0, -1)));
}

TEST_CASE("stabilize invariants at n = 1000") {
    const auto params = monotone_d2();
    ToppleConfig cfg;
    cfg.excess_tolerance = 1e-10;
    MassField initial;
    initial.set(site2(0, 0), 1000.0);
    const auto res = stabilize(initial, params, cfg);

    CHECK(res.max_residual_excess <= cfg.excess_tolerance);
    double max_mass = 0.0;
    for (const auto& [site, value] : res.final_mass) {
        max_mass = std::max(max_mass, value);
        CHECK(site.drift() >= 0); // monotone: nothing below layer 0
    }
    CHECK(max_mass <= 1.0 + cfg.excess_tolerance);
    for (const auto& [site, value] : res.odometer) CHECK(value >= 0.0);
    CHECK(res.final_mass.total() == doctest::Approx(1000.0).epsilon(1e-9));

    CHECK(max_mass_relation_residual(res, initial, params) <= 1e-7);

    // weight gain equals the total emitted mass
    const double w_gain = weight_functional(res.final_mass) - weight_functional(initial);
    CHECK(w_gain == doctest::Approx(res.odometer.total()).epsilon(1e-9));
}

TEST_CASE("stabilize handles an off-origin multi-site initial configuration") {
    const auto params = monotone_d2();
    MassField initial;
    initial.set(site2(3, 2), 40.0);
    initial.set(site2(-2, 5), 25.5);
    const auto res = stabilize(initial, params);
    CHECK(res.final_mass.total() == doctest::Approx(65.5).epsilon(1e-10));
    CHECK(max_mass_relation_residual(res, initial, params) <= 1e-9);
}

TEST_CASE("abelian: three sweep orders produce the same state") {
    for (auto variant : {Variant::Monotone, Variant::NaturalLazy}) {
        ModelParams params = monotone_d2();
        params.variant = variant;
        ToppleConfig cfg;
        cfg.excess_tolerance = 1e-10;
        MassField initial;
        initial.set(site2(0, 0), 400.0);

        cfg.sweep_order = SweepOrder::FifoQueue;
        const auto fifo = stabilize(initial, params, cfg);
        cfg.sweep_order = SweepOrder::LayerSweep;
        const auto layer = stabilize(initial, params, cfg);
        cfg.sweep_order = SweepOrder::RandomPermutation;
        const auto random = stabilize(initial, params, cfg);

        const double tol = 10.0 * cfg.excess_tolerance;
        for (const auto* other : {&layer, &random}) {
            MassField seen;
            for (const auto& field : {fifo.final_mass, other->final_mass})
                for (const auto& [site, value] : field) {
                    if (seen.contains(site)) continue;
                    seen.set(site, 1.0);
                    CHECK(std::abs(fifo.final_mass.at(site) - other->final_mass.at(site)) <= tol);
                    CHECK(std::abs(fifo.odometer.at(site) - other->odometer.at(site)) <= tol);
                }
        }
    }
}

TEST_CASE("extract_cluster thresholds") {
    const auto params = monotone_d2();
    MassField initial;
    initial.set(site2(0, 0), 50.0);
    const auto res = stabilize(initial, params);
    const auto all = extract_cluster(res);
    const auto full_only = extract_cluster(res, 1.0 - 1e-12);
    CHECK(full_only.size() <= all.size());
    // every full site is in the positive-mass cluster
    for (const Site& z : full_only.sites) CHECK(all.contains(z));
}

TEST_CASE("odometer_via_majorant: no toppling for n <= 1") {
    const auto params = monotone_d2();
    GreenTable table(params, suggested_green_radius(params, 30), 30);
    LatticeBox box{20, 0, 25};
    const auto u = odometer_via_majorant(1.0, params, box, table.as_function());
    CHECK(u.empty());
}

TEST_CASE("odometer_via_majorant matches the toppling engine at n = 200") {
    const auto params = monotone_d2();
    ToppleConfig cfg;
    cfg.excess_tolerance = 1e-12;
    const auto res = stabilize_point_mass(200.0, params, cfg);

    Coord max_layer = 0, max_lat = 0;
    for (const auto& [site, value] : res.final_mass) {
        max_layer = std::max(max_layer, site.drift());
        max_lat = std::max(max_lat, static_cast<Coord>(std::llabs(site[0])));
    }
    const LatticeBox box{max_lat + 6, 0, max_layer + 8};
    GreenTable table(params, suggested_green_radius(params, box.drift_hi), box.drift_hi);
    const auto u = odometer_via_majorant(200.0, params, box, table.as_function());

    double worst_rel = 0.0;
    for (const auto& [site, value] : res.odometer) {
        if (value <= 1.0) continue; // sup-norm restricted to {u > 1}
        worst_rel = std::max(worst_rel, std::abs(u.at(site) - value) / value);
    }
    CHECK(worst_rel < 0.01);

    // 0 <= s - gamma <= n g(0,.)
    for (const auto& [site, value] : u) {
        CHECK(value >= 0.0);
        CHECK(value <= 200.0 * table.g(site) + 1e-7);
    }
}

TEST_CASE("odometer_via_majorant flags a box that is too small") {
    const auto params = monotone_d2();
    GreenTable table(params, suggested_green_radius(params, 60), 60);
    const LatticeBox box{5, 0, 6};
    CHECK_THROWS_AS(odometer_via_majorant(200.0, params, box, table.as_function()), BoxTooSmall);
}

TEST_CASE("natural-lazy sandpile: mass can move below layer zero") {
    ModelParams params = monotone_d2();
    params.variant = Variant::NaturalLazy;
    MassField initial;
    initial.set(site2(0, 0), 30.0);
    const auto res = stabilize(initial, params);
    bool below = false;
    for (const auto& [site, value] : res.final_mass)
        if (site.drift() < 0 && value > 0.0) below = true;
    CHECK(below);
    CHECK(res.final_mass.total() == doctest::Approx(30.0).epsilon(1e-10));
    CHECK(max_mass_relation_residual(res, initial, params) <= 1e-9);
}

TEST_CASE("stabilize rejects bad configs") {
    const auto params = monotone_d2();
    MassField initial;
    initial.set(site2(0, 0), 2.0);
    ToppleConfig cfg;
    cfg.excess_tolerance = 0.0;
    CHECK_THROWS_AS(stabilize(initial, params, cfg), std::invalid_argument);
    cfg = {};
    MassField negative;
    negative.set(site2(0, 0), -1.0);
    CHECK_THROWS_AS(stabilize(negative, params, cfg), std::invalid_argument);
}
