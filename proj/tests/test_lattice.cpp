#include <doctest.h>

#include <cmath>
#include <map>

#include "heatball/lattice.hpp"
#include "heatball/rng.hpp"

using namespace heatball;

namespace {

ModelParams monotone_d2(double p = 0.2) {
    ModelParams params;
    params.d = 2;
    params.p = p;
    params.variant = Variant::Monotone;
    return params;
}

Site site2(Coord x, Coord t) {
    Site z = Site::origin(2);
    z[0] = x;
    z[1] = t;
    return z;
}

MassField random_sparse_field(RngStream& rng, int d, int n_entries, Coord radius) {
    MassField f;
    for (int i = 0; i < n_entries; ++i) {
        Site z = Site::origin(d);
        for (int a = 0; a < d; ++a)
            z[a] = static_cast<Coord>(rng.next_below(2 * radius + 1)) - radius;
        f.set(z, 2.0 * rng.next_double() - 1.0);
    }
    return f;
}

} // namespace

TEST_CASE("neighbor weights: monotone d=2 p=0.2") {
    const auto params = monotone_d2();
    const auto nbrs = neighbors(Site::origin(2), params);
    std::map<std::pair<Coord, Coord>, double> got;
    for (const auto& [site, w] : nbrs) got[{site[0], site[1]}] = w;
    REQUIRE(got.size() == 3);
    CHECK(got[{1, 0}] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(got[{-1, 0}] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(got[{0, 1}] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("neighbor weights: natural-lazy d=2 p=0.2") {
    ModelParams params = monotone_d2();
    params.variant = Variant::NaturalLazy;
    const auto nbrs = neighbors(Site::origin(2), params);
    std::map<std::pair<Coord, Coord>, double> got;
    for (const auto& [site, w] : nbrs) got[{site[0], site[1]}] = w;
    REQUIRE(got.size() == 4);
    CHECK(got[{1, 0}] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(got[{-1, 0}] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(got[{0, -1}] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(got[{0, 1}] == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("neighbor weights sum to 1 for both variants and several d, p") {
    for (int d : {2, 3, 4}) {
        for (double p : {0.05, 0.2, 0.5, 0.9}) {
            for (auto variant : {Variant::Monotone, Variant::NaturalLazy}) {
                ModelParams params;
                params.d = d;
                params.p = p;
                params.variant = variant;
                Site z = Site::origin(d);
                z[0] = 3;
                z[d - 1] = -7;
                double total = 0.0;
                for (const auto& [site, w] : neighbors(z, params)) {
                    CHECK(w > 0.0);
                    total += w;
                }
                CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("params validation") {
    ModelParams params = monotone_d2();
    params.p = 0.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params.p = 1.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = monotone_d2();
    params.d = 1;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    params = monotone_d2();
    params.k = 0.0;
    CHECK_THROWS_AS(params.validate(), std::invalid_argument);
    // beta for both variants
    params = monotone_d2();
    CHECK(params.beta() == doctest::Approx(0.125).epsilon(1e-15));
    params.variant = Variant::NaturalLazy;
    CHECK(params.beta() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("heat_op annihilates constants on the interior") {
    const auto params = monotone_d2();
    MassField f;
    for (Coord x = -4; x <= 4; ++x)
        for (Coord t = -4; t <= 4; ++t) f.set(site2(x, t), 3.75);
    CHECK(heat_op(f, site2(0, 0), params) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(heat_op_reversed(f, site2(1, -1), params) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("heat_op of the drift coordinate is -p; reversed is +p") {
    const auto params = monotone_d2();
    MassField f;
    for (Coord x = -5; x <= 5; ++x)
        for (Coord t = -5; t <= 5; ++t) f.set(site2(x, t), static_cast<double>(t));
    CHECK(heat_op(f, site2(0, 0), params) == doctest::Approx(-0.2).epsilon(1e-14));
    CHECK(heat_op_reversed(f, site2(0, 0), params) == doctest::Approx(0.2).epsilon(1e-14));

    ModelParams lazy = params;
    lazy.variant = Variant::NaturalLazy;
    CHECK(heat_op(f, site2(0, 0), lazy) == doctest::Approx(-0.2).epsilon(1e-14));
}

TEST_CASE("heat_op matches the mass relation on the two-mass odometer") {
    // stabilizing mass 2 at the origin topples the origin once, so u = {0:1}
    const auto params = monotone_d2();
    MassField u;
    u.set(site2(0, 0), 1.0);
    CHECK(heat_op(u, site2(0, 1), params) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(heat_op(u, site2(1, 0), params) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(heat_op(u, site2(0, 0), params) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(heat_op(u, site2(0, -1), params) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("heat_op locality: a distant perturbation does not change the value") {
    const auto params = monotone_d2();
    RngStream rng(7, 0);
    MassField f = random_sparse_field(rng, 2, 60, 5);
    const double before = heat_op(f, site2(0, 0), params);
    f.add(site2(40, -30), 123.4);
    CHECK(heat_op(f, site2(0, 0), params) == before);
}

TEST_CASE("adjointness: sum eta*K(u) = sum u*K~(eta) on random sparse fields") {
    for (int d : {2, 3}) {
        for (auto variant : {Variant::Monotone, Variant::NaturalLazy}) {
            ModelParams params;
            params.d = d;
            params.p = 0.3;
            params.variant = variant;
            RngStream rng(11 + d, variant == Variant::Monotone ? 0 : 1);
            for (int trial = 0; trial < 5; ++trial) {
                MassField u = random_sparse_field(rng, d, 40, 4);
                MassField eta = random_sparse_field(rng, d, 40, 4);
                // pair over the union of supports padded by one step
                KahanSum lhs, rhs;
                MassField seen;
                auto visit = [&](const Site& z) {
                    if (seen.contains(z)) return;
                    seen.set(z, 1.0);
                    lhs.add(eta.at(z) * heat_op(u, z, params));
                    rhs.add(u.at(z) * heat_op_reversed(eta, z, params));
                };
                for (const auto& field : {u, eta})
                    for (const auto& [site, value] : field) {
                        visit(site);
                        for (const auto& [nbr, w] : neighbors(site, params)) visit(nbr);
                        // also the reverse-step neighbors
                        for (int a = 0; a < d; ++a) {
                            visit(site.shifted(a, 1));
                            visit(site.shifted(a, -1));
                        }
                    }
                const double scale = std::max(std::abs(lhs.value()), 1.0);
                CHECK(std::abs(lhs.value() - rhs.value()) / scale < 1e-12);
            }
        }
    }
}

TEST_CASE("heat_op is linear in the field") {
    const auto params = monotone_d2();
    RngStream rng(23, 0);
    MassField f = random_sparse_field(rng, 2, 50, 5);
    MassField g = random_sparse_field(rng, 2, 50, 5);
    const double a = 1.7, b = -0.4;
    MassField combo;
    for (const auto& [site, value] : f) combo.add(site, a * value);
    for (const auto& [site, value] : g) combo.add(site, b * value);
    for (Coord x = -2; x <= 2; ++x) {
        for (Coord t = -2; t <= 2; ++t) {
            const Site z = site2(x, t);
            const double direct = heat_op(combo, z, params);
            const double split = a * heat_op(f, z, params) + b * heat_op(g, z, params);
            CHECK(std::abs(direct - split) <= 1e-12 * std::max(1.0, std::abs(direct)));
        }
    }
}

TEST_CASE("weight functional examples") {
    MassField origin_only;
    origin_only.set(site2(0, 0), 17.0);
    CHECK(weight_functional(origin_only) == 0.0);

    MassField after_topple;
    after_topple.set(site2(1, 0), 0.4);
    after_topple.set(site2(-1, 0), 0.4);
    after_topple.set(site2(0, 1), 0.2);
    after_topple.set(site2(0, 0), 1.0);
    CHECK(weight_functional(after_topple) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mass field basics") {
    MassField f;
    CHECK(f.at(site2(3, 4)) == 0.0);
    f.set(site2(3, 4), 2.5);
    CHECK(f.at(site2(3, 4)) == 2.5);
    f.set(site2(3, 4), 0.0); // exact zero erases
    CHECK(!f.contains(site2(3, 4)));
    f.add(site2(1, 1), 1.0);
    f.add(site2(1, 1), 0.5);
    CHECK(f.at(site2(1, 1)) == 1.5);
    CHECK(f.total() == doctest::Approx(1.5));
}

TEST_CASE("counter rng is reproducible and stream-independent") {
    RngStream a(42, 7), b(42, 7), c(42, 8);
    for (int i = 0; i < 100; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        CHECK(va != c.next_u64());
    }
    // pure function of (seed, stream, counter)
    CHECK(counter_u64(1, 2, 3) == counter_u64(1, 2, 3));
    CHECK(counter_double(5, 6, 7) >= 0.0);
    CHECK(counter_double(5, 6, 7) < 1.0);
}
