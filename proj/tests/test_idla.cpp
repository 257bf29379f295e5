#include <doctest.h>

#include <cmath>

#include "heatball/idla.hpp"

using namespace heatball;

namespace {

ModelParams monotone_d2(std::uint64_t seed = 7) {
    ModelParams params;
    params.d = 2;
    params.p = 0.2;
    params.variant = Variant::Monotone;
    params.seed = seed;
    return params;
}

Site site2(Coord x, Coord t) {
    Site z = Site::origin(2);
    z[0] = x;
    z[1] = t;
    return z;
}

} // namespace

TEST_CASE("one particle settles at the origin without walking") {
    const auto run = build_cluster(1, monotone_d2());
    REQUIRE(run.size() == 1);
    CHECK(run.settle_order[0].site == Site::origin(2));
    CHECK(run.settle_order[0].walk_length == 0);
}

TEST_CASE("cluster has n distinct sites and contains the origin") {
    const auto run = build_cluster(500, monotone_d2());
    const auto cluster = run.cluster();
    CHECK(cluster.size() == 500); // from_sites dedups, so equality means distinct
    CHECK(cluster.contains(Site::origin(2)));
    for (const Site& z : cluster.sites) CHECK(z.drift() >= 0);
}

TEST_CASE("second particle settles by the one-step law") {
    std::int64_t right = 0, left = 0, up = 0;
    const int runs = 100'000;
    for (int s = 0; s < runs; ++s) {
        auto run = build_cluster(2, monotone_d2(static_cast<std::uint64_t>(s)));
        const Site z = run.settle_order[1].site;
        CHECK(run.settle_order[1].walk_length == 1);
        if (z == site2(1, 0))
            ++right;
        else if (z == site2(-1, 0))
            ++left;
        else if (z == site2(0, 1))
            ++up;
        else
            FAIL("unexpected settle site");
    }
    auto within = [runs](std::int64_t count, double prob) {
        const double sigma = std::sqrt(prob * (1.0 - prob) * runs);
        return std::abs(count - prob * runs) <= 3.0 * sigma;
    };
    CHECK(within(right, 0.4));
    CHECK(within(left, 0.4));
    CHECK(within(up, 0.2));
}

TEST_CASE("batched snapshots are nested and end at the build_cluster state") {
    const auto params = monotone_d2(11);
    std::vector<std::size_t> sizes;
    ClusterSet last_snapshot;
    std::size_t checkpoints = 0;
    const auto run = build_cluster_batched(1000, params, 128, [&](const IdlaRun& snap) {
        ++checkpoints;
        const auto cluster = snap.cluster();
        // nested: every previously settled site is still present
        for (const Site& z : last_snapshot.sites) CHECK(cluster.contains(z));
        last_snapshot = cluster;
        sizes.push_back(snap.size());
    });
    CHECK(checkpoints == 8); // ceil(1000/128)
    CHECK(sizes.back() == 1000);

    const auto direct = build_cluster(1000, params);
    REQUIRE(direct.size() == run.size());
    for (std::size_t i = 0; i < run.size(); ++i) {
        CHECK(direct.settle_order[i].site == run.settle_order[i].site);
        CHECK(direct.settle_order[i].walk_length == run.settle_order[i].walk_length);
    }
}

TEST_CASE("same seed replays bit-identically; different seeds differ") {
    const auto a = build_cluster(300, monotone_d2(5));
    const auto b = build_cluster(300, monotone_d2(5));
    const auto c = build_cluster(300, monotone_d2(6));
    bool identical_ab = true, identical_ac = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        identical_ab = identical_ab && a.settle_order[i].site == b.settle_order[i].site;
        identical_ac = identical_ac && a.settle_order[i].site == c.settle_order[i].site;
    }
    CHECK(identical_ab);
    CHECK(!identical_ac);
}

TEST_CASE("natural-lazy clusters may dip below layer zero") {
    ModelParams params = monotone_d2(3);
    params.variant = Variant::NaturalLazy;
    const auto run = build_cluster(4000, params);
    bool below = false;
    for (const auto& rec : run.settle_order)
        if (rec.site.drift() < 0) below = true;
    CHECK(below);
    CHECK(run.cluster().size() == 4000);
}

TEST_CASE("step cap raises RunawayWalk") {
    IdlaOptions opts;
    opts.step_cap = 0;
    CHECK_THROWS_AS(build_cluster(2, monotone_d2(), opts), RunawayWalk);
}

TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(build_cluster(0, monotone_d2()), std::invalid_argument);
    CHECK_THROWS_AS(build_cluster_batched(10, monotone_d2(), 0, nullptr), std::invalid_argument);
}
