#include "heatball/idla.hpp"

#include <algorithm>
#include <cmath>

namespace heatball {

ClusterSet IdlaRun::cluster() const {
    std::vector<Site> sites;
    sites.reserve(settle_order.size());
    for (const auto& rec : settle_order) sites.push_back(rec.site);
    return ClusterSet::from_sites(std::move(sites));
}

namespace {

// Byte occupancy over a growable box; queries outside the box read as empty.
struct OccupancyGrid {
    int d;
    Coord lat_radius;
    Coord drift_lo, drift_hi;
    std::int64_t lat_side = 0, lat_count = 0, total = 0;
    std::vector<std::int64_t> lat_strides;
    std::vector<std::uint8_t> occ;

    OccupancyGrid(int dim, Coord R, Coord lo, Coord hi) : d(dim), lat_radius(R), drift_lo(lo), drift_hi(hi) {
        allocate();
    }

    void allocate() {
        lat_side = 2 * lat_radius + 1;
        lat_strides.assign(static_cast<std::size_t>(d - 1), 0);
        std::int64_t s = 1;
        for (int i = 0; i < d - 1; ++i) {
            lat_strides[static_cast<std::size_t>(i)] = s;
            s *= lat_side;
        }
        lat_count = s;
        total = lat_count * (drift_hi - drift_lo + 1);
        occ.assign(static_cast<std::size_t>(total), 0);
    }

    std::int64_t index(const Site& z) const {
        std::int64_t idx = 0;
        for (int i = 0; i < d - 1; ++i) {
            const Coord c = z[i];
            if (c < -lat_radius || c > lat_radius) return -1;
            idx += (c + lat_radius) * lat_strides[static_cast<std::size_t>(i)];
        }
        const Coord zd = z.drift();
        if (zd < drift_lo || zd > drift_hi) return -1;
        return idx + (zd - drift_lo) * lat_count;
    }

    bool occupied(const Site& z) const {
        const std::int64_t idx = index(z);
        return idx >= 0 && occ[static_cast<std::size_t>(idx)] != 0;
    }

    void grow_to_fit(const Site& z, const std::vector<SettleRecord>& history) {
        Coord R = lat_radius, lo = drift_lo, hi = drift_hi;
        while (true) {
            bool ok = true;
            for (int i = 0; i < d - 1; ++i)
                if (std::llabs(z[i]) > R) ok = false;
            if (z.drift() < lo || z.drift() > hi) ok = false;
            if (ok) break;
            R += std::max<Coord>(8, R / 4);
            const Coord span = hi - lo + 1;
            if (z.drift() > hi) hi += std::max<Coord>(16, span / 4);
            if (z.drift() < lo) lo -= std::max<Coord>(16, span / 4);
        }
        lat_radius = R;
        drift_lo = lo;
        drift_hi = hi;
        allocate();
        for (const auto& rec : history) occ[static_cast<std::size_t>(index(rec.site))] = 1;
    }

    void mark(const Site& z, const std::vector<SettleRecord>& history) {
        std::int64_t idx = index(z);
        if (idx < 0) {
            grow_to_fit(z, history);
            idx = index(z);
        }
        occ[static_cast<std::size_t>(idx)] = 1;
    }
};

} // namespace

IdlaRun build_cluster_batched(std::int64_t n, const ModelParams& params,
                              std::int64_t checkpoint_every,
                              const std::function<void(const IdlaRun&)>& on_checkpoint,
                              const IdlaOptions& opts) {
    params.validate();
    if (n < 1) throw std::invalid_argument("build_cluster requires n >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");

    const StepLaw law = StepLaw::make(params);
    IdlaRun run;
    run.params = params;
    run.settle_order.reserve(static_cast<std::size_t>(n));

    const Coord R0 = static_cast<Coord>(std::ceil(2.0 * std::pow(static_cast<double>(n),
                                                                 1.0 / (params.d + 1)))) + 8;
    const Coord hi0 = static_cast<Coord>(std::ceil(0.5 * std::pow(static_cast<double>(n),
                                                                  2.0 / (params.d + 1)))) + 8;
    const Coord lo0 = params.variant == Variant::NaturalLazy ? -hi0 / 4 - 8 : 0;
    OccupancyGrid grid(params.d, R0, lo0, hi0);

    for (std::int64_t j = 1; j <= n; ++j) {
        SettleRecord rec;
        rec.particle = j;
        if (j == 1) {
            rec.site = Site::origin(params.d); // first particle settles without walking
        } else {
            WalkState w;
            w.position = Site::origin(params.d);
            w.rng_stream = static_cast<std::uint64_t>(j);
            while (grid.occupied(w.position)) {
                step_inplace(w, law, params.seed);
                if (w.steps_taken > opts.step_cap)
                    throw RunawayWalk("walk " + std::to_string(j) + " exceeded the step cap");
            }
            rec.site = w.position;
            rec.walk_length = w.steps_taken;
        }
        run.settle_order.push_back(rec);
        grid.mark(rec.site, run.settle_order);
        if (on_checkpoint && (j % checkpoint_every == 0 || j == n)) on_checkpoint(run);
    }
    return run;
}

IdlaRun build_cluster(std::int64_t n, const ModelParams& params, const IdlaOptions& opts) {
    return build_cluster_batched(n, params, n, nullptr, opts);
}

} // namespace heatball
