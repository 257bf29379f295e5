#include "heatball/sandpile.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "heatball/rng.hpp"

namespace heatball {

std::string to_string(SweepOrder order) {
    switch (order) {
        case SweepOrder::FifoQueue: return "fifo";
        case SweepOrder::LayerSweep: return "layer";
        case SweepOrder::RandomPermutation: return "random";
    }
    return "fifo";
}

SweepOrder sweep_order_from_string(const std::string& name) {
    if (name == "fifo") return SweepOrder::FifoQueue;
    if (name == "layer") return SweepOrder::LayerSweep;
    if (name == "random") return SweepOrder::RandomPermutation;
    throw std::invalid_argument("unknown sweep order '" + name +
                                "' (expected fifo, layer or random)");
}

void ToppleConfig::validate() const {
    if (!(excess_tolerance > 0.0) || excess_tolerance > 1e-6)
        throw std::invalid_argument("excess_tolerance must lie in (0, 1e-6]");
    if (max_sweeps < 1) throw std::invalid_argument("max_sweeps must be positive");
}

void topple(MassField& mass, MassField& odometer, const Site& z, const ModelParams& params) {
    const double m = mass.at(z);
    if (!(m > 1.0)) throw NotFullError("topple: site " + z.to_string() + " has mass <= 1");
    const double excess = m - 1.0;
    mass.set(z, 1.0);
    odometer.add(z, excess);
    for (const auto& [site, weight] : neighbors(z, params)) mass.add(site, excess * weight);
}

namespace {

// Dense working box for stabilization: lateral cube [-R, R]^{d-1} times drift
// layers [drift_lo, drift_hi], row-major with lateral axis 0 fastest and the
// drift axis slowest.
struct DenseGrid {
    int d;
    Coord lat_radius;
    Coord drift_lo, drift_hi;
    std::int64_t lat_side = 0;
    std::int64_t lat_count = 0;
    std::int64_t total = 0;
    std::vector<std::int64_t> lat_strides;
    std::vector<double> mass;
    std::vector<double> odometer;
    std::vector<std::uint8_t> queued;
    bool allow_drift_down;

    DenseGrid(int dim, Coord R, Coord lo, Coord hi, bool drift_down)
        : d(dim), lat_radius(R), drift_lo(lo), drift_hi(hi), allow_drift_down(drift_down) {
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
        mass.assign(static_cast<std::size_t>(total), 0.0);
        odometer.assign(static_cast<std::size_t>(total), 0.0);
        queued.assign(static_cast<std::size_t>(total), 0);
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

    Site site_of(std::int64_t idx) const {
        Site z = Site::origin(d);
        z[d - 1] = drift_lo + idx / lat_count;
        std::int64_t rem = idx % lat_count;
        for (int i = 0; i < d - 1; ++i) {
            z[i] = rem % lat_side - lat_radius;
            rem /= lat_side;
        }
        return z;
    }

    // True when a toppling at idx could write outside the array or wrap to a
    // different row.
    bool on_face(std::int64_t idx) const {
        std::int64_t rem = idx % lat_count;
        for (int i = 0; i < d - 1; ++i) {
            const std::int64_t c = rem % lat_side;
            if (c == 0 || c == lat_side - 1) return true;
            rem /= lat_side;
        }
        const std::int64_t layer = idx / lat_count;
        if (layer == drift_hi - drift_lo) return true;
        if (allow_drift_down && layer == 0) return true;
        return false;
    }

    void grow() {
        const Coord newR = lat_radius + std::max<Coord>(8, lat_radius / 4);
        const Coord span = drift_hi - drift_lo + 1;
        const Coord newHi = drift_hi + std::max<Coord>(16, span / 4);
        const Coord newLo = allow_drift_down ? drift_lo - std::max<Coord>(16, span / 4) : drift_lo;
        DenseGrid bigger(d, newR, newLo, newHi, allow_drift_down);
        for (std::int64_t idx = 0; idx < total; ++idx) {
            if (mass[static_cast<std::size_t>(idx)] == 0.0 &&
                odometer[static_cast<std::size_t>(idx)] == 0.0 && !queued[static_cast<std::size_t>(idx)])
                continue;
            const std::int64_t nidx = bigger.index(site_of(idx));
            bigger.mass[static_cast<std::size_t>(nidx)] = mass[static_cast<std::size_t>(idx)];
            bigger.odometer[static_cast<std::size_t>(nidx)] = odometer[static_cast<std::size_t>(idx)];
            bigger.queued[static_cast<std::size_t>(nidx)] = queued[static_cast<std::size_t>(idx)];
        }
        *this = std::move(bigger);
    }
};

struct FlatLaw {
    std::vector<std::int64_t> delta;
    std::vector<double> weight;

    FlatLaw(const StepLaw& law, const DenseGrid& grid) {
        for (const auto& e : law.entries) {
            const std::int64_t stride = e.axis == grid.d - 1
                                            ? grid.lat_count
                                            : grid.lat_strides[static_cast<std::size_t>(e.axis)];
            delta.push_back(e.delta * stride);
            weight.push_back(e.weight);
        }
    }
};

struct Engine {
    const ModelParams& params;
    const ToppleConfig& cfg;
    DenseGrid grid;
    FlatLaw law;
    StepLaw step_law;
    std::deque<std::int64_t> queue;
    std::int64_t sweeps = 0;
    double activation; // enqueue threshold: 1 + excess_tolerance

    Engine(const MassField& initial, const ModelParams& p, const ToppleConfig& c)
        : params(p),
          cfg(c),
          grid(make_grid(initial, p)),
          law(StepLaw::make(p), grid),
          step_law(StepLaw::make(p)),
          activation(1.0 + c.excess_tolerance) {
        for (const Site& z : initial.sorted_support()) {
            const std::int64_t idx = grid.index(z);
            grid.mass[static_cast<std::size_t>(idx)] = initial.at(z);
        }
    }

    static DenseGrid make_grid(const MassField& initial, const ModelParams& p) {
        const double M = std::max(initial.total(), 1.0);
        Coord R = static_cast<Coord>(std::ceil(2.0 * std::pow(M, 1.0 / (p.d + 1)))) + 4;
        Coord hi = static_cast<Coord>(std::ceil(0.6 * std::pow(M, 2.0 / (p.d + 1)))) + 4;
        Coord lo = 0;
        for (const auto& [site, value] : initial) {
            for (int i = 0; i < p.d - 1; ++i)
                R = std::max(R, static_cast<Coord>(std::llabs(site[i])) + 2);
            hi = std::max(hi, site.drift() + 2);
            lo = std::min(lo, site.drift());
        }
        const bool down = p.variant == Variant::NaturalLazy;
        if (down) lo -= 8;
        return DenseGrid(p.d, R, lo, hi, down);
    }

    void refresh_after_growth() { law = FlatLaw(step_law, grid); }

    // Topples idx, growing the box first when idx lies on a face. Returns the
    // (possibly relocated) index actually toppled, or -1 when idx was not full.
    std::int64_t topple_at(std::int64_t idx) {
        while (grid.on_face(idx)) {
            const Site z = grid.site_of(idx);
            grow_and_remap_queue();
            idx = grid.index(z);
        }
        const double m = grid.mass[static_cast<std::size_t>(idx)];
        if (!(m > 1.0)) return -1;
        const double excess = m - 1.0;
        grid.mass[static_cast<std::size_t>(idx)] = 1.0;
        grid.odometer[static_cast<std::size_t>(idx)] += excess;
        for (std::size_t e = 0; e < law.delta.size(); ++e)
            grid.mass[static_cast<std::size_t>(idx + law.delta[e])] += excess * law.weight[e];
        return idx;
    }

    void grow_and_remap_queue() {
        std::vector<Site> pending;
        pending.reserve(queue.size());
        for (std::int64_t qi : queue) pending.push_back(grid.site_of(qi));
        grid.grow();
        refresh_after_growth();
        queue.clear();
        for (const Site& z : pending) queue.push_back(grid.index(z));
    }

    void enqueue_if_full(std::int64_t idx) {
        if (!grid.queued[static_cast<std::size_t>(idx)] &&
            grid.mass[static_cast<std::size_t>(idx)] > activation) {
            grid.queued[static_cast<std::size_t>(idx)] = 1;
            queue.push_back(idx);
        }
    }

    void seed_queue() {
        for (std::int64_t idx = 0; idx < grid.total; ++idx) enqueue_if_full(idx);
    }

    void run_fifo() {
        seed_queue();
        while (!queue.empty()) {
            if (++sweeps > cfg.max_sweeps) throw_nonconvergence();
            std::size_t generation = queue.size();
            while (generation-- > 0) {
                std::int64_t idx = queue.front();
                queue.pop_front();
                grid.queued[static_cast<std::size_t>(idx)] = 0;
                idx = topple_at(idx);
                if (idx < 0) continue;
                for (std::size_t e = 0; e < law.delta.size(); ++e)
                    enqueue_if_full(idx + law.delta[e]);
            }
        }
    }

    void run_random() {
        seed_queue();
        std::uint64_t sweep_id = 0;
        while (!queue.empty()) {
            if (++sweeps > cfg.max_sweeps) throw_nonconvergence();
            std::vector<std::int64_t> order(queue.begin(), queue.end());
            queue.clear();
            for (std::int64_t idx : order) grid.queued[static_cast<std::size_t>(idx)] = 0;
            RngStream rng(params.seed, rng_space::kSweeps + sweep_id++);
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_below(i))]);
            for (std::int64_t idx : order) {
                idx = topple_at(idx);
                if (idx < 0) continue;
                for (std::size_t e = 0; e < law.delta.size(); ++e)
                    enqueue_if_full(idx + law.delta[e]);
            }
        }
    }

    // Monotone cascade: mass never moves to a lower layer, so each layer can
    // be fully relaxed before moving up.
    void run_layer_monotone() {
        for (std::int64_t layer = 0;; ++layer) {
            if (layer > grid.drift_hi - grid.drift_lo) break;
            bool layer_active = true;
            while (layer_active) {
                if (++sweeps > cfg.max_sweeps) throw_nonconvergence();
                layer_active = false;
                std::int64_t base = layer * grid.lat_count;
                for (std::int64_t li = 0; li < grid.lat_count; ++li) {
                    const std::int64_t idx = base + li;
                    if (grid.mass[static_cast<std::size_t>(idx)] > activation) {
                        const std::int64_t moved = topple_at(idx);
                        layer_active = true;
                        if (moved != idx) {
                            // box grew; restart this layer pass with fresh indices
                            base = layer * grid.lat_count;
                            li = -1;
                        }
                    }
                }
            }
        }
    }

    // NaturalLazy: repeated bottom-up passes over the whole box until quiet.
    void run_layer_lazy() {
        bool active = true;
        while (active) {
            if (++sweeps > cfg.max_sweeps) throw_nonconvergence();
            active = false;
            for (std::int64_t idx = 0; idx < grid.total; ++idx) {
                if (grid.mass[static_cast<std::size_t>(idx)] > activation) {
                    const std::int64_t moved = topple_at(idx);
                    active = true;
                    if (moved != idx) idx = -1; // box grew, restart the pass
                }
            }
        }
    }

    void throw_nonconvergence() {
        throw NonConvergence("sandpile stabilization exceeded max_sweeps=" +
                             std::to_string(cfg.max_sweeps) + " with residual excess " +
                             std::to_string(residual()));
    }

    double residual() const {
        double r = 0.0;
        for (double m : grid.mass) r = std::max(r, m - 1.0);
        return std::max(r, 0.0);
    }

    SandpileResult finish() {
        SandpileResult out;
        out.sweeps = sweeps;
        out.max_residual_excess = residual();
        for (std::int64_t idx = 0; idx < grid.total; ++idx) {
            const double m = grid.mass[static_cast<std::size_t>(idx)];
            const double u = grid.odometer[static_cast<std::size_t>(idx)];
            if (m != 0.0) out.final_mass.set(grid.site_of(idx), m);
            if (u != 0.0) out.odometer.set(grid.site_of(idx), u);
        }
        return out;
    }
};

} // namespace

SandpileResult stabilize(const MassField& initial, const ModelParams& params,
                         const ToppleConfig& cfg) {
    params.validate();
    cfg.validate();
    if (initial.empty()) return {};
    for (const auto& [site, value] : initial) {
        if (site.dim != params.d)
            throw std::invalid_argument("initial mass site dimension does not match params");
        if (value < 0.0) throw std::invalid_argument("initial mass must be nonnegative");
    }

    Engine engine(initial, params, cfg);
    switch (cfg.sweep_order) {
        case SweepOrder::FifoQueue: engine.run_fifo(); break;
        case SweepOrder::RandomPermutation: engine.run_random(); break;
        case SweepOrder::LayerSweep:
            if (params.variant == Variant::Monotone)
                engine.run_layer_monotone();
            else
                engine.run_layer_lazy();
            break;
    }
    return engine.finish();
}

SandpileResult stabilize_point_mass(double n, const ModelParams& params, const ToppleConfig& cfg) {
    if (!(n > 0.0)) throw std::invalid_argument("point mass must be positive");
    MassField initial;
    initial.set(Site::origin(params.d), params.k * n);
    return stabilize(initial, params, cfg);
}

bool ClusterSet::contains(const Site& z) const {
    return std::binary_search(sites.begin(), sites.end(), z);
}

ClusterSet ClusterSet::from_sites(std::vector<Site> sites) {
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
    ClusterSet out;
    out.sites = std::move(sites);
    return out;
}

ClusterSet extract_cluster(const SandpileResult& result, double threshold) {
    std::vector<Site> sites;
    for (const auto& [site, value] : result.final_mass)
        if (value > threshold) sites.push_back(site);
    return ClusterSet::from_sites(std::move(sites));
}

namespace {

// Lateral plane storage for the majorant solve.
struct Plane {
    int axes;
    Coord radius;
    std::int64_t side, count;
    std::vector<std::int64_t> strides;

    Plane(int lateral_axes, Coord R) : axes(lateral_axes), radius(R) {
        side = 2 * R + 1;
        std::int64_t s = 1;
        strides.assign(static_cast<std::size_t>(axes), 0);
        for (int i = 0; i < axes; ++i) {
            strides[static_cast<std::size_t>(i)] = s;
            s *= side;
        }
        count = s;
    }

    void coords(std::int64_t idx, std::vector<Coord>& out) const {
        for (int i = 0; i < axes; ++i) {
            out[static_cast<std::size_t>(i)] = idx % side - radius;
            idx /= side;
        }
    }

    bool interior(std::int64_t idx) const {
        for (int i = 0; i < axes; ++i) {
            const std::int64_t c = idx % side;
            if (c == 0 || c == side - 1) return false;
            idx /= side;
        }
        return true;
    }

    // true when within `ring` cells of a face
    bool near_face(std::int64_t idx, std::int64_t ring) const {
        for (int i = 0; i < axes; ++i) {
            const std::int64_t c = idx % side;
            if (c <= ring || c >= side - 1 - ring) return true;
            idx /= side;
        }
        return false;
    }
};

} // namespace

MassField odometer_via_majorant(double n, const ModelParams& params, const LatticeBox& box,
                                const std::function<double(const Site&)>& green,
                                const MajorantOptions& opts) {
    params.validate();
    if (!(n > 0.0)) throw std::invalid_argument("odometer_via_majorant: n must be positive");
    if (box.lat_radius < 2 || box.drift_hi <= box.drift_lo)
        throw std::invalid_argument("odometer_via_majorant: degenerate box");
    if (params.variant == Variant::Monotone && box.drift_lo > 0)
        throw std::invalid_argument(
            "odometer_via_majorant: monotone box must start at or below layer 0");

    const double a = params.lateral_quadratic_coeff();
    const double tol = opts.tol_scale * n;
    const double contact_tol = opts.contact_tol_scale * n;
    const Plane plane(params.d - 1, box.lat_radius);
    const double lat_w = params.lateral_weight();

    std::vector<Coord> lat(static_cast<std::size_t>(plane.axes), 0);
    auto gamma_at = [&](std::int64_t li, Coord layer, std::vector<Coord>& scratch) {
        plane.coords(li, scratch);
        double q = 0.0;
        Site z = Site::origin(params.d);
        for (int i = 0; i < plane.axes; ++i) {
            const double c = static_cast<double>(scratch[static_cast<std::size_t>(i)]);
            q += c * c;
            z[i] = scratch[static_cast<std::size_t>(i)];
        }
        z[params.d - 1] = layer;
        return static_cast<double>(layer) - a * q - n * green(z);
    };

    MassField u_field;
    std::int64_t iterations = 0;

    if (params.variant == Variant::Monotone) {
        // March layers upward; within each layer the obstacle projection is a
        // contraction, so Gauss-Seidel converges before the next layer starts.
        std::vector<double> s_below(static_cast<std::size_t>(plane.count));
        std::vector<double> s(static_cast<std::size_t>(plane.count));
        std::vector<double> gamma(static_cast<std::size_t>(plane.count));
        for (std::int64_t li = 0; li < plane.count; ++li) {
            plane.coords(li, lat);
            double q = 0.0;
            for (int i = 0; i < plane.axes; ++i) {
                const double c = static_cast<double>(lat[static_cast<std::size_t>(i)]);
                q += c * c;
            }
            s_below[static_cast<std::size_t>(li)] = static_cast<double>(box.drift_lo - 1) - a * q;
        }
        for (Coord layer = box.drift_lo; layer <= box.drift_hi; ++layer) {
            for (std::int64_t li = 0; li < plane.count; ++li)
                gamma[static_cast<std::size_t>(li)] = gamma_at(li, layer, lat);
            s = gamma;
            for (;;) {
                if (++iterations > opts.max_iterations)
                    throw NonConvergence("odometer_via_majorant: sweep limit reached at layer " +
                                         std::to_string(layer));
                double maxupd = 0.0;
                for (std::int64_t li = 0; li < plane.count; ++li) {
                    if (!plane.interior(li)) continue;
                    double received = params.p * s_below[static_cast<std::size_t>(li)];
                    for (int i = 0; i < plane.axes; ++i) {
                        const std::int64_t st = plane.strides[static_cast<std::size_t>(i)];
                        received += lat_w * (s[static_cast<std::size_t>(li - st)] +
                                             s[static_cast<std::size_t>(li + st)]);
                    }
                    const double cand = std::max(gamma[static_cast<std::size_t>(li)], received);
                    maxupd = std::max(maxupd, std::abs(cand - s[static_cast<std::size_t>(li)]));
                    s[static_cast<std::size_t>(li)] = cand;
                }
                if (maxupd <= tol) break;
            }
            for (std::int64_t li = 0; li < plane.count; ++li) {
                const double u = s[static_cast<std::size_t>(li)] - gamma[static_cast<std::size_t>(li)];
                if (u > contact_tol) { // values below the tolerance are rounding dust
                    if (plane.near_face(li, 1) || layer == box.drift_hi) {
                        if (u > contact_tol)
                            throw BoxTooSmall(
                                "odometer_via_majorant: positive odometer at the box "
                                "boundary (layer " +
                                std::to_string(layer) + "); widen the box");
                    }
                    plane.coords(li, lat);
                    Site z = Site::origin(params.d);
                    for (int i = 0; i < plane.axes; ++i) z[i] = lat[static_cast<std::size_t>(i)];
                    z[params.d - 1] = layer;
                    u_field.set(z, u);
                }
            }
            s_below.swap(s);
        }
        return u_field;
    }

    // NaturalLazy: bidirectional drift coupling, solve by global sweeps with
    // all faces pinned to the obstacle.
    const Coord layers = box.drift_hi - box.drift_lo + 1;
    const std::int64_t totaln = plane.count * layers;
    std::vector<double> s(static_cast<std::size_t>(totaln));
    std::vector<double> gamma(static_cast<std::size_t>(totaln));
    for (Coord layer = box.drift_lo; layer <= box.drift_hi; ++layer) {
        const std::int64_t base = (layer - box.drift_lo) * plane.count;
        for (std::int64_t li = 0; li < plane.count; ++li)
            gamma[static_cast<std::size_t>(base + li)] = gamma_at(li, layer, lat);
    }
    s = gamma;
    const double w_up = params.p + lat_w; // weight of the neighbor below
    const double w_down = lat_w;          // weight of the neighbor above
    for (;;) {
        if (++iterations > opts.max_iterations)
            throw NonConvergence("odometer_via_majorant: sweep limit reached");
        double maxupd = 0.0;
        for (Coord layer = box.drift_lo + 1; layer < box.drift_hi; ++layer) {
            const std::int64_t base = (layer - box.drift_lo) * plane.count;
            for (std::int64_t li = 0; li < plane.count; ++li) {
                if (!plane.interior(li)) continue;
                const std::int64_t idx = base + li;
                double received = w_up * s[static_cast<std::size_t>(idx - plane.count)] +
                                  w_down * s[static_cast<std::size_t>(idx + plane.count)];
                for (int i = 0; i < plane.axes; ++i) {
                    const std::int64_t st = plane.strides[static_cast<std::size_t>(i)];
                    received += lat_w * (s[static_cast<std::size_t>(idx - st)] +
                                         s[static_cast<std::size_t>(idx + st)]);
                }
                const double cand = std::max(gamma[static_cast<std::size_t>(idx)], received);
                maxupd = std::max(maxupd, std::abs(cand - s[static_cast<std::size_t>(idx)]));
                s[static_cast<std::size_t>(idx)] = cand;
            }
        }
        if (maxupd <= tol) break;
    }
    for (Coord layer = box.drift_lo; layer <= box.drift_hi; ++layer) {
        const std::int64_t base = (layer - box.drift_lo) * plane.count;
        for (std::int64_t li = 0; li < plane.count; ++li) {
            const double u =
                s[static_cast<std::size_t>(base + li)] - gamma[static_cast<std::size_t>(base + li)];
            if (u > contact_tol) {
                if (plane.near_face(li, 1) || layer <= box.drift_lo + 1 || layer >= box.drift_hi - 1) {
                    if (u > contact_tol)
                        throw BoxTooSmall("odometer_via_majorant: positive odometer at the box "
                                          "boundary; widen the box");
                }
                plane.coords(li, lat);
                Site z = Site::origin(params.d);
                for (int i = 0; i < plane.axes; ++i) z[i] = lat[static_cast<std::size_t>(i)];
                z[params.d - 1] = layer;
                u_field.set(z, u);
            }
        }
    }
    return u_field;
}

} // namespace heatball
