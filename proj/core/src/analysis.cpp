#include "heatball/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace heatball {

double NormalizedSet::cell_volume() const {
    double v = time_scale;
    for (int i = 0; i < d - 1; ++i) v *= lateral_scale;
    return v;
}

NormalizedSet normalize(const ClusterSet& cluster, std::int64_t n, int d) {
    if (n < 1) throw std::invalid_argument("normalize requires n >= 1");
    NormalizedSet out;
    out.sites = cluster.sites;
    out.n = n;
    out.d = d;
    out.lateral_scale = std::pow(static_cast<double>(n), -1.0 / (d + 1));
    out.time_scale = std::pow(static_cast<double>(n), -2.0 / (d + 1));
    return out;
}

Site preimage_site(const NormalizedSet& set, std::span<const double> x, double t) {
    if (static_cast<int>(x.size()) != set.d - 1)
        throw std::invalid_argument("preimage_site expects d-1 lateral coordinates");
    Site z = Site::origin(set.d);
    for (int i = 0; i < set.d - 1; ++i)
        z[i] = static_cast<Coord>(std::floor(x[static_cast<std::size_t>(i)] / set.lateral_scale));
    z[set.d - 1] = static_cast<Coord>(std::floor(t / set.time_scale));
    return z;
}

bool Window::contains(std::span<const double> p) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
}

Window Window::lateral_box(int d, double half, double t_lo, double t_hi) {
    Window w;
    w.lo.assign(static_cast<std::size_t>(d), -half);
    w.hi.assign(static_cast<std::size_t>(d), half);
    w.lo.back() = t_lo;
    w.hi.back() = t_hi;
    return w;
}

PointSet cell_centers(const NormalizedSet& set, const Window* clip) {
    PointSet out;
    out.dim = set.d;
    std::vector<double> p(static_cast<std::size_t>(set.d));
    for (const Site& z : set.sites) {
        for (int i = 0; i < set.d - 1; ++i)
            p[static_cast<std::size_t>(i)] = (static_cast<double>(z[i]) + 0.5) * set.lateral_scale;
        p[static_cast<std::size_t>(set.d - 1)] =
            (static_cast<double>(z.drift()) + 0.5) * set.time_scale;
        if (!clip || clip->contains(p)) out.push(p);
    }
    return out;
}

PointSet shape_points(const LimitShape& shape, const Window* clip) {
    const SpaceTimeGrid& g = shape.grid;
    PointSet out;
    out.dim = g.d;
    std::vector<double> p(static_cast<std::size_t>(g.d));
    std::vector<std::int64_t> idx(static_cast<std::size_t>(g.d - 1));
    for (std::int64_t it = 0; it < g.nt; ++it) {
        p[static_cast<std::size_t>(g.d - 1)] = g.time_coord(it);
        for (std::int64_t lat = 0; lat < g.lat_count; ++lat) {
            if (!shape.member(it, lat)) continue;
            g.lateral_multi(lat, idx);
            for (int i = 0; i < g.d - 1; ++i)
                p[static_cast<std::size_t>(i)] = g.lateral_coord(idx[static_cast<std::size_t>(i)]);
            if (!clip || clip->contains(p)) out.push(p);
        }
    }
    return out;
}

double half_cell_diagonal(const NormalizedSet& set) {
    double d2 = set.time_scale * set.time_scale;
    for (int i = 0; i < set.d - 1; ++i) d2 += set.lateral_scale * set.lateral_scale;
    return 0.5 * std::sqrt(d2);
}

double half_cell_diagonal(const SpaceTimeGrid& grid) {
    double d2 = grid.dt * grid.dt;
    for (int i = 0; i < grid.d - 1; ++i) d2 += grid.dx * grid.dx;
    return 0.5 * std::sqrt(d2);
}

namespace {

// Uniform bucket grid for nearest-distance queries.
class BucketIndex {
public:
    BucketIndex(const PointSet& pts, double bucket_size) : pts_(pts), h_(bucket_size) {
        const int dim = pts.dim;
        lo_.assign(static_cast<std::size_t>(dim), std::numeric_limits<double>::infinity());
        std::vector<double> hi(static_cast<std::size_t>(dim),
                               -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto p = pts.point(i);
            for (int a = 0; a < dim; ++a) {
                lo_[static_cast<std::size_t>(a)] = std::min(lo_[static_cast<std::size_t>(a)], p[static_cast<std::size_t>(a)]);
                hi[static_cast<std::size_t>(a)] = std::max(hi[static_cast<std::size_t>(a)], p[static_cast<std::size_t>(a)]);
            }
        }
        counts_.assign(static_cast<std::size_t>(dim), 1);
        strides_.assign(static_cast<std::size_t>(dim), 1);
        std::int64_t total = 1;
        for (int a = 0; a < dim; ++a) {
            counts_[static_cast<std::size_t>(a)] = std::max<std::int64_t>(
                1, static_cast<std::int64_t>((hi[static_cast<std::size_t>(a)] -
                                              lo_[static_cast<std::size_t>(a)]) / h_) + 1);
            strides_[static_cast<std::size_t>(a)] = total;
            total *= counts_[static_cast<std::size_t>(a)];
        }
        heads_.assign(static_cast<std::size_t>(total), -1);
        next_.assign(pts.size(), -1);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::int64_t b = bucket_of(pts.point(i));
            next_[i] = heads_[static_cast<std::size_t>(b)];
            heads_[static_cast<std::size_t>(b)] = static_cast<std::int64_t>(i);
        }
    }

    double nearest_distance(std::span<const double> q) const {
        const int dim = pts_.dim;
        std::vector<std::int64_t> qc(static_cast<std::size_t>(dim));
        for (int a = 0; a < dim; ++a)
            qc[static_cast<std::size_t>(a)] = clampi(
                static_cast<std::int64_t>((q[static_cast<std::size_t>(a)] -
                                           lo_[static_cast<std::size_t>(a)]) / h_),
                0, counts_[static_cast<std::size_t>(a)] - 1);
        double best = std::numeric_limits<double>::infinity();
        std::int64_t max_ring = 0;
        for (int a = 0; a < dim; ++a) max_ring = std::max(max_ring, counts_[static_cast<std::size_t>(a)]);
        for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
            // once a neighbor is found, rings beyond best/h cannot improve
            if (best < std::numeric_limits<double>::infinity() &&
                static_cast<double>(ring - 1) * h_ > best)
                break;
            scan_ring(q, qc, ring, best);
        }
        return best;
    }

private:
    static std::int64_t clampi(std::int64_t v, std::int64_t lo, std::int64_t hi) {
        return v < lo ? lo : (v > hi ? hi : v);
    }

    std::int64_t bucket_of(std::span<const double> p) const {
        std::int64_t b = 0;
        for (int a = 0; a < pts_.dim; ++a) {
            const std::int64_t c = clampi(
                static_cast<std::int64_t>((p[static_cast<std::size_t>(a)] -
                                           lo_[static_cast<std::size_t>(a)]) / h_),
                0, counts_[static_cast<std::size_t>(a)] - 1);
            b += c * strides_[static_cast<std::size_t>(a)];
        }
        return b;
    }

    void scan_bucket(std::span<const double> q, std::int64_t bucket, double& best) const {
        for (std::int64_t i = heads_[static_cast<std::size_t>(bucket)]; i >= 0;
             i = next_[static_cast<std::size_t>(i)]) {
            auto p = pts_.point(static_cast<std::size_t>(i));
            double d2 = 0.0;
            for (int a = 0; a < pts_.dim; ++a) {
                const double dd = p[static_cast<std::size_t>(a)] - q[static_cast<std::size_t>(a)];
                d2 += dd * dd;
            }
            best = std::min(best, std::sqrt(d2));
        }
    }

    // visit all buckets at Chebyshev distance `ring` from qc
    void scan_ring(std::span<const double> q, const std::vector<std::int64_t>& qc,
                   std::int64_t ring, double& best) const {
        const int dim = pts_.dim;
        std::vector<std::int64_t> c(static_cast<std::size_t>(dim));
        std::vector<std::int64_t> lo(static_cast<std::size_t>(dim)), hi(static_cast<std::size_t>(dim));
        bool any = false;
        for (int a = 0; a < dim; ++a) {
            lo[static_cast<std::size_t>(a)] =
                std::max<std::int64_t>(0, qc[static_cast<std::size_t>(a)] - ring);
            hi[static_cast<std::size_t>(a)] = std::min<std::int64_t>(
                counts_[static_cast<std::size_t>(a)] - 1, qc[static_cast<std::size_t>(a)] + ring);
            if (lo[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) return;
            any = true;
        }
        if (!any) return;
        c = lo;
        for (;;) {
            // keep only the shell (some coordinate at exactly ring distance)
            bool shell = ring == 0;
            for (int a = 0; a < dim && !shell; ++a)
                shell = std::llabs(c[static_cast<std::size_t>(a)] - qc[static_cast<std::size_t>(a)]) == ring;
            if (shell) {
                std::int64_t b = 0;
                for (int a = 0; a < dim; ++a)
                    b += c[static_cast<std::size_t>(a)] * strides_[static_cast<std::size_t>(a)];
                scan_bucket(q, b, best);
            }
            int a = 0;
            for (; a < dim; ++a) {
                if (++c[static_cast<std::size_t>(a)] <= hi[static_cast<std::size_t>(a)]) break;
                c[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
            }
            if (a == dim) break;
        }
    }

    const PointSet& pts_;
    double h_;
    std::vector<double> lo_;
    std::vector<std::int64_t> counts_, strides_, heads_, next_;
};

double directed_hausdorff(const PointSet& A, const BucketIndex& b_index) {
    double worst = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i)
        worst = std::max(worst, b_index.nearest_distance(A.point(i)));
    return worst;
}

double pick_bucket_size(const PointSet& A, const PointSet& B) {
    // aim for a modest number of points per bucket based on the denser set
    const std::size_t n = std::max(A.size(), B.size());
    double span = 0.0;
    for (int a = 0; a < A.dim; ++a) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = 0; i < A.size(); ++i) {
            lo = std::min(lo, A.point(i)[static_cast<std::size_t>(a)]);
            hi = std::max(hi, A.point(i)[static_cast<std::size_t>(a)]);
        }
        for (std::size_t i = 0; i < B.size(); ++i) {
            lo = std::min(lo, B.point(i)[static_cast<std::size_t>(a)]);
            hi = std::max(hi, B.point(i)[static_cast<std::size_t>(a)]);
        }
        span = std::max(span, hi - lo);
    }
    if (span <= 0.0) return 1.0;
    const double per_axis = std::pow(static_cast<double>(n), 1.0 / A.dim);
    return std::max(span / std::max(per_axis, 1.0), span * 1e-6);
}

} // namespace

double hausdorff(const PointSet& A, const PointSet& B) {
    if (A.size() == 0 || B.size() == 0)
        throw EmptySetError("hausdorff requires nonempty point sets");
    if (A.dim != B.dim) throw std::invalid_argument("hausdorff: dimension mismatch");
    const double h = pick_bucket_size(A, B);
    const BucketIndex ia(A, h);
    const BucketIndex ib(B, h);
    return std::max(directed_hausdorff(A, ib), directed_hausdorff(B, ia));
}

std::vector<TestFunction> caloric_test_family(const ModelParams& params,
                                              const std::vector<double>& exp_coeffs) {
    params.validate();
    std::vector<TestFunction> fns;
    fns.push_back({"const", [](std::span<const double>, double) { return 1.0; }});
    for (int i = 0; i < params.d - 1; ++i)
        fns.push_back({"x" + std::to_string(i + 1),
                       [i](std::span<const double> x, double) { return x[static_cast<std::size_t>(i)]; }});
    for (int i = 0; i < params.d - 1; ++i)
        for (int j = i + 1; j < params.d - 1; ++j)
            fns.push_back({"x" + std::to_string(i + 1) + "x" + std::to_string(j + 1),
                           [i, j](std::span<const double> x, double) {
                               return x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
                           }});
    const double kp = params.kappa() / params.p;
    for (double a : exp_coeffs) {
        const double c = kp * a * a;
        fns.push_back({"exp(a=" + std::to_string(a) + ")",
                       [a, c](std::span<const double> x, double t) {
                           return std::exp(a * x[0] - c * t);
                       }});
    }
    return fns;
}

MeanValueReport verify_mean_value(const LimitShape& D, const ModelParams& params,
                                  const std::vector<TestFunction>& fns) {
    params.validate();
    const SpaceTimeGrid& g = D.grid;
    if (g.d != params.d) throw std::invalid_argument("shape dimension does not match params");

    MeanValueReport report;
    report.volume = D.measure;
    const double dv = g.cell_volume();
    std::vector<double> x(static_cast<std::size_t>(g.d - 1));
    std::vector<std::int64_t> idx(static_cast<std::size_t>(g.d - 1));
    const std::vector<double> origin(static_cast<std::size_t>(g.d - 1), 0.0);

    for (const TestFunction& tf : fns) {
        KahanSum integral;
        double sup = 0.0;
        for (std::int64_t it = 0; it < g.nt; ++it) {
            const double t = g.time_coord(it);
            for (std::int64_t lat = 0; lat < g.lat_count; ++lat) {
                if (!D.member(it, lat)) continue;
                g.lateral_multi(lat, idx);
                for (int i = 0; i < g.d - 1; ++i)
                    x[static_cast<std::size_t>(i)] = g.lateral_coord(idx[static_cast<std::size_t>(i)]);
                const double v = tf.fn(x, t);
                integral.add(v);
                sup = std::max(sup, std::abs(v));
            }
        }
        MeanValueEntry entry;
        entry.name = tf.name;
        entry.integral = integral.value() * dv;
        entry.reference = D.measure * tf.fn(origin, 0.0);
        entry.rel_error = sup > 0.0 ? std::abs(entry.integral - entry.reference) / (D.measure * sup)
                                    : std::abs(entry.integral - entry.reference);
        report.entries.push_back(entry);
        report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    }
    return report;
}

double SmoothBump::operator()(std::span<const double> x, double t) const {
    double arg = 0.0;
    for (std::size_t i = 0; i < center_x.size(); ++i) {
        const double u = (x[i] - center_x[i]) / radius_x;
        arg += u * u;
    }
    const double ut = (t - center_t) / radius_t;
    arg += ut * ut;
    if (arg >= 1.0) return 0.0;
    return amplitude * std::exp(-1.0 / (1.0 - arg)) * std::exp(1.0); // normalized to 1 at center
}

double SmoothBump::continuum_action(std::span<const double> x, double t,
                                    const ModelParams& params) const {
    std::vector<double> xs(x.begin(), x.end());
    auto second = [&](int axis, double step) {
        const double saved = xs[static_cast<std::size_t>(axis)];
        auto f = [&](double v) {
            xs[static_cast<std::size_t>(axis)] = v;
            return (*this)(xs, t);
        };
        const double d2 = (-f(saved + 2 * step) + 16.0 * f(saved + step) - 30.0 * f(saved) +
                           16.0 * f(saved - step) - f(saved - 2 * step)) /
                          (12.0 * step * step);
        xs[static_cast<std::size_t>(axis)] = saved;
        return d2;
    };
    double lap = 0.0;
    const double hx = 1e-3 * radius_x;
    for (std::size_t i = 0; i < center_x.size(); ++i) lap += second(static_cast<int>(i), hx);
    const double ht = 1e-3 * radius_t;
    const double dt1 = (-(*this)(xs, t + 2 * ht) + 8.0 * (*this)(xs, t + ht) -
                        8.0 * (*this)(xs, t - ht) + (*this)(xs, t - 2 * ht)) /
                       (12.0 * ht);
    return params.kappa() * lap + params.p * dt1;
}

WeakPdeReport verify_weak_pde(const MassField& odometer, double n, const ModelParams& params,
                              const SmoothBump& h) {
    params.validate();
    if (!(n > 0.0)) throw std::invalid_argument("verify_weak_pde: n must be positive");
    const double ls = std::pow(n, -1.0 / (params.d + 1));
    const double ts = std::pow(n, -2.0 / (params.d + 1));

    // lattice box covering the bump support, padded one cell for the operator
    std::vector<Coord> lo(static_cast<std::size_t>(params.d)), hi(static_cast<std::size_t>(params.d));
    for (int i = 0; i < params.d - 1; ++i) {
        lo[static_cast<std::size_t>(i)] =
            static_cast<Coord>(std::floor((h.center_x[static_cast<std::size_t>(i)] - h.radius_x) / ls)) - 1;
        hi[static_cast<std::size_t>(i)] =
            static_cast<Coord>(std::ceil((h.center_x[static_cast<std::size_t>(i)] + h.radius_x) / ls)) + 1;
    }
    lo[static_cast<std::size_t>(params.d - 1)] =
        static_cast<Coord>(std::floor((h.center_t - h.radius_t) / ts)) - 1;
    hi[static_cast<std::size_t>(params.d - 1)] =
        static_cast<Coord>(std::ceil((h.center_t + h.radius_t) / ts)) + 1;

    MassField hn;
    std::vector<double> x(static_cast<std::size_t>(params.d - 1));
    Site z = Site::origin(params.d);
    std::function<void(int)> fill = [&](int axis) {
        if (axis == params.d) {
            for (int i = 0; i < params.d - 1; ++i)
                x[static_cast<std::size_t>(i)] = static_cast<double>(z[i]) * ls;
            const double v = h(x, static_cast<double>(z.drift()) * ts);
            if (v != 0.0) hn.set(z, v);
            return;
        }
        for (Coord c = lo[static_cast<std::size_t>(axis)]; c <= hi[static_cast<std::size_t>(axis)]; ++c) {
            z[axis] = c;
            fill(axis + 1);
        }
    };
    fill(0);

    // Discrete pairing (1/n) sum u K~(h_n): the normalizations n^{-2/(d+1)} of
    // u and n^{2/(d+1)} of K~ h_n cancel, and the sum reproduces the mass
    // bookkeeping exactly. The continuum pairing replaces the sampled lattice
    // action by (kappa Lap + p d/dt) h, whose mismatch is the discretization
    // error of Theorem-level convergence.
    KahanSum lhs_d, lhs_c;
    std::function<void(int)> accumulate = [&](int axis) {
        if (axis == params.d) {
            const double u = odometer.at(z);
            if (u != 0.0) {
                lhs_d.add(u * heat_op_reversed(hn, z, params));
                for (int i = 0; i < params.d - 1; ++i)
                    x[static_cast<std::size_t>(i)] = static_cast<double>(z[i]) * ls;
                lhs_c.add(u * h.continuum_action(x, static_cast<double>(z.drift()) * ts, params));
            }
            return;
        }
        for (Coord c = lo[static_cast<std::size_t>(axis)]; c <= hi[static_cast<std::size_t>(axis)]; ++c) {
            z[axis] = c;
            accumulate(axis + 1);
        }
    };
    accumulate(0);

    // RHS = (1/n) sum_{u>0} h_n - h(0)
    KahanSum hsum;
    for (const auto& [site, u] : odometer) {
        if (u <= 0.0) continue;
        for (int i = 0; i < params.d - 1; ++i)
            x[static_cast<std::size_t>(i)] = static_cast<double>(site[i]) * ls;
        hsum.add(h(x, static_cast<double>(site.drift()) * ts));
    }
    const std::vector<double> origin(static_cast<std::size_t>(params.d - 1), 0.0);

    WeakPdeReport report;
    report.lhs_discrete = lhs_d.value() / n;
    report.lhs_continuum = lhs_c.value() * ts / n; // u scaled by n^{-2/(d+1)}
    report.rhs = hsum.value() / n - h(origin, 0.0);
    report.residual_discrete = std::abs(report.lhs_discrete - report.rhs);
    report.residual = std::abs(report.lhs_continuum - report.rhs);
    report.rhs_scale = std::abs(hsum.value() / n);
    return report;
}

double discrete_identity_residual(const SandpileResult& result, const MassField& initial,
                                  const MassField& eta, const ModelParams& params) {
    params.validate();
    KahanSum lhs, rhs;
    for (const auto& [site, e] : eta) {
        lhs.add(e * heat_op(result.odometer, site, params));
        rhs.add(e * (result.final_mass.at(site) - initial.at(site)));
    }
    return std::abs(lhs.value() - rhs.value());
}

BoundingBox bounding_box(const NormalizedSet& set) {
    if (set.sites.empty()) throw EmptySetError("bounding_box of an empty set");
    BoundingBox box;
    for (const Site& z : set.sites) {
        for (int i = 0; i < set.d - 1; ++i) {
            const double lo = static_cast<double>(z[i]) * set.lateral_scale;
            const double hi = lo + set.lateral_scale;
            box.lateral_radius = std::max({box.lateral_radius, std::abs(lo), std::abs(hi)});
        }
        const double top = (static_cast<double>(z.drift()) + 1.0) * set.time_scale;
        box.time_extent = std::max(box.time_extent, top);
    }
    return box;
}

namespace {

struct ShapeLookup {
    const LimitShape& shape;

    bool member_at(std::span<const double> x, double t) const {
        const SpaceTimeGrid& g = shape.grid;
        const std::int64_t it = std::llround((t - g.t_min) / g.dt);
        if (it < 0 || it >= g.nt) return false;
        std::int64_t lat = 0, stride = 1;
        for (int i = 0; i < g.d - 1; ++i) {
            const std::int64_t j =
                std::llround(x[static_cast<std::size_t>(i)] / g.dx) + g.nx / 2;
            if (j < 0 || j >= g.nx) return false;
            lat += j * stride;
            stride *= g.nx;
        }
        return shape.member(it, lat);
    }
};

} // namespace

RescaleFit rescaling_check(const LimitShape& D1, const LimitShape& D2, const RescaleOptions& opts) {
    const SpaceTimeGrid& g2 = D2.grid;
    if (D1.grid.d != g2.d) throw std::invalid_argument("rescaling_check: dimension mismatch");
    const int d = g2.d;
    ShapeLookup lookup{D1};

    // member nodes of D2, subsampled for the fit
    std::vector<double> fit_coords;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(d - 1));
    std::int64_t fit_count_total = 0;
    for (std::int64_t it = 0; it < g2.nt; it += opts.fit_subsample_t) {
        for (std::int64_t lat = 0; lat < g2.lat_count; ++lat) {
            if (!D2.member(it, lat)) continue;
            bool keep = true;
            g2.lateral_multi(lat, idx);
            for (int i = 0; i < d - 1; ++i)
                if (idx[static_cast<std::size_t>(i)] % opts.fit_subsample_x != 0) keep = false;
            ++fit_count_total;
            if (!keep) continue;
            for (int i = 0; i < d - 1; ++i)
                fit_coords.push_back(g2.lateral_coord(idx[static_cast<std::size_t>(i)]));
            fit_coords.push_back(g2.time_coord(it));
        }
    }
    const std::size_t stride = static_cast<std::size_t>(d);
    const std::size_t n_fit = fit_coords.size() / stride;
    if (n_fit == 0) throw EmptySetError("rescaling_check: D2 is empty");

    // symmetric-difference fraction with the intersection estimated on the
    // (sub)sampled member nodes of D2
    auto residual_at = [&](double mu, double lambda, bool full) -> double {
        double inter;
        std::vector<double> x(static_cast<std::size_t>(d - 1));
        if (full) {
            KahanSum count;
            for (std::int64_t it = 0; it < g2.nt; ++it) {
                const double t = g2.time_coord(it);
                for (std::int64_t lat = 0; lat < g2.lat_count; ++lat) {
                    if (!D2.member(it, lat)) continue;
                    g2.lateral_multi(lat, idx);
                    for (int i = 0; i < d - 1; ++i)
                        x[static_cast<std::size_t>(i)] =
                            g2.lateral_coord(idx[static_cast<std::size_t>(i)]) / mu;
                    if (lookup.member_at(x, t / lambda)) count.add(1.0);
                }
            }
            inter = count.value() * g2.cell_volume();
        } else {
            std::int64_t count = 0;
            for (std::size_t i = 0; i < n_fit; ++i) {
                const double* p = fit_coords.data() + i * stride;
                for (int a = 0; a < d - 1; ++a) x[static_cast<std::size_t>(a)] = p[a] / mu;
                if (lookup.member_at(x, p[d - 1] / lambda)) ++count;
            }
            // scale the subsample count up to the full membership count
            inter = static_cast<double>(count) / static_cast<double>(n_fit) *
                    static_cast<double>(D2.count) * g2.cell_volume();
        }
        double mu_pow = 1.0;
        for (int i = 0; i < d - 1; ++i) mu_pow *= mu;
        const double vol1 = mu_pow * lambda * D1.measure;
        return (vol1 + D2.measure - 2.0 * inter) / D2.measure;
    };

    double best_mu = 1.0, best_lambda = 1.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < opts.scan_steps; ++i) {
        const double mu = opts.mu_lo + (opts.mu_hi - opts.mu_lo) * i / (opts.scan_steps - 1);
        for (int j = 0; j < opts.scan_steps; ++j) {
            const double lambda =
                opts.lambda_lo + (opts.lambda_hi - opts.lambda_lo) * j / (opts.scan_steps - 1);
            const double r = residual_at(mu, lambda, false);
            if (r < best) {
                best = r;
                best_mu = mu;
                best_lambda = lambda;
            }
        }
    }

    // Nelder-Mead refinement in (mu, lambda)
    struct Vertex {
        double mu, lambda, value;
    };
    auto eval = [&](double mu, double lambda) { return residual_at(mu, lambda, false); };
    const double step_mu = (opts.mu_hi - opts.mu_lo) / (opts.scan_steps - 1);
    const double step_la = (opts.lambda_hi - opts.lambda_lo) / (opts.scan_steps - 1);
    std::array<Vertex, 3> simplex{{{best_mu, best_lambda, best},
                                   {best_mu + step_mu, best_lambda, 0.0},
                                   {best_mu, best_lambda + step_la, 0.0}}};
    simplex[1].value = eval(simplex[1].mu, simplex[1].lambda);
    simplex[2].value = eval(simplex[2].mu, simplex[2].lambda);
    for (int iter = 0; iter < 200; ++iter) {
        std::sort(simplex.begin(), simplex.end(),
                  [](const Vertex& a, const Vertex& b) { return a.value < b.value; });
        if (std::abs(simplex[2].value - simplex[0].value) < 1e-6 &&
            std::abs(simplex[2].mu - simplex[0].mu) < 1e-5 &&
            std::abs(simplex[2].lambda - simplex[0].lambda) < 1e-5)
            break;
        const double cmu = 0.5 * (simplex[0].mu + simplex[1].mu);
        const double cla = 0.5 * (simplex[0].lambda + simplex[1].lambda);
        Vertex refl{cmu + (cmu - simplex[2].mu), cla + (cla - simplex[2].lambda), 0.0};
        refl.value = eval(refl.mu, refl.lambda);
        if (refl.value < simplex[0].value) {
            Vertex exp{cmu + 2.0 * (cmu - simplex[2].mu), cla + 2.0 * (cla - simplex[2].lambda), 0.0};
            exp.value = eval(exp.mu, exp.lambda);
            simplex[2] = exp.value < refl.value ? exp : refl;
        } else if (refl.value < simplex[1].value) {
            simplex[2] = refl;
        } else {
            Vertex con{cmu + 0.5 * (simplex[2].mu - cmu), cla + 0.5 * (simplex[2].lambda - cla), 0.0};
            con.value = eval(con.mu, con.lambda);
            if (con.value < simplex[2].value) {
                simplex[2] = con;
            } else {
                for (int i = 1; i < 3; ++i) {
                    simplex[i].mu = 0.5 * (simplex[i].mu + simplex[0].mu);
                    simplex[i].lambda = 0.5 * (simplex[i].lambda + simplex[0].lambda);
                    simplex[i].value = eval(simplex[i].mu, simplex[i].lambda);
                }
            }
        }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.value < b.value; });

    RescaleFit fit;
    fit.mu = simplex[0].mu;
    fit.lambda = simplex[0].lambda;
    fit.residual = residual_at(fit.mu, fit.lambda, true);
    fit.lambda_over_mu2 = fit.lambda / (fit.mu * fit.mu);
    if (fit.residual > opts.fail_threshold)
        throw FitFailure("rescaling_check: best symmetric-difference fraction " +
                         std::to_string(fit.residual) + " exceeds " +
                         std::to_string(opts.fail_threshold));
    return fit;
}

double symmetric_difference_fraction(const ClusterSet& A, const ClusterSet& B) {
    if (B.empty()) throw EmptySetError("symmetric_difference_fraction: empty reference set");
    std::size_t common = 0;
    auto ia = A.sites.begin();
    auto ib = B.sites.begin();
    while (ia != A.sites.end() && ib != B.sites.end()) {
        if (*ia < *ib)
            ++ia;
        else if (*ib < *ia)
            ++ib;
        else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    const std::size_t sym = A.size() + B.size() - 2 * common;
    return static_cast<double>(sym) / static_cast<double>(B.size());
}

} // namespace heatball
