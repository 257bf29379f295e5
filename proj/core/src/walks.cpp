#include "heatball/walks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

namespace heatball {

WalkState walk_start(const ModelParams& params, std::uint64_t walk_index) {
    params.validate();
    WalkState s;
    s.position = Site::origin(params.d);
    s.rng_stream = walk_index;
    return s;
}

WalkState step(const WalkState& state, const ModelParams& params) {
    const StepLaw law = StepLaw::make(params);
    WalkState next = state;
    step_inplace(next, law, params.seed);
    return next;
}

namespace {

struct ChunkSums {
    std::uint64_t visits = 0;
    std::uint64_t visits_sq = 0;
};

// Fixed-size chunks keep the reduction independent of the thread count: the
// per-chunk sums are integers and are combined in chunk order.
constexpr std::int64_t kWalkChunk = 4096;

template <typename PerWalk>
std::vector<ChunkSums> run_chunks(std::int64_t n_samples, int threads, PerWalk per_walk) {
    const std::int64_t n_chunks = (n_samples + kWalkChunk - 1) / kWalkChunk;
    std::vector<ChunkSums> chunks(static_cast<std::size_t>(n_chunks));
    auto run_chunk = [&](std::int64_t ci) {
        ChunkSums sums;
        const std::int64_t lo = ci * kWalkChunk;
        const std::int64_t hi = std::min(n_samples, lo + kWalkChunk);
        for (std::int64_t j = lo; j < hi; ++j) {
            const std::uint64_t v = per_walk(static_cast<std::uint64_t>(j));
            sums.visits += v;
            sums.visits_sq += v * v;
        }
        chunks[static_cast<std::size_t>(ci)] = sums;
    };
    if (threads <= 1 || n_chunks == 1) {
        for (std::int64_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
    } else {
        std::atomic<std::int64_t> next{0};
        std::vector<std::thread> pool;
        const int n_threads = static_cast<int>(std::min<std::int64_t>(threads, n_chunks));
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::int64_t ci = next.fetch_add(1);
                    if (ci >= n_chunks) return;
                    run_chunk(ci);
                }
            });
        for (auto& th : pool) th.join();
    }
    return chunks;
}

GreenEstimate reduce_chunks(const std::vector<ChunkSums>& chunks, std::int64_t n_samples) {
    std::uint64_t total = 0, total_sq = 0;
    for (const auto& c : chunks) {
        total += c.visits;
        total_sq += c.visits_sq;
    }
    GreenEstimate est;
    est.n_samples = n_samples;
    const double n = static_cast<double>(n_samples);
    est.value = static_cast<double>(total) / n;
    if (n_samples > 1) {
        const double var =
            (static_cast<double>(total_sq) - n * est.value * est.value) / (n - 1.0);
        est.std_error = std::sqrt(std::max(var, 0.0) / n);
    }
    return est;
}

// Chernoff bound on the expected number of visits to drift level z_d after
// the horizon, for the NaturalLazy drift coordinate.
double natural_lazy_tail_bound(const ModelParams& params, Coord z_d, std::uint64_t horizon) {
    const double a = params.p + (1.0 - params.p) / (2.0 * params.d); // P(+e_d)
    const double b = (1.0 - params.p) / (2.0 * params.d);            // P(-e_d)
    const double lambda = 0.5 * std::log(a / b);
    const double m = 2.0 * std::sqrt(a * b) + 1.0 - a - b; // < 1
    const double log_tail = lambda * static_cast<double>(z_d) +
                            static_cast<double>(horizon + 1) * std::log(m) - std::log1p(-m);
    return std::exp(log_tail);
}

} // namespace

GreenEstimate green_mc(const Site& z, const ModelParams& params, std::int64_t n_samples,
                       const GreenMcOptions& opts) {
    params.validate();
    if (z.dim != params.d) throw std::invalid_argument("site dimension does not match params");
    if (n_samples < 1) throw std::invalid_argument("green_mc requires n_samples >= 1");

    GreenEstimate est;
    if (params.variant == Variant::Monotone && z.drift() < 0) {
        est.n_samples = n_samples;
        return est; // monotone walks never enter negative layers
    }

    const StepLaw law = StepLaw::make(params);
    const Site target = z;

    if (params.variant == Variant::Monotone) {
        const Coord zd = z.drift();
        auto per_walk = [&](std::uint64_t j) -> std::uint64_t {
            WalkState w;
            w.position = Site::origin(params.d);
            w.rng_stream = j;
            std::uint64_t visits = 0;
            while (w.position.drift() <= zd) {
                if (w.position == target) ++visits;
                step_inplace(w, law, params.seed);
            }
            return visits;
        };
        return reduce_chunks(run_chunks(n_samples, opts.threads, per_walk), n_samples);
    }

    const std::uint64_t horizon = static_cast<std::uint64_t>(
        std::ceil(opts.horizon_factor * std::max<double>(std::llabs(z.drift()), 1) / params.p));
    auto per_walk = [&](std::uint64_t j) -> std::uint64_t {
        WalkState w;
        w.position = Site::origin(params.d);
        w.rng_stream = j;
        std::uint64_t visits = 0;
        for (std::uint64_t t = 0; t <= horizon; ++t) {
            if (w.position == target) ++visits;
            step_inplace(w, law, params.seed);
        }
        return visits;
    };
    est = reduce_chunks(run_chunks(n_samples, opts.threads, per_walk), n_samples);
    est.tail_bound = natural_lazy_tail_bound(params, z.drift(), horizon);
    est.horizon_warning = est.tail_bound > opts.precision_goal;
    return est;
}

namespace {

// Dense field over the lateral cube [-R, R]^{d-1}, flattened in row-major
// order with axis 0 fastest.
struct LateralBox {
    int axes;
    Coord radius;
    std::int64_t side;
    std::int64_t count;
    std::vector<std::int64_t> strides;

    LateralBox(int lateral_axes, Coord R) : axes(lateral_axes), radius(R) {
        side = 2 * R + 1;
        strides.assign(static_cast<std::size_t>(axes), 0);
        std::int64_t s = 1;
        for (int i = 0; i < axes; ++i) {
            strides[static_cast<std::size_t>(i)] = s;
            s *= side;
        }
        count = s;
    }

    std::int64_t index(std::span<const Coord> lat) const {
        std::int64_t idx = 0;
        for (int i = 0; i < axes; ++i) {
            const Coord c = lat[static_cast<std::size_t>(i)];
            if (c < -radius || c > radius) return -1;
            idx += (c + radius) * strides[static_cast<std::size_t>(i)];
        }
        return idx;
    }
};

// Sparse lateral kernel: offsets stored both as coordinates (for per-axis
// bounds checks) and as flattened index deltas.
struct SparseKernel {
    std::vector<std::vector<Coord>> offsets;
    std::vector<std::int64_t> flat;
    std::vector<double> weight;

    static SparseKernel from_box(const LateralBox& small, const std::vector<double>& values,
                                 const LateralBox& big) {
        SparseKernel k;
        double peak = 0.0;
        for (double v : values) peak = std::max(peak, v);
        const double prune = 1e-20 * peak; // dropped mass shows up in the tracked loss
        std::vector<Coord> pos(static_cast<std::size_t>(small.axes), -small.radius);
        for (std::int64_t idx = 0; idx < small.count; ++idx) {
            const double w = values[static_cast<std::size_t>(idx)];
            if (w > prune) {
                std::int64_t f = 0;
                for (int i = 0; i < small.axes; ++i)
                    f += pos[static_cast<std::size_t>(i)] * big.strides[static_cast<std::size_t>(i)];
                k.offsets.push_back(pos);
                k.flat.push_back(f);
                k.weight.push_back(w);
            }
            for (int i = 0; i < small.axes; ++i) {
                if (++pos[static_cast<std::size_t>(i)] <= small.radius) break;
                pos[static_cast<std::size_t>(i)] = -small.radius;
            }
        }
        return k;
    }
};

// out = in * kernel over `big`; mass pushed past the box edge is dropped.
void convolve_into(const LateralBox& big, const std::vector<double>& in, const SparseKernel& ker,
                   std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    const int axes = big.axes;
    std::vector<Coord> pos(static_cast<std::size_t>(axes), -big.radius);
    for (std::int64_t idx = 0; idx < big.count; ++idx) {
        const double v = in[static_cast<std::size_t>(idx)];
        if (v != 0.0) {
            for (std::size_t t = 0; t < ker.weight.size(); ++t) {
                bool inside = true;
                const auto& off = ker.offsets[t];
                for (int i = 0; i < axes; ++i) {
                    const Coord c = pos[static_cast<std::size_t>(i)] + off[static_cast<std::size_t>(i)];
                    if (c < -big.radius || c > big.radius) {
                        inside = false;
                        break;
                    }
                }
                if (inside) out[static_cast<std::size_t>(idx + ker.flat[t])] += v * ker.weight[t];
            }
        }
        for (int i = 0; i < axes; ++i) {
            if (++pos[static_cast<std::size_t>(i)] <= big.radius) break;
            pos[static_cast<std::size_t>(i)] = -big.radius;
        }
    }
}

// One lateral SRW step applied to a sub-probability vector, dropping any mass
// that would leave the box.
void lateral_srw_step(const LateralBox& box, const std::vector<double>& in,
                      std::vector<double>& out) {
    const double w = 1.0 / (2.0 * box.axes);
    std::fill(out.begin(), out.end(), 0.0);
    for (int axis = 0; axis < box.axes; ++axis) {
        const std::int64_t stride = box.strides[static_cast<std::size_t>(axis)];
        const std::int64_t block = stride * box.side;
        for (std::int64_t base = 0; base < box.count; base += block) {
            for (std::int64_t off = 0; off < stride; ++off) {
                const std::int64_t lo = base + off;
                for (std::int64_t i = 0; i < box.side; ++i) {
                    const double v = in[static_cast<std::size_t>(lo + i * stride)];
                    if (v == 0.0) continue;
                    if (i > 0) out[static_cast<std::size_t>(lo + (i - 1) * stride)] += w * v;
                    if (i < box.side - 1)
                        out[static_cast<std::size_t>(lo + (i + 1) * stride)] += w * v;
                }
            }
        }
    }
}

// Kernels of the lateral walk killed at an independent geometric(p) time:
// exit_kernel is the displacement law at the kill, visit_counts the expected
// occupation before it.
struct KilledLateralKernels {
    LateralBox box;
    std::vector<double> exit_kernel;
    std::vector<double> visit_counts;

    KilledLateralKernels(const ModelParams& params, Coord radius, double cut)
        : box(params.d - 1, radius) {
        const double p = params.p;
        std::vector<double> c(static_cast<std::size_t>(box.count), 0.0);
        std::vector<double> tmp(static_cast<std::size_t>(box.count), 0.0);
        exit_kernel.assign(static_cast<std::size_t>(box.count), 0.0);
        visit_counts.assign(static_cast<std::size_t>(box.count), 0.0);
        std::vector<Coord> origin(static_cast<std::size_t>(box.axes), 0);
        c[static_cast<std::size_t>(box.index(origin))] = 1.0;
        double mass = 1.0;
        while (mass > cut) {
            for (std::int64_t i = 0; i < box.count; ++i) {
                const double v = c[static_cast<std::size_t>(i)];
                if (v == 0.0) continue;
                exit_kernel[static_cast<std::size_t>(i)] += p * v;
                visit_counts[static_cast<std::size_t>(i)] += v;
            }
            lateral_srw_step(box, c, tmp);
            mass = 0.0;
            for (auto& v : tmp) {
                v *= (1.0 - p);
                mass += v;
            }
            c.swap(tmp);
        }
    }
};

Coord survival_radius(const ModelParams& params, double cut) {
    // support of the killed kernel grows one cell per surviving step and
    // survival decays like (1-p)^l
    const double l = std::log(cut) / std::log1p(-params.p);
    return static_cast<Coord>(std::ceil(l)) + 2;
}

std::string loss_string(double loss) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", loss);
    return buf;
}


} // namespace

GreenTable::GreenTable(const ModelParams& params, Coord lateral_radius, Coord max_layer,
                       double truncation_tol)
    : d_(params.d), lateral_radius_(lateral_radius), max_layer_(max_layer) {
    params.validate();
    if (params.variant != Variant::Monotone)
        throw std::invalid_argument("GreenTable supports the monotone variant only");
    if (lateral_radius < 1 || max_layer < 0)
        throw std::invalid_argument("GreenTable needs lateral_radius >= 1 and max_layer >= 0");

    const double cut = 1e-18;
    const Coord ker_radius = std::min(lateral_radius, survival_radius(params, cut));
    KilledLateralKernels kernels(params, ker_radius, cut);

    LateralBox big(params.d - 1, lateral_radius);
    lat_size_ = big.side;
    lat_count_ = big.count;
    values_.assign(static_cast<std::size_t>(lat_count_ * (max_layer_ + 1)), 0.0);
    entry_mass_.assign(static_cast<std::size_t>(max_layer_ + 1), 0.0);

    const SparseKernel exit_k = SparseKernel::from_box(kernels.box, kernels.exit_kernel, big);
    const SparseKernel visit_k = SparseKernel::from_box(kernels.box, kernels.visit_counts, big);

    std::vector<double> q(static_cast<std::size_t>(lat_count_), 0.0);
    std::vector<double> q_next(static_cast<std::size_t>(lat_count_), 0.0);
    std::vector<double> row(static_cast<std::size_t>(lat_count_), 0.0);
    std::vector<Coord> origin(static_cast<std::size_t>(big.axes), 0);
    q[static_cast<std::size_t>(big.index(origin))] = 1.0;

    for (Coord m = 0;; ++m) {
        double qmass = 0.0;
        for (double v : q) qmass += v;
        entry_mass_[static_cast<std::size_t>(m)] = qmass;

        convolve_into(big, q, visit_k, row);
        std::copy(row.begin(), row.end(),
                  values_.begin() + static_cast<std::ptrdiff_t>(m * lat_count_));

        if (m == max_layer_) break;
        convolve_into(big, q, exit_k, q_next);
        q.swap(q_next);
    }
    truncation_loss_ = 1.0 - entry_mass_[static_cast<std::size_t>(max_layer_)];
    if (truncation_loss_ > truncation_tol)
        throw TruncationError("green table truncation loss " + loss_string(truncation_loss_) +
                              " exceeds tolerance at lateral radius " +
                              std::to_string(lateral_radius_));
}

std::int64_t GreenTable::lateral_index(const Site& z) const {
    std::int64_t idx = 0;
    std::int64_t stride = 1;
    for (int i = 0; i < d_ - 1; ++i) {
        const Coord c = z[i];
        if (c < -lateral_radius_ || c > lateral_radius_) return -1;
        idx += (c + lateral_radius_) * stride;
        stride *= lat_size_;
    }
    return idx;
}

double GreenTable::g(const Site& z) const {
    const Coord m = z.drift();
    if (m < 0 || m > max_layer_) return 0.0;
    const std::int64_t li = lateral_index(z);
    if (li < 0) return 0.0;
    return values_[static_cast<std::size_t>(m * lat_count_ + li)];
}

double GreenTable::layer_entry_mass(Coord m) const {
    if (m < 0 || m > max_layer_) return 0.0;
    return entry_mass_[static_cast<std::size_t>(m)];
}

double GreenTable::layer_visit_sum(Coord m) const {
    if (m < 0 || m > max_layer_) return 0.0;
    KahanSum s;
    const double* row = values_.data() + static_cast<std::size_t>(m * lat_count_);
    for (std::int64_t i = 0; i < lat_count_; ++i) s.add(row[i]);
    return s.value();
}

std::function<double(const Site&)> GreenTable::as_function() const {
    // caller keeps the table alive
    return [this](const Site& z) { return g(z); };
}

double green_dp(const Site& z, const ModelParams& params, Coord lateral_radius,
                double truncation_tol) {
    params.validate();
    if (params.variant != Variant::Monotone)
        throw std::invalid_argument("green_dp supports the monotone variant only");
    if (z.dim != params.d) throw std::invalid_argument("site dimension does not match params");
    if (z.drift() < 0) return 0.0;

    const double cut = 1e-18;
    const Coord ker_radius = std::min(lateral_radius, survival_radius(params, cut));
    KilledLateralKernels kernels(params, ker_radius, cut);
    LateralBox big(params.d - 1, lateral_radius);
    const SparseKernel exit_k = SparseKernel::from_box(kernels.box, kernels.exit_kernel, big);

    std::vector<double> q(static_cast<std::size_t>(big.count), 0.0);
    std::vector<double> q_next(static_cast<std::size_t>(big.count), 0.0);
    std::vector<Coord> origin(static_cast<std::size_t>(big.axes), 0);
    q[static_cast<std::size_t>(big.index(origin))] = 1.0;
    for (Coord m = 0; m < z.drift(); ++m) {
        convolve_into(big, q, exit_k, q_next);
        q.swap(q_next);
    }
    double qmass = 0.0;
    for (double v : q) qmass += v;
    if (1.0 - qmass > truncation_tol)
        throw TruncationError("green_dp truncation loss " + loss_string(1.0 - qmass) +
                              " exceeds tolerance " + loss_string(truncation_tol) +
                              " at lateral radius " + std::to_string(lateral_radius));

    // g(0,z) = sum_w q(w) * visits(z_lat - w)
    const LateralBox& small = kernels.box;
    KahanSum value;
    std::vector<Coord> pos(static_cast<std::size_t>(small.axes), -small.radius);
    std::vector<Coord> src(static_cast<std::size_t>(small.axes), 0);
    for (std::int64_t idx = 0; idx < small.count; ++idx) {
        const double w = kernels.visit_counts[static_cast<std::size_t>(idx)];
        if (w > 0.0) {
            for (int i = 0; i < small.axes; ++i)
                src[static_cast<std::size_t>(i)] = z[i] - pos[static_cast<std::size_t>(i)];
            const std::int64_t qi = big.index(src);
            if (qi >= 0) value.add(q[static_cast<std::size_t>(qi)] * w);
        }
        for (int i = 0; i < small.axes; ++i) {
            if (++pos[static_cast<std::size_t>(i)] <= small.radius) break;
            pos[static_cast<std::size_t>(i)] = -small.radius;
        }
    }
    return value.value();
}

Coord suggested_green_radius(const ModelParams& params, Coord max_layer) {
    // diffusive spread of the layer-entry law plus the geometric tail of the
    // per-sojourn kernel, which dominates at small layer counts
    const double per_layer_var = (1.0 - params.p) / (params.p * (params.d - 1));
    const double sigma = std::sqrt(std::max<double>(max_layer, 1) * per_layer_var);
    const double q = 1.0 - params.p;
    const double rho = (1.0 - std::sqrt(1.0 - q * q)) / q;
    const double floor = 40.0 / -std::log(rho);
    return static_cast<Coord>(std::ceil(10.0 * sigma + floor)) + 8;
}

double continuum_green(std::span<const double> x, double t, const ModelParams& params) {
    params.validate();
    if (static_cast<int>(x.size()) != params.d - 1)
        throw std::invalid_argument("continuum_green expects d-1 lateral coordinates");
    if (!(t > 0.0)) throw std::domain_error("continuum_green requires t > 0");
    const double beta = params.beta();
    double r2 = 0.0;
    for (double xi : x) r2 += xi * xi;
    return (1.0 / params.p) * std::pow(beta / (M_PI * t), 0.5 * (params.d - 1)) *
           std::exp(-beta * r2 / t);
}

} // namespace heatball
