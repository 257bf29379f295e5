#include "heatball/continuum.hpp"

#include <algorithm>
#include <cmath>

namespace heatball {

SpaceTimeGrid SpaceTimeGrid::make(int d, double x_extent, double t_max, double dx, double t_min) {
    if (d < 2 || d > kMaxDim) throw std::invalid_argument("grid dimension out of range");
    if (!(dx > 0.0) || !(x_extent > dx) || !(t_max > 0.0))
        throw std::invalid_argument("grid extents must be positive");
    SpaceTimeGrid g;
    g.d = d;
    g.dx = dx;
    g.dt = dx * dx; // parabolic scaling, fixed across refinements
    const std::int64_t half = static_cast<std::int64_t>(std::llround(x_extent / dx));
    g.nx = 2 * half + 1;
    g.x_extent = static_cast<double>(half) * dx;
    g.t_min = t_min <= 0.0 ? g.dt : g.dt * static_cast<double>(std::llround(t_min / g.dt));
    if (g.t_min <= 0.0) g.t_min = g.dt;
    g.t_max = t_max;
    g.nt = static_cast<std::int64_t>(std::llround((t_max - g.t_min) / g.dt)) + 1;
    if (g.nt < 1) throw std::invalid_argument("grid has no time levels (t_max < t_min)");
    g.lat_count = 1;
    for (int i = 0; i < d - 1; ++i) g.lat_count *= g.nx;
    return g;
}

double SpaceTimeGrid::cell_volume() const {
    double v = dt;
    for (int i = 0; i < d - 1; ++i) v *= dx;
    return v;
}

std::int64_t SpaceTimeGrid::flat_lateral(std::span<const std::int64_t> idx) const {
    std::int64_t f = 0, stride = 1;
    for (int i = 0; i < d - 1; ++i) {
        f += idx[static_cast<std::size_t>(i)] * stride;
        stride *= nx;
    }
    return f;
}

void SpaceTimeGrid::lateral_multi(std::int64_t flat, std::span<std::int64_t> out) const {
    for (int i = 0; i < d - 1; ++i) {
        out[static_cast<std::size_t>(i)] = flat % nx;
        flat /= nx;
    }
}

double fundamental_solution(std::span<const double> x, double t, const ModelParams& params) {
    params.validate();
    if (static_cast<int>(x.size()) != params.d - 1)
        throw std::invalid_argument("fundamental_solution expects d-1 lateral coordinates");
    if (t < 0.0) return 0.0;
    double r2 = 0.0;
    for (double xi : x) r2 += xi * xi;
    if (t == 0.0) {
        if (r2 == 0.0) throw std::domain_error("fundamental solution is singular at (0,0)");
        return 0.0;
    }
    const double beta = params.beta();
    return std::pow(beta / (M_PI * t), 0.5 * (params.d - 1)) * std::exp(-beta * r2 / t);
}

double obstacle(std::span<const double> x, double t, const ModelParams& params) {
    params.validate();
    if (static_cast<int>(x.size()) != params.d - 1)
        throw std::invalid_argument("obstacle expects d-1 lateral coordinates");
    if (!(t > 0.0)) throw std::domain_error("obstacle requires t > 0");
    double r2 = 0.0;
    for (double xi : x) r2 += xi * xi;
    const double a = params.lateral_quadratic_coeff();
    const double beta = params.beta();
    return t - a * r2 -
           (params.k / params.p) * std::pow(beta / (M_PI * t), 0.5 * (params.d - 1)) *
               std::exp(-beta * r2 / t);
}

ScalarField obstacle_field(const SpaceTimeGrid& grid, const ModelParams& params) {
    params.validate();
    if (grid.d != params.d) throw std::invalid_argument("grid dimension does not match params");
    ScalarField gamma;
    gamma.grid = grid;
    gamma.values.assign(static_cast<std::size_t>(grid.nt * grid.lat_count), 0.0);
    const double a = params.lateral_quadratic_coeff();
    const double beta = params.beta();
    const double amp = params.k / params.p;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(grid.d - 1), 0);

    // lateral |x|^2 per node, reused across slices
    std::vector<double> r2(static_cast<std::size_t>(grid.lat_count), 0.0);
    for (std::int64_t lat = 0; lat < grid.lat_count; ++lat) {
        grid.lateral_multi(lat, idx);
        double q = 0.0;
        for (int i = 0; i < grid.d - 1; ++i) {
            const double xi = grid.lateral_coord(idx[static_cast<std::size_t>(i)]);
            q += xi * xi;
        }
        r2[static_cast<std::size_t>(lat)] = q;
    }
    for (std::int64_t it = 0; it < grid.nt; ++it) {
        const double t = grid.time_coord(it);
        const double pref = amp * std::pow(beta / (M_PI * t), 0.5 * (grid.d - 1));
        double* row = gamma.values.data() + static_cast<std::size_t>(it * grid.lat_count);
        for (std::int64_t lat = 0; lat < grid.lat_count; ++lat)
            row[lat] = t - a * r2[static_cast<std::size_t>(lat)] -
                       pref * std::exp(-beta * r2[static_cast<std::size_t>(lat)] / t);
    }
    return gamma;
}

namespace {

bool lateral_interior(const SpaceTimeGrid& grid, std::int64_t lat) {
    for (int i = 0; i < grid.d - 1; ++i) {
        const std::int64_t c = lat % grid.nx;
        if (c == 0 || c == grid.nx - 1) return false;
        lat /= grid.nx;
    }
    return true;
}

bool lateral_near_face(const SpaceTimeGrid& grid, std::int64_t lat) {
    for (int i = 0; i < grid.d - 1; ++i) {
        const std::int64_t c = lat % grid.nx;
        if (c <= 1 || c >= grid.nx - 2) return true;
        lat /= grid.nx;
    }
    return false;
}

} // namespace

ScalarField least_supercaloric_majorant(const SpaceTimeGrid& grid, const ScalarField& gamma,
                                        const ModelParams& params,
                                        const MajorantGridOptions& opts) {
    params.validate();
    if (gamma.grid.nt != grid.nt || gamma.grid.lat_count != grid.lat_count)
        throw std::invalid_argument("gamma field does not match the grid");
    if (!(opts.omega >= 1.0 && opts.omega < 2.0))
        throw std::invalid_argument("relaxation factor must lie in [1,2)");

    const double a = params.lateral_quadratic_coeff();
    const double kappa = params.kappa();
    // s(x,t) * (2(d-1)kappa + p) = kappa * sum_lat s + p * s(x, t-dt)
    const double denom = 2.0 * (grid.d - 1) * kappa + params.p;
    const double w_lat = kappa / denom;
    const double w_below = params.p / denom;
    const double omega = opts.omega;

    ScalarField s;
    s.grid = grid;
    s.values.assign(static_cast<std::size_t>(grid.nt * grid.lat_count), 0.0);

    std::vector<std::int64_t> strides(static_cast<std::size_t>(grid.d - 1));
    {
        std::int64_t st = 1;
        for (int i = 0; i < grid.d - 1; ++i) {
            strides[static_cast<std::size_t>(i)] = st;
            st *= grid.nx;
        }
    }
    std::vector<std::int64_t> idx(static_cast<std::size_t>(grid.d - 1), 0);

    // below-grid data: the roof t - a|x|^2, exact when t_min = dt
    std::vector<double> below;
    if (opts.below_data.empty()) {
        below.resize(static_cast<std::size_t>(grid.lat_count));
        const double t0 = grid.t_min - grid.dt;
        for (std::int64_t lat = 0; lat < grid.lat_count; ++lat) {
            grid.lateral_multi(lat, idx);
            double q = 0.0;
            for (int i = 0; i < grid.d - 1; ++i) {
                const double xi = grid.lateral_coord(idx[static_cast<std::size_t>(i)]);
                q += xi * xi;
            }
            below[static_cast<std::size_t>(lat)] = t0 - a * q;
        }
    } else {
        if (static_cast<std::int64_t>(opts.below_data.size()) != grid.lat_count)
            throw std::invalid_argument("below_data size does not match the grid slice");
        below = opts.below_data;
    }

    for (std::int64_t it = 0; it < grid.nt; ++it) {
        const double* grow = gamma.values.data() + static_cast<std::size_t>(it * grid.lat_count);
        double* row = s.values.data() + static_cast<std::size_t>(it * grid.lat_count);
        std::copy(grow, grow + grid.lat_count, row);
        std::int64_t iter = 0;
        for (;;) {
            if (++iter > opts.max_slice_iterations)
                throw NonConvergence("majorant grid solve: slice " + std::to_string(it) +
                                     " did not reach tolerance");
            double maxupd = 0.0;
            for (std::int64_t lat = 0; lat < grid.lat_count; ++lat) {
                if (!lateral_interior(grid, lat)) continue; // faces pinned to gamma
                double received = w_below * below[static_cast<std::size_t>(lat)];
                for (int i = 0; i < grid.d - 1; ++i) {
                    const std::int64_t st = strides[static_cast<std::size_t>(i)];
                    received += w_lat * (row[lat - st] + row[lat + st]);
                }
                const double old = row[lat];
                const double cand = std::max(grow[lat], (1.0 - omega) * old + omega * received);
                row[lat] = cand;
                maxupd = std::max(maxupd, std::abs(cand - old));
            }
            if (maxupd <= opts.tolerance) break;
        }
        if (opts.check_boundary) {
            for (std::int64_t lat = 0; lat < grid.lat_count; ++lat) {
                if (row[lat] > grow[lat] && lateral_near_face(grid, lat))
                    throw BoundaryContact("{s > gamma} touches the lateral boundary at t = " +
                                          std::to_string(grid.time_coord(it)) +
                                          "; widen x_extent");
            }
            if (it == grid.nt - 1) {
                for (std::int64_t lat = 0; lat < grid.lat_count; ++lat)
                    if (row[lat] > grow[lat])
                        throw BoundaryContact("{s > gamma} touches t_max; raise t_max");
            }
        }
        below.assign(row, row + grid.lat_count);
    }
    return s;
}

double grid_heat_op(const ScalarField& f, std::int64_t it, std::int64_t lat,
                    const ModelParams& params) {
    const SpaceTimeGrid& grid = f.grid;
    if (it < 1 || it >= grid.nt || !lateral_interior(grid, lat))
        throw std::invalid_argument("grid_heat_op requires an interior node");
    const double kappa = params.kappa();
    double lap = 0.0;
    std::int64_t stride = 1;
    for (int i = 0; i < grid.d - 1; ++i) {
        lap += f.at(it, lat - stride) + f.at(it, lat + stride) - 2.0 * f.at(it, lat);
        stride *= grid.nx;
    }
    return kappa * lap / (grid.dx * grid.dx) -
           params.p * (f.at(it, lat) - f.at(it - 1, lat)) / grid.dt;
}

LimitShape extract_limit_shape(const ScalarField& s, const ScalarField& gamma, double threshold) {
    if (s.values.size() != gamma.values.size())
        throw std::invalid_argument("fields live on different grids");
    double umax = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i)
        umax = std::max(umax, s.values[i] - gamma.values[i]);
    const double thr = threshold < 0.0 ? 1e-8 * umax : threshold;

    LimitShape shape;
    shape.grid = s.grid;
    shape.threshold = thr;
    shape.mask.assign(s.values.size(), 0);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (s.values[i] - gamma.values[i] > thr) {
            shape.mask[i] = 1;
            ++shape.count;
        }
    }
    if (shape.count == 0) throw EmptyShape("extract_limit_shape: no node exceeds the threshold");
    shape.measure = static_cast<double>(shape.count) * s.grid.cell_volume();
    return shape;
}

HeatBall::HeatBall(const HeatBallSpec& spec, const ModelParams& params)
    : spec_(spec), params_(params) {
    params.validate();
    if (static_cast<int>(spec.center_x.size()) != params.d - 1)
        throw std::invalid_argument("heat ball center needs d-1 lateral coordinates");
    if (!(spec.radius > 0.0)) throw std::invalid_argument("heat ball radius must be positive");
    level_ = std::pow(spec.radius, -(params.d - 1));
    time_extent_ = params.beta() * spec.radius * spec.radius / M_PI;
}

double HeatBall::lateral_radius(double tau) const {
    if (!(tau > 0.0) || tau > time_extent_) return 0.0;
    const double beta = params_.beta();
    const double arg = (params_.d - 1) * 0.5 * std::log(beta * spec_.radius * spec_.radius /
                                                        (M_PI * tau));
    return std::sqrt(std::max(arg * tau / beta, 0.0));
}

bool HeatBall::contains(std::span<const double> y, double s) const {
    if (static_cast<int>(y.size()) != params_.d - 1)
        throw std::invalid_argument("heat ball membership needs d-1 lateral coordinates");
    if (s > spec_.center_t) return false;
    const double tau = spec_.center_t - s;
    if (tau == 0.0) return false; // top boundary: only the singular center, excluded
    double r2 = 0.0;
    for (int i = 0; i < params_.d - 1; ++i) {
        const double dxi = spec_.center_x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)];
        r2 += dxi * dxi;
    }
    const double beta = params_.beta();
    return std::pow(beta / (M_PI * tau), 0.5 * (params_.d - 1)) * std::exp(-beta * r2 / tau) >=
           level_;
}

namespace {

// Gauss-Legendre nodes on [-1,1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(static_cast<std::size_t>(n), 0.0);
    weights.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (x * p1 - p0) / (x * x - 1.0);
        nodes[static_cast<std::size_t>(i)] = x;
        weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

struct BallIntegrator {
    const SpaceTimeFn& f;
    const HeatBallSpec& spec;
    int lateral_dims;
    const std::vector<double>& nodes;
    const std::vector<double>& weights;
    std::vector<double> point; // lateral offsets u, reused across recursion

    // Integral of f(x - u, t - tau) |u|^2 over the lateral ball |u| <= radius,
    // iterated one axis at a time.
    double over_ball(double radius, double tau, int axis, double partial_r2) {
        const int n = static_cast<int>(nodes.size());
        double acc = 0.0;
        if (axis == lateral_dims - 1) {
            for (int i = 0; i < n; ++i) {
                const double u = radius * nodes[static_cast<std::size_t>(i)];
                point[static_cast<std::size_t>(axis)] = u;
                const double r2 = partial_r2 + u * u;
                acc += weights[static_cast<std::size_t>(i)] * value(tau, r2);
            }
            return acc * radius;
        }
        for (int i = 0; i < n; ++i) {
            const double u = radius * nodes[static_cast<std::size_t>(i)];
            point[static_cast<std::size_t>(axis)] = u;
            const double rest = std::sqrt(std::max(radius * radius - u * u, 0.0));
            if (rest > 0.0)
                acc += weights[static_cast<std::size_t>(i)] *
                       over_ball(rest, tau, axis + 1, partial_r2 + u * u);
        }
        return acc * radius;
    }

    double value(double tau, double r2) {
        thread_local std::vector<double> y;
        y.resize(point.size());
        for (std::size_t i = 0; i < point.size(); ++i)
            y[i] = spec.center_x[i] - point[i];
        return f(y, spec.center_t - tau) * r2;
    }
};

} // namespace

double mean_value_operator(const SpaceTimeFn& f, const HeatBallSpec& spec,
                           const ModelParams& params, const QuadratureOptions& opts) {
    const HeatBall ball(spec, params);
    const double tau_max = ball.time_extent();
    const double beta = params.beta();
    if (opts.points < 4) throw std::invalid_argument("quadrature needs at least 4 points");

    std::vector<double> nodes, weights;
    gauss_legendre(opts.points, nodes, weights);

    BallIntegrator integ{f, spec, params.d - 1, nodes, weights, {}};
    integ.point.assign(static_cast<std::size_t>(params.d - 1), 0.0);

    // tau = tau_max * w^2; dyadic panels in w approach the singular center,
    // each panel one shell of the eta -> eta/2 refinement.
    auto panel = [&](double w_lo, double w_hi) {
        double acc = 0.0;
        const double mid = 0.5 * (w_hi + w_lo), half = 0.5 * (w_hi - w_lo);
        for (int i = 0; i < opts.points; ++i) {
            const double w = mid + half * nodes[static_cast<std::size_t>(i)];
            const double tau = tau_max * w * w;
            const double jac = 2.0 * tau_max * w * half;
            const double radius = ball.lateral_radius(tau);
            if (radius <= 0.0) continue;
            const double inner = integ.over_ball(radius, tau, 0, 0.0);
            acc += weights[static_cast<std::size_t>(i)] * jac * inner / (tau * tau);
        }
        return acc;
    };

    double total = 0.0;
    double hi = 1.0;
    bool converged = false;
    for (int j = 0; j < opts.max_panels; ++j) {
        const double lo = hi * 0.5;
        const double contribution = panel(lo, hi);
        total += contribution;
        hi = lo;
        if (j > 2 && std::abs(contribution) <= opts.tol * std::max(std::abs(total), 1e-30)) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw QuadratureError("mean_value_operator: quadrature tolerance not met");
    return total * beta * std::pow(spec.radius, -(params.d - 1));
}

SpaceTimeFn field_sampler(const ScalarField& field) {
    return [&field](std::span<const double> y, double s) -> double {
        const SpaceTimeGrid& g = field.grid;
        if (static_cast<int>(y.size()) != g.d - 1)
            throw std::invalid_argument("field sampler expects d-1 lateral coordinates");
        // clamped multilinear interpolation over 2^d corners
        const double ft = std::clamp((s - g.t_min) / g.dt, 0.0, static_cast<double>(g.nt - 1));
        const std::int64_t it0 = std::min<std::int64_t>(static_cast<std::int64_t>(ft), g.nt - 2);
        const double wt = ft - static_cast<double>(it0);

        std::vector<std::int64_t> base(static_cast<std::size_t>(g.d - 1));
        std::vector<double> frac(static_cast<std::size_t>(g.d - 1));
        for (int i = 0; i < g.d - 1; ++i) {
            const double fx =
                std::clamp(y[static_cast<std::size_t>(i)] / g.dx + static_cast<double>(g.nx / 2),
                           0.0, static_cast<double>(g.nx - 1));
            const std::int64_t j0 = std::min<std::int64_t>(static_cast<std::int64_t>(fx), g.nx - 2);
            base[static_cast<std::size_t>(i)] = j0;
            frac[static_cast<std::size_t>(i)] = fx - static_cast<double>(j0);
        }
        double acc = 0.0;
        const int corners = 1 << (g.d - 1);
        for (int c = 0; c < corners; ++c) {
            double w = 1.0;
            std::int64_t lat = 0, stride = 1;
            for (int i = 0; i < g.d - 1; ++i) {
                const int bit = (c >> i) & 1;
                w *= bit ? frac[static_cast<std::size_t>(i)] : 1.0 - frac[static_cast<std::size_t>(i)];
                lat += (base[static_cast<std::size_t>(i)] + bit) * stride;
                stride *= g.nx;
            }
            acc += w * ((1.0 - wt) * field.at(it0, lat) + wt * field.at(it0 + 1, lat));
        }
        return acc;
    };
}

} // namespace heatball
