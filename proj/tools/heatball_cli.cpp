// heatball: drifted iDLA clusters, unfair divisible sandpiles, the parabolic
// obstacle problem they share, and the verification tooling around them.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "heatball/analysis.hpp"
#include "heatball/continuum.hpp"
#include "heatball/idla.hpp"
#include "heatball/io.hpp"
#include "heatball/lattice.hpp"
#include "heatball/sandpile.hpp"
#include "heatball/walks.hpp"

using heatball::io::Json;
namespace hb = heatball;

namespace {

std::uint64_t env_seed_default() {
    if (const char* env = std::getenv("HEATBALL_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
        }
    }
    return 0;
}

struct CommonModel {
    int d = 2;
    double p = 0.2;
    std::string variant = "monotone";
    double k = 1.0;
    std::uint64_t seed = env_seed_default();

    void add_flags(CLI::App* cmd, bool with_k = true) {
        cmd->add_option("--d", d, "lattice dimension (>= 2)")->capture_default_str();
        cmd->add_option("--p", p, "drift probability in (0,1)")->required();
        cmd->add_option("--variant", variant, "walk variant: monotone | natural-lazy")
            ->capture_default_str();
        if (with_k) cmd->add_option("--k", k, "mass multiplier")->capture_default_str();
        cmd->add_option("--seed", seed, "RNG seed (falls back to HEATBALL_SEED)")
            ->capture_default_str();
    }

    hb::ModelParams params() const {
        hb::ModelParams out;
        out.d = d;
        out.p = p;
        out.variant = hb::variant_from_string(variant);
        out.k = k;
        out.seed = seed;
        out.validate();
        return out;
    }

    Json json() const {
        Json j;
        j["d"] = d;
        j["p"] = p;
        j["variant"] = variant;
        j["k"] = k;
        j["seed"] = seed;
        return j;
    }
};

void write_config(const std::string& out_path, const Json& config) {
    if (out_path.empty()) return;
    hb::io::write_text_file(out_path + ".config.json", config.dump(2) + "\n");
}

// Entries of a JSON config file rendered as trailing CLI arguments; with the
// TakeLast policy they override anything given on the command line.
std::vector<std::string> config_to_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    Json cfg = Json::parse(in);
    std::vector<std::string> args;
    for (const auto& [key, value] : cfg.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back("--" + key);
            continue;
        }
        std::string rendered;
        if (value.is_string())
            rendered = value.get<std::string>();
        else
            rendered = value.dump();
        args.push_back("--" + key + "=" + rendered);
    }
    return args;
}

// --- subcommand payloads -------------------------------------------------

struct IdlaCmd {
    CommonModel model;
    std::int64_t n = 0;
    std::int64_t checkpoint_every = 0;
    std::string out;
    std::string pgm;

    int run() {
        const auto params = model.params();
        Json config = model.json();
        config["command"] = "idla";
        config["n"] = n;
        config["checkpoint-every"] = checkpoint_every;
        const Json header = hb::io::params_header(params, static_cast<double>(n));

        hb::IdlaRun result;
        if (checkpoint_every > 0 && !out.empty()) {
            std::int64_t index = 0;
            result = hb::build_cluster_batched(
                n, params, checkpoint_every, [&](const hb::IdlaRun& snap) {
                    Json h = header;
                    h["snapshot"] = snap.size();
                    hb::io::write_cluster_csv(out + ".ckpt" + std::to_string(index++),
                                              snap.cluster(), h);
                });
        } else {
            result = hb::build_cluster(n, params);
        }
        const auto cluster = result.cluster();
        if (!out.empty()) hb::io::write_cluster_csv(out, cluster, header);
        if (!pgm.empty())
            hb::io::write_cluster_pgm(pgm, cluster, "cfg=" + hb::io::config_hash(config.dump()));
        write_config(out.empty() ? pgm : out, config);

        Json report;
        report["command"] = "idla";
        report["n"] = n;
        report["sites"] = cluster.size();
        const auto box = hb::bounding_box(hb::normalize(cluster, n, params.d));
        report["lateral_radius"] = box.lateral_radius;
        report["time_extent"] = box.time_extent;
        std::cout << report.dump() << "\n";
        return 0;
    }
};

struct SandpileCmd {
    CommonModel model;
    double n = 0.0;
    double tolerance = 1e-9;
    std::string order = "fifo";
    std::int64_t max_sweeps = 50'000'000;
    double threshold = 1e-9;
    std::string out;
    std::string odometer_out;

    int run() {
        const auto params = model.params();
        hb::ToppleConfig cfg;
        cfg.excess_tolerance = tolerance;
        cfg.sweep_order = hb::sweep_order_from_string(order);
        cfg.max_sweeps = max_sweeps;

        Json config = model.json();
        config["command"] = "sandpile";
        config["n"] = n;
        config["tolerance"] = tolerance;
        config["order"] = order;
        config["max-sweeps"] = max_sweeps;
        config["threshold"] = threshold;

        const auto result = hb::stabilize_point_mass(n, params, cfg);
        const Json header = hb::io::params_header(params, n);
        if (!out.empty()) hb::io::write_field_csv(out, result.final_mass, header);
        if (!odometer_out.empty()) hb::io::write_field_csv(odometer_out, result.odometer, header);
        write_config(out, config);

        Json report;
        report["command"] = "sandpile";
        report["sweeps"] = result.sweeps;
        report["max_residual_excess"] = result.max_residual_excess;
        report["sites"] = result.final_mass.size();
        report["cluster_sites"] = hb::extract_cluster(result, threshold).size();
        report["total_mass"] = result.final_mass.total();
        std::cout << report.dump() << "\n";
        return 0;
    }
};

struct ObstacleCmd {
    CommonModel model;
    double x_extent = 3.0;
    double t_max = 3.0;
    double t_min = 0.0; // 0 selects dt
    double dx = 0.01;
    double threshold = -1.0;
    std::string out_fields;
    std::string out_shape;
    std::string pgm;

    static void write_shape_csv(const std::string& path, const hb::LimitShape& shape,
                                const Json& header) {
        std::string body = "# " + header.dump() + "\n";
        const auto& g = shape.grid;
        std::vector<std::int64_t> idx(static_cast<std::size_t>(g.d - 1));
        for (std::int64_t it = 0; it < g.nt; ++it) {
            for (std::int64_t lat = 0; lat < g.lat_count; ++lat) {
                if (!shape.member(it, lat)) continue;
                g.lateral_multi(lat, idx);
                std::string line;
                for (int i = 0; i < g.d - 1; ++i) {
                    line +=
                        hb::io::format_double(g.lateral_coord(idx[static_cast<std::size_t>(i)]));
                    line += ',';
                }
                line += hb::io::format_double(g.time_coord(it));
                line += '\n';
                body += line;
            }
        }
        hb::io::write_text_file(path, body);
    }

    int run() {
        const auto params = model.params();
        Json config = model.json();
        config["command"] = "obstacle";
        config["x-extent"] = x_extent;
        config["t-max"] = t_max;
        config["t-min"] = t_min;
        config["dx"] = dx;
        config["threshold"] = threshold;

        const auto grid = hb::SpaceTimeGrid::make(params.d, x_extent, t_max, dx, t_min);
        const auto gamma = hb::obstacle_field(grid, params);
        const auto s = hb::least_supercaloric_majorant(grid, gamma, params);
        const auto shape = hb::extract_limit_shape(s, gamma, threshold);

        Json header = hb::io::params_header(params, 0.0);
        header.erase("n");
        header["dx"] = grid.dx;
        header["dt"] = grid.dt;
        header["t_min"] = grid.t_min;
        header["t_max"] = grid.t_max;
        header["x_extent"] = grid.x_extent;
        header["threshold"] = shape.threshold;
        header["measure"] = shape.measure;

        if (!out_fields.empty()) {
            std::string body = "# " + header.dump() + "\n";
            std::vector<std::int64_t> idx(static_cast<std::size_t>(grid.d - 1));
            for (std::int64_t it = 0; it < grid.nt; ++it) {
                for (std::int64_t lat = 0; lat < grid.lat_count; ++lat) {
                    grid.lateral_multi(lat, idx);
                    std::string line;
                    for (int i = 0; i < grid.d - 1; ++i) {
                        line += hb::io::format_double(
                            grid.lateral_coord(idx[static_cast<std::size_t>(i)]));
                        line += ',';
                    }
                    line += hb::io::format_double(grid.time_coord(it));
                    line += ',';
                    line += hb::io::format_double(gamma.at(it, lat));
                    line += ',';
                    line += hb::io::format_double(s.at(it, lat));
                    line += ',';
                    line += hb::io::format_double(s.at(it, lat) - gamma.at(it, lat));
                    line += '\n';
                    body += line;
                }
            }
            hb::io::write_text_file(out_fields, body);
        }
        if (!out_shape.empty()) write_shape_csv(out_shape, shape, header);
        if (!pgm.empty()) {
            if (params.d != 2) throw std::invalid_argument("--pgm is supported for d=2 only");
            double umax = 0.0;
            for (std::size_t i = 0; i < s.values.size(); ++i)
                umax = std::max(umax, s.values[i] - gamma.values[i]);
            std::vector<std::uint8_t> pixels(s.values.size(), 255);
            for (std::int64_t it = 0; it < grid.nt; ++it) {
                for (std::int64_t lat = 0; lat < grid.nx; ++lat) {
                    const double u = s.at(it, lat) - gamma.at(it, lat);
                    const double shade = umax > 0.0 ? u / umax : 0.0;
                    pixels[static_cast<std::size_t>((grid.nt - 1 - it) * grid.nx + lat)] =
                        static_cast<std::uint8_t>(255.0 * (1.0 - shade));
                }
            }
            hb::io::write_pgm(pgm, grid.nx, grid.nt, pixels,
                              "cfg=" + hb::io::config_hash(config.dump()));
        }
        const std::string anchor = !out_shape.empty()   ? out_shape
                                   : !out_fields.empty() ? out_fields
                                                         : pgm;
        write_config(anchor, config);

        Json report;
        report["command"] = "obstacle";
        report["nodes"] = grid.nt * grid.lat_count;
        report["shape_nodes"] = shape.count;
        report["measure"] = shape.measure;
        report["threshold"] = shape.threshold;
        std::cout << report.dump() << "\n";
        return 0;
    }
};

struct GreenCmd {
    CommonModel model;
    std::vector<std::string> sites;
    std::int64_t samples = 100'000;
    std::int64_t lat_radius = 0; // 0 = auto
    double horizon_factor = 20.0;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    std::string out;

    int run() {
        const auto params = model.params();
        Json config = model.json();
        config["command"] = "green";
        config["samples"] = samples;
        config["lat-radius"] = lat_radius;
        config["horizon-factor"] = horizon_factor;

        std::vector<hb::Site> parsed;
        hb::Coord max_layer = 0;
        for (const std::string& spec : sites) {
            hb::Site z = hb::Site::origin(params.d);
            std::stringstream ss(spec);
            std::string tok;
            int i = 0;
            while (std::getline(ss, tok, ',')) {
                if (i >= params.d)
                    throw std::invalid_argument("site '" + spec + "' has too many coordinates");
                z[i++] = std::stoll(tok);
            }
            if (i != params.d)
                throw std::invalid_argument("site '" + spec + "' needs " +
                                            std::to_string(params.d) + " coordinates");
            parsed.push_back(z);
            max_layer = std::max(max_layer, z.drift());
        }
        if (parsed.empty()) throw std::invalid_argument("green: provide at least one --site");

        std::optional<hb::GreenTable> table;
        if (params.variant == hb::Variant::Monotone) {
            const hb::Coord radius =
                lat_radius > 0 ? lat_radius : hb::suggested_green_radius(params, max_layer);
            table.emplace(params, radius, max_layer);
        }
        hb::GreenMcOptions mc_opts;
        mc_opts.horizon_factor = horizon_factor;
        mc_opts.threads = std::max(threads, 1);

        std::string body =
            "# " + hb::io::params_header(params, static_cast<double>(samples)).dump() + "\n";
        for (const auto& z : parsed) {
            const auto est = hb::green_mc(z, params, samples, mc_opts);
            std::string line;
            for (int i = 0; i < params.d; ++i) {
                line += std::to_string(z[i]);
                line += ',';
            }
            line += table ? hb::io::format_double(table->g(z)) : "nan";
            line += ',';
            line += hb::io::format_double(est.value);
            line += ',';
            line += hb::io::format_double(est.std_error);
            line += '\n';
            body += line;
        }
        if (out.empty()) {
            std::cout << body;
        } else {
            hb::io::write_text_file(out, body);
            write_config(out, config);
            Json report;
            report["command"] = "green";
            report["sites"] = parsed.size();
            std::cout << report.dump() << "\n";
        }
        return 0;
    }
};

struct CompareCmd {
    std::string cluster_a;
    std::string cluster_b;
    std::string shape_csv;
    double window_half = 2.0;
    double window_t_lo = 0.2;
    double window_t_hi = 2.5;
    double hausdorff_budget = 0.1;
    double symdiff_budget = 0.1;
    std::string out;

    static hb::PointSet read_shape_points(const std::string& path, const hb::Window& window,
                                          double* half_diag_out) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open shape file '" + path + "'");
        hb::PointSet pts;
        std::string line;
        bool dim_set = false;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                const Json h = Json::parse(line.substr(line.find_first_not_of("# ")));
                if (half_diag_out && h.contains("dx") && h.contains("dt")) {
                    const double sdx = h.at("dx").get<double>();
                    const double sdt = h.at("dt").get<double>();
                    const int d = h.value("d", 2);
                    *half_diag_out = 0.5 * std::sqrt((d - 1) * sdx * sdx + sdt * sdt);
                }
                continue;
            }
            std::stringstream ss(line);
            std::string tok;
            std::vector<double> p;
            while (std::getline(ss, tok, ',')) p.push_back(std::stod(tok));
            if (!dim_set && !p.empty()) {
                pts.dim = static_cast<int>(p.size());
                dim_set = true;
            }
            if (window.contains(p)) pts.push(p);
        }
        return pts;
    }

    int run() {
        Json config;
        config["command"] = "compare";
        config["cluster-a"] = cluster_a;
        config["cluster-b"] = cluster_b;
        config["shape"] = shape_csv;
        config["window-half"] = window_half;
        config["window-t-lo"] = window_t_lo;
        config["window-t-hi"] = window_t_hi;

        const auto snapA = hb::io::read_field_csv(cluster_a);
        const auto snapB = hb::io::read_field_csv(cluster_b);
        const Json headA = Json::parse(snapA.header_json);
        const Json headB = Json::parse(snapB.header_json);
        const auto nA = static_cast<std::int64_t>(headA.at("n").get<double>());
        const auto nB = static_cast<std::int64_t>(headB.at("n").get<double>());
        const auto clusterA = hb::io::cluster_from_snapshot(snapA, 1e-9);
        const auto clusterB = hb::io::cluster_from_snapshot(snapB, 1e-9);
        const int d = snapA.d;
        const auto normA = hb::normalize(clusterA, nA, d);
        const auto normB = hb::normalize(clusterB, nB, d);
        const auto window = hb::Window::lateral_box(d, window_half, window_t_lo, window_t_hi);

        Json metrics;
        const auto boxA = hb::bounding_box(normA);
        const auto boxB = hb::bounding_box(normB);
        metrics["box_a"] = {{"lateral_radius", boxA.lateral_radius},
                            {"time_extent", boxA.time_extent}};
        metrics["box_b"] = {{"lateral_radius", boxB.lateral_radius},
                            {"time_extent", boxB.time_extent}};
        metrics["box_rel_diff_lateral"] =
            std::abs(boxA.lateral_radius - boxB.lateral_radius) / boxB.lateral_radius;
        metrics["box_rel_diff_time"] =
            std::abs(boxA.time_extent - boxB.time_extent) / boxB.time_extent;

        bool pass = true;
        if (nA == nB) {
            const double frac = hb::symmetric_difference_fraction(clusterA, clusterB);
            metrics["symdiff_fraction"] = frac;
            pass = pass && frac <= symdiff_budget;
        } else {
            metrics["symdiff_fraction"] = nullptr;
        }

        const auto centersA = hb::cell_centers(normA, &window);
        const auto centersB = hb::cell_centers(normB, &window);
        if (centersA.size() > 0 && centersB.size() > 0) {
            const double centers = hb::hausdorff(centersA, centersB);
            metrics["hausdorff_ab_centers"] = centers;
            metrics["hausdorff_ab_upper"] =
                centers + hb::half_cell_diagonal(normA) + hb::half_cell_diagonal(normB);
        }

        if (!shape_csv.empty()) {
            double shape_half_diag = 0.0;
            const auto shape_pts = read_shape_points(shape_csv, window, &shape_half_diag);
            if (shape_pts.size() == 0) throw hb::EmptyShape("shape has no nodes in the window");
            const double centers = hb::hausdorff(centersB, shape_pts);
            const double corrected =
                centers + hb::half_cell_diagonal(normB) + shape_half_diag;
            metrics["hausdorff_b_shape_centers"] = centers;
            metrics["hausdorff_b_shape_upper"] = corrected;
            pass = pass && corrected <= hausdorff_budget;
        }

        Json report;
        report["command"] = "compare";
        report["inputs"] = config;
        report["metrics"] = metrics;
        report["tolerances"] = {{"hausdorff", hausdorff_budget}, {"symdiff", symdiff_budget}};
        report["pass"] = pass;
        const std::string text = report.dump(2) + "\n";
        if (out.empty()) {
            std::cout << text;
        } else {
            hb::io::write_text_file(out, text);
            std::cout << report["pass"].dump() << "\n";
        }
        return pass ? 0 : 3;
    }
};

struct MvpCmd {
    CommonModel model;
    double x_extent = 3.0;
    double t_max = 3.0;
    double dx = 0.01;
    double budget = 0.02;
    std::string out;

    int run() {
        const auto params = model.params();
        Json config = model.json();
        config["command"] = "mvp";
        config["x-extent"] = x_extent;
        config["t-max"] = t_max;
        config["dx"] = dx;
        config["budget"] = budget;

        const auto grid = hb::SpaceTimeGrid::make(params.d, x_extent, t_max, dx);
        const auto gamma = hb::obstacle_field(grid, params);
        const auto s = hb::least_supercaloric_majorant(grid, gamma, params);
        const auto shape = hb::extract_limit_shape(s, gamma);
        const auto report = hb::verify_mean_value(shape, params, hb::caloric_test_family(params));

        Json entries = Json::array();
        for (const auto& e : report.entries)
            entries.push_back({{"name", e.name},
                               {"integral", e.integral},
                               {"reference", e.reference},
                               {"rel_error", e.rel_error}});
        Json j;
        j["command"] = "mvp";
        j["inputs"] = config;
        j["metrics"] = {{"volume", report.volume},
                        {"entries", entries},
                        {"max_rel_error", report.max_rel_error}};
        j["tolerances"] = {{"rel_error", budget}};
        j["pass"] = report.max_rel_error <= budget;
        const std::string text = j.dump(2) + "\n";
        if (out.empty()) {
            std::cout << text;
        } else {
            hb::io::write_text_file(out, text);
            std::cout << j["pass"].dump() << "\n";
        }
        return j["pass"].get<bool>() ? 0 : 3;
    }
};

struct RescaleCmd {
    int d = 2;
    std::string variant = "monotone";
    double p1 = 0.2;
    double p2 = 0.3;
    double x_extent = 3.0;
    double t_max = 3.0;
    double dx = 0.02;
    double ratio_budget = 0.05;
    double residual_budget = 0.05;
    std::string out;

    int run() {
        Json config;
        config["command"] = "rescale-check";
        config["d"] = d;
        config["p1"] = p1;
        config["p2"] = p2;
        config["variant"] = variant;
        config["x-extent"] = x_extent;
        config["t-max"] = t_max;
        config["dx"] = dx;

        auto solve = [&](double p) {
            hb::ModelParams params;
            params.d = d;
            params.p = p;
            params.variant = hb::variant_from_string(variant);
            params.validate();
            const auto grid = hb::SpaceTimeGrid::make(params.d, x_extent, t_max, dx);
            const auto gamma = hb::obstacle_field(grid, params);
            const auto s = hb::least_supercaloric_majorant(grid, gamma, params);
            return hb::extract_limit_shape(s, gamma);
        };
        const auto D1 = solve(p1);
        const auto D2 = solve(p2);
        const auto fit = hb::rescaling_check(D1, D2);

        hb::ModelParams pa, pb;
        pa.d = pb.d = d;
        pa.p = p1;
        pb.p = p2;
        pa.variant = pb.variant = hb::variant_from_string(variant);
        const double beta_ratio = pb.beta() / pa.beta();
        const double ratio_err = std::abs(fit.lambda_over_mu2 - beta_ratio) / beta_ratio;

        Json j;
        j["command"] = "rescale-check";
        j["inputs"] = config;
        j["metrics"] = {{"mu", fit.mu},
                        {"lambda", fit.lambda},
                        {"lambda_over_mu2", fit.lambda_over_mu2},
                        {"beta_ratio", beta_ratio},
                        {"ratio_rel_error", ratio_err},
                        {"residual", fit.residual}};
        j["tolerances"] = {{"ratio_rel_error", ratio_budget}, {"residual", residual_budget}};
        j["pass"] = ratio_err <= ratio_budget && fit.residual <= residual_budget;
        const std::string text = j.dump(2) + "\n";
        if (out.empty()) {
            std::cout << text;
        } else {
            hb::io::write_text_file(out, text);
            std::cout << j["pass"].dump() << "\n";
        }
        return j["pass"].get<bool>() ? 0 : 3;
    }
};

struct ReproCmd {
    std::string target;
    std::int64_t n = 500'000;
    std::uint64_t seed = env_seed_default();
    std::string out_prefix = "figure1";

    int run() {
        if (target != "figure1")
            throw std::invalid_argument("unknown repro target '" + target +
                                        "' (available: figure1)");
        hb::ModelParams params;
        params.d = 2;
        params.p = 0.2;
        params.variant = hb::Variant::Monotone;
        params.seed = seed;

        Json config;
        config["command"] = "repro";
        config["target"] = target;
        config["n"] = n;
        config["seed"] = seed;

        const auto run = hb::build_cluster(n, params);
        const auto cluster = run.cluster();
        const Json header = hb::io::params_header(params, static_cast<double>(n));
        hb::io::write_cluster_csv(out_prefix + ".csv", cluster, header);
        hb::io::write_cluster_pgm(out_prefix + ".pgm", cluster,
                                  "cfg=" + hb::io::config_hash(config.dump()));
        write_config(out_prefix + ".csv", config);

        Json report;
        report["command"] = "repro";
        report["n"] = n;
        report["sites"] = cluster.size();
        report["csv"] = out_prefix + ".csv";
        report["pgm"] = out_prefix + ".pgm";
        std::cout << report.dump() << "\n";
        return 0;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"drifted iDLA / unfair divisible sandpile / parabolic obstacle toolkit"};
    app.require_subcommand(1);
    app.fallthrough(); // lets --config appear after the subcommand
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file whose entries override flags");

    IdlaCmd idla;
    auto* idla_cmd = app.add_subcommand("idla", "grow a drifted iDLA cluster");
    idla.model.add_flags(idla_cmd, false);
    idla_cmd->add_option("--n", idla.n, "number of particles")->required();
    idla_cmd->add_option("--checkpoint-every", idla.checkpoint_every,
                         "emit snapshot cluster files every k particles");
    idla_cmd->add_option("--out", idla.out, "cluster site list CSV");
    idla_cmd->add_option("--pgm", idla.pgm, "occupancy image (d=2)");

    SandpileCmd sandpile;
    auto* sand_cmd = app.add_subcommand("sandpile", "stabilize the unfair divisible sandpile");
    sandpile.model.add_flags(sand_cmd);
    sand_cmd->add_option("--n", sandpile.n, "initial mass at the origin")->required();
    sand_cmd->add_option("--tolerance", sandpile.tolerance, "stop when max excess <= tolerance")
        ->capture_default_str();
    sand_cmd->add_option("--order", sandpile.order, "sweep order: fifo | layer | random")
        ->capture_default_str();
    sand_cmd->add_option("--max-sweeps", sandpile.max_sweeps, "sweep limit")->capture_default_str();
    sand_cmd->add_option("--threshold", sandpile.threshold, "cluster extraction threshold")
        ->capture_default_str();
    sand_cmd->add_option("--out", sandpile.out, "final mass CSV");
    sand_cmd->add_option("--odometer-out", sandpile.odometer_out, "odometer CSV");

    ObstacleCmd obstacle;
    auto* obst_cmd = app.add_subcommand("obstacle", "solve the continuum obstacle problem");
    obstacle.model.add_flags(obst_cmd);
    obst_cmd->add_option("--x-extent", obstacle.x_extent, "lateral half-width")
        ->capture_default_str();
    obst_cmd->add_option("--t-max", obstacle.t_max, "time range upper end")->capture_default_str();
    obst_cmd->add_option("--t-min", obstacle.t_min, "first time level (0 = dx^2)")
        ->capture_default_str();
    obst_cmd->add_option("--dx", obstacle.dx, "lateral spacing (dt = dx^2)")->capture_default_str();
    obst_cmd->add_option("--threshold", obstacle.threshold,
                         "shape threshold (-1 = 1e-8 * max(s-gamma))")
        ->capture_default_str();
    obst_cmd->add_option("--out-fields", obstacle.out_fields, "CSV of x,t,gamma,s,u");
    obst_cmd->add_option("--out-shape", obstacle.out_shape, "CSV node list of D");
    obst_cmd->add_option("--pgm", obstacle.pgm, "odometer image (d=2)");

    GreenCmd green;
    auto* green_cmd = app.add_subcommand("green", "Green's function: layer DP vs Monte Carlo");
    green.model.add_flags(green_cmd, false);
    green_cmd->add_option("--site", green.sites, "site as c1,c2,...,cd (repeatable)")
        ->take_all()
        ->required();
    green_cmd->add_option("--samples", green.samples, "Monte Carlo walks")->capture_default_str();
    green_cmd->add_option("--lat-radius", green.lat_radius, "DP lateral radius (0 = auto)")
        ->capture_default_str();
    green_cmd->add_option("--horizon-factor", green.horizon_factor,
                          "natural-lazy horizon multiple of max(|z_d|,1)/p")
        ->capture_default_str();
    green_cmd->add_option("--threads", green.threads, "worker threads")->capture_default_str();
    green_cmd->add_option("--out", green.out, "CSV output (default stdout)");

    CompareCmd compare;
    auto* cmp_cmd = app.add_subcommand("compare", "compare clusters and the limit shape");
    cmp_cmd->add_option("--cluster-a", compare.cluster_a, "first cluster CSV")->required();
    cmp_cmd->add_option("--cluster-b", compare.cluster_b, "second cluster CSV")->required();
    cmp_cmd->add_option("--shape", compare.shape_csv,
                        "limit shape CSV (from obstacle --out-shape)");
    cmp_cmd->add_option("--window-half", compare.window_half, "lateral window half-width")
        ->capture_default_str();
    cmp_cmd->add_option("--window-t-lo", compare.window_t_lo, "window time lower end")
        ->capture_default_str();
    cmp_cmd->add_option("--window-t-hi", compare.window_t_hi, "window time upper end")
        ->capture_default_str();
    cmp_cmd->add_option("--hausdorff-budget", compare.hausdorff_budget, "pass threshold")
        ->capture_default_str();
    cmp_cmd->add_option("--symdiff-budget", compare.symdiff_budget, "pass threshold")
        ->capture_default_str();
    cmp_cmd->add_option("--out", compare.out, "JSON report path (default stdout)");

    MvpCmd mvp;
    auto* mvp_cmd = app.add_subcommand("mvp", "mean value property on the computed shape");
    mvp.model.add_flags(mvp_cmd);
    mvp_cmd->add_option("--x-extent", mvp.x_extent, "lateral half-width")->capture_default_str();
    mvp_cmd->add_option("--t-max", mvp.t_max, "time range upper end")->capture_default_str();
    mvp_cmd->add_option("--dx", mvp.dx, "lateral spacing")->capture_default_str();
    mvp_cmd->add_option("--budget", mvp.budget, "max relative error")->capture_default_str();
    mvp_cmd->add_option("--out", mvp.out, "JSON report path (default stdout)");

    RescaleCmd rescale;
    auto* rs_cmd = app.add_subcommand("rescale-check", "fit the shape rescaling law across drifts");
    rs_cmd->add_option("--d", rescale.d, "lattice dimension")->capture_default_str();
    rs_cmd->add_option("--variant", rescale.variant, "walk variant")->capture_default_str();
    rs_cmd->add_option("--p1", rescale.p1, "first drift probability")->required();
    rs_cmd->add_option("--p2", rescale.p2, "second drift probability")->required();
    rs_cmd->add_option("--x-extent", rescale.x_extent, "lateral half-width")->capture_default_str();
    rs_cmd->add_option("--t-max", rescale.t_max, "time range upper end")->capture_default_str();
    rs_cmd->add_option("--dx", rescale.dx, "lateral spacing")->capture_default_str();
    rs_cmd->add_option("--ratio-budget", rescale.ratio_budget, "lambda/mu^2 tolerance")
        ->capture_default_str();
    rs_cmd->add_option("--residual-budget", rescale.residual_budget, "fit residual tolerance")
        ->capture_default_str();
    rs_cmd->add_option("--out", rescale.out, "JSON report path (default stdout)");

    ReproCmd repro;
    auto* repro_cmd = app.add_subcommand("repro", "reproduce a canned experiment");
    repro_cmd->add_option("target", repro.target, "experiment name (figure1)")->required();
    repro_cmd->add_option("--n", repro.n, "number of particles")->capture_default_str();
    repro_cmd->add_option("--seed", repro.seed, "RNG seed")->capture_default_str();
    repro_cmd->add_option("--out-prefix", repro.out_prefix, "output file prefix")
        ->capture_default_str();

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        // pre-scan for --config and append its entries (they take precedence)
        for (std::size_t i = 0; i < args.size(); ++i) {
            std::string value;
            if (args[i] == "--config" && i + 1 < args.size())
                value = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0)
                value = args[i].substr(9);
            if (!value.empty()) {
                const auto extra = config_to_args(value);
                args.insert(args.end(), extra.begin(), extra.end());
                break;
            }
        }
        std::vector<const char*> cargs;
        cargs.push_back(argv[0]);
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (idla_cmd->parsed()) return idla.run();
        if (sand_cmd->parsed()) return sandpile.run();
        if (obst_cmd->parsed()) return obstacle.run();
        if (green_cmd->parsed()) return green.run();
        if (cmp_cmd->parsed()) return compare.run();
        if (mvp_cmd->parsed()) return mvp.run();
        if (rs_cmd->parsed()) return rescale.run();
        if (repro_cmd->parsed()) return repro.run();
    } catch (const hb::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
