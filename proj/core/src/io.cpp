#include "heatball/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace heatball::io {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string config_hash(const std::string& serialized) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : serialized) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    const auto res = std::to_chars(buf, buf + sizeof(buf), h, 16);
    std::string hex(buf, res.ptr);
    return std::string(16 - hex.size(), '0') + hex;
}

Json params_header(const ModelParams& params, double n) {
    Json h;
    h["d"] = params.d;
    h["p"] = params.p;
    h["variant"] = to_string(params.variant);
    h["k"] = params.k;
    h["n"] = n;
    h["seed"] = params.seed;
    return h;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

void write_rows(std::ostream& out, const std::vector<Site>& sites,
                const std::function<double(const Site&)>& value) {
    for (const Site& z : sites) {
        std::string line;
        for (int i = 0; i < z.dim; ++i) {
            line += std::to_string(z[i]);
            line += ',';
        }
        line += format_double(value(z));
        line += '\n';
        out << line;
    }
}

} // namespace

void write_field_csv(const std::string& path, const MassField& field, const Json& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "# " << header.dump() << "\n";
    write_rows(out, field.sorted_support(), [&](const Site& z) { return field.at(z); });
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void write_cluster_csv(const std::string& path, const ClusterSet& cluster, const Json& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "# " << header.dump() << "\n";
    write_rows(out, cluster.sites, [](const Site&) { return 1.0; });
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

FieldSnapshot read_field_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    FieldSnapshot snap;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            snap.header_json = line.substr(line.find_first_not_of("# "));
            continue;
        }
        std::vector<std::string> parts;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) parts.push_back(tok);
        if (parts.size() < 2) throw std::runtime_error("malformed record in '" + path + "'");
        const int d = static_cast<int>(parts.size()) - 1;
        if (snap.d == 0) snap.d = d;
        if (snap.d != d) throw std::runtime_error("inconsistent dimension in '" + path + "'");
        Site z = Site::origin(d);
        for (int i = 0; i < d; ++i) z[i] = std::stoll(parts[static_cast<std::size_t>(i)]);
        snap.field.set(z, std::stod(parts.back()));
    }
    return snap;
}

ClusterSet cluster_from_snapshot(const FieldSnapshot& snapshot, double threshold) {
    std::vector<Site> sites;
    for (const auto& [site, value] : snapshot.field)
        if (value > threshold) sites.push_back(site);
    return ClusterSet::from_sites(std::move(sites));
}

void write_pgm(const std::string& path, std::int64_t width, std::int64_t height,
               const std::vector<std::uint8_t>& pixels, const std::string& comment) {
    if (static_cast<std::int64_t>(pixels.size()) != width * height)
        throw std::invalid_argument("pgm pixel buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void write_cluster_pgm(const std::string& path, const ClusterSet& cluster,
                       const std::string& comment) {
    if (cluster.empty()) throw EmptySetError("write_cluster_pgm: empty cluster");
    if (cluster.sites.front().dim != 2)
        throw std::invalid_argument("cluster images are supported for d=2 only");
    Coord xlo = cluster.sites.front()[0], xhi = xlo;
    Coord tlo = cluster.sites.front()[1], thi = tlo;
    for (const Site& z : cluster.sites) {
        xlo = std::min(xlo, z[0]);
        xhi = std::max(xhi, z[0]);
        tlo = std::min(tlo, z[1]);
        thi = std::max(thi, z[1]);
    }
    const std::int64_t width = xhi - xlo + 1;
    const std::int64_t height = thi - tlo + 1;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width * height), 255);
    // drift axis upward: image row 0 is the top layer
    for (const Site& z : cluster.sites) {
        const std::int64_t col = z[0] - xlo;
        const std::int64_t row = thi - z[1];
        pixels[static_cast<std::size_t>(row * width + col)] = 0;
    }
    if (0 >= xlo && 0 <= xhi && 0 >= tlo && 0 <= thi)
        pixels[static_cast<std::size_t>(thi * width + (0 - xlo))] = 128; // origin marker
    write_pgm(path, width, height, pixels, comment);
}

} // namespace heatball::io
