#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heatball/lattice.hpp"
#include "heatball/sandpile.hpp"

#include <json.hpp>

namespace heatball::io {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form; identical across runs and platforms.
std::string format_double(double v);

// FNV-1a over the serialized config, as a hex tag for image headers.
std::string config_hash(const std::string& serialized);

Json params_header(const ModelParams& params, double n);

// Field snapshot: first line "# <json header>", then one `c1,...,cd,value`
// record per site in lexicographic site order.
void write_field_csv(const std::string& path, const MassField& field, const Json& header);
void write_cluster_csv(const std::string& path, const ClusterSet& cluster, const Json& header);

struct FieldSnapshot {
    int d = 0;
    MassField field;
    std::string header_json; // raw header line (may be empty)
};

FieldSnapshot read_field_csv(const std::string& path);
ClusterSet cluster_from_snapshot(const FieldSnapshot& snapshot, double threshold = 0.5);

// 8-bit binary PGM (P5), row-major from the top row.
void write_pgm(const std::string& path, std::int64_t width, std::int64_t height,
               const std::vector<std::uint8_t>& pixels, const std::string& comment);

// Occupancy image of a d=2 cluster: lateral axis across, drift axis upward,
// occupied sites black, origin grey.
void write_cluster_pgm(const std::string& path, const ClusterSet& cluster,
                       const std::string& comment);

void write_text_file(const std::string& path, const std::string& contents);

} // namespace heatball::io
