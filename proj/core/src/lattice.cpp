#include "heatball/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace heatball {

std::string Site::to_string() const {
    std::string out = "(";
    for (int i = 0; i < dim; ++i) {
        if (i) out += ",";
        out += std::to_string(c[static_cast<std::size_t>(i)]);
    }
    out += ")";
    return out;
}

std::string to_string(Variant v) {
    return v == Variant::Monotone ? "monotone" : "natural-lazy";
}

Variant variant_from_string(const std::string& name) {
    if (name == "monotone") return Variant::Monotone;
    if (name == "natural-lazy" || name == "natural_lazy" || name == "lazy")
        return Variant::NaturalLazy;
    throw std::invalid_argument("unknown walk variant '" + name +
                                "' (expected 'monotone' or 'natural-lazy')");
}

void ModelParams::validate() const {
    if (d < 2) throw std::invalid_argument("dimension d must be >= 2");
    if (d > kMaxDim) throw std::invalid_argument("dimension d exceeds compiled maximum");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("drift probability p must lie in (0,1)");
    if (!(k > 0.0)) throw std::invalid_argument("mass multiplier k must be positive");
}

StepLaw StepLaw::make(const ModelParams& params) {
    params.validate();
    StepLaw law;
    law.d = params.d;
    const double lat = params.lateral_weight();
    for (int i = 0; i < params.d - 1; ++i) {
        law.entries.push_back({i, +1, lat, 0.0});
        law.entries.push_back({i, -1, lat, 0.0});
    }
    if (params.variant == Variant::Monotone) {
        law.entries.push_back({params.d - 1, +1, params.p, 0.0});
    } else {
        law.entries.push_back({params.d - 1, +1, params.p + lat, 0.0});
        law.entries.push_back({params.d - 1, -1, lat, 0.0});
    }
    double acc = 0.0;
    for (auto& e : law.entries) {
        acc += e.weight;
        e.cumulative = acc;
    }
    law.entries.back().cumulative = 1.0; // guard against rounding in the last bin
    return law;
}

std::vector<NeighborWeight> neighbors(const Site& z, const ModelParams& params) {
    if (z.dim != params.d) throw std::invalid_argument("site dimension does not match params");
    const StepLaw law = StepLaw::make(params);
    std::vector<NeighborWeight> out;
    out.reserve(law.entries.size());
    for (const auto& e : law.entries)
        out.push_back({z.shifted(e.axis, e.delta), e.weight});
    return out;
}

double MassField::total() const {
    KahanSum s;
    for (const auto& [site, value] : entries_) s.add(value);
    return s.value();
}

std::vector<Site> MassField::sorted_support() const {
    std::vector<Site> sites;
    sites.reserve(entries_.size());
    for (const auto& [site, value] : entries_) sites.push_back(site);
    std::sort(sites.begin(), sites.end());
    return sites;
}

double heat_op(const MassField& f, const Site& z, const ModelParams& params) {
    if (z.dim != params.d) throw std::invalid_argument("site dimension does not match params");
    const StepLaw law = StepLaw::make(params);
    double received = 0.0;
    // y emits toward z iff z = y + delta, so read f at z - delta.
    for (const auto& e : law.entries)
        received += e.weight * f.at(z.shifted(e.axis, -e.delta));
    return received - f.at(z);
}

double heat_op_reversed(const MassField& f, const Site& z, const ModelParams& params) {
    if (z.dim != params.d) throw std::invalid_argument("site dimension does not match params");
    const StepLaw law = StepLaw::make(params);
    double received = 0.0;
    for (const auto& e : law.entries)
        received += e.weight * f.at(z.shifted(e.axis, e.delta));
    return received - f.at(z);
}

double weight_functional(const MassField& f) {
    KahanSum s;
    for (const auto& [site, value] : f) {
        double w = static_cast<double>(site.drift());
        for (int i = 0; i < site.dim - 1; ++i) {
            const double x = static_cast<double>(site[i]);
            w += x * x;
        }
        s.add(value * w);
    }
    return s.value();
}

} // namespace heatball
