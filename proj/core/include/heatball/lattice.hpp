#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "heatball/errors.hpp"
#include "heatball/rng.hpp"

namespace heatball {

using Coord = std::int64_t;

inline constexpr int kMaxDim = 8;

// Lattice point in Z^d. The last coordinate (index d-1) is the drift axis;
// the first d-1 are the lateral ("space") axes.
struct Site {
    std::array<Coord, kMaxDim> c{};
    int dim = 2;

    static Site origin(int d) {
        Site z;
        z.dim = d;
        return z;
    }

    Coord operator[](int i) const { return c[static_cast<std::size_t>(i)]; }
    Coord& operator[](int i) { return c[static_cast<std::size_t>(i)]; }

    Coord drift() const { return c[static_cast<std::size_t>(dim - 1)]; }

    Site shifted(int axis, Coord delta) const {
        Site out = *this;
        out.c[static_cast<std::size_t>(axis)] += delta;
        return out;
    }

    bool operator==(const Site& o) const {
        if (dim != o.dim) return false;
        for (int i = 0; i < dim; ++i)
            if (c[static_cast<std::size_t>(i)] != o.c[static_cast<std::size_t>(i)]) return false;
        return true;
    }
    bool operator!=(const Site& o) const { return !(*this == o); }

    // Lexicographic order; used for reproducible file output.
    bool operator<(const Site& o) const {
        for (int i = 0; i < dim; ++i) {
            const auto a = c[static_cast<std::size_t>(i)];
            const auto b = o.c[static_cast<std::size_t>(i)];
            if (a != b) return a < b;
        }
        return false;
    }

    std::string to_string() const;
};

struct SiteHash {
    std::size_t operator()(const Site& z) const {
        std::uint64_t h = 0x51f2cd1185c9d9c3ULL ^ static_cast<std::uint64_t>(z.dim);
        for (int i = 0; i < z.dim; ++i)
            h = mix64(h ^ static_cast<std::uint64_t>(z.c[static_cast<std::size_t>(i)]));
        return static_cast<std::size_t>(h);
    }
};

enum class Variant { Monotone, NaturalLazy };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

// Model configuration shared by every module.
//
// Monotone: lateral steps +-e_i with probability (1-p)/(2(d-1)) each and a
// deterministic-sign drift step +e_d with probability p.
// NaturalLazy: a simple random walk step with probability 1-p (uniform over
// the 2d unit directions) plus an extra drift step +e_d with probability p.
struct ModelParams {
    int d = 2;
    double p = 0.2;
    Variant variant = Variant::Monotone;
    double k = 1.0;
    std::uint64_t seed = 0;

    void validate() const; // throws std::invalid_argument

    // Gaussian decay constant of the continuum kernel.
    double beta() const {
        return variant == Variant::Monotone ? p * (d - 1) / (2.0 * (1.0 - p))
                                            : d * p / (2.0 * (1.0 - p));
    }

    // Weight carried by each single lateral neighbor.
    double lateral_weight() const {
        return variant == Variant::Monotone ? (1.0 - p) / (2.0 * (d - 1))
                                            : (1.0 - p) / (2.0 * d);
    }

    // Continuum operator is kappa*Laplacian - p*d/dt over the lateral axes.
    double kappa() const { return lateral_weight(); }

    // Coefficient of |x|^2 in the continuum obstacle.
    double lateral_quadratic_coeff() const {
        return variant == Variant::Monotone ? 1.0
                                            : static_cast<double>(d) / (d - 1);
    }
};

struct NeighborWeight {
    Site site;
    double weight;
};

// One-step law as coordinate offsets; the cumulative table makes sampling a
// single uniform draw plus a linear scan (at most 2d+1 entries).
struct StepLaw {
    struct Entry {
        int axis;
        Coord delta;
        double weight;
        double cumulative;
    };
    std::vector<Entry> entries;
    int d = 2;

    static StepLaw make(const ModelParams& params);

    // Picks an entry from a uniform u in [0,1).
    const Entry& sample(double u) const {
        for (const Entry& e : entries)
            if (u < e.cumulative) return e;
        return entries.back();
    }
};

std::vector<NeighborWeight> neighbors(const Site& z, const ModelParams& params);

// Finite-support real field on Z^d; reads outside the stored support are 0.
class MassField {
public:
    using Map = std::unordered_map<Site, double, SiteHash>;

    MassField() = default;

    double at(const Site& z) const {
        auto it = entries_.find(z);
        return it == entries_.end() ? 0.0 : it->second;
    }

    void set(const Site& z, double value) {
        if (value == 0.0)
            entries_.erase(z);
        else
            entries_[z] = value;
    }

    void add(const Site& z, double value) {
        if (value == 0.0) return;
        auto [it, inserted] = entries_.try_emplace(z, value);
        if (!inserted) it->second += value;
    }

    bool contains(const Site& z) const { return entries_.find(z) != entries_.end(); }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    Map::const_iterator begin() const { return entries_.begin(); }
    Map::const_iterator end() const { return entries_.end(); }

    double total() const;

    // Support sorted lexicographically, for reproducible iteration.
    std::vector<Site> sorted_support() const;

private:
    Map entries_;
};

// Discrete heat operator: mass received at z when every site y emits f(y)
// under the one-step law, minus f(z).
double heat_op(const MassField& f, const Site& z, const ModelParams& params);

// Same with the drift axis reversed (the adjoint of heat_op under the
// counting-measure pairing).
double heat_op_reversed(const MassField& f, const Site& z, const ModelParams& params);

// Sum of f(z) * (z_1^2 + ... + z_{d-1}^2 + z_d); increases by exactly the
// emitted mass under a toppling.
double weight_functional(const MassField& f);

// Kahan-compensated accumulator for long reductions.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

} // namespace heatball
