#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "heatball/lattice.hpp"
#include "heatball/sandpile.hpp"
#include "heatball/walks.hpp"

namespace heatball {

struct SettleRecord {
    std::int64_t particle = 0; // 1-based launch index
    Site site;
    std::uint64_t walk_length = 0;
};

// One aggregation run. The cluster is exactly the set of settle sites, in
// launch order; particle j settles at the first site its walk visits outside
// the cluster built by particles 1..j-1.
struct IdlaRun {
    std::vector<SettleRecord> settle_order;
    ModelParams params;

    std::size_t size() const { return settle_order.size(); }
    ClusterSet cluster() const;
};

struct IdlaOptions {
    std::uint64_t step_cap = 1'000'000'000; // per-walk safety cap, RunawayWalk beyond
};

IdlaRun build_cluster(std::int64_t n, const ModelParams& params, const IdlaOptions& opts = {});

// Same aggregation, with a snapshot callback every checkpoint_every particles
// (and at the end). The final state is bit-identical to build_cluster.
IdlaRun build_cluster_batched(std::int64_t n, const ModelParams& params,
                              std::int64_t checkpoint_every,
                              const std::function<void(const IdlaRun&)>& on_checkpoint,
                              const IdlaOptions& opts = {});

} // namespace heatball
