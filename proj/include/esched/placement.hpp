#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "esched/types.hpp"

namespace esched {

// Free GPUs exceed capacity.
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Enough free GPUs exist but no aligned block arrangement can host the job.
struct placement_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NodeState {
    int node_id = 0;
    int gpus_total = 0;           // power of two, <= 64
    std::uint64_t free_mask = 0;  // bit i set = GPU i free
    bool powered_on = false;

    int free_count() const;
    int used_count() const { return gpus_total - free_count(); }
};

struct PlacementBlock {
    int node_id = 0;
    int offset = 0;  // aligned: offset % size == 0
    int size = 0;    // power of two
};

struct Placement {
    std::string job_id;
    std::vector<PlacementBlock> blocks;

    int total_gpus() const;
    bool spans_nodes() const { return blocks.size() > 1; }
};

struct MigrationMove {
    std::string job_id;
    Placement from;
    Placement to;
};

std::vector<NodeState> make_nodes(int num_nodes, int gpus_per_node);

// Largest power of two <= n_raw; guards trace/baseline worker counts.
int round_worker_count(int n_raw);

// Allocates n GPUs for job_id. Single-node jobs get the lowest-offset aligned
// free block on the node whose tightest sufficient block is smallest (ties to
// the lowest node id); larger jobs get whole nodes, powering nodes on as
// needed. Throws capacity_error / placement_error.
Placement buddy_allocate(std::vector<NodeState>& nodes, const std::string& job_id, int n);

// Returns blocks to the free pool; coalescing is implicit in the bitmask
// representation. Result lists nodes left fully free (shutdown candidates).
std::vector<int> buddy_free(std::vector<NodeState>& nodes, const Placement& placement);

// Greedy defragmentation: tries to empty partially-used nodes by repacking
// their (single-node) jobs into other partially-used nodes, smallest jobs
// first. Applies the moves to `nodes`/`placements` and returns them; every
// committed round strictly reduces the number of partially-used nodes.
std::vector<MigrationMove> plan_migrations(std::vector<NodeState>& nodes,
                                           std::vector<Placement>& placements);

int count_partial_nodes(const std::vector<NodeState>& nodes);

// Audit for tests: block alignment/power-of-two sizing, occupancy consistency
// with the free masks, and the packing property (at most one multi-node job
// resident on any node). Throws std::logic_error on violation.
void validate_placements(const std::vector<NodeState>& nodes,
                         const std::vector<Placement>& placements);

}  // namespace esched
