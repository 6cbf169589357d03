#include "esched/placement.hpp"

#include <algorithm>
#include <bit>
#include <map>

namespace esched {

namespace {

std::uint64_t block_mask(int offset, int size) {
    const std::uint64_t ones = (size == 64) ? ~0ULL : ((1ULL << size) - 1);
    return ones << offset;
}

bool block_free(const NodeState& node, int offset, int size) {
    const std::uint64_t m = block_mask(offset, size);
    return (node.free_mask & m) == m;
}

// Smallest s >= want such that some aligned free block of size s exists.
int tightest_block(const NodeState& node, int want) {
    for (int s = want; s <= node.gpus_total; s *= 2)
        for (int off = 0; off + s <= node.gpus_total; off += s)
            if (block_free(node, off, s)) return s;
    return 0;
}

int lowest_free_offset(const NodeState& node, int size) {
    for (int off = 0; off + size <= node.gpus_total; off += size)
        if (block_free(node, off, size)) return off;
    return -1;
}

}  // namespace

int NodeState::free_count() const { return std::popcount(free_mask); }

int Placement::total_gpus() const {
    int total = 0;
    for (const PlacementBlock& b : blocks) total += b.size;
    return total;
}

std::vector<NodeState> make_nodes(int num_nodes, int gpus_per_node) {
    if (gpus_per_node < 1 || gpus_per_node > 64 || !is_power_of_two(gpus_per_node))
        throw std::invalid_argument("nodes: gpus_per_node must be a power of two <= 64");
    std::vector<NodeState> nodes(num_nodes);
    for (int i = 0; i < num_nodes; ++i) {
        nodes[i].node_id = i;
        nodes[i].gpus_total = gpus_per_node;
        nodes[i].free_mask = block_mask(0, gpus_per_node);
        nodes[i].powered_on = false;
    }
    return nodes;
}

int round_worker_count(int n_raw) { return round_down_pow2(n_raw); }

Placement buddy_allocate(std::vector<NodeState>& nodes, const std::string& job_id, int n) {
    if (!is_power_of_two(n)) throw std::invalid_argument("buddy_allocate: n must be a power of two");
    const int per_node = nodes.empty() ? 0 : nodes.front().gpus_total;
    int total_free = 0;
    for (const NodeState& node : nodes) total_free += node.free_count();
    if (total_free < n) throw capacity_error("buddy_allocate: not enough free GPUs");

    Placement p;
    p.job_id = job_id;

    if (n <= per_node) {
        int best_node = -1;
        int best_size = per_node + 1;
        for (const NodeState& node : nodes) {
            const int s = tightest_block(node, n);
            if (s > 0 && s < best_size) {
                best_size = s;
                best_node = node.node_id;
            }
        }
        if (best_node < 0)
            throw placement_error("buddy_allocate: no aligned block of size " +
                                  std::to_string(n));
        NodeState& node = nodes[best_node];
        const int off = lowest_free_offset(node, n);
        node.free_mask &= ~block_mask(off, n);
        node.powered_on = true;
        p.blocks.push_back({best_node, off, n});
        return p;
    }

    // Multi-node jobs take whole nodes; prefer already powered-on empty nodes.
    const int nodes_needed = n / per_node;
    std::vector<int> candidates;
    for (const NodeState& node : nodes)
        if (node.free_count() == node.gpus_total) candidates.push_back(node.node_id);
    if (static_cast<int>(candidates.size()) < nodes_needed)
        throw placement_error("buddy_allocate: not enough whole nodes for a spanning job");
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (nodes[a].powered_on != nodes[b].powered_on) return nodes[a].powered_on;
        return a < b;
    });
    for (int i = 0; i < nodes_needed; ++i) {
        NodeState& node = nodes[candidates[i]];
        node.free_mask = 0;
        node.powered_on = true;
        p.blocks.push_back({node.node_id, 0, per_node});
    }
    std::sort(p.blocks.begin(), p.blocks.end(),
              [](const PlacementBlock& a, const PlacementBlock& b) { return a.node_id < b.node_id; });
    return p;
}

std::vector<int> buddy_free(std::vector<NodeState>& nodes, const Placement& placement) {
    for (const PlacementBlock& b : placement.blocks) {
        NodeState& node = nodes.at(b.node_id);
        const std::uint64_t m = block_mask(b.offset, b.size);
        if ((node.free_mask & m) != 0)
            throw std::logic_error("buddy_free: block already free (double free)");
        node.free_mask |= m;
    }
    std::vector<int> empty_nodes;
    for (const PlacementBlock& b : placement.blocks) {
        const NodeState& node = nodes.at(b.node_id);
        if (node.free_count() == node.gpus_total) empty_nodes.push_back(b.node_id);
    }
    std::sort(empty_nodes.begin(), empty_nodes.end());
    empty_nodes.erase(std::unique(empty_nodes.begin(), empty_nodes.end()), empty_nodes.end());
    return empty_nodes;
}

int count_partial_nodes(const std::vector<NodeState>& nodes) {
    int count = 0;
    for (const NodeState& node : nodes) {
        const int free = node.free_count();
        if (free > 0 && free < node.gpus_total) ++count;
    }
    return count;
}

std::vector<MigrationMove> plan_migrations(std::vector<NodeState>& nodes,
                                           std::vector<Placement>& placements) {
    std::vector<MigrationMove> moves;

    bool progress = true;
    while (progress) {
        progress = false;

        std::vector<int> partial_ids;
        for (const NodeState& node : nodes) {
            const int free = node.free_count();
            if (free > 0 && free < node.gpus_total) partial_ids.push_back(node.node_id);
        }
        // Emptiest source first.
        std::stable_sort(partial_ids.begin(), partial_ids.end(), [&](int a, int b) {
            if (nodes[a].used_count() != nodes[b].used_count())
                return nodes[a].used_count() < nodes[b].used_count();
            return a < b;
        });

        for (int source : partial_ids) {
            std::vector<std::size_t> resident;
            for (std::size_t i = 0; i < placements.size(); ++i) {
                if (placements[i].spans_nodes()) continue;
                if (!placements[i].blocks.empty() &&
                    placements[i].blocks.front().node_id == source)
                    resident.push_back(i);
            }
            if (resident.empty()) continue;
            std::stable_sort(resident.begin(), resident.end(), [&](std::size_t a, std::size_t b) {
                const int sa = placements[a].blocks.front().size;
                const int sb = placements[b].blocks.front().size;
                if (sa != sb) return sa < sb;
                return placements[a].job_id < placements[b].job_id;
            });

            // Trial-pack every resident job into other partially-used nodes.
            std::vector<NodeState> trial = nodes;
            std::vector<std::pair<std::size_t, PlacementBlock>> relocated;
            bool ok = true;
            for (std::size_t idx : resident) {
                const PlacementBlock old = placements[idx].blocks.front();
                int best_node = -1;
                int best_size = 1 << 30;
                for (const NodeState& node : trial) {
                    if (node.node_id == source) continue;
                    const int used = node.used_count();
                    if (used == 0 || used == node.gpus_total) continue;
                    const int s = tightest_block(node, old.size);
                    if (s > 0 && s < best_size) {
                        best_size = s;
                        best_node = node.node_id;
                    }
                }
                if (best_node < 0) {
                    ok = false;
                    break;
                }
                const int off = lowest_free_offset(trial[best_node], old.size);
                trial[best_node].free_mask &= ~block_mask(off, old.size);
                relocated.push_back({idx, {best_node, off, old.size}});
            }
            if (!ok) continue;

            for (const auto& [idx, to_block] : relocated) {
                const PlacementBlock old = placements[idx].blocks.front();
                trial[source].free_mask |= block_mask(old.offset, old.size);

                MigrationMove move;
                move.job_id = placements[idx].job_id;
                move.from = placements[idx];
                placements[idx].blocks = {to_block};
                move.to = placements[idx];
                moves.push_back(std::move(move));
            }
            nodes = trial;
            progress = true;
            break;  // re-rank sources against the new state
        }
    }
    return moves;
}

void validate_placements(const std::vector<NodeState>& nodes,
                         const std::vector<Placement>& placements) {
    std::map<int, std::uint64_t> used_by_node;
    std::map<int, int> spanning_jobs_on_node;
    for (const Placement& p : placements) {
        for (const PlacementBlock& b : p.blocks) {
            if (!is_power_of_two(b.size))
                throw std::logic_error("placement: block size not a power of two");
            if (b.offset % b.size != 0)
                throw std::logic_error("placement: block not aligned to its size");
            const std::uint64_t m = block_mask(b.offset, b.size);
            if ((used_by_node[b.node_id] & m) != 0)
                throw std::logic_error("placement: overlapping blocks");
            used_by_node[b.node_id] |= m;
            if (p.spans_nodes()) spanning_jobs_on_node[b.node_id] += 1;
        }
    }
    for (const auto& [node_id, count] : spanning_jobs_on_node)
        if (count > 1)
            throw std::logic_error("placement: node hosts more than one spanning job");
    for (const NodeState& node : nodes) {
        const std::uint64_t used = used_by_node.count(node.node_id)
                                       ? used_by_node[node.node_id]
                                       : 0ULL;
        const std::uint64_t all = (node.gpus_total == 64) ? ~0ULL
                                                          : ((1ULL << node.gpus_total) - 1);
        if ((node.free_mask ^ used) != all)
            throw std::logic_error("placement: free mask inconsistent with placements");
        if (!node.powered_on && used != 0)
            throw std::logic_error("placement: job resident on a powered-off node");
    }
}

}  // namespace esched
