#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppcons/error.hpp"
#include "ppcons/graph.hpp"

namespace ppc {

/// Zero-based channel index; channel k carries the share f(s_{k+1}).
using Channel = std::size_t;

struct EdgeChannel {
    Edge edge;
    Channel channel = 0;
};

/// One round's edge -> channel map. Edges incident to failed nodes are
/// absent. Entries are sorted by edge.
struct ChannelAssignment {
    std::uint64_t round = 0;
    std::size_t channel_count = 0;
    std::vector<EdgeChannel> entries;
    /// Number of scheduler pairing events; one per colored edge.
    std::size_t pairing_events = 0;

    const EdgeChannel* find(NodeIndex i, NodeIndex j) const {
        const Edge e = make_edge(i, j);
        auto it = std::lower_bound(entries.begin(), entries.end(), e,
                                   [](const EdgeChannel& ec, const Edge& key) { return ec.edge < key; });
        if (it == entries.end() || it->edge != e) return nullptr;
        return &*it;
    }

    bool contains(NodeIndex i, NodeIndex j) const { return find(i, j) != nullptr; }

    Channel channel(NodeIndex i, NodeIndex j) const {
        const EdgeChannel* ec = find(i, j);
        if (ec == nullptr) {
            throw Error(ErrorCode::NotAnEdge, "(" + std::to_string(i + 1) + "," +
                                                  std::to_string(j + 1) + ") not assigned");
        }
        return ec->channel;
    }
};

/// Indicator l_ij^k: 1 iff edge (i,j) carries channel k this round.
inline int weight(const ChannelAssignment& assignment, NodeIndex i, NodeIndex j, Channel k) {
    return assignment.channel(i, j) == k ? 1 : 0;
}

/// Default channel chooser: each edge draws from its own stream keyed by
/// (seed, round, lo, hi), so a draw does not depend on scheduling order.
class KeyedEdgeChooser {
public:
    KeyedEdgeChooser(std::uint64_t seed, std::uint64_t round) : seed_(seed), round_(round) {}

    Channel operator()(Edge e, std::span<const Channel> available) const {
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(round_), static_cast<std::uint32_t>(round_ >> 32),
                          static_cast<std::uint32_t>(e.lo), static_cast<std::uint32_t>(e.hi)};
        std::mt19937_64 rng(seq);
        std::uniform_int_distribution<std::size_t> pick(0, available.size() - 1);
        return available[pick(rng)];
    }

private:
    std::uint64_t seed_;
    std::uint64_t round_;
};

/// Smallest channel count for which the handshake is guaranteed to finish.
inline std::size_t min_channel_count(const Topology& topology) {
    const std::size_t d = topology.max_degree();
    return d == 0 ? 1 : 2 * d - 1;
}

/// Randomized channel selection as a serialized schedule: repeatedly the
/// lowest-indexed node with an unassigned incident edge pairs with its
/// lowest-indexed such neighbor, and the pair takes a channel chosen by
/// `choose` from those unused at either endpoint. Nodes with
/// `alive[i] == false` (when `alive` is non-empty) take no part.
///
/// `choose(edge, available)` receives the available channels in ascending
/// order and must return one of them.
template <class Chooser>
    requires std::invocable<Chooser&, Edge, std::span<const Channel>>
ChannelAssignment run_handshake(const Topology& topology, std::size_t channel_count,
                                std::uint64_t round, Chooser&& choose,
                                const std::vector<bool>& alive = {}) {
    if (channel_count == 0 || channel_count < min_channel_count(topology)) {
        throw Error(ErrorCode::ChannelBudgetTooSmall,
                    "M=" + std::to_string(channel_count) + " but 2*d_max-1=" +
                        std::to_string(min_channel_count(topology)));
    }
    const std::size_t n = topology.node_count();
    auto is_alive = [&](NodeIndex v) { return alive.empty() || alive[v]; };

    // pending[i]: neighbors joined to i by a still-unassigned edge (sorted).
    std::vector<std::vector<NodeIndex>> pending(n);
    // used[i][k]: channel k already taken by an edge at i.
    std::vector<std::vector<bool>> used(n, std::vector<bool>(channel_count, false));
    for (NodeIndex i = 0; i < n; ++i) {
        if (!is_alive(i)) continue;
        for (NodeIndex j : topology.neighbors(i)) {
            if (is_alive(j)) pending[i].push_back(j);
        }
    }

    ChannelAssignment out;
    out.round = round;
    out.channel_count = channel_count;
    out.entries.reserve(topology.edge_count());

    std::vector<Channel> available;
    available.reserve(channel_count);
    for (NodeIndex i = 0; i < n; ++i) {
        while (!pending[i].empty()) {
            const NodeIndex j = pending[i].front();
            available.clear();
            for (Channel k = 0; k < channel_count; ++k) {
                if (!used[i][k] && !used[j][k]) available.push_back(k);
            }
            const Edge e = make_edge(i, j);
            const Channel k = choose(e, std::span<const Channel>(available));
            used[i][k] = true;
            used[j][k] = true;
            out.entries.push_back({e, k});
            ++out.pairing_events;
            pending[i].erase(pending[i].begin());
            auto& back = pending[j];
            back.erase(std::find(back.begin(), back.end(), i));
        }
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const EdgeChannel& a, const EdgeChannel& b) { return a.edge < b.edge; });
    return out;
}

inline ChannelAssignment run_handshake(const Topology& topology, std::size_t channel_count,
                                       std::uint64_t seed, std::uint64_t round,
                                       const std::vector<bool>& alive = {}) {
    return run_handshake(topology, channel_count, round, KeyedEdgeChooser(seed, round), alive);
}

/// Checks completeness over the live edges, channel range, and that
/// adjacent edges never share a channel. Returns an empty string when valid.
inline std::string assignment_violation(const Topology& topology,
                                        const ChannelAssignment& assignment,
                                        const std::vector<bool>& alive = {}) {
    auto is_alive = [&](NodeIndex v) { return alive.empty() || alive[v]; };
    for (const Edge e : topology.edges()) {
        const bool live = is_alive(e.lo) && is_alive(e.hi);
        if (live != assignment.contains(e.lo, e.hi)) {
            return "edge (" + std::to_string(e.lo + 1) + "," + std::to_string(e.hi + 1) +
                   (live ? ") unassigned" : ") assigned to a failed node");
        }
    }
    for (const EdgeChannel& ec : assignment.entries) {
        if (!topology.has_edge(ec.edge.lo, ec.edge.hi)) return "assignment has a non-edge";
        if (ec.channel >= assignment.channel_count) return "channel out of range";
    }
    for (NodeIndex i = 0; i < topology.node_count(); ++i) {
        std::vector<bool> seen(assignment.channel_count, false);
        for (NodeIndex j : topology.neighbors(i)) {
            const EdgeChannel* ec = assignment.find(i, j);
            if (ec == nullptr) continue;
            if (seen[ec->channel]) {
                return "node " + std::to_string(i + 1) + " has two edges on channel " +
                       std::to_string(ec->channel + 1);
            }
            seen[ec->channel] = true;
        }
    }
    return {};
}

}  // namespace ppc
