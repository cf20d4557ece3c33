#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppcons/error.hpp"

namespace ppc {

/// Zero-based node index. Configs and CSV files use one-based indices.
using NodeIndex = std::size_t;

/// Undirected edge stored with `lo < hi`.
struct Edge {
    NodeIndex lo = 0;
    NodeIndex hi = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge make_edge(NodeIndex a, NodeIndex b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Fixed, connected, undirected simple graph. Immutable after construction.
class Topology {
public:
    /// `edges` use zero-based indices. Throws on self loops, duplicates,
    /// out-of-range indices and disconnected graphs.
    Topology(std::size_t node_count, const std::vector<std::pair<NodeIndex, NodeIndex>>& edges)
        : node_count_(node_count), neighbors_(node_count),
          edge_id_(node_count * node_count, kNoEdge) {
        if (node_count == 0) {
            throw Error(ErrorCode::NodeIndexOutOfRange, "graph needs at least one node");
        }
        for (auto [a, b] : edges) {
            if (a >= node_count || b >= node_count) {
                throw Error(ErrorCode::NodeIndexOutOfRange,
                            "edge (" + std::to_string(a + 1) + "," + std::to_string(b + 1) +
                                ") outside [1," + std::to_string(node_count) + "]");
            }
            if (a == b) {
                throw Error(ErrorCode::SelfLoop, "self loop at node " + std::to_string(a + 1));
            }
            const Edge e = make_edge(a, b);
            if (edge_id_[e.lo * node_count_ + e.hi] != kNoEdge) {
                throw Error(ErrorCode::DuplicateEdge, "edge (" + std::to_string(e.lo + 1) + "," +
                                                          std::to_string(e.hi + 1) + ") repeated");
            }
            edge_id_[e.lo * node_count_ + e.hi] = 0;
            edges_.push_back(e);
        }
        std::sort(edges_.begin(), edges_.end());
        for (std::size_t id = 0; id < edges_.size(); ++id) {
            const Edge e = edges_[id];
            edge_id_[e.lo * node_count_ + e.hi] = id;
            edge_id_[e.hi * node_count_ + e.lo] = id;
            neighbors_[e.lo].push_back(e.hi);
            neighbors_[e.hi].push_back(e.lo);
        }
        for (auto& n : neighbors_) std::sort(n.begin(), n.end());
        if (!connected()) {
            throw Error(ErrorCode::Disconnected, "graph is not connected");
        }
    }

    std::size_t node_count() const noexcept { return node_count_; }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    /// Edges sorted lexicographically by (lo, hi).
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Sorted neighbor list of `i`.
    const std::vector<NodeIndex>& neighbors(NodeIndex i) const { return neighbors_.at(i); }
    std::size_t degree(NodeIndex i) const { return neighbors_.at(i).size(); }

    std::size_t max_degree() const noexcept {
        std::size_t d = 0;
        for (const auto& n : neighbors_) d = std::max(d, n.size());
        return d;
    }

    bool has_edge(NodeIndex a, NodeIndex b) const {
        return a < node_count_ && b < node_count_ && edge_id_[a * node_count_ + b] != kNoEdge;
    }

    /// Position of edge {a,b} in `edges()`, if present.
    std::optional<std::size_t> edge_index(NodeIndex a, NodeIndex b) const {
        if (!has_edge(a, b)) return std::nullopt;
        return edge_id_[a * node_count_ + b];
    }

    /// Integer Laplacian D - A; rows sum to zero exactly.
    Eigen::MatrixXd laplacian() const {
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(node_count_),
                                                  static_cast<Eigen::Index>(node_count_));
        for (const Edge e : edges_) {
            const auto i = static_cast<Eigen::Index>(e.lo);
            const auto j = static_cast<Eigen::Index>(e.hi);
            L(i, j) -= 1.0;
            L(j, i) -= 1.0;
            L(i, i) += 1.0;
            L(j, j) += 1.0;
        }
        return L;
    }

private:
    static constexpr std::size_t kNoEdge = static_cast<std::size_t>(-1);

    bool connected() const {
        std::vector<bool> seen(node_count_, false);
        std::vector<NodeIndex> stack{0};
        seen[0] = true;
        std::size_t reached = 1;
        while (!stack.empty()) {
            const NodeIndex v = stack.back();
            stack.pop_back();
            for (NodeIndex w : neighbors_[v]) {
                if (!seen[w]) {
                    seen[w] = true;
                    ++reached;
                    stack.push_back(w);
                }
            }
        }
        return reached == node_count_;
    }

    std::size_t node_count_;
    std::vector<Edge> edges_;
    std::vector<std::vector<NodeIndex>> neighbors_;
    std::vector<std::size_t> edge_id_;
};

/// Builds a topology from one-based edge pairs, the convention used by
/// configuration files.
inline Topology build_topology(std::size_t node_count,
                               const std::vector<std::pair<std::size_t, std::size_t>>& one_based) {
    std::vector<std::pair<NodeIndex, NodeIndex>> edges;
    edges.reserve(one_based.size());
    for (auto [a, b] : one_based) {
        if (a == 0 || b == 0 || a > node_count || b > node_count) {
            throw Error(ErrorCode::NodeIndexOutOfRange,
                        "edge (" + std::to_string(a) + "," + std::to_string(b) + ") outside [1," +
                            std::to_string(node_count) + "]");
        }
        edges.emplace_back(a - 1, b - 1);
    }
    return Topology(node_count, edges);
}

/// Six-node demonstration graph with degrees (4,3,3,3,2,3), so d_max = 4.
inline const std::vector<std::pair<std::size_t, std::size_t>>& demo6_edges() {
    static const std::vector<std::pair<std::size_t, std::size_t>> edges{
        {1, 2}, {1, 3}, {1, 4}, {1, 5}, {2, 3}, {2, 6}, {3, 6}, {4, 5}, {4, 6}};
    return edges;
}

inline Topology demo6() { return build_topology(6, demo6_edges()); }

struct SpectralSummary {
    Eigen::MatrixXd laplacian;
    std::size_t d_max = 0;
    /// Algebraic connectivity. Zero only for the single-node graph.
    double lambda2 = 0.0;
};

inline SpectralSummary spectral_summary(const Topology& topology) {
    SpectralSummary s;
    s.laplacian = topology.laplacian();
    s.d_max = topology.max_degree();
    if (topology.node_count() > 1) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.laplacian, Eigen::EigenvaluesOnly);
        s.lambda2 = eig.eigenvalues()(1);  // ascending order
    }
    return s;
}

}  // namespace ppc
