#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppcons/error.hpp"
#include "ppcons/graph.hpp"
#include "ppcons/handshake.hpp"
#include "ppcons/projector.hpp"
#include "ppcons/sharing.hpp"

namespace ppc {

struct NodeState {
    EncoderState encoder;
    ShareVector shares;
    bool alive = true;
    /// Shares that failed neighbors sent here in the round they crashed,
    /// keyed by the failed neighbor.
    std::map<NodeIndex, KeyedShare> held_for_failed;
};

/// Whole-network protocol state. Copies share the immutable topology and
/// projectors.
struct NetworkState {
    std::uint64_t round = 0;
    std::vector<NodeState> nodes;
    std::shared_ptr<const Topology> topology;
    std::shared_ptr<const KeySet> keys;
    double gamma = 0.5;
    std::vector<std::size_t> degrees;
    std::shared_ptr<const ProjectorSet> projectors;

    std::size_t node_count() const noexcept { return nodes.size(); }
    std::size_t channel_count() const noexcept { return keys->channel_count(); }

    std::vector<bool> alive_mask() const {
        std::vector<bool> m(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) m[i] = nodes[i].alive;
        return m;
    }

    bool all_alive() const {
        return std::all_of(nodes.begin(), nodes.end(), [](const NodeState& n) { return n.alive; });
    }
};

/// Builds the network from explicit encoder states; shares are generated
/// from them.
inline NetworkState make_network(Topology topology, KeySet keys, double gamma,
                                 std::vector<EncoderState> encoders) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw Error(ErrorCode::InvalidState, "step size must lie in (0,1)");
    }
    if (encoders.size() != topology.node_count()) {
        throw Error(ErrorCode::InvalidState, std::to_string(encoders.size()) + " encoders for " +
                                                 std::to_string(topology.node_count()) + " nodes");
    }
    if (keys.channel_count() < min_channel_count(topology)) {
        throw Error(ErrorCode::ChannelBudgetTooSmall,
                    "M=" + std::to_string(keys.channel_count()) + " below 2*d_max-1=" +
                        std::to_string(min_channel_count(topology)));
    }
    NetworkState s;
    s.gamma = gamma;
    s.degrees.reserve(encoders.size());
    for (const EncoderState& e : encoders) {
        if (e.privacy_degree() + 1 > keys.channel_count()) {
            throw Error(ErrorCode::DegreeTooHigh,
                        "privacy degree " + std::to_string(e.privacy_degree()) + " needs more than " +
                            std::to_string(keys.channel_count()) + " channels");
        }
        s.degrees.push_back(e.privacy_degree());
    }
    s.projectors = std::make_shared<const ProjectorSet>(keys, s.degrees);
    s.nodes.reserve(encoders.size());
    for (EncoderState& e : encoders) {
        NodeState n;
        n.shares = generate_shares(e, keys);
        n.encoder = std::move(e);
        s.nodes.push_back(std::move(n));
    }
    s.topology = std::make_shared<const Topology>(std::move(topology));
    s.keys = std::make_shared<const KeySet>(std::move(keys));
    return s;
}

/// Initial states `x0` with private coefficients uniform on
/// [-amplitude, amplitude].
template <class Rng>
NetworkState make_random_network(Topology topology, KeySet keys, double gamma,
                                 const std::vector<std::size_t>& degrees,
                                 const std::vector<double>& x0, double amplitude, Rng& rng) {
    if (degrees.size() != topology.node_count() || x0.size() != topology.node_count()) {
        throw Error(ErrorCode::InvalidState, "degrees and x0 must have one entry per node");
    }
    std::vector<EncoderState> enc;
    enc.reserve(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        enc.push_back(random_encoder(x0[i], degrees[i], amplitude, rng));
    }
    return make_network(std::move(topology), std::move(keys), gamma, std::move(enc));
}

/// Reads neighbor shares straight from the network state. The update step
/// obtains every neighbor value through a reader, so tests can substitute
/// one that audits which values are touched.
struct DirectShareReader {
    const NetworkState* state;

    double operator()(NodeIndex /*reader*/, NodeIndex owner, Channel k) const {
        return state->nodes[owner].shares[k];
    }
};

/// Drops edges that touch a failed node.
inline ChannelAssignment restrict_to_alive(ChannelAssignment a, const std::vector<bool>& alive) {
    std::erase_if(a.entries, [&](const EdgeChannel& ec) {
        return !alive[ec.edge.lo] || !alive[ec.edge.hi];
    });
    return a;
}

/// One synchronous round of the update law: channel-wise averaging over
/// the assigned edges, projection onto the node's polynomial space, then
/// re-encoding. Failed nodes are skipped and must have no assigned edges.
template <class Reader>
void advance(NetworkState& state, const ChannelAssignment& assignment, Reader&& read) {
    if (assignment.round != state.round) {
        throw Error(ErrorCode::InvalidAssignment,
                    "assignment for round " + std::to_string(assignment.round) + " applied at round " +
                        std::to_string(state.round));
    }
    if (assignment.channel_count != state.channel_count()) {
        throw Error(ErrorCode::InvalidAssignment, "assignment uses a different channel count");
    }
    if (const std::string why = assignment_violation(*state.topology, assignment, state.alive_mask());
        !why.empty()) {
        throw Error(ErrorCode::InvalidAssignment, why);
    }

    const Topology& topo = *state.topology;
    const std::size_t m = state.channel_count();
    std::vector<Eigen::VectorXd> mixed(state.node_count());
    for (NodeIndex i = 0; i < state.node_count(); ++i) {
        const NodeState& node = state.nodes[i];
        if (!node.alive) continue;
        Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(node.shares.values.data(),
                                                              static_cast<Eigen::Index>(m));
        for (NodeIndex j : topo.neighbors(i)) {
            const EdgeChannel* ec = assignment.find(i, j);
            if (ec == nullptr) continue;
            const Channel k = ec->channel;
            const auto kk = static_cast<Eigen::Index>(k);
            r(kk) += state.gamma * (read(i, j, k) - node.shares[k]);
        }
        mixed[i] = std::move(r);
    }
    for (NodeIndex i = 0; i < state.node_count(); ++i) {
        NodeState& node = state.nodes[i];
        if (!node.alive) continue;
        const Projector& proj = state.projectors->at(state.degrees[i]);
        const Eigen::VectorXd c = proj.coeff_extractor * mixed[i];
        node.encoder.secret = c(0);
        node.encoder.coefficients.assign(c.data() + 1, c.data() + c.size());
        node.shares = generate_shares(node.encoder, *state.keys);
    }
    ++state.round;
}

inline void advance(NetworkState& state, const ChannelAssignment& assignment) {
    advance(state, assignment, DirectShareReader{&state});
}

inline NetworkState consensus_step(NetworkState state, const ChannelAssignment& assignment) {
    advance(state, assignment);
    return state;
}

/// Crash of node `i` after it transmitted its round-`state.round` messages
/// under `assignment`: each live neighbor keeps the share it received, and
/// the node's encoder and shares are erased.
inline void fail_node(NetworkState& state, NodeIndex i, const ChannelAssignment& assignment) {
    if (i >= state.node_count()) {
        throw Error(ErrorCode::NodeIndexOutOfRange, "node " + std::to_string(i + 1));
    }
    NodeState& node = state.nodes[i];
    if (!node.alive) throw Error(ErrorCode::AlreadyFailed, "node " + std::to_string(i + 1));
    if (assignment.round != state.round) {
        throw Error(ErrorCode::InvalidAssignment, "assignment is not for the current round");
    }
    for (NodeIndex j : state.topology->neighbors(i)) {
        const EdgeChannel* ec = assignment.find(i, j);
        if (ec == nullptr || !state.nodes[j].alive) continue;
        state.nodes[j].held_for_failed[i] = {(*state.keys)[ec->channel], node.shares[ec->channel]};
    }
    node.encoder = EncoderState{std::numeric_limits<double>::quiet_NaN(), {}};
    node.shares = ShareVector{};
    node.alive = false;
}

/// Same, with the current round's handshake drawn from `seed`.
inline void fail_node(NetworkState& state, NodeIndex i, std::uint64_t seed) {
    const ChannelAssignment a =
        run_handshake(*state.topology, state.channel_count(), seed, state.round, state.alive_mask());
    fail_node(state, i, a);
}

/// Rebuilds a failed node's secret and coefficients from the shares its
/// neighbors hold, and brings it back online.
inline void recover_node(NetworkState& state, NodeIndex i, double rel_tol = 1e-6) {
    if (i >= state.node_count()) {
        throw Error(ErrorCode::NodeIndexOutOfRange, "node " + std::to_string(i + 1));
    }
    NodeState& node = state.nodes[i];
    if (node.alive) throw Error(ErrorCode::NotFailed, "node " + std::to_string(i + 1));
    const std::size_t p = state.degrees[i];
    const auto& nbrs = state.topology->neighbors(i);
    if (nbrs.size() <= p) {
        throw Error(ErrorCode::InsufficientNeighbors,
                    "node " + std::to_string(i + 1) + " has " + std::to_string(nbrs.size()) +
                        " neighbors but privacy degree " + std::to_string(p));
    }
    std::vector<KeyedShare> collected;
    for (NodeIndex j : nbrs) {
        auto it = state.nodes[j].held_for_failed.find(i);
        if (it != state.nodes[j].held_for_failed.end()) collected.push_back(it->second);
    }
    if (collected.size() < p + 1) {
        throw Error(ErrorCode::InsufficientNeighbors,
                    "only " + std::to_string(collected.size()) + " shares held for node " +
                        std::to_string(i + 1));
    }
    double secret = 0.0;
    try {
        secret = reconstruct(collected, p, rel_tol);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InconsistentShares) {
            throw Error(ErrorCode::ReconstructionInconsistent, e.what());
        }
        throw;
    }
    const std::vector<double> c = interpolate_coefficients(collected, p);
    node.encoder.secret = secret;
    node.encoder.coefficients.assign(c.begin() + 1, c.end());
    node.shares = generate_shares(node.encoder, *state.keys);
    node.alive = true;
    for (NodeIndex j : nbrs) state.nodes[j].held_for_failed.erase(i);
}

/// max over channels and live node pairs of |r_i^k - r_j^k|.
inline double share_disagreement(const NetworkState& state) {
    double worst = 0.0;
    for (Channel k = 0; k < state.channel_count(); ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const NodeState& n : state.nodes) {
            if (!n.alive) continue;
            lo = std::min(lo, n.shares[k]);
            hi = std::max(hi, n.shares[k]);
        }
        if (hi >= lo) worst = std::max(worst, hi - lo);
    }
    return worst;
}

/// max over live node pairs of |x_i - x_j|.
inline double state_disagreement(const NetworkState& state) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const NodeState& n : state.nodes) {
        if (!n.alive) continue;
        lo = std::min(lo, n.encoder.secret);
        hi = std::max(hi, n.encoder.secret);
    }
    return hi >= lo ? hi - lo : 0.0;
}

/// Channel-major stacking (r^1; ...; r^M), entry k*N + i holds r_i^k.
inline Eigen::VectorXd stacked_shares(const NetworkState& state) {
    if (!state.all_alive()) throw Error(ErrorCode::InvalidState, "stacking needs every node alive");
    const std::size_t n = state.node_count();
    const std::size_t m = state.channel_count();
    Eigen::VectorXd r(static_cast<Eigen::Index>(m * n));
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(k * n + i)) = state.nodes[i].shares[k];
    }
    return r;
}

struct FailureEvent {
    NodeIndex node = 0;
    std::uint64_t fail_round = 0;
    std::optional<std::uint64_t> recover_round;
};

enum class EventKind { Fail, Recover };

inline const char* to_string(EventKind k) { return k == EventKind::Fail ? "fail" : "recover"; }

struct RunEvent {
    std::uint64_t round = 0;
    EventKind kind = EventKind::Fail;
    NodeIndex node = 0;
};

struct RunOptions {
    std::uint64_t max_rounds = 5000;
    std::uint64_t seed = 0;
    double stop_eps = 1e-8;
    std::vector<FailureEvent> failures;
};

struct RunObserver {
    std::function<void(const NetworkState&)> on_state;
    std::function<void(const ChannelAssignment&)> on_assignment;
    std::function<void(const RunEvent&)> on_event;
};

struct RunSummary {
    std::uint64_t rounds = 0;
    bool converged = false;
    double final_disagreement = 0.0;
    std::vector<RunEvent> events;
};

/// Runs handshake + update rounds until the live nodes' shares agree to
/// within `stop_eps` (and no failure event is still pending) or
/// `max_rounds` rounds have run.
///
/// Within round t: scheduled recoveries happen first, then the handshake
/// among live nodes, then scheduled failures (a failing node has already
/// sent its round-t shares, which its neighbors keep), then the update
/// among the remaining live nodes.
inline RunSummary simulate(NetworkState& state, const RunOptions& options,
                           const RunObserver& observer = {}) {
    RunSummary summary;
    auto emit = [&](const RunEvent& ev) {
        summary.events.push_back(ev);
        if (observer.on_event) observer.on_event(ev);
    };
    auto pending_events = [&] {
        for (const FailureEvent& f : options.failures) {
            if (f.fail_round >= state.round) return true;
            if (f.recover_round && *f.recover_round >= state.round) return true;
        }
        return false;
    };
    for (const FailureEvent& f : options.failures) {
        if (f.recover_round && *f.recover_round <= f.fail_round) {
            throw Error(ErrorCode::InvalidState, "recovery must come after the failure");
        }
    }

    if (observer.on_state) observer.on_state(state);
    for (std::uint64_t step = 0; step < options.max_rounds; ++step) {
        if (!pending_events() && share_disagreement(state) < options.stop_eps) break;
        const std::uint64_t t = state.round;
        for (const FailureEvent& f : options.failures) {
            if (f.recover_round && *f.recover_round == t) {
                recover_node(state, f.node);
                emit({t, EventKind::Recover, f.node});
            }
        }
        ChannelAssignment assignment = run_handshake(*state.topology, state.channel_count(),
                                                     options.seed, t, state.alive_mask());
        if (observer.on_assignment) observer.on_assignment(assignment);
        bool failed_now = false;
        for (const FailureEvent& f : options.failures) {
            if (f.fail_round == t) {
                fail_node(state, f.node, assignment);
                emit({t, EventKind::Fail, f.node});
                failed_now = true;
            }
        }
        if (failed_now) assignment = restrict_to_alive(std::move(assignment), state.alive_mask());
        advance(state, assignment);
        ++summary.rounds;
        if (observer.on_state) observer.on_state(state);
    }
    summary.final_disagreement = share_disagreement(state);
    summary.converged = !pending_events() && summary.final_disagreement < options.stop_eps;
    return summary;
}

/// Snapshot of every round, starting with the initial state.
inline std::vector<NetworkState> run(NetworkState state, std::uint64_t rounds, std::uint64_t seed,
                                     double stop_eps = 1e-8) {
    std::vector<NetworkState> trace;
    RunObserver obs;
    obs.on_state = [&](const NetworkState& s) { trace.push_back(s); };
    simulate(state, RunOptions{rounds, seed, stop_eps, {}}, obs);
    return trace;
}

}  // namespace ppc
