#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ppcons/analysis.hpp"
#include "ppcons/consensus.hpp"
#include "ppcons/experiment.hpp"
#include "ppcons/handshake.hpp"
#include "ppcons/sharing.hpp"

/// Seeded Monte-Carlo studies shared by the suite runner and the acceptance
/// binary. Each study returns raw statistics; callers apply the thresholds.
namespace ppc::studies {

/// Evaluates `fn(i)` for i in [0, count) concurrently, one task per index,
/// and returns the results in index order.
template <class Fn>
auto parallel_map(std::size_t count, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::future<R>> futures;
    futures.reserve(count);
    for (std::size_t i = 0; i < count; ++i) futures.push_back(std::async(std::launch::async, fn, i));
    std::vector<R> out;
    out.reserve(count);
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    if (xs.empty()) return r;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) r.mean += x;
    r.mean /= n;
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / (n - 1.0) / n);
    return r;
}

// ---------------------------------------------------------------------------
// Consensus ensembles

struct TimedReport {
    experiment::ExperimentReport report;
    double seconds = 0.0;
};

/// Runs `base` once per seed base.seed, base.seed+1, ... concurrently.
inline std::vector<TimedReport> consensus_ensemble(const experiment::ExperimentConfig& base, std::size_t seeds) {
    return parallel_map(seeds, [&base](std::size_t s) {
        experiment::ExperimentConfig c = base;
        c.seed = base.seed + s;
        const auto t0 = std::chrono::steady_clock::now();
        TimedReport out{experiment::execute(c), 0.0};
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    });
}

// ---------------------------------------------------------------------------
// Lyapunov contraction

struct ContractionStudy {
    double c_bar = 0.0;
    MeanSe ratio;
    std::size_t samples = 0;
};

/// Samples V(delta(t+1)) / V(delta(t)) with V the squared norm of the
/// disagreement from the common-degree limit. Sample s starts from seed
/// base.seed + s and is measured at round s % horizon.
inline ContractionStudy contraction_study(const experiment::ExperimentConfig& base, std::size_t samples,
                                          std::uint64_t horizon) {
    ContractionStudy out;
    out.samples = samples;
    const std::vector<double> ratios = parallel_map(samples, [&](std::size_t s) {
        experiment::ExperimentConfig c = base;
        c.seed = base.seed + s;
        experiment::Setup setup = experiment::prepare(c);
        NetworkState& state = setup.state;
        const Eigen::VectorXd r_inf = analysis::predict_steady_state(state).r_inf;
        const std::uint64_t t = s % horizon;
        for (std::uint64_t k = 0; k < t; ++k) {
            advance(state, run_handshake(*state.topology, state.channel_count(), c.seed, state.round));
        }
        const double before = analysis::disagreement(stacked_shares(state), r_inf).squaredNorm();
        advance(state, run_handshake(*state.topology, state.channel_count(), c.seed, state.round));
        const double after = analysis::disagreement(stacked_shares(state), r_inf).squaredNorm();
        return after / before;
    });
    out.ratio = mean_se(ratios);
    experiment::Setup setup = experiment::prepare(base);
    out.c_bar = analysis::contraction_factor(setup.topology, setup.keys.channel_count(), base.gamma);
    return out;
}

// ---------------------------------------------------------------------------
// Exact privacy degree

struct PrivacyStudy {
    std::size_t instances = 0;
    /// max |reconstructed - x| / max(1, max_k |r_k|) over the threshold
    /// subsets tried; shares are rounded to doubles, so the error scales
    /// with the share magnitudes rather than with x.
    double max_reconstruction_error = 0.0;
    /// max |witness(s_k) - r_k| / (1 + |r_k|) over all witnesses built.
    double max_witness_residual = 0.0;
    std::size_t witness_failures = 0;
    std::size_t max_degree = 0;
    std::size_t max_channels = 0;
};

/// Random instances with p <= 5 and p < M <= 11, keys 1..M. Each instance
/// reconstructs from a random (p+1)-subset and, for a random subset of at
/// most p shares, builds witnesses for two distinct candidate secrets.
inline PrivacyStudy privacy_study(std::size_t instances, std::uint64_t seed) {
    PrivacyStudy out;
    out.instances = instances;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-10.0, 10.0);
    std::uniform_real_distribution<double> cand(-100.0, 100.0);
    for (std::size_t it = 0; it < instances; ++it) {
        const std::size_t p = std::uniform_int_distribution<std::size_t>(0, 5)(rng);
        const std::size_t m = std::uniform_int_distribution<std::size_t>(p + 1, 11)(rng);
        out.max_degree = std::max(out.max_degree, p);
        out.max_channels = std::max(out.max_channels, m);
        const KeySet keys = KeySet::sequential(m);
        const EncoderState enc = random_encoder(unit(rng), p, 10.0, rng);
        const ShareVector r = generate_shares(enc, keys);
        std::vector<KeyedShare> all;
        for (std::size_t k = 0; k < m; ++k) all.push_back({keys[k], r[k]});
        std::shuffle(all.begin(), all.end(), rng);

        const auto subset = std::span(all).first(p + 1);
        double scale = 1.0;
        for (const KeyedShare& sh : subset) scale = std::max(scale, std::abs(sh.value));
        const double got = reconstruct(subset, p);
        out.max_reconstruction_error = std::max(out.max_reconstruction_error, std::abs(got - enc.secret) / scale);

        const std::size_t take = std::uniform_int_distribution<std::size_t>(0, p)(rng);
        const auto seen = std::span(all).first(take);
        const double c1 = cand(rng);
        double c2 = cand(rng);
        if (c2 == c1) c2 = c1 + 1.0;
        for (double candidate : {c1, c2}) {
            try {
                const EncoderState alt{candidate, privacy_consistency_witness(seen, candidate, p, keys)};
                for (const KeyedShare& sh : seen) {
                    out.max_witness_residual = std::max(
                        out.max_witness_residual, std::abs(alt.evaluate(sh.key) - sh.value) / (1.0 + std::abs(sh.value)));
                }
            } catch (const Error&) {
                ++out.witness_failures;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Edge coloring

struct ColoringStudy {
    std::size_t handshakes = 0;
    std::size_t violations = 0;
    /// max over edges and channels of |freq - 1/M| / SE.
    double max_z = 0.0;
    double max_abs_deviation = 0.0;
};

inline ColoringStudy coloring_study(const Topology& g, std::size_t channels, std::size_t handshakes,
                                    std::uint64_t seed) {
    ColoringStudy out;
    out.handshakes = handshakes;
    std::vector<std::vector<double>> count(g.edge_count(), std::vector<double>(channels, 0.0));
    for (std::size_t s = 0; s < handshakes; ++s) {
        const ChannelAssignment a = run_handshake(g, channels, seed, s);
        if (!assignment_violation(g, a).empty()) {
            ++out.violations;
            continue;
        }
        for (std::size_t e = 0; e < g.edge_count(); ++e) count[e][a.entries[e].channel] += 1.0;
    }
    const double n = static_cast<double>(handshakes);
    const double p = 1.0 / static_cast<double>(channels);
    const double se = std::sqrt(p * (1.0 - p) / n);
    for (const auto& row : count) {
        for (double c : row) {
            const double dev = std::abs(c / n - p);
            out.max_abs_deviation = std::max(out.max_abs_deviation, dev);
            out.max_z = std::max(out.max_z, se > 0 ? dev / se : 0.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Engine vs stacked matrices

struct OracleStudy {
    std::size_t instances = 0;
    /// max |engine - stacked| / (1 + max|r|) for a single round.
    double max_step_mismatch = 0.0;
    /// max |q(t) - q(0)| / scale over conserved scalars q and 100 rounds,
    /// where scale = sum |v_m kron 1| |r(0)|.
    double max_conservation_drift = 0.0;
};

inline Topology random_connected_graph(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t v = 2; v <= n; ++v) edges.emplace_back(1 + rng() % (v - 1), v);
    for (std::size_t a = 1; a <= n; ++a) {
        for (std::size_t b = a + 1; b <= n; ++b) {
            if (std::find(edges.begin(), edges.end(), std::pair{a, b}) == edges.end() && rng() % 3 == 0) {
                edges.emplace_back(a, b);
            }
        }
    }
    return build_topology(n, edges);
}

/// Random connected graphs with 2 <= N <= 6 and M <= 9; even instances use
/// a common privacy degree, odd ones per-node degrees.
inline OracleStudy oracle_study(std::size_t instances, std::uint64_t seed, std::uint64_t rounds) {
    OracleStudy out;
    out.instances = instances;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-10.0, 10.0);
    for (std::size_t it = 0; it < instances; ++it) {
        const Topology g = random_connected_graph(rng, 2 + rng() % 5);
        const std::size_t m = std::min<std::size_t>(9, min_channel_count(g) + rng() % 3);
        std::vector<std::size_t> deg(g.node_count());
        const std::size_t p0 = rng() % m;
        for (auto& d : deg) d = it % 2 == 0 ? p0 : rng() % m;
        std::vector<double> x0(g.node_count());
        for (double& x : x0) x = unit(rng);
        const double gamma = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        const KeySet keys = KeySet::sequential(m);
        NetworkState s = make_random_network(g, keys, gamma, deg, x0, 10.0, rng);
        const std::uint64_t hs_seed = rng();

        const std::size_t pmin = *std::min_element(deg.begin(), deg.end());
        const Eigen::VectorXd r0 = stacked_shares(s);
        const std::vector<double> q0 = analysis::conserved_quantities(r0, keys, g.node_count(), pmin);
        std::vector<double> scale(q0.size(), 0.0);
        for (std::size_t mm = 0; mm < q0.size(); ++mm) {
            const Eigen::VectorXd v = analysis::monomial_vector(keys, mm + 1);
            const auto n = static_cast<Eigen::Index>(g.node_count());
            for (Eigen::Index k = 0; k < v.size(); ++k) scale[mm] += std::abs(v(k)) * r0.segment(k * n, n).cwiseAbs().sum();
        }
        for (std::uint64_t t = 0; t < rounds; ++t) {
            const ChannelAssignment a = run_handshake(g, m, hs_seed, s.round);
            const Eigen::VectorXd before = stacked_shares(s);
            if (t == 0) {
                const Eigen::MatrixXd step = analysis::build_stacked_step(g, a, deg, keys, gamma);
                const Eigen::VectorXd predicted = step * before;
                advance(s, a);
                const Eigen::VectorXd after = stacked_shares(s);
                out.max_step_mismatch = std::max(out.max_step_mismatch, (after - predicted).cwiseAbs().maxCoeff() /
                                                                            (1.0 + before.cwiseAbs().maxCoeff()));
            } else {
                advance(s, a);
            }
            const std::vector<double> q =
                analysis::conserved_quantities(stacked_shares(s), keys, g.node_count(), pmin);
            for (std::size_t mm = 0; mm < q.size(); ++mm) {
                out.max_conservation_drift =
                    std::max(out.max_conservation_drift, std::abs(q[mm] - q0[mm]) / std::max(scale[mm], 1.0));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Baseline comparison

struct BaselineRow {
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> protocol_round;
    std::optional<std::size_t> conventional_round;
};

/// Protocol vs unencrypted consensus from the same x0, both judged by the
/// first round with max_ij |x_i - x_j| below the convergence threshold.
inline std::vector<BaselineRow> baseline_study(const experiment::ExperimentConfig& base, std::size_t seeds) {
    return parallel_map(seeds, [&base](std::size_t s) {
        experiment::ExperimentConfig c = base;
        c.seed = base.seed + s;
        const experiment::Setup setup = experiment::prepare(c);
        const double gamma_bar = 1.0 / static_cast<double>(setup.topology.max_degree() + 1);
        const Eigen::Map<const Eigen::VectorXd> x0(setup.x0.data(), static_cast<Eigen::Index>(setup.x0.size()));
        BaselineRow row;
        row.seed = c.seed;
        row.conventional_round = analysis::conventional_convergence_round(
            setup.topology, x0, gamma_bar, experiment::kConvergenceThreshold, c.rounds);
        row.protocol_round = experiment::execute(c).convergence_round;
        return row;
    });
}

}  // namespace ppc::studies
