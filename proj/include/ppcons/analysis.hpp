#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <boost/rational.hpp>

#include "ppcons/consensus.hpp"
#include "ppcons/error.hpp"
#include "ppcons/graph.hpp"
#include "ppcons/handshake.hpp"
#include "ppcons/projector.hpp"
#include "ppcons/sharing.hpp"

namespace ppc::analysis {

// ---------------------------------------------------------------------------
// Per-channel random Laplacians

/// L^k for one round: (L^k)_ij = -1 if edge (i,j) carries channel k,
/// diagonal = number of incident edges on channel k (0 or 1).
inline Eigen::MatrixXd channel_laplacian(std::size_t node_count, const ChannelAssignment& a,
                                         Channel k) {
    const auto n = static_cast<Eigen::Index>(node_count);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (const EdgeChannel& ec : a.entries) {
        if (ec.channel != k) continue;
        const auto i = static_cast<Eigen::Index>(ec.edge.lo);
        const auto j = static_cast<Eigen::Index>(ec.edge.hi);
        L(i, j) = L(j, i) = -1.0;
        L(i, i) += 1.0;
        L(j, j) += 1.0;
    }
    return L;
}

struct MomentDeviation {
    double max_abs_deviation = 0.0;
    /// Largest |estimate - target| / standard error over all entries. An
    /// entry with zero spread counts as 0 if it hits the target, else +inf.
    double max_z = 0.0;
};

struct LaplacianMomentReport {
    std::size_t samples = 0;
    std::size_t channel_count = 0;
    std::vector<Eigen::MatrixXd> mean_first;   // E[L^k] estimates
    std::vector<Eigen::MatrixXd> mean_second;  // E[(L^k)^2] estimates
    std::vector<Eigen::MatrixXd> se_first;
    std::vector<Eigen::MatrixXd> se_second;
    MomentDeviation first;   // against L / M
    MomentDeviation second;  // against 2 L / M
};

namespace detail {

inline void accumulate_deviation(MomentDeviation& d, const Eigen::MatrixXd& mean,
                                 const Eigen::MatrixXd& se, const Eigen::MatrixXd& target) {
    for (Eigen::Index r = 0; r < mean.rows(); ++r) {
        for (Eigen::Index c = 0; c < mean.cols(); ++c) {
            const double dev = std::abs(mean(r, c) - target(r, c));
            d.max_abs_deviation = std::max(d.max_abs_deviation, dev);
            double z = 0.0;
            if (se(r, c) > 0.0) {
                z = dev / se(r, c);
            } else if (dev > 1e-12) {
                z = std::numeric_limits<double>::infinity();
            }
            d.max_z = std::max(d.max_z, z);
        }
    }
}

}  // namespace detail

/// Monte-Carlo estimates of E[L^k] and E[(L^k)^2] over `samples`
/// independent handshakes (handshake s uses round index s of `seed`),
/// compared against L/M and 2L/M.
inline LaplacianMomentReport expected_laplacian_check(const Topology& topology,
                                                      std::size_t channel_count,
                                                      std::size_t samples, std::uint64_t seed) {
    const auto n = static_cast<Eigen::Index>(topology.node_count());
    LaplacianMomentReport rep;
    rep.samples = samples;
    rep.channel_count = channel_count;
    std::vector<Eigen::MatrixXd> sum1(channel_count, Eigen::MatrixXd::Zero(n, n));
    auto sq1 = sum1, sum2 = sum1, sq2 = sum1;
    for (std::size_t s = 0; s < samples; ++s) {
        const ChannelAssignment a = run_handshake(topology, channel_count, seed, s);
        for (Channel k = 0; k < channel_count; ++k) {
            const Eigen::MatrixXd Lk = channel_laplacian(topology.node_count(), a, k);
            const Eigen::MatrixXd Lk2 = Lk * Lk;
            sum1[k] += Lk;
            sq1[k] += Lk.cwiseProduct(Lk);
            sum2[k] += Lk2;
            sq2[k] += Lk2.cwiseProduct(Lk2);
        }
    }
    const double ns = static_cast<double>(samples);
    auto finish = [&](const Eigen::MatrixXd& sum, const Eigen::MatrixXd& sq, Eigen::MatrixXd& mean,
                      Eigen::MatrixXd& se) {
        mean = sum / ns;
        const Eigen::MatrixXd var =
            ((sq / ns - mean.cwiseProduct(mean)) * (ns / std::max(ns - 1.0, 1.0))).cwiseMax(0.0);
        se = (var / ns).cwiseSqrt();
    };
    const Eigen::MatrixXd L = topology.laplacian();
    const double m = static_cast<double>(channel_count);
    for (Channel k = 0; k < channel_count; ++k) {
        Eigen::MatrixXd mean1, se1, mean2, se2;
        finish(sum1[k], sq1[k], mean1, se1);
        finish(sum2[k], sq2[k], mean2, se2);
        detail::accumulate_deviation(rep.first, mean1, se1, L / m);
        detail::accumulate_deviation(rep.second, mean2, se2, 2.0 * L / m);
        rep.mean_first.push_back(std::move(mean1));
        rep.se_first.push_back(std::move(se1));
        rep.mean_second.push_back(std::move(mean2));
        rep.se_second.push_back(std::move(se2));
    }
    return rep;
}

using Rational = boost::rational<long long>;
using RationalMatrix = std::vector<std::vector<Rational>>;

struct ExactMoments {
    std::vector<RationalMatrix> first;   // E[L^k]
    std::vector<RationalMatrix> second;  // E[(L^k)^2]
    std::size_t outcomes = 0;            // number of distinct draw sequences
};

/// Exact E[L^k] and E[(L^k)^2] by enumerating every draw sequence of the
/// lowest-index-first schedule (edges taken in lexicographic order), each
/// draw uniform over the channels free at both endpoints. Limited to
/// graphs with at most `max_edges` edges.
inline ExactMoments exact_laplacian_moments(const Topology& topology, std::size_t channel_count,
                                            std::size_t max_edges = 4) {
    const std::vector<Edge>& edges = topology.edges();
    if (edges.size() > max_edges) {
        throw Error(ErrorCode::HypothesisViolated, "enumeration limited to small graphs");
    }
    if (channel_count < min_channel_count(topology)) {
        throw Error(ErrorCode::ChannelBudgetTooSmall, "too few channels");
    }
    const std::size_t n = topology.node_count();
    ExactMoments out;
    const RationalMatrix zero(n, std::vector<Rational>(n, Rational(0)));
    out.first.assign(channel_count, zero);
    out.second.assign(channel_count, zero);

    std::vector<Channel> colour(edges.size());
    auto record = [&](Rational prob) {
        ++out.outcomes;
        for (Channel k = 0; k < channel_count; ++k) {
            std::vector<std::vector<long long>> Lk(n, std::vector<long long>(n, 0));
            for (std::size_t e = 0; e < edges.size(); ++e) {
                if (colour[e] != k) continue;
                const auto [a, b] = edges[e];
                Lk[a][b] = Lk[b][a] = -1;
                ++Lk[a][a];
                ++Lk[b][b];
            }
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    long long sq = 0;
                    for (std::size_t l = 0; l < n; ++l) sq += Lk[r][l] * Lk[l][c];
                    out.first[k][r][c] += prob * Lk[r][c];
                    out.second[k][r][c] += prob * sq;
                }
            }
        }
    };
    auto recurse = [&](auto&& self, std::size_t e, Rational prob) -> void {
        if (e == edges.size()) {
            record(prob);
            return;
        }
        std::vector<Channel> free;
        for (Channel k = 0; k < channel_count; ++k) {
            bool taken = false;
            for (std::size_t f = 0; f < e; ++f) {
                const bool adjacent = edges[f].lo == edges[e].lo || edges[f].lo == edges[e].hi ||
                                      edges[f].hi == edges[e].lo || edges[f].hi == edges[e].hi;
                if (adjacent && colour[f] == k) taken = true;
            }
            if (!taken) free.push_back(k);
        }
        const Rational p = prob / static_cast<long long>(free.size());
        for (Channel k : free) {
            colour[e] = k;
            self(self, e + 1, p);
        }
    };
    recurse(recurse, 0, Rational(1));
    return out;
}

// ---------------------------------------------------------------------------
// Stacked one-round operators

/// Block diagonal diag(L^1, ..., L^M) acting on channel-major stacked shares.
inline Eigen::MatrixXd stacked_laplacian(std::size_t node_count, const ChannelAssignment& a) {
    const auto n = static_cast<Eigen::Index>(node_count);
    const auto m = static_cast<Eigen::Index>(a.channel_count);
    Eigen::MatrixXd Lbar = Eigen::MatrixXd::Zero(m * n, m * n);
    for (Eigen::Index k = 0; k < m; ++k) {
        Lbar.block(k * n, k * n, n, n) = channel_laplacian(node_count, a, static_cast<Channel>(k));
    }
    return Lbar;
}

/// Permutation G with G * (channel-major stacking) = agent-major stacking.
/// Row l (one-based) is e_{pi(l)}, pi(l) = (l - M floor((l-1)/M) - 1) N + ceil(l/M).
inline Eigen::MatrixXd stacking_permutation(std::size_t channel_count, std::size_t node_count) {
    const std::size_t m = channel_count;
    const std::size_t n = node_count;
    const auto mn = static_cast<Eigen::Index>(m * n);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(mn, mn);
    for (std::size_t l = 1; l <= m * n; ++l) {
        const std::size_t pi = (l - m * ((l - 1) / m) - 1) * n + (l + m - 1) / m;
        G(static_cast<Eigen::Index>(l - 1), static_cast<Eigen::Index>(pi - 1)) = 1.0;
    }
    return G;
}

/// diag(Tbar_1, ..., Tbar_N) acting on agent-major stacked shares.
inline Eigen::MatrixXd block_projector(const std::vector<std::size_t>& degrees, const KeySet& keys) {
    const auto m = static_cast<Eigen::Index>(keys.channel_count());
    const auto n = static_cast<Eigen::Index>(degrees.size());
    Eigen::MatrixXd Pi = Eigen::MatrixXd::Zero(m * n, m * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Pi.block(i * m, i * m, m, m) =
            build_projector(degrees[static_cast<std::size_t>(i)], keys).share_projector;
    }
    return Pi;
}

struct StackedOperators {
    Eigen::MatrixXd Lbar;
    Eigen::MatrixXd G;
    Eigen::MatrixXd Pi;
};

inline StackedOperators stacked_operators(const Topology& topology, const ChannelAssignment& a,
                                          const std::vector<std::size_t>& degrees,
                                          const KeySet& keys) {
    if (degrees.size() != topology.node_count() || a.channel_count != keys.channel_count()) {
        throw Error(ErrorCode::DimensionMismatch, "degrees/keys do not match the network");
    }
    return {stacked_laplacian(topology.node_count(), a),
            stacking_permutation(keys.channel_count(), topology.node_count()),
            block_projector(degrees, keys)};
}

/// Exact one-round linear map on channel-major stacked shares:
/// r(t+1) = G^T Pi G (I - gamma Lbar) r(t).
inline Eigen::MatrixXd build_stacked_step(const Topology& topology, const ChannelAssignment& a,
                                          const std::vector<std::size_t>& degrees,
                                          const KeySet& keys, double gamma) {
    const StackedOperators ops = stacked_operators(topology, a, degrees, keys);
    const auto mn = ops.Lbar.rows();
    return ops.G.transpose() * ops.Pi * ops.G *
           (Eigen::MatrixXd::Identity(mn, mn) - gamma * ops.Lbar);
}

/// Common-degree form (Tbar_0 kron I_N)(I - gamma Lbar).
inline Eigen::MatrixXd build_common_degree_step(const Topology& topology,
                                                const ChannelAssignment& a, std::size_t degree,
                                                const KeySet& keys, double gamma) {
    if (a.channel_count != keys.channel_count()) {
        throw Error(ErrorCode::DimensionMismatch, "assignment and keys disagree on M");
    }
    const std::size_t n = topology.node_count();
    const Eigen::MatrixXd T0 = build_projector(degree, keys).share_projector;
    const Eigen::MatrixXd kron =
        Eigen::kroneckerProduct(T0, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                              static_cast<Eigen::Index>(n)));
    const auto mn = kron.rows();
    return kron * (Eigen::MatrixXd::Identity(mn, mn) - gamma * stacked_laplacian(n, a));
}

/// Monomial vector v_m = (s_1^(m-1), ..., s_M^(m-1)), m one-based.
inline Eigen::VectorXd monomial_vector(const KeySet& keys, std::size_t m) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(keys.channel_count()));
    for (std::size_t k = 0; k < keys.channel_count(); ++k) {
        v(static_cast<Eigen::Index>(k)) = std::pow(keys[k], static_cast<double>(m - 1));
    }
    return v;
}

/// Conserved scalars (v_m kron 1_N)^T r for m = 1..min_degree+1.
inline std::vector<double> conserved_quantities(const Eigen::VectorXd& stacked, const KeySet& keys,
                                                std::size_t node_count, std::size_t min_degree) {
    const auto n = static_cast<Eigen::Index>(node_count);
    std::vector<double> out;
    for (std::size_t m = 1; m <= min_degree + 1; ++m) {
        const Eigen::VectorXd v = monomial_vector(keys, m);
        double acc = 0.0;
        for (Eigen::Index k = 0; k < v.size(); ++k) acc += v(k) * stacked.segment(k * n, n).sum();
        out.push_back(acc);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contraction and steady state

/// cbar = 1 - (2/M)(gamma - gamma^2) lambda2, the expected per-round decay of
/// the squared disagreement norm. Checks gamma in (0,1), M >= 2 d_max - 1,
/// and that cbar falls in [(d_max-1)/(2 d_max-1), 1).
inline double contraction_factor(const Topology& topology, std::size_t channel_count, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw Error(ErrorCode::HypothesisViolated, "step size must lie in (0,1)");
    }
    if (channel_count < min_channel_count(topology)) {
        throw Error(ErrorCode::HypothesisViolated, "M below 2*d_max-1");
    }
    const SpectralSummary s = spectral_summary(topology);
    const double cbar =
        1.0 - (2.0 / static_cast<double>(channel_count)) * (gamma - gamma * gamma) * s.lambda2;
    const double d = static_cast<double>(s.d_max);
    const double lower = s.d_max == 0 ? 0.0 : (d - 1.0) / (2.0 * d - 1.0);
    constexpr double slack = 1e-12;
    if (cbar < lower - slack || cbar >= 1.0 + slack || (s.d_max > 0 && cbar >= 1.0)) {
        throw Error(ErrorCode::HypothesisViolated,
                    "contraction factor " + std::to_string(cbar) + " outside its bracket");
    }
    return cbar;
}

struct SteadyStatePrediction {
    Eigen::VectorXd r_inf;  // common limit share vector, length M
    double x_inf = 0.0;
};

/// Limit of the protocol from channel-major stacked initial shares:
/// r_inf = Tbar_a * (node-mean share vector), where Tbar_a projects onto the
/// polynomials of the smallest privacy degree; x_inf is the constant
/// coefficient of that polynomial.
inline SteadyStatePrediction predict_steady_state(const Eigen::VectorXd& r0,
                                                  const std::vector<std::size_t>& degrees,
                                                  const KeySet& keys) {
    const std::size_t n = degrees.size();
    const std::size_t m = keys.channel_count();
    if (n == 0 || static_cast<std::size_t>(r0.size()) != m * n) {
        throw Error(ErrorCode::DimensionMismatch, "stacked shares must have M*N entries");
    }
    const std::size_t pmin = *std::min_element(degrees.begin(), degrees.end());
    Eigen::VectorXd mean(static_cast<Eigen::Index>(m));
    const auto nn = static_cast<Eigen::Index>(n);
    for (Eigen::Index k = 0; k < mean.size(); ++k) {
        mean(k) = r0.segment(k * nn, nn).sum() / static_cast<double>(n);
    }
    SteadyStatePrediction out;
    const Projector proj = build_projector(pmin, keys);
    out.r_inf = proj.share_projector * mean;
    out.x_inf = (proj.coeff_extractor * mean)(0);
    return out;
}

inline SteadyStatePrediction predict_steady_state(const NetworkState& state) {
    return predict_steady_state(stacked_shares(state), state.degrees, *state.keys);
}

/// Disagreement delta = r - (r_inf kron 1_N) on channel-major shares.
inline Eigen::VectorXd disagreement(const Eigen::VectorXd& stacked, const Eigen::VectorXd& r_inf) {
    const auto m = r_inf.size();
    const auto n = stacked.size() / m;
    Eigen::VectorXd d = stacked;
    for (Eigen::Index k = 0; k < m; ++k) d.segment(k * n, n).array() -= r_inf(k);
    return d;
}

// ---------------------------------------------------------------------------
// Unencrypted baseline

/// x(t+1) = (I - gamma_bar L) x(t); returns x(0), ..., x(rounds).
inline std::vector<Eigen::VectorXd> conventional_consensus(const Topology& topology,
                                                           const Eigen::VectorXd& x0,
                                                           double gamma_bar, std::size_t rounds) {
    const double dmax = static_cast<double>(topology.max_degree());
    if (!(gamma_bar > 0.0) || (dmax > 0 && !(gamma_bar < 1.0 / dmax))) {
        throw Error(ErrorCode::StepSizeOutOfRange, "step size must lie in (0, 1/d_max)");
    }
    if (static_cast<std::size_t>(x0.size()) != topology.node_count()) {
        throw Error(ErrorCode::DimensionMismatch, "x0 must have one entry per node");
    }
    const Eigen::MatrixXd W =
        Eigen::MatrixXd::Identity(x0.size(), x0.size()) - gamma_bar * topology.laplacian();
    std::vector<Eigen::VectorXd> trace{x0};
    trace.reserve(rounds + 1);
    for (std::size_t t = 0; t < rounds; ++t) trace.push_back(W * trace.back());
    return trace;
}

/// First round t with max_i,j |x_i(t) - x_j(t)| < threshold, or nullopt if
/// not reached within `max_rounds`.
inline std::optional<std::size_t> conventional_convergence_round(const Topology& topology,
                                                                 const Eigen::VectorXd& x0,
                                                                 double gamma_bar, double threshold,
                                                                 std::size_t max_rounds) {
    const auto trace = conventional_consensus(topology, x0, gamma_bar, 0);
    const Eigen::MatrixXd W = Eigen::MatrixXd::Identity(x0.size(), x0.size()) -
                              gamma_bar * topology.laplacian();
    Eigen::VectorXd x = trace.front();
    for (std::size_t t = 0; t <= max_rounds; ++t) {
        if (x.maxCoeff() - x.minCoeff() < threshold) return t;
        x = W * x;
    }
    return std::nullopt;
}

}  // namespace ppc::analysis
