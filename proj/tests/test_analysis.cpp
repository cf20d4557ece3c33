#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ppcons/analysis.hpp"
#include "test_util.hpp"

namespace {

namespace an = ppc::analysis;
using ppc::ErrorCode;
using ppc::KeySet;
using ppc_test::error_of;

ppc::Topology random_connected(std::mt19937_64& rng, std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t v = 2; v <= n; ++v) edges.emplace_back(1 + rng() % (v - 1), v);
    for (std::size_t a = 1; a <= n; ++a) {
        for (std::size_t b = a + 1; b <= n; ++b) {
            if (std::find(edges.begin(), edges.end(), std::pair{a, b}) == edges.end() && rng() % 3 == 0) {
                edges.emplace_back(a, b);
            }
        }
    }
    return ppc::build_topology(n, edges);
}

an::Rational entry_of(const Eigen::MatrixXd& L, std::size_t r, std::size_t c, long long num,
                      long long den) {
    return an::Rational(static_cast<long long>(L(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) * num, den);
}

// ---------------------------------------------------------------------------
// Laplacian moments

TEST(ExactMoments, PathOfThreeIsExactlyLOverM) {
    const auto g = ppc::build_topology(3, {{1, 2}, {2, 3}});
    const auto ex = an::exact_laplacian_moments(g, 3);
    EXPECT_EQ(ex.outcomes, 6u);
    const Eigen::MatrixXd L = g.laplacian();
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                EXPECT_EQ(ex.first[k][r][c], entry_of(L, r, c, 1, 3));
                EXPECT_EQ(ex.second[k][r][c], entry_of(L, r, c, 2, 3));
            }
        }
    }
}

TEST(ExactMoments, SmallGraphsSatisfyMomentIdentities) {
    const std::vector<std::pair<std::size_t, std::vector<std::pair<std::size_t, std::size_t>>>> graphs{
        {2, {{1, 2}}},
        {4, {{1, 2}, {1, 3}, {1, 4}}},
        {4, {{1, 2}, {2, 3}, {3, 4}}},
        {4, {{1, 2}, {2, 3}, {3, 4}, {1, 4}}},
        {4, {{1, 2}, {1, 3}, {2, 3}, {3, 4}}},
    };
    for (const auto& [n, edges] : graphs) {
        const auto g = ppc::build_topology(n, edges);
        for (std::size_t m = ppc::min_channel_count(g); m <= ppc::min_channel_count(g) + 2; ++m) {
            const auto ex = an::exact_laplacian_moments(g, m);
            const Eigen::MatrixXd L = g.laplacian();
            for (std::size_t k = 0; k < m; ++k) {
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < n; ++c) {
                        EXPECT_EQ(ex.first[k][r][c], entry_of(L, r, c, 1, static_cast<long long>(m)));
                        EXPECT_EQ(ex.second[k][r][c], entry_of(L, r, c, 2, static_cast<long long>(m)));
                    }
                }
            }
        }
    }
    EXPECT_EQ(error_of([] { an::exact_laplacian_moments(ppc::demo6(), 7); }), ErrorCode::HypothesisViolated);
}

TEST(MonteCarloMoments, SingleChannelIsDeterministic) {
    const auto rep = an::expected_laplacian_check(ppc::build_topology(2, {{1, 2}}), 1, 1000, 3);
    EXPECT_EQ(rep.first.max_abs_deviation, 0.0);
    EXPECT_EQ(rep.second.max_abs_deviation, 0.0);
    EXPECT_EQ(rep.first.max_z, 0.0);
}

TEST(MonteCarloMoments, PathOfThreeAgreesWithEnumeration) {
    const auto g = ppc::build_topology(3, {{1, 2}, {2, 3}});
    const auto rep = an::expected_laplacian_check(g, 3, 20000, 17);
    const auto ex = an::exact_laplacian_moments(g, 3);
    for (std::size_t k = 0; k < 3; ++k) {
        for (Eigen::Index r = 0; r < 3; ++r) {
            for (Eigen::Index c = 0; c < 3; ++c) {
                const double e1 = boost::rational_cast<double>(ex.first[k][r][c]);
                const double e2 = boost::rational_cast<double>(ex.second[k][r][c]);
                EXPECT_LE(std::abs(rep.mean_first[k](r, c) - e1), 4 * rep.se_first[k](r, c) + 1e-15);
                EXPECT_LE(std::abs(rep.mean_second[k](r, c) - e2), 4 * rep.se_second[k](r, c) + 1e-15);
            }
        }
    }
    EXPECT_LE(rep.first.max_z, 4.0);
    EXPECT_LE(rep.second.max_z, 4.0);
}

// ---------------------------------------------------------------------------
// Stacked operators

TEST(Stacked, PermutationMatchesWorkedExample) {
    // N=2, M=3: rows of G are e1, e3, e5, e2, e4, e6.
    const Eigen::MatrixXd G = an::stacking_permutation(3, 2);
    const int cols[] = {0, 2, 4, 1, 3, 5};
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) EXPECT_EQ(G(r, c), c == cols[r] ? 1.0 : 0.0);
    }
}

TEST(Stacked, PermutationIsOrthogonalAndRestacks) {
    for (std::size_t m = 1; m <= 6; ++m) {
        for (std::size_t n = 1; n <= 6; ++n) {
            const Eigen::MatrixXd G = an::stacking_permutation(m, n);
            const auto mn = static_cast<Eigen::Index>(m * n);
            EXPECT_LE((G.transpose() * G - Eigen::MatrixXd::Identity(mn, mn)).norm(), 1e-12);
            Eigen::VectorXd channel_major(mn);
            for (std::size_t k = 0; k < m; ++k) {
                for (std::size_t i = 0; i < n; ++i) channel_major(static_cast<Eigen::Index>(k * n + i)) = 100.0 * i + k;
            }
            const Eigen::VectorXd agent_major = G * channel_major;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < m; ++k) EXPECT_EQ(agent_major(static_cast<Eigen::Index>(i * m + k)), 100.0 * i + k);
            }
            EXPECT_EQ(G.transpose() * agent_major, channel_major);
        }
    }
}

TEST(Stacked, ChannelLaplaciansAndProjectors) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = random_connected(rng, 2 + rng() % 5);
        const std::size_t m = ppc::min_channel_count(g) + rng() % 3;
        const auto a = ppc::run_handshake(g, m, rng(), 0);
        for (ppc::Channel k = 0; k < m; ++k) {
            const Eigen::MatrixXd Lk = an::channel_laplacian(g.node_count(), a, k);
            EXPECT_EQ(Lk, Lk.transpose());
            EXPECT_EQ(Lk.rowwise().sum().cwiseAbs().maxCoeff(), 0.0);
            // Proper coloring: at most one off-diagonal nonzero per row.
            for (Eigen::Index r = 0; r < Lk.rows(); ++r) {
                EXPECT_LE((Lk.row(r).array() != 0.0).count(), 2);
            }
        }
        std::vector<std::size_t> deg(g.node_count());
        for (auto& d : deg) d = rng() % m;
        const Eigen::MatrixXd Pi = an::block_projector(deg, KeySet::sequential(m));
        EXPECT_LE((Pi * Pi - Pi).norm(), 1e-9);
        EXPECT_LE((Pi - Pi.transpose()).norm(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Pi);
        for (double ev : eig.eigenvalues()) EXPECT_LE(std::min(std::abs(ev), std::abs(ev - 1)), 1e-8);
    }
    // Spectrum of Tbar_0 kron I_N on demo6 sizes.
    const Eigen::MatrixXd T0 = ppc::build_projector(2, KeySet::sequential(7)).share_projector;
    const Eigen::MatrixXd big = Eigen::kroneckerProduct(T0, Eigen::MatrixXd::Identity(6, 6));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(big);
    for (double ev : eig.eigenvalues()) EXPECT_LE(std::min(std::abs(ev), std::abs(ev - 1)), 1e-8);
}

struct RandomInstance {
    ppc::NetworkState state;
    std::uint64_t seed;
};

RandomInstance random_network(std::mt19937_64& rng, bool common) {
    const auto g = random_connected(rng, 2 + rng() % 5);  // N <= 6
    const std::size_t m = std::min<std::size_t>(9, ppc::min_channel_count(g) + rng() % 3);
    std::vector<std::size_t> deg(g.node_count());
    const std::size_t p0 = rng() % m;
    for (auto& d : deg) d = common ? p0 : rng() % m;
    std::uniform_real_distribution<double> x(-10, 10);
    std::vector<double> x0(g.node_count());
    for (double& v : x0) v = x(rng);
    const double gamma = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    auto state = ppc::make_random_network(g, KeySet::sequential(m), gamma, deg, x0, 10.0, rng);
    return {std::move(state), rng()};
}

TEST(Stacked, EngineRoundMatchesMatrixRound) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const bool common = trial % 2 == 0;
        auto [s, seed] = random_network(rng, common);
        const auto a = ppc::run_handshake(*s.topology, s.channel_count(), seed, 0);
        const Eigen::VectorXd before = ppc::stacked_shares(s);
        const Eigen::MatrixXd step = an::build_stacked_step(*s.topology, a, s.degrees, *s.keys, s.gamma);
        ppc::advance(s, a);
        const Eigen::VectorXd after = ppc::stacked_shares(s);
        const Eigen::VectorXd predicted = step * before;
        EXPECT_LE((after - predicted).cwiseAbs().maxCoeff(), 1e-9 * (1 + before.cwiseAbs().maxCoeff()));
        if (common) {
            const Eigen::MatrixXd special =
                an::build_common_degree_step(*s.topology, a, s.degrees[0], *s.keys, s.gamma);
            EXPECT_LE((special - step).cwiseAbs().maxCoeff(), 1e-9);
        }
    }
}

TEST(Stacked, MonomialVectorsAreLeftFixed) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        auto [s, seed] = random_network(rng, false);
        const auto a = ppc::run_handshake(*s.topology, s.channel_count(), seed, 0);
        const Eigen::MatrixXd step = an::build_stacked_step(*s.topology, a, s.degrees, *s.keys, s.gamma);
        const std::size_t pmin = *std::min_element(s.degrees.begin(), s.degrees.end());
        const auto n = static_cast<Eigen::Index>(s.node_count());
        for (std::size_t mm = 1; mm <= pmin + 1; ++mm) {
            const Eigen::VectorXd v = an::monomial_vector(*s.keys, mm);
            const Eigen::VectorXd w = Eigen::kroneckerProduct(v, Eigen::VectorXd::Ones(n));
            const Eigen::VectorXd left = step.transpose() * w;
            EXPECT_LE((left - w).cwiseAbs().maxCoeff(), 1e-10 * (1 + w.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(Stacked, TinyStepFixesOnPolynomialState) {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        auto [s, seed] = random_network(rng, false);
        const auto a = ppc::run_handshake(*s.topology, s.channel_count(), seed, 0);
        const Eigen::MatrixXd step = an::build_stacked_step(*s.topology, a, s.degrees, *s.keys, 1e-12);
        const Eigen::VectorXd r = ppc::stacked_shares(s);
        EXPECT_LE((step * r - r).cwiseAbs().maxCoeff(), 1e-8 * (1 + r.cwiseAbs().maxCoeff()));
    }
}

TEST(Stacked, DimensionMismatch) {
    const auto g = ppc::demo6();
    const auto a = ppc::run_handshake(g, 7, 1, 0);
    EXPECT_EQ(error_of([&] { an::build_stacked_step(g, a, {2, 2}, KeySet::sequential(7), 0.5); }),
              ErrorCode::DimensionMismatch);
    EXPECT_EQ(error_of([&] { an::build_stacked_step(g, a, std::vector<std::size_t>(6, 2), KeySet::sequential(8), 0.5); }),
              ErrorCode::DimensionMismatch);
}

// ---------------------------------------------------------------------------
// Contraction factor and steady state

TEST(Contraction, PathOfTwoSitsOnLowerBoundary) {
    EXPECT_NEAR(an::contraction_factor(ppc::build_topology(2, {{1, 2}}), 1, 0.5), 0.0, 1e-15);
}

TEST(Contraction, Demo6) {
    // lambda2 = (7 - sqrt 17)/2; cbar = 1 - (2/7)(0.95 - 0.95^2) lambda2.
    EXPECT_NEAR(an::contraction_factor(ppc::demo6(), 7, 0.95), 0.9804782167452627, 1e-12);
}

TEST(Contraction, TendsToOneAtStepSizeLimits) {
    const auto g = ppc::demo6();
    EXPECT_NEAR(an::contraction_factor(g, 7, 1e-9), 1.0, 1e-8);
    EXPECT_NEAR(an::contraction_factor(g, 7, 1.0 - 1e-9), 1.0, 1e-8);
    EXPECT_LT(an::contraction_factor(g, 7, 1e-9), 1.0);
    EXPECT_EQ(error_of([&] { an::contraction_factor(g, 7, 1.0); }), ErrorCode::HypothesisViolated);
    EXPECT_EQ(error_of([&] { an::contraction_factor(g, 6, 0.5); }), ErrorCode::HypothesisViolated);
}

TEST(SteadyState, CommonDegreePredictsAverage) {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        auto [s, seed] = random_network(rng, true);
        double mean = 0;
        for (const auto& n : s.nodes) mean += n.encoder.secret;
        mean /= static_cast<double>(s.node_count());
        EXPECT_NEAR(an::predict_steady_state(s).x_inf, mean, 1e-8 * (1 + std::abs(mean)));
    }
}

TEST(SteadyState, SingleNode) {
    const auto s = ppc::make_network(ppc::build_topology(1, {}), KeySet::sequential(3), 0.5,
                                     {{2.25, {1.0, -3.0}}});
    EXPECT_NEAR(an::predict_steady_state(s).x_inf, 2.25, 1e-12);
}

// Second route: theta = (1/N)(Phi~^T Phi~)^{-1} (Phi~ kron 1_N)^T r(0),
// r_inf = Phi~ theta, solved by normal equations with LDLT.
TEST(SteadyState, MatchesNormalEquationRoute) {
    std::mt19937_64 rng(59);
    for (int trial = 0; trial < 50; ++trial) {
        auto [s, seed] = random_network(rng, false);
        const std::size_t pmin = *std::min_element(s.degrees.begin(), s.degrees.end());
        const Eigen::MatrixXd phi = ppc::vandermonde(*s.keys, pmin);
        const auto n = static_cast<Eigen::Index>(s.node_count());
        const Eigen::MatrixXd lifted = Eigen::kroneckerProduct(phi, Eigen::VectorXd::Ones(n));
        const Eigen::VectorXd r0 = ppc::stacked_shares(s);
        const Eigen::VectorXd theta =
            (phi.transpose() * phi).ldlt().solve(lifted.transpose() * r0) / static_cast<double>(n);
        const Eigen::VectorXd expected = phi * theta;
        const auto pred = an::predict_steady_state(s);
        EXPECT_LE((pred.r_inf - expected).cwiseAbs().maxCoeff(), 1e-7 * (1 + expected.cwiseAbs().maxCoeff()));
        EXPECT_NEAR(pred.x_inf, theta(0), 1e-6 * (1 + std::abs(theta(0))));
    }
}

TEST(SteadyState, AnyMinimizingNodeGivesSameProjector) {
    const KeySet keys = KeySet::sequential(7);
    const std::vector<std::size_t> deg{3, 1, 2, 1, 4, 1};
    const Eigen::MatrixXd Pi = an::block_projector(deg, keys);
    Eigen::MatrixXd first;
    for (Eigen::Index i = 0; i < 6; ++i) {
        if (deg[static_cast<std::size_t>(i)] != 1) continue;
        const Eigen::MatrixXd block = Pi.block(i * 7, i * 7, 7, 7);
        if (first.size() == 0) first = block;
        EXPECT_LE((block - first).cwiseAbs().maxCoeff(), 1e-14);
    }
}

// ---------------------------------------------------------------------------
// Baseline

TEST(Conventional, Examples) {
    const auto p2 = ppc::build_topology(2, {{1, 2}});
    Eigen::VectorXd x0(2);
    x0 << 0, 4;
    const auto tr = an::conventional_consensus(p2, x0, 0.25, 1);
    EXPECT_NEAR(tr[1](0), 1.0, 1e-15);
    EXPECT_NEAR(tr[1](1), 3.0, 1e-15);
    EXPECT_EQ(error_of([&] { an::conventional_consensus(p2, x0, 1.0, 1); }), ErrorCode::StepSizeOutOfRange);

    const auto g = ppc::demo6();
    const Eigen::VectorXd same = Eigen::VectorXd::Constant(6, 2.5);
    for (const auto& x : an::conventional_consensus(g, same, 0.2, 20)) EXPECT_EQ(x, same);

    Eigen::VectorXd y(6);
    y << 3, -1, 7, 0.5, -9, 2;
    const auto t = an::conventional_convergence_round(g, y, 0.2, 1e-8, 10000);
    ASSERT_TRUE(t.has_value());
    const auto trace = an::conventional_consensus(g, y, 0.2, *t);
    EXPECT_LE((trace.back().array() - y.mean()).abs().maxCoeff(), 1e-8);
}

}  // namespace
