// Acceptance checks: one PASS/FAIL line per criterion, tolerances pinned
// below. Exit status is the number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include "ppcons/analysis.hpp"
#include "ppcons/experiment.hpp"
#include "ppcons/studies.hpp"

namespace {

namespace an = ppc::analysis;
namespace ex = ppc::experiment;
namespace st = ppc::studies;

constexpr std::size_t kSeeds = 20;
constexpr std::uint64_t kFirstSeed = 1001;
constexpr double kConsensusTol = 1e-6;
constexpr std::uint64_t kRoundBudget = 3000;
constexpr double kRunSeconds = 5.0;
constexpr std::size_t kMomentSamples = 100000;
constexpr double kMomentZ = 4.0;
constexpr double kMomentSeconds = 30.0;
constexpr std::size_t kContractionSamples = 1000;
constexpr std::uint64_t kContractionHorizon = 50;
constexpr double kContractionSe = 3.0;
constexpr std::size_t kPrivacyInstances = 1000;
constexpr double kPrivacyTol = 1e-9;
constexpr std::size_t kHandshakes = 10000;
constexpr double kColoringZ = 4.0;
constexpr double kRecoveryTol = 1e-9;
constexpr std::size_t kOracleInstances = 100;
constexpr std::uint64_t kOracleRounds = 100;
constexpr double kOracleTol = 1e-9;

int failures = 0;

void verdict(int id, const std::string& title, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << "  " << title << "  [" << detail << "]"
              << std::endl;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

ex::ExperimentConfig seeded(ex::ExperimentConfig c) {
    c.seed = kFirstSeed;
    return c;
}

void average_consensus() {
    const auto runs = st::consensus_ensemble(seeded(ex::preset_common_p2()), kSeeds);
    bool ok = true;
    double worst_err = 0.0;
    double worst_time = 0.0;
    std::uint64_t worst_rounds = 0;
    for (const auto& r : runs) {
        double err = 0.0;
        for (double x : r.report.final_x) err = std::max(err, std::abs(x - r.report.mean_x0));
        worst_err = std::max(worst_err, err);
        worst_time = std::max(worst_time, r.seconds);
        worst_rounds = std::max(worst_rounds, r.report.rounds_run);
        ok = ok && err < kConsensusTol && r.report.rounds_run <= kRoundBudget && r.seconds < kRunSeconds;
    }
    verdict(1, "average consensus, common degree 2", ok,
            std::to_string(kSeeds) + " seeds, max |x-mean|=" + fmt(worst_err) + ", max rounds=" +
                std::to_string(worst_rounds) + ", max run " + fmt(worst_time) + " s");
}

void varying_degree() {
    const auto runs = st::consensus_ensemble(seeded(ex::preset_varying_deg()), kSeeds);
    bool ok = true;
    double worst = 0.0;
    for (const auto& r : runs) {
        worst = std::max(worst, r.report.max_error_vs_prediction);
        ok = ok && r.report.converged && r.report.max_error_vs_prediction < kConsensusTol;
    }
    verdict(2, "varying degrees reach the predicted steady state", ok,
            std::to_string(kSeeds) + " seeds, max |x-predicted|=" + fmt(worst));
}

void laplacian_moments() {
    const auto t0 = std::chrono::steady_clock::now();
    const ppc::Topology p3 = ppc::build_topology(3, {{1, 2}, {2, 3}});
    const auto exact = an::exact_laplacian_moments(p3, 3);
    const Eigen::MatrixXd L = p3.laplacian();
    bool exact_ok = true;
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                const auto l = static_cast<long long>(L(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
                exact_ok = exact_ok && exact.first[k][r][c] == an::Rational(l, 3) &&
                           exact.second[k][r][c] == an::Rational(2 * l, 3);
            }
        }
    }
    const auto mc3 = an::expected_laplacian_check(p3, 3, kMomentSamples, kFirstSeed);
    double z_vs_exact = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        for (Eigen::Index r = 0; r < 3; ++r) {
            for (Eigen::Index c = 0; c < 3; ++c) {
                const auto ru = static_cast<std::size_t>(r);
                const auto cu = static_cast<std::size_t>(c);
                const double d1 = std::abs(mc3.mean_first[k](r, c) - boost::rational_cast<double>(exact.first[k][ru][cu]));
                const double d2 = std::abs(mc3.mean_second[k](r, c) - boost::rational_cast<double>(exact.second[k][ru][cu]));
                const double s1 = mc3.se_first[k](r, c);
                const double s2 = mc3.se_second[k](r, c);
                z_vs_exact = std::max(z_vs_exact, s1 > 0 ? d1 / s1 : (d1 > 1e-12 ? 1e9 : 0.0));
                z_vs_exact = std::max(z_vs_exact, s2 > 0 ? d2 / s2 : (d2 > 1e-12 ? 1e9 : 0.0));
            }
        }
    }
    const auto mc7 = an::expected_laplacian_check(ppc::demo6(), 7, kMomentSamples, kFirstSeed + 1);
    const double z7 = std::max(mc7.first.max_z, mc7.second.max_z);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    verdict(3, "random Laplacian moments", exact_ok && z_vs_exact <= kMomentZ && z7 <= kMomentZ && secs < kMomentSeconds,
            std::string("P3 exact=L/3,2L/3: ") + (exact_ok ? "yes" : "no") + ", P3 max z=" + fmt(z_vs_exact) +
                ", demo6 M=7 max z=" + fmt(z7) + ", " + fmt(secs) + " s");
}

void contraction() {
    const auto s = st::contraction_study(seeded(ex::preset_common_p2()), kContractionSamples, kContractionHorizon);
    const bool ok = s.ratio.mean <= s.c_bar + kContractionSe * s.ratio.se;
    verdict(4, "Lyapunov contraction", ok,
            "mean V ratio=" + fmt(s.ratio.mean) + " (SE " + fmt(s.ratio.se) + "), c_bar=" + fmt(s.c_bar) + ", " +
                std::to_string(s.samples) + " rounds");
}

void privacy() {
    const auto s = st::privacy_study(kPrivacyInstances, kFirstSeed);
    const bool ok = s.max_reconstruction_error <= kPrivacyTol && s.witness_failures == 0 &&
                    s.max_witness_residual <= kPrivacyTol && s.max_degree <= 5 && s.max_channels <= 11;
    verdict(5, "exact privacy degree", ok,
            std::to_string(s.instances) + " instances, reconstruction err=" + fmt(s.max_reconstruction_error) +
                ", witness residual=" + fmt(s.max_witness_residual) + ", witness failures=" +
                std::to_string(s.witness_failures));
}

void coloring() {
    const auto s = st::coloring_study(ppc::demo6(), 7, kHandshakes, kFirstSeed);
    verdict(6, "edge-coloring invariants", s.violations == 0 && s.max_z <= kColoringZ,
            std::to_string(s.handshakes) + " handshakes, violations=" + std::to_string(s.violations) +
                ", max z vs 1/7=" + fmt(s.max_z));
}

void recovery() {
    ex::ExperimentConfig base = seeded(ex::preset_recovery());
    const ppc::Topology g = ppc::demo6();
    const std::size_t node = base.failures.at(0).node - 1;
    const bool setup_ok = g.degree(node) == 3 && std::get<std::size_t>(base.degrees) == 2;
    const auto runs = st::consensus_ensemble(base, kSeeds);
    bool ok = setup_ok;
    double worst_rebuild = 0.0;
    double worst_final = 0.0;
    for (const auto& r : runs) {
        const auto& rep = r.report;
        if (rep.rebuilds.size() != 1 || !rep.rebuilds[0].recovered) {
            ok = false;
            continue;
        }
        const auto& rb = rep.rebuilds[0];
        double err = std::abs(rb.recovered->secret - rb.erased.secret);
        for (std::size_t l = 0; l < rb.erased.coefficients.size(); ++l) {
            err = std::max(err, std::abs(rb.recovered->coefficients[l] - rb.erased.coefficients[l]));
        }
        double final_err = 0.0;
        for (double x : rep.final_x) final_err = std::max(final_err, std::abs(x - rep.mean_x0));
        worst_rebuild = std::max(worst_rebuild, err);
        worst_final = std::max(worst_final, final_err);
        ok = ok && err <= kRecoveryTol && rep.converged && final_err < kConsensusTol && rep.rounds_run <= kRoundBudget;
    }
    verdict(7, "failure recovery", ok,
            "node " + std::to_string(node + 1) + " (degree 3, p=2), " + std::to_string(kSeeds) +
                " seeds, max rebuild err=" + fmt(worst_rebuild) + ", max final |x-mean|=" + fmt(worst_final));
}

void oracle() {
    const auto s = st::oracle_study(kOracleInstances, kFirstSeed, kOracleRounds);
    verdict(8, "engine round equals stacked-matrix round", s.max_step_mismatch <= kOracleTol && s.max_conservation_drift <= kOracleTol,
            std::to_string(s.instances) + " instances, step mismatch=" + fmt(s.max_step_mismatch) +
                ", conservation drift=" + fmt(s.max_conservation_drift) + " over " + std::to_string(kOracleRounds) +
                " rounds");
}

void baseline() {
    const auto rows = st::baseline_study(seeded(ex::preset_common_p2()), kSeeds);
    bool ok = true;
    std::size_t max_conv = 0;
    std::uint64_t min_prot = std::numeric_limits<std::uint64_t>::max();
    for (const auto& r : rows) {
        ok = ok && r.protocol_round && r.conventional_round && *r.conventional_round < *r.protocol_round;
        if (r.conventional_round) max_conv = std::max(max_conv, *r.conventional_round);
        if (r.protocol_round) min_prot = std::min(min_prot, *r.protocol_round);
    }
    verdict(9, "conventional consensus converges faster", ok,
            std::to_string(kSeeds) + " seeds, conventional max rounds=" + std::to_string(max_conv) +
                ", protocol min rounds=" + std::to_string(min_prot));
}

}  // namespace

int main() {
    average_consensus();
    varying_degree();
    laplacian_moments();
    contraction();
    privacy();
    coloring();
    recovery();
    oracle();
    baseline();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures;
}
