#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ppcons/analysis.hpp"
#include "ppcons/error.hpp"
#include "ppcons/experiment.hpp"
#include "ppcons/studies.hpp"

namespace ppc::suites {

using experiment::Json;

inline std::vector<std::string> suite_names() { return {"moments", "contraction", "privacy", "recovery", "baseline"}; }

namespace detail {

inline Json check(const std::string& name, bool passed, Json stats) {
    return Json{{"check", name}, {"passed", passed}, {"statistics", std::move(stats)}};
}

inline Json finish(const std::string& suite, std::uint64_t seed, Json checks) {
    bool all = true;
    for (const Json& c : checks) all = all && c["passed"].get<bool>();
    return Json{{"suite", suite}, {"seed", seed}, {"passed", all}, {"checks", std::move(checks)}};
}

inline Json moments(std::uint64_t seed) {
    Json checks = Json::array();
    const Topology p3 = build_topology(3, {{1, 2}, {2, 3}});
    const auto exact = analysis::exact_laplacian_moments(p3, 3);
    const Eigen::MatrixXd L = p3.laplacian();
    bool exact_ok = true;
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                const auto l = static_cast<long long>(L(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
                exact_ok = exact_ok && exact.first[k][r][c] == analysis::Rational(l, 3) &&
                           exact.second[k][r][c] == analysis::Rational(2 * l, 3);
            }
        }
    }
    checks.push_back(check("P3 M=3 enumeration equals L/3 and 2L/3", exact_ok, {{"outcomes", exact.outcomes}}));
    for (const auto& [label, g, m] : {std::tuple{std::string("P3 M=3"), p3, std::size_t{3}},
                                      std::tuple{std::string("demo6 M=7"), demo6(), std::size_t{7}}}) {
        const auto rep = analysis::expected_laplacian_check(g, m, 20000, seed);
        checks.push_back(check(label + " Monte-Carlo within 4 SE", rep.first.max_z <= 4.0 && rep.second.max_z <= 4.0,
                               {{"samples", rep.samples},
                                {"max_z_first", rep.first.max_z},
                                {"max_z_second", rep.second.max_z},
                                {"max_abs_dev_first", rep.first.max_abs_deviation},
                                {"max_abs_dev_second", rep.second.max_abs_deviation}}));
    }
    return finish("moments", seed, checks);
}

inline Json contraction(std::uint64_t seed) {
    experiment::ExperimentConfig c = experiment::preset_common_p2();
    c.seed = seed;
    const auto st = studies::contraction_study(c, 300, 50);
    const bool ok = st.ratio.mean <= st.c_bar + 3.0 * st.ratio.se;
    return finish("contraction", seed,
                  Json::array({check("mean V ratio <= c_bar + 3 SE", ok,
                                     {{"samples", st.samples},
                                      {"mean_ratio", st.ratio.mean},
                                      {"se", st.ratio.se},
                                      {"c_bar", st.c_bar}})}));
}

inline Json privacy(std::uint64_t seed) {
    const auto st = studies::privacy_study(1000, seed);
    return finish("privacy", seed,
                  Json::array({check("reconstruction within 1e-9 relative", st.max_reconstruction_error <= 1e-9,
                                     {{"instances", st.instances}, {"max_error", st.max_reconstruction_error}}),
                               check("witnesses exist and match within 1e-9",
                                     st.witness_failures == 0 && st.max_witness_residual <= 1e-9,
                                     {{"failures", st.witness_failures}, {"max_residual", st.max_witness_residual}})}));
}

inline Json recovery(std::uint64_t seed) {
    experiment::ExperimentConfig c = experiment::preset_recovery();
    c.seed = seed;
    const auto rep = experiment::execute(c);
    double err = std::numeric_limits<double>::infinity();
    if (rep.rebuilds.size() == 1 && rep.rebuilds[0].recovered) {
        const auto& rb = rep.rebuilds[0];
        err = std::abs(rb.recovered->secret - rb.erased.secret);
        for (std::size_t l = 0; l < rb.erased.coefficients.size(); ++l) {
            err = std::max(err, std::abs(rb.recovered->coefficients[l] - rb.erased.coefficients[l]));
        }
    }
    const double final_err = std::abs(rep.measured_x_inf - rep.mean_x0);
    return finish("recovery", seed,
                  Json::array({check("rebuilt state matches erased state within 1e-9", err <= 1e-9, {{"max_abs_error", err}}),
                               check("run converges to mean(x0) within 1e-6",
                                     rep.converged && rep.max_error_vs_prediction < 1e-6 && final_err < 1e-6,
                                     {{"rounds", rep.rounds_run},
                                      {"final_error", final_err},
                                      {"convergence_round", rep.convergence_round ? Json(*rep.convergence_round)
                                                                                  : Json(nullptr)}})}));
}

inline Json baseline(std::uint64_t seed) {
    experiment::ExperimentConfig c = experiment::preset_common_p2();
    c.seed = seed;
    const auto rows = studies::baseline_study(c, 20);
    Json table = Json::array();
    bool ok = true;
    for (const auto& r : rows) {
        const bool both = r.protocol_round && r.conventional_round;
        ok = ok && both && *r.conventional_round < *r.protocol_round;
        table.push_back({{"seed", r.seed},
                         {"protocol_round", r.protocol_round ? Json(*r.protocol_round) : Json(nullptr)},
                         {"conventional_round", r.conventional_round ? Json(*r.conventional_round) : Json(nullptr)}});
    }
    return finish("baseline", seed,
                  Json::array({check("conventional consensus converges in fewer rounds", ok, {{"runs", table}})}));
}

}  // namespace detail

/// Runs the named suite; the result lists each check with its statistics.
inline Json run_suite(const std::string& name, std::uint64_t seed) {
    if (name == "moments") return detail::moments(seed);
    if (name == "contraction") return detail::contraction(seed);
    if (name == "privacy") return detail::privacy(seed);
    if (name == "recovery") return detail::recovery(seed);
    if (name == "baseline") return detail::baseline(seed);
    throw Error(ErrorCode::UnknownSuite, "unknown suite '" + name + "'");
}

}  // namespace ppc::suites
