#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppcons/analysis.hpp"
#include "ppcons/consensus.hpp"
#include "ppcons/error.hpp"
#include "ppcons/graph.hpp"

namespace ppc::experiment {

using Json = nlohmann::ordered_json;

/// Threshold on max_ij |x_i - x_j| that defines the reported convergence round.
inline constexpr double kConvergenceThreshold = 1e-6;

struct GraphSpec {
    /// "demo6", or empty for an explicit edge list.
    std::string preset = "demo6";
    std::size_t node_count = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // one-based
};

struct DegreeMinusOne {};
/// Scalar p0, per-node list, or p_i = |N_i| - 1.
using DegreeSpec = std::variant<std::size_t, std::vector<std::size_t>, DegreeMinusOne>;

struct UniformInit {
    double low = -10.0;
    double high = 10.0;
};
using InitSpec = std::variant<std::vector<double>, UniformInit>;

struct FailureSpec {
    std::size_t node = 1;  // one-based
    std::uint64_t fail_round = 0;
    std::optional<std::uint64_t> recover_round;
};

struct ExperimentConfig {
    std::string name = "custom";
    GraphSpec graph;
    std::size_t channels = 7;
    double gamma = 0.95;
    std::optional<std::vector<double>> keys;
    DegreeSpec degrees = std::size_t{2};
    InitSpec x0 = UniformInit{};
    double coefficient_amplitude = 10.0;
    std::uint64_t seed = 1;
    std::uint64_t rounds = 5000;
    double stop_eps = 1e-8;
    bool verbose_shares = false;
    std::vector<FailureSpec> failures;
};

// ---------------------------------------------------------------------------
// JSON <-> config

inline Json to_json(const ExperimentConfig& c) {
    Json j;
    j["name"] = c.name;
    if (!c.graph.preset.empty()) {
        j["graph"] = c.graph.preset;
    } else {
        Json edges = Json::array();
        for (const auto& [a, b] : c.graph.edges) edges.push_back({a, b});
        j["graph"] = {{"nodes", c.graph.node_count}, {"edges", edges}};
    }
    j["M"] = c.channels;
    j["gamma"] = c.gamma;
    if (c.keys) j["keys"] = *c.keys;
    if (const auto* p = std::get_if<std::size_t>(&c.degrees)) {
        j["degrees"] = *p;
    } else if (const auto* l = std::get_if<std::vector<std::size_t>>(&c.degrees)) {
        j["degrees"] = *l;
    } else {
        j["degrees"] = "deg-minus-1";
    }
    if (const auto* v = std::get_if<std::vector<double>>(&c.x0)) {
        j["x0"] = *v;
    } else {
        const auto& u = std::get<UniformInit>(c.x0);
        j["x0"] = {{"uniform", {u.low, u.high}}};
    }
    j["coefficient_amplitude"] = c.coefficient_amplitude;
    j["seed"] = c.seed;
    j["rounds"] = c.rounds;
    j["stop_eps"] = c.stop_eps;
    j["verbose_shares"] = c.verbose_shares;
    Json f = Json::array();
    for (const FailureSpec& e : c.failures) {
        Json item{{"node", e.node}, {"fail_round", e.fail_round}};
        item["recover_round"] = e.recover_round ? Json(*e.recover_round) : Json(nullptr);
        f.push_back(item);
    }
    j["failures"] = f;
    return j;
}

namespace detail {

class Diagnostics {
public:
    void add(const std::string& field, const std::string& message) {
        items_.push_back(field + ": " + message);
    }
    bool empty() const { return items_.empty(); }
    void raise_if_any() const {
        if (items_.empty()) return;
        std::string msg = "invalid experiment config";
        for (const std::string& s : items_) msg += "\n  " + s;
        throw Error(ErrorCode::ConfigInvalid, msg);
    }

private:
    std::vector<std::string> items_;
};

template <class T>
std::optional<T> read(const Json& j, const std::string& field, Diagnostics& diag) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        diag.add(field, "has the wrong type");
        return std::nullopt;
    }
}

inline bool is_count(const Json& j) { return j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0); }

}  // namespace detail

/// Overlays the fields present in `j` onto `base`. Unknown or malformed
/// fields are reported together as one ConfigInvalid error.
inline ExperimentConfig config_from_json(const Json& j, ExperimentConfig base = {}) {
    detail::Diagnostics diag;
    if (!j.is_object()) {
        diag.add("<root>", "must be a JSON object");
        diag.raise_if_any();
    }
    ExperimentConfig c = std::move(base);
    for (const auto& [key, value] : j.items()) {
        if (key == "name") {
            if (auto v = detail::read<std::string>(value, key, diag)) c.name = *v;
        } else if (key == "graph") {
            if (value.is_string()) {
                const auto name = value.get<std::string>();
                if (name != "demo6") diag.add(key, "unknown named graph '" + name + "'");
                c.graph = GraphSpec{name, 0, {}};
            } else if (value.is_object() && value.contains("nodes") && value.contains("edges")) {
                GraphSpec g{"", 0, {}};
                if (detail::is_count(value["nodes"])) {
                    g.node_count = value["nodes"].get<std::size_t>();
                } else {
                    diag.add("graph.nodes", "must be a non-negative integer");
                }
                if (!value["edges"].is_array()) {
                    diag.add("graph.edges", "must be an array of [i, j] pairs");
                } else {
                    for (std::size_t e = 0; e < value["edges"].size(); ++e) {
                        const Json& pr = value["edges"][e];
                        if (pr.is_array() && pr.size() == 2 && detail::is_count(pr[0]) && detail::is_count(pr[1])) {
                            g.edges.emplace_back(pr[0].get<std::size_t>(), pr[1].get<std::size_t>());
                        } else {
                            diag.add("graph.edges[" + std::to_string(e) + "]", "must be a pair of node numbers");
                        }
                    }
                }
                for (const auto& [k2, v2] : value.items()) {
                    if (k2 != "nodes" && k2 != "edges") diag.add("graph." + k2, "unknown field");
                }
                c.graph = std::move(g);
            } else {
                diag.add(key, "must be \"demo6\" or {\"nodes\": N, \"edges\": [[i, j], ...]}");
            }
        } else if (key == "M") {
            if (detail::is_count(value)) {
                c.channels = value.get<std::size_t>();
            } else {
                diag.add(key, "must be a non-negative integer");
            }
        } else if (key == "gamma") {
            if (auto v = detail::read<double>(value, key, diag)) c.gamma = *v;
        } else if (key == "keys") {
            if (value.is_null()) {
                c.keys.reset();
            } else if (auto v = detail::read<std::vector<double>>(value, key, diag)) {
                c.keys = *v;
            }
        } else if (key == "degrees") {
            if (value.is_string()) {
                if (value.get<std::string>() == "deg-minus-1") {
                    c.degrees = DegreeMinusOne{};
                } else {
                    diag.add(key, "the only named rule is \"deg-minus-1\"");
                }
            } else if (detail::is_count(value)) {
                c.degrees = value.get<std::size_t>();
            } else if (value.is_array() && std::all_of(value.begin(), value.end(), detail::is_count)) {
                c.degrees = value.get<std::vector<std::size_t>>();
            } else {
                diag.add(key, "must be an integer, a list of integers, or \"deg-minus-1\"");
            }
        } else if (key == "x0") {
            if (value.is_array()) {
                if (auto v = detail::read<std::vector<double>>(value, key, diag)) c.x0 = *v;
            } else if (value.is_object() && value.contains("uniform") && value.size() == 1 &&
                       value["uniform"].is_array() && value["uniform"].size() == 2 &&
                       value["uniform"][0].is_number() && value["uniform"][1].is_number()) {
                c.x0 = UniformInit{value["uniform"][0].get<double>(), value["uniform"][1].get<double>()};
            } else {
                diag.add(key, "must be a list of initial states or {\"uniform\": [low, high]}");
            }
        } else if (key == "coefficient_amplitude") {
            if (auto v = detail::read<double>(value, key, diag)) c.coefficient_amplitude = *v;
        } else if (key == "seed") {
            if (detail::is_count(value)) {
                c.seed = value.get<std::uint64_t>();
            } else {
                diag.add(key, "must be a non-negative integer");
            }
        } else if (key == "rounds") {
            if (detail::is_count(value)) {
                c.rounds = value.get<std::uint64_t>();
            } else {
                diag.add(key, "must be a non-negative integer");
            }
        } else if (key == "stop_eps") {
            if (auto v = detail::read<double>(value, key, diag)) c.stop_eps = *v;
        } else if (key == "verbose_shares") {
            if (auto v = detail::read<bool>(value, key, diag)) c.verbose_shares = *v;
        } else if (key == "failures") {
            if (!value.is_array()) {
                diag.add(key, "must be an array");
                continue;
            }
            c.failures.clear();
            for (std::size_t e = 0; e < value.size(); ++e) {
                const Json& f = value[e];
                const std::string at = "failures[" + std::to_string(e) + "]";
                if (!f.is_object() || !f.contains("node") || !f.contains("fail_round") ||
                    !detail::is_count(f["node"]) || !detail::is_count(f["fail_round"])) {
                    diag.add(at, "needs integer \"node\" and \"fail_round\"");
                    continue;
                }
                FailureSpec spec{f["node"].get<std::size_t>(), f["fail_round"].get<std::uint64_t>(), std::nullopt};
                if (f.contains("recover_round") && !f["recover_round"].is_null()) {
                    if (detail::is_count(f["recover_round"])) {
                        spec.recover_round = f["recover_round"].get<std::uint64_t>();
                    } else {
                        diag.add(at + ".recover_round", "must be a non-negative integer or null");
                    }
                }
                for (const auto& [k2, v2] : f.items()) {
                    if (k2 != "node" && k2 != "fail_round" && k2 != "recover_round") {
                        diag.add(at + "." + k2, "unknown field");
                    }
                }
                c.failures.push_back(spec);
            }
        } else {
            diag.add(key, "unknown field");
        }
    }
    diag.raise_if_any();
    return c;
}

// ---------------------------------------------------------------------------
// Presets

inline ExperimentConfig preset_common_p2() {
    ExperimentConfig c;
    c.name = "common-p2";
    return c;
}

inline ExperimentConfig preset_varying_deg() {
    ExperimentConfig c;
    c.name = "varying-deg";
    c.degrees = DegreeMinusOne{};
    return c;
}

/// Node 2 (degree 3, p = 2) crashes in round 20 and is rebuilt in round 21.
inline ExperimentConfig preset_recovery() {
    ExperimentConfig c;
    c.name = "recovery";
    c.failures = {{2, 20, 21}};
    return c;
}

inline std::vector<std::string> preset_names() { return {"common-p2", "varying-deg", "recovery"}; }

inline ExperimentConfig preset(const std::string& name) {
    if (name == "common-p2") return preset_common_p2();
    if (name == "varying-deg") return preset_varying_deg();
    if (name == "recovery") return preset_recovery();
    throw Error(ErrorCode::ConfigInvalid, "preset: unknown name '" + name + "'");
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "config: cannot open " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, "config: " + std::string(e.what()));
    }
    return config_from_json(j, std::move(base));
}

/// Resolves the effective config. Precedence, lowest to highest: built-in
/// defaults (the common-p2 preset), the named preset, the config file,
/// then the --seed and --verbose-shares flags.
inline ExperimentConfig resolve_config(const std::string& preset_name, const std::string& config_path,
                                       std::optional<std::uint64_t> seed, bool verbose_shares) {
    ExperimentConfig c = preset_name.empty() ? preset_common_p2() : preset(preset_name);
    if (!config_path.empty()) c = load_config(config_path, std::move(c));
    if (seed) c.seed = *seed;
    if (verbose_shares) c.verbose_shares = true;
    return c;
}

// ---------------------------------------------------------------------------
// Building the network

struct Setup {
    Topology topology;
    KeySet keys;
    std::vector<std::size_t> degrees;
    std::vector<double> x0;
    NetworkState state;
    RunOptions options;
};

/// Validates `c` against the network invariants and draws the initial
/// state. All problems found are reported together as ConfigInvalid.
inline Setup prepare(const ExperimentConfig& c) {
    detail::Diagnostics diag;
    std::optional<Topology> topology;
    try {
        topology = c.graph.preset == "demo6" ? demo6() : build_topology(c.graph.node_count, c.graph.edges);
    } catch (const Error& e) {
        diag.add("graph", e.what());
    }
    diag.raise_if_any();
    const std::size_t n = topology->node_count();

    if (!(c.gamma > 0.0 && c.gamma < 1.0)) diag.add("gamma", "must lie in (0, 1)");
    if (c.channels < min_channel_count(*topology)) {
        diag.add("M", "must be at least 2*d_max-1 = " + std::to_string(min_channel_count(*topology)));
    }
    std::optional<KeySet> keys;
    try {
        keys = c.keys ? KeySet(*c.keys) : KeySet::sequential(std::max<std::size_t>(c.channels, 1));
        if (keys->channel_count() != c.channels) {
            diag.add("keys", "must have M = " + std::to_string(c.channels) + " entries");
        }
    } catch (const Error& e) {
        diag.add("keys", e.what());
    }

    std::vector<std::size_t> degrees(n);
    if (const auto* p = std::get_if<std::size_t>(&c.degrees)) {
        std::fill(degrees.begin(), degrees.end(), *p);
    } else if (const auto* l = std::get_if<std::vector<std::size_t>>(&c.degrees)) {
        if (l->size() != n) diag.add("degrees", "must have one entry per node");
        else degrees = *l;
    } else {
        for (NodeIndex i = 0; i < n; ++i) degrees[i] = topology->degree(i) == 0 ? 0 : topology->degree(i) - 1;
    }
    for (NodeIndex i = 0; i < n; ++i) {
        if (degrees[i] + 1 > c.channels) {
            diag.add("degrees", "node " + std::to_string(i + 1) + " has privacy degree " +
                                    std::to_string(degrees[i]) + " but M must exceed it");
            break;
        }
    }

    if (const auto* v = std::get_if<std::vector<double>>(&c.x0)) {
        if (v->size() != n) diag.add("x0", "must have one entry per node");
    } else {
        const auto& u = std::get<UniformInit>(c.x0);
        if (!(u.low < u.high)) diag.add("x0.uniform", "needs low < high");
    }
    if (!(c.coefficient_amplitude >= 0.0) || !std::isfinite(c.coefficient_amplitude)) {
        diag.add("coefficient_amplitude", "must be finite and non-negative");
    }
    if (!(c.stop_eps >= 0.0)) diag.add("stop_eps", "must be non-negative");

    for (std::size_t e = 0; e < c.failures.size(); ++e) {
        const FailureSpec& f = c.failures[e];
        const std::string at = "failures[" + std::to_string(e) + "]";
        if (f.node == 0 || f.node > n) {
            diag.add(at + ".node", "must be between 1 and " + std::to_string(n));
            continue;
        }
        if (f.recover_round && *f.recover_round <= f.fail_round) {
            diag.add(at + ".recover_round", "must come after fail_round");
        }
        if (f.recover_round && topology->degree(f.node - 1) <= degrees[f.node - 1]) {
            diag.add(at + ".node", "needs more neighbors than its privacy degree to recover");
        }
        for (std::size_t o = 0; o < e; ++o) {
            if (c.failures[o].node == f.node) diag.add(at + ".node", "fails more than once");
        }
    }
    diag.raise_if_any();

    std::mt19937_64 rng(c.seed);
    std::vector<double> x0;
    if (const auto* v = std::get_if<std::vector<double>>(&c.x0)) {
        x0 = *v;
    } else {
        const auto& u = std::get<UniformInit>(c.x0);
        std::uniform_real_distribution<double> dist(u.low, u.high);
        x0.resize(n);
        for (double& x : x0) x = dist(rng);
    }
    NetworkState state = make_random_network(*topology, *keys, c.gamma, degrees, x0, c.coefficient_amplitude, rng);
    RunOptions options;
    options.max_rounds = c.rounds;
    options.seed = c.seed;
    options.stop_eps = c.stop_eps;
    for (const FailureSpec& f : c.failures) options.failures.push_back({f.node - 1, f.fail_round, f.recover_round});
    return {std::move(*topology), std::move(*keys), std::move(degrees), std::move(x0), std::move(state),
            std::move(options)};
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentReport {
    double predicted_x_inf = 0.0;
    double measured_x_inf = 0.0;
    std::optional<double> c_bar;
    double lambda2 = 0.0;
    std::optional<std::uint64_t> convergence_round;
    double final_disagreement = 0.0;
    std::uint64_t seed = 0;

    double mean_x0 = 0.0;
    std::uint64_t rounds_run = 0;
    bool converged = false;
    /// max_i |x_i(final) - predicted_x_inf| over live nodes.
    double max_error_vs_prediction = 0.0;
    std::vector<double> final_x;
    std::vector<RunEvent> events;
    /// Secret and coefficients of each failing node just before it crashed,
    /// and right after it was rebuilt (node index zero-based).
    struct Rebuild {
        NodeIndex node = 0;
        EncoderState erased;
        std::optional<EncoderState> recovered;
    };
    std::vector<Rebuild> rebuilds;
};

/// Streams that receive the traces; any may be null.
struct TraceSinks {
    std::ostream* states = nullptr;    // round,node,x
    std::ostream* shares = nullptr;    // round,node,channel,value
    std::ostream* events = nullptr;    // round,event,node
    std::ostream* channels = nullptr;  // round,i,j,channel
};

namespace detail {

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

inline ExperimentReport execute(const ExperimentConfig& config, const TraceSinks& sinks = {}) {
    Setup setup = prepare(config);
    NetworkState& state = setup.state;
    ExperimentReport rep;
    rep.seed = config.seed;
    rep.predicted_x_inf = analysis::predict_steady_state(state).x_inf;
    const SpectralSummary spec = spectral_summary(setup.topology);
    rep.lambda2 = spec.lambda2;
    try {
        rep.c_bar = analysis::contraction_factor(setup.topology, setup.keys.channel_count(), config.gamma);
    } catch (const Error&) {
        rep.c_bar.reset();
    }
    double sum = 0.0;
    for (double x : setup.x0) sum += x;
    rep.mean_x0 = sum / static_cast<double>(setup.x0.size());

    if (sinks.states) *sinks.states << "round,node,x\n";
    if (sinks.shares) *sinks.shares << "round,node,channel,value\n";
    if (sinks.events) *sinks.events << "round,event,node\n";
    if (sinks.channels) *sinks.channels << "round,i,j,channel\n";

    std::vector<EncoderState> last_seen(state.node_count());
    RunObserver obs;
    obs.on_state = [&](const NetworkState& s) {
        for (NodeIndex i = 0; i < s.node_count(); ++i) {
            const NodeState& node = s.nodes[i];
            if (!node.alive) continue;
            last_seen[i] = node.encoder;
            if (sinks.states) *sinks.states << s.round << ',' << i + 1 << ',' << detail::num(node.encoder.secret) << '\n';
            if (sinks.shares) {
                for (Channel k = 0; k < s.channel_count(); ++k) {
                    *sinks.shares << s.round << ',' << i + 1 << ',' << k + 1 << ',' << detail::num(node.shares[k]) << '\n';
                }
            }
        }
        if (!rep.convergence_round && s.all_alive() && state_disagreement(s) < kConvergenceThreshold) {
            rep.convergence_round = s.round;
        }
    };
    if (sinks.channels) {
        obs.on_assignment = [&](const ChannelAssignment& a) {
            for (const EdgeChannel& ec : a.entries) {
                *sinks.channels << a.round << ',' << ec.edge.lo + 1 << ',' << ec.edge.hi + 1 << ',' << ec.channel + 1 << '\n';
            }
        };
    }
    obs.on_event = [&](const RunEvent& ev) {
        if (sinks.events) *sinks.events << ev.round << ',' << to_string(ev.kind) << ',' << ev.node + 1 << '\n';
        if (ev.kind == EventKind::Fail) {
            rep.rebuilds.push_back({ev.node, last_seen[ev.node], std::nullopt});
        } else {
            for (auto& r : rep.rebuilds) {
                if (r.node == ev.node && !r.recovered) r.recovered = state.nodes[ev.node].encoder;
            }
        }
    };
    const RunSummary summary = simulate(state, setup.options, obs);

    rep.rounds_run = summary.rounds;
    rep.converged = summary.converged;
    rep.final_disagreement = summary.final_disagreement;
    rep.events = summary.events;
    double live = 0.0;
    double acc = 0.0;
    for (const NodeState& node : state.nodes) {
        rep.final_x.push_back(node.encoder.secret);
        if (!node.alive) continue;
        acc += node.encoder.secret;
        live += 1.0;
        rep.max_error_vs_prediction =
            std::max(rep.max_error_vs_prediction, std::abs(node.encoder.secret - rep.predicted_x_inf));
    }
    rep.measured_x_inf = live > 0 ? acc / live : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

inline Json report_json(const ExperimentReport& r) {
    Json j;
    j["predicted_x_inf"] = r.predicted_x_inf;
    j["measured_x_inf"] = r.measured_x_inf;
    j["c_bar"] = r.c_bar ? Json(*r.c_bar) : Json(nullptr);
    j["lambda2"] = r.lambda2;
    j["convergence_round"] = r.convergence_round ? Json(*r.convergence_round) : Json(nullptr);
    j["final_disagreement"] = r.final_disagreement;
    j["seed"] = r.seed;
    return j;
}

/// Runs `config` and writes states.csv, events.csv, report.json and
/// summary.json into `out_dir` (plus shares.csv and channels.csv when
/// verbose). Returns the report.
inline ExperimentReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    prepare(config);  // surface ConfigInvalid before touching the file system
    std::filesystem::create_directories(out_dir);
    std::ofstream states(out_dir / "states.csv");
    std::ofstream events(out_dir / "events.csv");
    std::ofstream shares;
    std::ofstream channels;
    TraceSinks sinks{&states, nullptr, &events, nullptr};
    if (config.verbose_shares) {
        shares.open(out_dir / "shares.csv");
        channels.open(out_dir / "channels.csv");
        sinks.shares = &shares;
        sinks.channels = &channels;
    }
    const ExperimentReport rep = execute(config, sinks);

    std::ofstream(out_dir / "report.json") << report_json(rep).dump(2) << '\n';

    Json files = Json::array({"states.csv", "events.csv", "report.json"});
    if (config.verbose_shares) {
        files.push_back("shares.csv");
        files.push_back("channels.csv");
    }
    Json rebuilds = Json::array();
    for (const auto& rb : rep.rebuilds) {
        Json item{{"node", rb.node + 1}, {"erased_x", rb.erased.secret}, {"erased_coefficients", rb.erased.coefficients}};
        if (rb.recovered) {
            item["recovered_x"] = rb.recovered->secret;
            item["recovered_coefficients"] = rb.recovered->coefficients;
        }
        rebuilds.push_back(item);
    }
    Json summary;
    summary["config"] = to_json(config);
    summary["node_count"] = rep.final_x.size();
    summary["channel_count"] = config.channels;
    summary["mean_x0"] = rep.mean_x0;
    summary["rounds_run"] = rep.rounds_run;
    summary["converged"] = rep.converged;
    summary["final_x"] = rep.final_x;
    summary["max_error_vs_prediction"] = rep.max_error_vs_prediction;
    summary["convergence_threshold"] = kConvergenceThreshold;
    summary["report"] = report_json(rep);
    summary["rebuilds"] = rebuilds;
    summary["files"] = files;
    std::ofstream(out_dir / "summary.json") << summary.dump(2) << '\n';
    return rep;
}

}  // namespace ppc::experiment
