#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ppcons/error.hpp"
#include "ppcons/experiment.hpp"
#include "ppcons/suites.hpp"

namespace ex = ppc::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Privacy-preserving average consensus by polynomial secret sharing"};
    std::string config_path;
    std::string preset_name;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::string suite;
    bool verbose_shares = false;

    app.add_option("--config", config_path, "Experiment config (JSON); overlays the preset");
    app.add_option("--preset", preset_name, "Built-in preset: common-p2, varying-deg, recovery");
    app.add_option("--seed", seed, "Seed; overrides the config");
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--suite", suite, "Run a suite: moments, contraction, privacy, recovery, baseline")
        ->excludes(app.get_option("--config"))
        ->excludes(app.get_option("--preset"));
    app.add_flag("--verbose-shares", verbose_shares, "Also write shares.csv and channels.csv");
    CLI11_PARSE(app, argc, argv);

    try {
        if (!suite.empty()) {
            const ex::Json result = ppc::suites::run_suite(suite, seed.value_or(1));
            std::filesystem::create_directories(out_dir);
            std::ofstream(std::filesystem::path(out_dir) / ("suite_" + suite + ".json")) << result.dump(2) << '\n';
            std::cout << result.dump(2) << '\n';
            return result["passed"].get<bool>() ? 0 : 1;
        }

        const ex::ExperimentConfig config = ex::resolve_config(preset_name, config_path, seed, verbose_shares);
        const ex::ExperimentReport rep = ex::run_experiment(config, out_dir);
        std::cout << ex::report_json(rep).dump(2) << '\n';
        return 0;
    } catch (const ppc::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
