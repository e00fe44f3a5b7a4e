// lab — scenario runner for the open-quantum-system thermodynamics lab.
//
//   lab <experiment> --config <file> [--out <dir>] [--threads N]
//   lab accept --suite {fast,full}
//
// Experiments: rte, isothermal, ness-adiabatic, cycle, spectrum. The accept
// subcommand execs the acceptance binary so both entry points share one
// implementation.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "oqtlab/runner.hpp"

using namespace oqtlab;

namespace {

int run_experiment(const std::string& name, const std::string& config_path, const std::string& out,
                   int threads) {
    auto doc = config::parse_file(config_path);
    auto sc = config::load_scenario(doc);
    require(sc.experiment == name, "config file declares experiment '" + sc.experiment +
                                       "' but the '" + name + "' subcommand was invoked");
    if (!out.empty()) sc.out_dir = out;
    if (threads > 0) sc.threads = threads;
    for (auto& w : sc.warnings) std::cerr << "warning: " << w << "\n";
    auto man = runner::dispatch(sc);
    std::cout << "wrote " << sc.out_dir << "/manifest.json (" << man.artifacts.size()
              << " artifacts, " << man.wall_seconds << " s)\n";
    return man.pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-quantum-system thermodynamics lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int threads = 0;
    std::string suite = "fast";

    std::vector<std::string> experiments = {"rte", "isothermal", "ness-adiabatic", "cycle",
                                            "spectrum"};
    std::vector<CLI::App*> subs;
    for (const auto& name : experiments) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "scenario config file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--threads", threads, "worker threads for sweep points");
        subs.push_back(sub);
    }
    auto* accept = app.add_subcommand("accept", "run the acceptance suite");
    accept->add_option("--suite", suite, "fast or full")
        ->check(CLI::IsMember({"fast", "full"}));

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t i = 0; i < experiments.size(); ++i)
            if (subs[i]->parsed()) return run_experiment(experiments[i], config_path, out_dir, threads);
        if (accept->parsed()) {
            // the acceptance binary lives next to this one in the build tree
            std::string self = argv[0];
            auto slash = self.find_last_of('/');
            std::string dir = slash == std::string::npos ? "." : self.substr(0, slash);
            std::string cmd = dir + "/accept --suite " + suite;
            int rc = std::system(cmd.c_str());
            return rc == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
