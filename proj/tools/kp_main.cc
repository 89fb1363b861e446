////////////////////////////////////////////////////////////////////////////////
// kp_main.cc
////////////////////////////////////////////////////////////////////////////////
/*! @file
//  CLI entry point: kp <mode> --config FILE [--out DIR] [--seed INT]
//  [--threads INT]. Exit 0 on convergence, 2 on non-convergence (outputs
//  still written), 1 on input errors.
*/
////////////////////////////////////////////////////////////////////////////////
#include <iostream>

#include "CLI11.hpp"
#include "kp/cli_io.hh"

int main(int argc, char **argv) {
    CLI::App app{"Closed elastic rod coupled to an area-minimizing film"};

    std::string mode, config_path, out_dir;
    int seed = -1;
    int threads = 1;
    app.add_option("mode", mode, "rod-relax | film-relax | kp-solve | check | lsc-diagnostic")
        ->required();
    app.add_option("--config", config_path, "run configuration file")->required();
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--seed", seed, "random seed (overrides the config)");
    app.add_option("--threads", threads, "worker threads (currently always 1)");

    CLI11_PARSE(app, argc, argv);

    try {
        kp::RunConfig config = kp::parse_config(config_path);
        config.mode = mode;
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (seed >= 0) config.solve.seed = static_cast<unsigned>(seed);
        return kp::run(config);
    } catch (const kp::InvalidInput &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
