// Batch front-end. All science parameters live in the JSON config; the flags
// only locate it and override the seed and output directory.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cnls/dispatch.hpp"

int main(int argc, char** argv) {
    CLI::App app{"coupled cubic Schrodinger systems on boxes: normalized-solution toolkit"};
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false, quiet = false;
    app.add_option("--config", config_path, "path to the JSON run configuration")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_dir, "override the output directory");
    app.add_flag("--quiet", quiet, "suppress progress output");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems are configuration errors
    }
    seed_set = seed_opt->count() > 0;

    try {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config file " << config_path << "\n";
            return 1;
        }
        cnls::json j = cnls::json::parse(in);
        cnls::RunConfig cfg = cnls::parse_config(j);
        if (seed_set) cfg.seed = seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (quiet) cfg.quiet = true;
        return cnls::dispatch(cfg);
    } catch (const cnls::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
