// scatlab command-line frontend: runs one experiment from a JSON config and
// writes CSV/JSON artifacts plus a run manifest into the output directory.
//
// Exit codes: 0 success, 1 rigidity checklist failure, 2 config error,
// 3 numeric failure.

#include "scatlab/experiments.hpp"

#include "CLI11.hpp"

#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"scatlab -- geodesic scattering laboratory"};
    std::string config_path;
    std::string out_dir = ".";
    int threads = 1;
    bool verbose = false;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads for sweeps");
    app.add_flag("--verbose", verbose, "progress notes on stderr");
    CLI11_PARSE(app, argc, argv);

    using namespace scatlab;
    try {
        auto exp = config::load_experiment(config_path);
        experiments::RunContext ctx;
        ctx.out_dir = out_dir;
        ctx.threads = std::max(1, threads);
        ctx.verbose = verbose;
        return experiments::run(exp, ctx);
    } catch (const config::ConfigError& ex) {
        std::fprintf(stderr, "config error: %s\n", ex.what());
        return experiments::config_error;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "numeric failure: %s\n", ex.what());
        return experiments::numeric_error;
    }
}
