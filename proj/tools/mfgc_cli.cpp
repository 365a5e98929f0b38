#include "mfgc/cli_io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Run configuration (INI)")->required();
    cmd->add_option("--out", c.out, "Output directory (overrides output.directory)");
    cmd->add_option("--seed", c.seed, "Monte-Carlo seed (overrides mc.seed)");
    cmd->add_flag("--verbose", c.verbose, "Print per-step progress records");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-dependent congestion mean-field game solver"};
    app.require_subcommand(1);
    Common common;
    std::string u_file, m_file;

    auto* solve = app.add_subcommand("solve", "Continuation from lambda = 1 to solver.lambda_target");
    add_common(solve, common);
    auto* check = app.add_subcommand("check", "Estimate suite on stored u and m field files");
    add_common(check, common);
    auto* mc = app.add_subcommand("mc", "Particle simulation against a stored density");
    add_common(mc, common);
    for (auto* cmd : {check, mc}) {
        cmd->add_option("u_file", u_file, "Value function field file")->required();
        cmd->add_option("m_file", m_file, "Density field file")->required();
    }
    auto* legendre = app.add_subcommand("legendre", "Duality and growth table of the brute-force transform");
    add_common(legendre, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? mfgc::kExitOk : mfgc::kExitUsage;
    }

    mfgc::RunConfig config;
    try {
        config = mfgc::load_config(common.config);
        if (!common.out.empty()) config.output.directory = common.out;
        if (common.seed) config.mc.sde.seed = *common.seed;
    } catch (const mfgc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return mfgc::kExitUsage;
    }

    const mfgc::CommandStreams io{std::cout, std::cerr, common.verbose};
    try {
        if (*solve) return mfgc::cmd_solve(config, io);
        if (*check) return mfgc::cmd_check(u_file, m_file, config, io);
        if (*mc) return mfgc::cmd_mc(u_file, m_file, config, io);
        return mfgc::cmd_legendre(config, io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mfgc::kExitSolverFailed;
    }
}
