#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nutrans/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Spherically symmetric neutrino transport: Boltzmann, IDSA and asymptotic-limit checks"};
    app.set_version_flag("--version", nutrans::kVersion);
    app.require_subcommand(1);

    struct Command {
        std::string name;
        std::optional<nutrans::RunMode> mode;
        std::string help;
    };
    const std::vector<Command> commands{
        {"run", std::nullopt, "Run the mode named by the scenario's 'mode' key"},
        {"run-boltzmann", nutrans::RunMode::boltzmann, "Discrete-ordinates Boltzmann solve"},
        {"run-idsa", nutrans::RunMode::idsa, "Trapped/streaming IDSA solve"},
        {"compare", nutrans::RunMode::compare, "Boltzmann and IDSA on the same scenario, with a summary"},
        {"hierarchy-check", nutrans::RunMode::hierarchy_check, "Residuals of the Hilbert hierarchy levels"},
        {"epsilon-sweep", nutrans::RunMode::epsilon_sweep, "Asymptotic-limit convergence in epsilon"},
    };

    std::string scenario;
    std::string out_dir;
    int threads = 1;
    std::vector<CLI::App*> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_option("--threads", threads, "Worker cap for per-group parallel stages")
            ->check(CLI::PositiveNumber)
            ->default_val(1);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return nutrans::exit_config;
    }

    std::string command_line;
    for (int a = 0; a < argc; ++a) {
        command_line += (a ? " " : "") + std::string(argv[a]);
    }
    nutrans::RunContext ctx;
    ctx.out_dir = out_dir;
    ctx.threads = threads;
    ctx.command_line = command_line;
    for (std::size_t k = 0; k < subs.size(); ++k) {
        if (subs[k]->parsed()) {
            return nutrans::run(scenario, ctx, commands[k].mode);
        }
    }
    return nutrans::exit_config;
}
