#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "nutrans/config.hpp"
#include "nutrans/report.hpp"

namespace nutrans {

inline constexpr const char* kVersion = "nutrans 0.1.0";

enum ExitCode { exit_ok = 0, exit_config = 2, exit_numerical = 3 };

struct RunContext {
    std::string out_dir;
    int threads = 1;
    std::string command_line;
    std::ostream* log = &std::cout;
};

namespace detail {

inline std::ofstream open_output(const std::string& dir, const std::string& name) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) {
        throw ConfigError(dir, 0, "cannot write " + name);
    }
    return out;
}

inline void write_manifest(const Scenario& sc, const RunContext& ctx) {
    auto out = open_output(ctx.out_dir, "manifest.txt");
    out << "version: " << kVersion << '\n';
    out << "compiler: " << __VERSION__ << '\n';
    out << "command: " << ctx.command_line << '\n';
    out << "mode: " << to_string(sc.mode) << '\n';
    out << "threads: " << ctx.threads << '\n';
    out << "seed: " << sc.seed << '\n';
    out << "scenario: " << sc.path << '\n';
    out << "grid: n_r=" << sc.grid.n_r() << " n_mu=" << sc.grid.n_mu() << " n_omega=" << sc.grid.n_omega()
        << " radius=" << fmt(sc.grid.radius()) << " c=" << fmt(sc.grid.c()) << '\n';
    out << "--- scenario text ---\n" << sc.text;
}

inline BoltzmannSolution run_boltzmann(const Scenario& sc, const RunContext& ctx) {
    const auto f = initial_field(sc);
    if (sc.run.solver == SolverKind::implicit) {
        return solve_implicit(sc.model, sc.grid, f, sc.run.t_end, sc.run.dt, sc.run.cadence, ctx.threads);
    }
    SolveOptions o;
    o.cfl = sc.run.cfl;
    o.fixed_dt = sc.run.dt;
    o.cadence = sc.run.cadence;
    o.step.threads = ctx.threads;
    return solve(sc.model, sc.grid, f, sc.run.t_end, o);
}

inline IDSASolution run_idsa(const Scenario& sc, const RunContext& ctx) {
    const auto beta = moment_field(initial_field(sc), sc.grid, 0).with_role(MomentRole::beta_t);
    IDSAOptions o;
    o.variant = sc.limiter;
    o.dt = sc.run.dt;
    o.cadence = sc.run.cadence;
    o.tau_threshold = sc.tau_threshold;
    o.outer = sc.trapped_outer;
    o.threads = ctx.threads;
    return idsa_run(sc.model, sc.grid, beta, sc.run.t_end, o);
}

inline void write_idsa_outputs(const IDSASolution& sol, const Scenario& sc, const RunContext& ctx) {
    auto csv = open_output(ctx.out_dir, "idsa.csv");
    write_idsa_csv(csv, sol, sc.grid);
    auto map = open_output(ctx.out_dir, "regime_map.csv");
    write_regime_map_csv(map, sol, sc.grid);
    auto diag = open_output(ctx.out_dir, "diagnostics.txt");
    for (const auto& d : sol.diagnostics) {
        diag << d << '\n';
    }
}

inline ScalingMode hierarchy_scaling(HierarchyVariant v) {
    switch (v) {
        case HierarchyVariant::reaction_scaled: return ScalingMode::reaction_collision;
        case HierarchyVariant::time_and_reaction_scaled: return ScalingMode::both;
        case HierarchyVariant::time_scaled: return ScalingMode::time;
    }
    return ScalingMode::none;
}

/// Residual of every hierarchy level for the Hilbert fields built from the scenario rates.
inline int run_hierarchy(const Scenario& sc, const RunContext& ctx) {
    const auto model = apply_scaling(sc.model, sc.model.epsilon, hierarchy_scaling(sc.hierarchy));
    const auto& g = sc.grid;
    const auto f0 = hilbert_f0(model, g);
    const DistributionField zero(g);
    // time-scaled first order: Jbar(eps f1) = D+ f0, so its level-one residual is D- (eps f1)
    const auto ef1 = sc.hierarchy == HierarchyVariant::time_scaled ? hilbert_f2(f0, zero, model, g, &zero)
                                                                   : hilbert_f1(f0, model, g, F1Variant::minus);
    const auto ef2 = hilbert_f2(f0, ef1, model, g, &zero);
    HierarchyFields h{&f0, &ef1, &ef2, &zero};
    auto out = open_output(ctx.out_dir, "hierarchy.csv");
    out << "variant,level,residual,tolerance,pass\n";
    bool ok = true;
    for (int level = 0; level < hierarchy_levels(sc.hierarchy); ++level) {
        const double r = hierarchy_residual(sc.hierarchy, level, h, model, g);
        const bool pass = r <= sc.hierarchy_tol;
        ok = ok && pass;
        out << to_string(sc.hierarchy) << ',' << level << ',' << fmt(r) << ',' << fmt(sc.hierarchy_tol) << ','
            << (pass ? "true" : "false") << '\n';
        *ctx.log << "level " << level << ": residual " << fmt(r) << (pass ? " ok" : " ABOVE TOLERANCE") << '\n';
    }
    if (!ok) {
        std::cerr << "hierarchy-check: residual above tolerance " << fmt(sc.hierarchy_tol) << '\n';
        return exit_numerical;
    }
    return exit_ok;
}

inline int run_sweep(const Scenario& sc, const RunContext& ctx) {
    const auto rep = epsilon_sweep(sweep_scenario(sc, ctx.threads), sc.sweep.epsilons, sc.sweep.limit, sc.sweep.variant);
    auto out = open_output(ctx.out_dir, "sweep.csv");
    write_sweep_csv(out, rep);
    auto det = open_output(ctx.out_dir, "sweep_details.csv");
    write_sweep_details_csv(det, rep);
    *ctx.log << verdict(rep) << '\n';
    return exit_ok;
}

}  // namespace detail

/// Executes a parsed scenario and writes its artifacts into ctx.out_dir.
inline int run_scenario(const Scenario& sc, const RunContext& ctx) {
    std::error_code ec;
    std::filesystem::create_directories(ctx.out_dir, ec);
    if (ec) {
        throw ConfigError(ctx.out_dir, 0, "cannot create output directory: " + ec.message());
    }
    detail::write_manifest(sc, ctx);
    switch (sc.mode) {
        case RunMode::boltzmann: {
            const auto sol = detail::run_boltzmann(sc, ctx);
            auto out = detail::open_output(ctx.out_dir, "moments.csv");
            write_moments_csv(out, sol, sc.grid);
            auto led = detail::open_output(ctx.out_dir, "ledger.csv");
            write_ledger_csv(led, sol);
            *ctx.log << "boltzmann: " << sol.steps << " steps\n";
            return exit_ok;
        }
        case RunMode::idsa: {
            const auto sol = detail::run_idsa(sc, ctx);
            detail::write_idsa_outputs(sol, sc, ctx);
            *ctx.log << "idsa: " << sol.steps << " steps\n";
            return exit_ok;
        }
        case RunMode::compare: {
            const auto boltz = detail::run_boltzmann(sc, ctx);
            const auto idsa = detail::run_idsa(sc, ctx);
            auto out = detail::open_output(ctx.out_dir, "moments.csv");
            write_moments_csv(out, boltz, sc.grid);
            detail::write_idsa_outputs(idsa, sc, ctx);
            const auto rows = compare_report(boltz, idsa, sc.grid);
            auto cmp = detail::open_output(ctx.out_dir, "compare.csv");
            write_compare_csv(cmp, rows);
            for (const auto& r : rows) {
                *ctx.log << "omega " << fmt(r.omega) << ": beta difference " << fmt(r.beta_difference)
                         << ", free streaming " << fmt(r.free_streaming) << '\n';
            }
            return exit_ok;
        }
        case RunMode::hierarchy_check: return detail::run_hierarchy(sc, ctx);
        case RunMode::epsilon_sweep: return detail::run_sweep(sc, ctx);
    }
    return exit_config;
}

/// Loads, validates and runs a scenario, mapping failures onto exit codes.
inline int run(const std::string& scenario_path, const RunContext& ctx, std::optional<RunMode> command = std::nullopt) {
    Scenario sc;
    try {
        sc = load_scenario(scenario_path, command);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    try {
        return run_scenario(sc, ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const StepRejected& e) {
        std::cerr << "numerical failure: " << e.what() << " (suggested dt " << fmt(e.suggested_dt()) << ")\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    }
}

}  // namespace nutrans
