#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "nutrans/cli.hpp"

using namespace nutrans;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("nutrans_test_config_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int config_line(const std::string& text) {
    try {
        parse_scenario(ConfigMap::from_string(text, "s.cfg"));
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

RunContext quiet(const fs::path& out, int threads = 1) {
    static std::ostringstream sink;
    RunContext ctx;
    ctx.out_dir = out.string();
    ctx.threads = threads;
    ctx.command_line = "test";
    ctx.log = &sink;
    return ctx;
}

const char* kUniform = "grid.n_r = 10\ngrid.n_mu = 4\nrates.j = 1\nrates.chi = 1\n";

}  // namespace

TEST(ConfigMap, ParsesCommentsTablesAndLists) {
    const auto c = ConfigMap::from_string(
        "# header\n"
        "a = 1.5   # trailing\n"
        "\n"
        "  b.c =  0:1, 0.5:2 ,1:0\n"
        "d = 0.2, 0.1,0.05\n");
    EXPECT_EQ(c.number("a"), 1.5);
    const auto t = c.table("b.c");
    EXPECT_EQ(t.x, (std::vector<double>{0.0, 0.5, 1.0}));
    EXPECT_EQ(t.y, (std::vector<double>{1.0, 2.0, 0.0}));
    EXPECT_EQ(c.list("d"), (std::vector<double>{0.2, 0.1, 0.05}));
    EXPECT_EQ(c.entry("d").line, 5);
    EXPECT_EQ(c.table("a").y, std::vector<double>{1.5});
}

TEST(ConfigMap, LineAnchoredErrors) {
    EXPECT_EQ(config_line(std::string(kUniform) + "no equals sign\n"), 5);
    EXPECT_EQ(config_line(std::string(kUniform) + "grid.n_r = 12\n"), 5);
    EXPECT_EQ(config_line(std::string(kUniform) + "run.t_end = 1\nrates.bogus = 3\n"), 6);
    EXPECT_EQ(config_line("mode = boltzmann\nrates.j = 1\nrates.chi = abc\nrun.t_end = 1\n"), 3);
    EXPECT_EQ(config_line("rates.j = 0:1, 0:2\nrates.chi = 1\nrun.t_end = 1\n"), 1);
    EXPECT_EQ(config_line("rates.j = 1\nrates.chi = 1\nrun.t_end = 1\nmode = kinetic\n"), 4);
    EXPECT_EQ(config_line("rates.j = 1\nrates.chi = 1\nrun.t_end = 1\ngrid.n_mu = 3\n"), 4);
    EXPECT_EQ(config_line("rates.j = -1\nrates.chi = 1\nrun.t_end = 1\n"), 1);
    EXPECT_EQ(config_line(std::string(kUniform) + "run.t_end = 1\nrates.phi0 = 0.1\nrates.phi1 = 0.2\n"), 7);
    EXPECT_EQ(config_line("rates.chi = 1\nrun.t_end = 1\n"), 0);
    EXPECT_EQ(config_line(kUniform), 0);  // a timed mode needs run.t_end
    EXPECT_EQ(config_line(std::string(kUniform) + "run.t_end = 1\n"), -1);
}

TEST(Scenario, ModeMustAgreeWithCommand) {
    const auto c = ConfigMap::from_string(std::string(kUniform) + "mode = idsa\nrun.t_end = 1\n");
    EXPECT_EQ(parse_scenario(c, RunMode::idsa).mode, RunMode::idsa);
    const auto c2 = ConfigMap::from_string(std::string(kUniform) + "mode = idsa\nrun.t_end = 1\n");
    EXPECT_THROW(parse_scenario(c2, RunMode::boltzmann), ConfigError);
    const auto c3 = ConfigMap::from_string(std::string(kUniform) + "run.t_end = 1\n");
    EXPECT_EQ(parse_scenario(c3, RunMode::compare).mode, RunMode::compare);
}

TEST(Scenario, GridRatesAndInitialConditions) {
    const auto sc = parse_scenario(ConfigMap::from_string(
        "grid.n_r = 8\ngrid.n_mu = 4\ngrid.n_omega = 3\ngrid.omega_min = 2\ngrid.omega_ratio = 1.5\n"
        "rates.j = 0.5\nrates.j.1 = 0:1, 1:3\nrates.chi = 1.5\ninitial = equilibrium\nrun.t_end = 0\n"));
    EXPECT_EQ(sc.grid.n_r(), 8);
    EXPECT_EQ(sc.grid.omega_groups(), (std::vector<double>{2.0, 3.0, 4.5}));
    ASSERT_EQ(sc.model.j.size(), 3u);
    const auto f = initial_field(sc);
    EXPECT_DOUBLE_EQ(f(0, 0, 0), 0.25);
    EXPECT_DOUBLE_EQ(f(0, 3, 2), 0.25);
    const double r = sc.grid.r_centers()[0];
    const double j1 = 1.0 + 2.0 * r;
    EXPECT_DOUBLE_EQ(f(0, 1, 1), j1 / (j1 + 1.5));

    const auto custom = parse_scenario(ConfigMap::from_string(
        std::string(kUniform) + "initial = custom\ninitial.beta = 0:0, 1:1\nrun.t_end = 0\n"));
    EXPECT_DOUBLE_EQ(initial_field(custom)(3, 2, 0), custom.grid.r_centers()[3]);
    EXPECT_EQ(initial_field(parse_scenario(ConfigMap::from_string(std::string(kUniform) + "run.t_end = 0\n"))).values(),
              std::vector<double>(40, 0.0));
}

TEST(Report, DecimalFormRoundTrips) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int n = 0; n < 2000; ++n) {
        const double x = std::ldexp(u(rng), static_cast<int>(u(rng)));
        EXPECT_EQ(std::strtod(fmt(x).c_str(), nullptr), x);
    }
}

TEST(CompareReport, IdenticalInputsGiveZero) {
    PhaseGrid g(uniform_edges(10, 1.0), 4, {1.0, 2.0});
    MatterModel m;
    m.omega_groups = g.omega_groups();
    m.j = {PiecewiseLinear::constant(1.0)};
    m.chi = {PiecewiseLinear::constant(1.0)};
    const auto idsa = idsa_run(m, g, MomentField(g, MomentRole::beta_t, 0.2), 0.1);
    BoltzmannSolution b;
    MomentField beta(g, MomentRole::beta);
    MomentField h(g, MomentRole::first_moment);
    for (int i = 0; i < 10; ++i) {
        for (int w = 0; w < 2; ++w) {
            beta(i, w) = idsa.beta_t.back()(i, w) + idsa.beta_s.back()(i, w);
            h(i, w) = idsa.flux_factor(i, w) * idsa.beta_s.back()(i, w);
        }
    }
    b.beta.push_back(beta);
    b.first_moment.push_back(h);
    for (const auto& row : compare_report(b, idsa, g)) {
        EXPECT_EQ(row.beta_difference, 0.0);
        EXPECT_EQ(row.flux_difference, 0.0);
        EXPECT_DOUBLE_EQ(row.diffusion + row.reaction + row.free_streaming, 1.0);
    }
    PhaseGrid other(uniform_edges(12, 1.0), 4, {1.0, 2.0});
    EXPECT_THROW(compare_report(b, idsa, other), InvalidArgument);
    EXPECT_THROW(compare_report(BoltzmannSolution{}, idsa, g), InvalidArgument);
}

TEST(CompareReport, TransparentMediumStreamsEverywhere) {
    const auto sc = load_scenario(NUTRANS_SCENARIOS "/transparent_compare.cfg");
    const auto b = solve(sc.model, sc.grid, initial_field(sc), sc.run.t_end);
    IDSAOptions o;
    const auto idsa = idsa_run(sc.model, sc.grid, MomentField(sc.grid, MomentRole::beta_t), sc.run.t_end, o);
    for (const auto& row : compare_report(b, idsa, sc.grid)) {
        EXPECT_EQ(row.free_streaming, 1.0);
    }
}

TEST(CompareReport, EquilibriumCoreDifferenceShrinksInTime) {
    // away from the vacuum surface layer, where the two closures settle differently
    auto sc = load_scenario(NUTRANS_SCENARIOS "/equilibrium_compare.cfg");
    sc.initial = InitialCondition::custom;
    sc.initial_beta = PiecewiseLinear::constant(0.1);
    const auto f = initial_field(sc);
    const auto bt = moment_field(f, sc.grid, 0).with_role(MomentRole::beta_t);
    double previous = 1e300;
    for (double t : {0.02, 0.1, 0.5, 2.0}) {
        const auto b = solve(sc.model, sc.grid, f, t);
        const auto idsa = idsa_run(sc.model, sc.grid, bt, t);
        double d = 0.0;
        for (int i = 0; sc.grid.r_centers()[i] < 0.7; ++i) {
            for (int w = 0; w < sc.grid.n_omega(); ++w) {
                const double beta_idsa = idsa.beta_t.back()(i, w) + idsa.beta_s.back()(i, w);
                d = std::max(d, std::abs(b.beta.back()(i, w) - beta_idsa));
            }
        }
        EXPECT_LT(d, previous) << "t=" << t;
        previous = d;
    }
    EXPECT_LT(previous, 1e-5);
}

TEST(Run, ExitCodes) {
    const auto dir = scratch("exit");
    EXPECT_EQ(run(NUTRANS_SCENARIOS "/unknown_mode.cfg", quiet(dir / "a")), exit_config);
    EXPECT_EQ(run((dir / "missing.cfg").string(), quiet(dir / "b")), exit_config);
    EXPECT_EQ(run(NUTRANS_SCENARIOS "/equilibrium_hierarchy.cfg", quiet(dir / "c"), RunMode::boltzmann), exit_config);
    const auto singular = write_file(dir, "singular.cfg", "mode = hierarchy-check\ngrid.n_r = 4\nrates.j = 0\nrates.chi = 0\n");
    EXPECT_EQ(run(singular, quiet(dir / "d")), exit_numerical);
    const auto strict = write_file(dir, "strict.cfg",
                                   "mode = hierarchy-check\ngrid.n_r = 10\nrates.j = 0:1, 1:3\nrates.chi = 1\n"
                                   "rates.phi0 = 0.5\nhierarchy.tolerance = 1e-30\n");
    EXPECT_EQ(run(strict, quiet(dir / "e")), exit_numerical);
}

TEST(Run, HierarchyCheckOnEquilibrium) {
    const auto dir = scratch("hier");
    ASSERT_EQ(run(NUTRANS_SCENARIOS "/equilibrium_hierarchy.cfg", quiet(dir), RunMode::hierarchy_check), exit_ok);
    const auto text = slurp(dir / "hierarchy.csv");
    EXPECT_EQ(text.rfind("variant,level,residual,tolerance,pass\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
    EXPECT_EQ(text.find("false"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
}

TEST(Run, EpsilonSweepWritesFourRowsAndVerdict) {
    const auto dir = scratch("sweep");
    const auto cfg = write_file(dir, "s.cfg",
                                "mode = epsilon-sweep\ngrid.n_r = 100\ngrid.n_mu = 8\ngrid.n_omega = 2\n"
                                "sweep.limit = diffusion\n");
    ASSERT_EQ(run(cfg, quiet(dir / "out")), exit_ok);
    std::ifstream in(dir / "out" / "sweep.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(lines[0], "epsilon,error,slope");
    EXPECT_EQ(lines[1].rfind("0.20000000000000001,", 0), 0u);
    EXPECT_EQ(lines[5].rfind("# diffusion: slope", 0), 0u);
    EXPECT_NE(lines[5].find("PASS"), std::string::npos);
}

TEST(Run, OutputsAreDeterministicAcrossRunsAndThreads) {
    const auto dir = scratch("det");
    const char* files[] = {"moments.csv", "idsa.csv", "compare.csv", "regime_map.csv"};
    ASSERT_EQ(run(NUTRANS_SCENARIOS "/equilibrium_compare.cfg", quiet(dir / "a")), exit_ok);
    ASSERT_EQ(run(NUTRANS_SCENARIOS "/equilibrium_compare.cfg", quiet(dir / "b")), exit_ok);
    ASSERT_EQ(run(NUTRANS_SCENARIOS "/equilibrium_compare.cfg", quiet(dir / "c", 2)), exit_ok);
    for (const char* f : files) {
        const auto a = slurp(dir / "a" / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
        EXPECT_EQ(a, slurp(dir / "c" / f)) << f;
    }
    const auto manifest = slurp(dir / "a" / "manifest.txt");
    EXPECT_NE(manifest.find("mode: compare"), std::string::npos);
    EXPECT_NE(manifest.find("rates.phi1 = 0.5"), std::string::npos);
}

TEST(Run, BoltzmannMomentsSchema) {
    const auto dir = scratch("boltz");
    ASSERT_EQ(run(NUTRANS_SCENARIOS "/boltzmann_relaxation.cfg", quiet(dir)), exit_ok);
    std::ifstream in(dir / "moments.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "t,r,omega,beta,H,s");
    const auto sc = load_scenario(NUTRANS_SCENARIOS "/two_zone_idsa.cfg");
    const auto dir2 = scratch("idsa");
    ASSERT_EQ(run(NUTRANS_SCENARIOS "/two_zone_idsa.cfg", quiet(dir2), RunMode::idsa), exit_ok);
    std::ifstream in2(dir2 / "idsa.csv");
    std::getline(in2, header);
    EXPECT_EQ(header, "t,r,omega,beta_t,beta_s,sigma_ids,sigma,regime,flux_factor");
    EXPECT_EQ(sc.grid.n_r(), 100);
}
