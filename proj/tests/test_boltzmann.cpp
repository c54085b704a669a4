#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nutrans/boltzmann.hpp"

using namespace nutrans;

namespace {

MatterModel uniform_model(const PhaseGrid& g, double j, double chi, double phi0 = 0.0, double phi1 = 0.0) {
    MatterModel m;
    m.radius = g.radius();
    m.light_speed = g.c();
    m.omega_groups = g.omega_groups();
    m.j = {PiecewiseLinear::constant(j)};
    m.chi = {PiecewiseLinear::constant(chi)};
    m.phi0 = {PiecewiseLinear::constant(phi0)};
    m.phi1 = {PiecewiseLinear::constant(phi1)};
    return m;
}

StepOptions free_boundary() {
    StepOptions o;
    o.transport.boundary = RadialBoundary::extrapolate;
    return o;
}

double max_abs_diff(const DistributionField& a, const DistributionField& b, int first_cell = 0, int last_cell = -1) {
    const int nr = a.n_r();
    const int last = last_cell < 0 ? nr : last_cell;
    double m = 0.0;
    for (int i = first_cell; i < last; ++i) {
        for (int k = 0; k < a.n_mu(); ++k) {
            for (int g = 0; g < a.n_omega(); ++g) {
                m = std::max(m, std::abs(a(i, k, g) - b(i, k, g)));
            }
        }
    }
    return m;
}

}  // namespace

TEST(Step, UniformRelaxationMatchesExponentialToSecondOrderPerStep) {
    PhaseGrid g(uniform_edges(10, 1.0), 4, {1.0}, 2.0);
    const auto m = uniform_model(g, 0.3, 0.9);
    const double f0 = 0.25;
    const DistributionField f(g, 0.9);
    std::vector<double> errs;
    for (double dt : {0.004, 0.002, 0.001}) {
        const auto out = step(f, dt, m, g, free_boundary());
        const double exact = f0 + (0.9 - f0) * std::exp(-g.c() * 1.2 * dt);
        double e = 0.0;
        for (double v : out.values()) {
            e = std::max(e, std::abs(v - exact));
        }
        errs.push_back(e);
    }
    EXPECT_NEAR(std::log2(errs[0] / errs[1]), 2.0, 0.1);
    EXPECT_NEAR(std::log2(errs[1] / errs[2]), 2.0, 0.1);
}

TEST(Step, EquilibriumIsFixedPoint) {
    PhaseGrid g(uniform_edges(20, 1.0), 8, geometric_groups(3, 1.0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        const double phi0 = u(rng);
        auto m = uniform_model(g, u(rng), u(rng), phi0, 0.5 * phi0 * (u(rng) - 1.05));
        for (auto mode : {ScalingMode::none, ScalingMode::reaction_collision, ScalingMode::time, ScalingMode::both}) {
            const auto ms = apply_scaling(m, 0.3, mode);
            const auto s = evaluate(ms, 0.5, 1.0);
            const DistributionField f(g, s.j / s.chi_tilde);
            const double dt = 0.9 * stable_time_step(ms, g, 0.0, free_boundary().transport);
            EXPECT_LE(max_abs_diff(step(f, dt, ms, g, free_boundary()), f), 1e-12);
            // vacuum inflow only disturbs the outermost cell within one step
            const double dtp = 0.9 * stable_time_step(ms, g);
            EXPECT_LE(max_abs_diff(step(f, dtp, ms, g), f, 0, g.n_r() - 1), 1e-12);
        }
    }
}

TEST(Step, FreeStreamingChangesOnlyThroughOutflow) {
    PhaseGrid g(uniform_edges(30, 1.0), 8, {1.0});
    const auto m = uniform_model(g, 0.0, 0.0);
    DistributionField f(g);
    for (int i = 0; i < g.n_r(); ++i) {
        for (int k = 0; k < g.n_mu(); ++k) {
            f(i, k, 0) = std::exp(-10.0 * std::pow(g.r_centers()[i] - 0.6, 2)) * (1.0 + 0.5 * g.mu_nodes()[k]);
        }
    }
    const double dt = 0.9 * stable_time_step(m, g);
    for (int n = 0; n < 50; ++n) {
        StepReport rep;
        f = step(f, dt, m, g, StepOptions{}, &rep);
        EXPECT_EQ(rep.ledger.emission, 0.0);
        EXPECT_EQ(rep.ledger.absorption, 0.0);
        EXPECT_GE(rep.ledger.boundary_outflow, 0.0);
        EXPECT_NEAR(rep.ledger.n_after - rep.ledger.n_before, -rep.ledger.boundary_outflow, 1e-13 * rep.ledger.n_before);
    }
}

TEST(Step, LedgerClosesWithAllTerms) {
    PhaseGrid g(uniform_edges(24, 2.0), 6, geometric_groups(4, 2.0));
    MatterModel m = uniform_model(g, 0.4, 0.3, 0.6, 0.1);
    m.j = {PiecewiseLinear({0.0, 2.0}, {0.8, 0.1})};
    m.v = PiecewiseLinear({0.0, 2.0}, {0.0, 0.05});
    m.rho = PiecewiseLinear({0.0, 2.0}, {3.0, 1.0});
    m.compression = PiecewiseLinear({0.0, 1.0}, {0.2, -0.1});
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DistributionField f(g);
    for (auto& x : f.values()) x = u(rng);
    double t = 0.0;
    for (int n = 0; n < 40; ++n) {
        StepOptions opt;
        opt.t = t;
        const double dt = 0.8 * stable_time_step(m, g, t);
        StepReport rep;
        f = step(f, dt, m, g, opt, &rep);
        t += dt;
        EXPECT_LE(rep.ledger.imbalance, 1e-12);
        EXPECT_LE(rep.cfl, 1.0);
    }
}

TEST(Step, CflViolationRejectedWithSuggestion) {
    PhaseGrid g(uniform_edges(10, 1.0), 4, {1.0});
    const auto m = uniform_model(g, 0.5, 0.5);
    const DistributionField f(g, 0.1);
    const double dmax = stable_time_step(m, g);
    EXPECT_LE(dmax, g.min_dr() / g.c());
    try {
        step(f, 2.0 * dmax, m, g);
        FAIL() << "expected rejection";
    } catch (const StepRejected& e) {
        EXPECT_LT(e.suggested_dt(), dmax);
        EXPECT_NO_THROW(step(f, e.suggested_dt(), m, g));
    }
    EXPECT_THROW(step(f, 0.0, m, g), InvalidArgument);
}

TEST(Step, NonInvertibleImplicitStage) {
    PhaseGrid g(uniform_edges(4, 1.0), 4, {1.0});
    auto m = uniform_model(g, 0.0, -50.0);
    const DistributionField f(g, 0.1);
    EXPECT_THROW(step(f, 0.9 * stable_time_step(m, g), m, g), SingularOpacity);
}

TEST(Step, ScalingNoneIsBitIdentical) {
    PhaseGrid g(uniform_edges(12, 1.0), 6, geometric_groups(3, 1.0));
    auto m = uniform_model(g, 0.4, 0.2, 0.3, 0.05);
    m.v = PiecewiseLinear({0.0, 1.0}, {0.0, 0.1});
    m.compression = PiecewiseLinear::constant(0.1);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DistributionField f(g);
    for (auto& x : f.values()) x = u(rng);
    const double dt = 0.5 * stable_time_step(m, g);
    const auto a = step(f, dt, m, g);
    const auto b = step(f, dt, m, g, ScalingMode::none);
    EXPECT_EQ(a.values(), b.values());
    for (auto mode : {ScalingMode::reaction_collision, ScalingMode::time, ScalingMode::both}) {
        EXPECT_EQ(step(f, dt, apply_scaling(m, 1.0, mode), g).values(), a.values());
    }
}

TEST(Step, BoundsPreservedWithAdmissibleData) {
    PhaseGrid g(uniform_edges(25, 1.0), 8, geometric_groups(4, 1.0));
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatterModel m = uniform_model(g, 0.0, 0.0);
    m.j = {PiecewiseLinear({0.0, 0.5, 1.0}, {3.0, 0.5, 0.0})};
    m.chi = {PiecewiseLinear({0.0, 1.0}, {0.5, 0.1})};
    // non-negative truncated kernel: 3|phi1| <= phi0
    m.phi0 = {PiecewiseLinear::constant(1.5)};
    m.phi1 = {PiecewiseLinear::constant(0.5)};
    m.v = PiecewiseLinear({0.0, 1.0}, {0.0, -0.05});
    m.compression = PiecewiseLinear::constant(0.3);
    DistributionField f(g);
    for (auto& x : f.values()) x = u(rng);
    double t = 0.0;
    for (int n = 0; n < 300; ++n) {
        StepOptions opt;
        opt.t = t;
        const double dt = stable_time_step(m, g, t);
        f = step(f, dt, m, g, opt);
        t += dt;
        for (double v : f.values()) {
            ASSERT_GE(v, -1e-12);
            ASSERT_LE(v, 1.0 + 1e-12);
        }
    }
}

TEST(Solve, ZeroEndTimeReturnsInitial) {
    PhaseGrid g(uniform_edges(5, 1.0), 4, {1.0});
    const auto m = uniform_model(g, 0.5, 0.5);
    DistributionField f(g, 0.3);
    f(2, 1, 0) = 0.7;
    const auto sol = solve(m, g, f, 0.0);
    EXPECT_EQ(sol.final_field.values(), f.values());
    EXPECT_EQ(sol.steps, 0);
    EXPECT_EQ(sol.times.size(), 1u);
    EXPECT_THROW(solve(m, g, f, -1.0), InvalidArgument);
}

TEST(Solve, LongRunConvergesToEquilibrium) {
    PhaseGrid g(uniform_edges(10, 1.0), 4, geometric_groups(2, 1.0));
    const auto m = uniform_model(g, 0.6, 1.4, 0.5, 0.1);
    SolveOptions opt;
    opt.step = free_boundary();
    opt.cadence = 50;
    const auto sol = solve(m, g, DistributionField(g, 0.0), 40.0 / 2.0, opt);
    for (double b : sol.beta.back().values()) {
        EXPECT_NEAR(b, 0.3, 1e-8);
    }
    EXPECT_EQ(sol.time_variable, "t");
    EXPECT_EQ(sol.beta.size(), sol.times.size());
}

TEST(Solve, FirstOrderInTimeStep) {
    PhaseGrid g(uniform_edges(16, 1.0), 4, {1.0});
    MatterModel m = uniform_model(g, 0.0, 0.0, 0.5, 0.1);
    m.j = {PiecewiseLinear({0.0, 1.0}, {2.0, 0.2})};
    m.chi = {PiecewiseLinear({0.0, 1.0}, {1.0, 3.0})};
    const DistributionField f0(g, 0.0);
    const double base = 0.5 * stable_time_step(m, g);
    const double t_end = 64 * base;
    auto run = [&](double dt) {
        SolveOptions o;
        o.fixed_dt = dt;
        o.cadence = 1000000;
        return moment_field(solve(m, g, f0, t_end, o).final_field, g, 0);
    };
    const auto ref = run(base / 32.0);
    std::vector<double> e;
    for (double dt : {base, base / 2.0, base / 4.0}) {
        const auto b = run(dt);
        double s = 0.0;
        for (std::size_t q = 0; q < b.size(); ++q) {
            s = std::max(s, std::abs(b.values()[q] - ref.values()[q]));
        }
        e.push_back(s);
    }
    EXPECT_NEAR(std::log2(e[0] / e[1]), 1.0, 0.2);
    EXPECT_NEAR(std::log2(e[1] / e[2]), 1.0, 0.2);
}

TEST(InteractionRate, Examples) {
    PhaseGrid g(uniform_edges(6, 1.0), 6, geometric_groups(2, 1.0));
    MatterModel m = uniform_model(g, 0.0, 0.0, 0.4, 0.1);
    m.j = {PiecewiseLinear({0.0, 1.0}, {1.0, 0.2})};
    m.chi = {PiecewiseLinear({0.0, 1.0}, {0.5, 2.0})};
    const MaterialTable tab(m, g);
    DistributionField eq(g);
    for (int i = 0; i < g.n_r(); ++i)
        for (int k = 0; k < g.n_mu(); ++k)
            for (int w = 0; w < g.n_omega(); ++w) eq(i, k, w) = tab(i, w).j / tab(i, w).chi_tilde;
    const auto s_eq = total_interaction_rate(eq, m, g);
    for (double s : s_eq.values()) EXPECT_NEAR(s, 0.0, 1e-15);
    const auto s0 = total_interaction_rate(DistributionField(g, 0.0), m, g);
    for (int i = 0; i < g.n_r(); ++i) EXPECT_EQ(s0(i, 0), tab(i, 0).j);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DistributionField f(g);
    for (auto& x : f.values()) x = u(rng);
    const auto s = total_interaction_rate(f, m, g);
    for (int i = 0; i < g.n_r(); ++i) {
        for (int w = 0; w < g.n_omega(); ++w) {
            const auto r = rhs_J(f.slice(i, w), tab(i, w), g.rule());
            EXPECT_NEAR(s(i, w), angular_moment(r, 0, g), 1e-13);
        }
    }
}

TEST(ImplicitStepper, LedgerAndFixedPoint) {
    PhaseGrid g(uniform_edges(20, 1.0), 6, geometric_groups(3, 1.0));
    MatterModel m = uniform_model(g, 0.5, 1.5, 0.7, 0.2);
    m.compression = PiecewiseLinear::constant(0.05);
    ImplicitStepper st(m, g);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DistributionField f(g);
    for (auto& x : f.values()) x = u(rng);
    for (int n = 0; n < 5; ++n) {
        LedgerEntry e;
        f = st.step(f, 0.3, 0.0, &e);
        EXPECT_LE(e.imbalance, 1e-12);
    }
    MatterModel frozen = uniform_model(g, 0.5, 1.5, 0.7, 0.2);
    TransportOptions opt = implicit_transport();
    opt.boundary = RadialBoundary::extrapolate;
    ImplicitStepper st2(frozen, g, opt);
    const DistributionField eq(g, 0.25);
    EXPECT_LE(max_abs_diff(st2.step(eq, 10.0), eq), 1e-12);
    EXPECT_LE(max_abs_diff(st2.steady_state(DistributionField(g, 0.0), 1e-14, 10), eq), 1e-12);
}

TEST(ImplicitStepper, SteadyStateIsLongTimeLimit) {
    PhaseGrid g(uniform_edges(16, 1.0), 4, geometric_groups(3, 1.0));
    MatterModel m = uniform_model(g, 0.0, 1.0, 0.5, 0.1);
    m.j = {PiecewiseLinear({0.0, 1.0}, {2.0, 0.1})};
    m.compression = PiecewiseLinear::constant(0.2);
    ImplicitStepper st(m, g);
    int iters = 0;
    const auto ss = st.steady_state(DistributionField(g, 0.0), 1e-14, 200, &iters);
    EXPECT_LT(iters, 200);
    DistributionField f(g, 0.0);
    for (int n = 0; n < 400; ++n) f = st.step(f, 0.5);
    EXPECT_LE(max_abs_diff(f, ss), 1e-10);
}
