#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nutrans/matter.hpp"

using namespace nutrans;

namespace {

MatterModel constant_model(double j, double chi, double phi0 = 0.0, double phi1 = 0.0, double radius = 1.0) {
    MatterModel m;
    m.radius = radius;
    m.j = {PiecewiseLinear::constant(j)};
    m.chi = {PiecewiseLinear::constant(chi)};
    m.phi0 = {PiecewiseLinear::constant(phi0)};
    m.phi1 = {PiecewiseLinear::constant(phi1)};
    return m;
}

// optical depth from r to R by composite Simpson on a fine uniform mesh
double depth_oracle(const MatterModel& m, double omega, double r) {
    const int n = 400000;
    const double h = (m.radius - r) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = r + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        s += w * transport_opacity(evaluate(m, x, omega));
    }
    return s * h / 3.0;
}

}  // namespace

TEST(Evaluate, StimulatedAbsorptivity) {
    const auto m = constant_model(0.5, 0.5);
    const auto s = evaluate(m, 0.3, 1.0);
    EXPECT_DOUBLE_EQ(s.chi_tilde, 1.0);
    EXPECT_DOUBLE_EQ(s.dlnrho_cdt, 0.0);
}

TEST(Evaluate, LinearInterpolation) {
    auto m = constant_model(0.0, 0.0);
    m.j = {PiecewiseLinear({0.0, 1.0}, {1.0, 0.0})};
    EXPECT_DOUBLE_EQ(evaluate(m, 0.5, 1.0).j, 0.5);
}

TEST(Evaluate, OutOfDomain) {
    auto m = constant_model(1.0, 1.0);
    m.omega_groups = {1.0, 2.0};
    EXPECT_THROW(evaluate(m, 1.5, 1.0), OutOfDomain);
    EXPECT_THROW(evaluate(m, -0.1, 1.0), OutOfDomain);
    EXPECT_THROW(evaluate(m, 0.5, 3.0), OutOfDomain);
    EXPECT_NO_THROW(evaluate(m, 1.0, 1.5));
}

TEST(Evaluate, EnergyInterpolationBetweenGroups) {
    auto m = constant_model(0.0, 1.0);
    m.omega_groups = {1.0, 3.0};
    m.j = {PiecewiseLinear::constant(1.0), PiecewiseLinear::constant(2.0)};
    EXPECT_DOUBLE_EQ(evaluate(m, 0.5, 2.0).j, 1.5);
    EXPECT_DOUBLE_EQ(evaluate(m, 0.5, 2.0).chi_tilde, 2.5);
}

TEST(Evaluate, LagrangianCompressionRate) {
    auto m = constant_model(0.0, 1.0);
    m.light_speed = 2.0;
    m.rho = PiecewiseLinear({0.0, 1.0}, {2.0, 1.0});
    m.v = PiecewiseLinear::constant(0.4);
    m.compression = PiecewiseLinear({0.0, 1.0}, {0.1, 0.3});
    const auto s = evaluate(m, 0.5, 1.0, 0.5);
    EXPECT_NEAR(s.dlnrho_cdt, 0.2 + 0.4 * (-1.0 / 1.5) / 2.0, 1e-15);
}

TEST(MeanFreePath, Examples) {
    EXPECT_DOUBLE_EQ(mean_free_path(make_state(0.5, 0.5)), 1.0);
    EXPECT_NEAR(mean_free_path(make_state(1.0, 1.0, 0.5, 0.25)), 4.0 / 9.0, 1e-15);
    EXPECT_DOUBLE_EQ(mean_free_path(make_state(0.3, 0.9, 0.7, 0.7)), 1.0 / 1.2);
    EXPECT_THROW(mean_free_path(make_state(0.0, 0.0)), SingularOpacity);
}

TEST(MeanFreePath, ReciprocalProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int n = 0; n < 1000; ++n) {
        const double phi0 = u(rng);
        const double phi1 = phi0 * (2.0 * u(rng) / 5.0 - 1.0);
        const auto s = make_state(u(rng) + 1e-3, u(rng), phi0, phi1);
        const double lam = mean_free_path(s);
        EXPECT_GT(lam, 0.0);
        EXPECT_NEAR(lam * (s.chi_tilde + s.phi0 - s.phi1), 1.0, 1e-14);
    }
}

TEST(ApplyScaling, Examples) {
    const auto m = constant_model(1.0, 0.5, 0.4, 0.1);
    for (auto mode : {ScalingMode::none, ScalingMode::reaction_collision, ScalingMode::time, ScalingMode::both}) {
        const auto s1 = evaluate(apply_scaling(m, 1.0, mode), 0.5, 1.0);
        const auto s0 = evaluate(m, 0.5, 1.0);
        EXPECT_EQ(s1.j, s0.j);
        EXPECT_EQ(s1.chi_tilde, s0.chi_tilde);
        EXPECT_EQ(s1.phi0, s0.phi0);
        EXPECT_EQ(s1.phi1, s0.phi1);
        EXPECT_EQ(s1.v, s0.v);
    }
    const auto s = evaluate(apply_scaling(m, 0.5, ScalingMode::reaction_collision), 0.5, 1.0);
    EXPECT_DOUBLE_EQ(s.j, 2.0);
    EXPECT_DOUBLE_EQ(s.chi_tilde, 3.0);
    EXPECT_DOUBLE_EQ(s.phi0, 0.8);
    EXPECT_THROW(apply_scaling(m, 0.0, ScalingMode::both), InvalidArgument);
    EXPECT_THROW(apply_scaling(m, -1.0, ScalingMode::none), InvalidArgument);
}

TEST(ApplyScaling, TimeModeScalesVelocity) {
    auto m = constant_model(1.0, 0.5);
    m.v = PiecewiseLinear::constant(0.2);
    const auto s = evaluate(apply_scaling(m, 0.1, ScalingMode::time), 0.5, 1.0);
    EXPECT_DOUBLE_EQ(s.v, 0.02);
    EXPECT_DOUBLE_EQ(s.j, 1.0);
}

TEST(ScatteringSphere, Transparent) {
    const auto m = constant_model(0.0, 0.0, 0.0, 0.0, 10.0);
    EXPECT_EQ(scattering_sphere_radius(m, 1.0), 0.0);
}

TEST(ScatteringSphere, UniformOpacity) {
    const auto m = constant_model(0.5, 0.5, 0.0, 0.0, 10.0);
    const double rnu = scattering_sphere_radius(m, 1.0);
    EXPECT_NEAR(rnu, 10.0 - 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(depth_oracle(m, 1.0, rnu), 2.0 / 3.0, 1e-10);
}

TEST(ScatteringSphere, PiecewiseOpacityMatchesQuadratureOracle) {
    auto m = constant_model(0.0, 0.0, 0.0, 0.0, 10.0);
    m.chi = {PiecewiseLinear({0.0, 4.0, 7.0, 10.0}, {6.0, 1.0, 0.2, 0.0})};
    m.phi0 = {PiecewiseLinear({0.0, 5.0}, {1.0, 0.1})};
    m.phi1 = {PiecewiseLinear({0.0, 5.0}, {0.3, 0.02})};
    double prev = 10.0;
    for (double tau : {0.1, 0.4, 2.0 / 3.0, 1.5, 3.0, 8.0}) {
        const double rnu = scattering_sphere_radius(m, 1.0, tau);
        EXPECT_NEAR(depth_oracle(m, 1.0, rnu), tau, 1e-9) << tau;
        EXPECT_LE(rnu, prev);
        prev = rnu;
    }
    EXPECT_EQ(scattering_sphere_radius(m, 1.0, 1e6), 0.0);
}
