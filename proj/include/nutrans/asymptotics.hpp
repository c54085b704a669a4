#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "nutrans/boltzmann.hpp"
#include "nutrans/errors.hpp"
#include "nutrans/grid.hpp"
#include "nutrans/kinetics.hpp"
#include "nutrans/matter.hpp"
#include "nutrans/parallel.hpp"

namespace nutrans {

enum class Limit { diffusion, reaction, free_streaming };
enum class F1Variant { full, minus };
enum class HierarchyVariant { reaction_scaled, time_and_reaction_scaled, time_scaled };

inline std::string to_string(Limit l) {
    switch (l) {
        case Limit::diffusion: return "diffusion";
        case Limit::reaction: return "reaction";
        case Limit::free_streaming: return "free_streaming";
    }
    return "diffusion";
}

inline std::string to_string(HierarchyVariant v) {
    switch (v) {
        case HierarchyVariant::reaction_scaled: return "reaction_scaled";
        case HierarchyVariant::time_and_reaction_scaled: return "time_and_reaction_scaled";
        case HierarchyVariant::time_scaled: return "time_scaled";
    }
    return "reaction_scaled";
}

/// Scaling mode under which each limit is reached.
inline ScalingMode limit_scaling(Limit l) {
    switch (l) {
        case Limit::diffusion: return ScalingMode::both;
        case Limit::reaction: return ScalingMode::reaction_collision;
        case Limit::free_streaming: return ScalingMode::time;
    }
    return ScalingMode::none;
}

/// Nodal, centered, weighted-diamond, extrapolated boundaries: exact on linear profiles.
inline TransportOptions analysis_transport() {
    TransportOptions o;
    o.form = RadialForm::nodal;
    o.radial = RadialDifference::centered;
    o.angular = AngularDifference::weighted_diamond;
    o.boundary = RadialBoundary::extrapolate;
    return o;
}

/// Radial window [r_min, r_max] over which norms are taken.
struct Band {
    double r_min = 0.0;
    double r_max = std::numeric_limits<double>::infinity();
    bool contains(double r) const { return r >= r_min && r <= r_max; }
};

namespace detail {

/// Trapezoid widths of the energy groups; 1 for a single group.
inline std::vector<double> omega_weights(const PhaseGrid& g) {
    const auto& w = g.omega_groups();
    const int n = static_cast<int>(w.size());
    std::vector<double> out(n, 1.0);
    if (n < 2) {
        return out;
    }
    for (int k = 0; k < n; ++k) {
        const double lo = k > 0 ? w[k - 1] : w[k];
        const double hi = k < n - 1 ? w[k + 1] : w[k];
        out[k] = 0.5 * (hi - lo);
    }
    return out;
}

inline MomentField mean(const DistributionField& f, const PhaseGrid& g, int order = 0) {
    return moment_field(f, g, order).with_role(MomentRole::residual);
}

/// Solves Jbar(g) = d for g, Jbar(g) = -chi_tilde g + C(g). With `drop_mean` the term fed by
/// the zeroth moment of d is omitted.
inline DistributionField solve_linearized(const DistributionField& d, const MaterialTable& table,
                                          const PhaseGrid& grid, bool drop_mean) {
    DistributionField out(grid);
    const auto& mu = grid.mu_nodes();
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const auto& m = table(i, g);
            const double denom = m.chi_tilde + m.phi0;
            if (!(denom > 0.0)) {
                throw SingularOpacity("Hilbert term: chi_tilde + phi0 must be positive");
            }
            const double lam = mean_free_path(m);
            const auto sl = d.slice(i, g);
            double m0 = 0.0;
            if (!drop_mean) {
                if (!(m.chi_tilde > 0.0)) {
                    throw SingularOpacity("Hilbert term: chi_tilde must be positive");
                }
                m0 = m.phi0 / m.chi_tilde * angular_moment(sl, 0, grid);
            }
            const double m1 = angular_moment(sl, 1, grid);
            for (int k = 0; k < grid.n_mu(); ++k) {
                out(i, k, g) = -(sl[k] + m0 + 3.0 * mu[k] * m.phi1 * lam * m1) / denom;
            }
        }
    }
    return out;
}

/// Jbar(g) = -chi_tilde g + C(g), or J(g) = j + Jbar(g) when `with_source`.
inline DistributionField apply_collision(const DistributionField& f, const MaterialTable& table, const PhaseGrid& grid,
                                         bool with_source) {
    DistributionField out(grid);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const auto& m = table(i, g);
            const auto r = rhs_J(f.slice(i, g), m, grid.rule());
            for (int k = 0; k < grid.n_mu(); ++k) {
                out(i, k, g) = with_source ? r[k] : r[k] - m.j;
            }
        }
    }
    return out;
}

inline MomentField source_term(const MomentField& beta, const MaterialTable& table, const PhaseGrid& grid) {
    MomentField out(grid, MomentRole::residual);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            out(i, g) = table(i, g).j - table(i, g).chi_tilde * beta(i, g);
        }
    }
    return out;
}

inline void axpy(DistributionField& y, double a, const DistributionField& x) {
    for (std::size_t q = 0; q < y.size(); ++q) {
        y.values()[q] += a * x.values()[q];
    }
}

inline void axpy(MomentField& y, double a, const MomentField& x) {
    for (std::size_t q = 0; q < y.size(); ++q) {
        y.values()[q] += a * x.values()[q];
    }
}

}  // namespace detail

/// sqrt(sum V_i dw_g x^2) over cells inside the band.
inline double weighted_norm(const MomentField& m, const PhaseGrid& grid, const Band& band = {}) {
    const auto dw = detail::omega_weights(grid);
    double s = 0.0;
    for (int i = 0; i < grid.n_r(); ++i) {
        if (!band.contains(grid.r_centers()[i])) {
            continue;
        }
        for (int g = 0; g < grid.n_omega(); ++g) {
            s += grid.volume(i) * dw[g] * m(i, g) * m(i, g);
        }
    }
    return std::sqrt(s);
}

/// As above with the angular mean (1/2) sum_k w_k x^2 included.
inline double weighted_norm(const DistributionField& f, const PhaseGrid& grid, const Band& band = {}) {
    const auto dw = detail::omega_weights(grid);
    const auto& w = grid.mu_weights();
    double s = 0.0;
    for (int i = 0; i < grid.n_r(); ++i) {
        if (!band.contains(grid.r_centers()[i])) {
            continue;
        }
        for (int k = 0; k < grid.n_mu(); ++k) {
            for (int g = 0; g < grid.n_omega(); ++g) {
                s += grid.volume(i) * dw[g] * 0.5 * w[k] * f(i, k, g) * f(i, k, g);
            }
        }
    }
    return std::sqrt(s);
}

inline DistributionField hilbert_f0(const MatterModel& model, const PhaseGrid& grid, double t = 0.0) {
    const MaterialTable table(model, grid, t);
    DistributionField f(grid);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const auto& m = table(i, g);
            if (!(m.chi_tilde > 0.0)) {
                throw SingularOpacity("hilbert_f0: chi_tilde must be positive");
            }
            const double v = m.j / m.chi_tilde;
            for (int k = 0; k < grid.n_mu(); ++k) {
                f(i, k, g) = v;
            }
        }
    }
    return f;
}

/// First-order Hilbert term, returned as the product eps * f1.
inline DistributionField hilbert_f1(const DistributionField& f0, const MatterModel& model, const PhaseGrid& grid,
                                    F1Variant variant, const DistributionField* df0_dt = nullptr, double t = 0.0,
                                    const TransportOptions& opt = analysis_transport()) {
    const bool full = variant == F1Variant::full;
    const auto d = transport_apply(f0, model, grid, full ? OperatorPart::full : OperatorPart::minus,
                                   full ? df0_dt : nullptr, t, opt);
    const MaterialTable table(model, grid, t);
    return detail::solve_linearized(d, table, grid, !full);
}

/// Second-order term of the time-and-reaction hierarchy: Jbar(eps^2 f2) = D+ f0 + D- (eps f1).
inline DistributionField hilbert_f2(const DistributionField& f0, const DistributionField& eps_f1,
                                    const MatterModel& model, const PhaseGrid& grid,
                                    const DistributionField* df0_dt = nullptr, double t = 0.0,
                                    const TransportOptions& opt = analysis_transport()) {
    const DistributionField zero(grid);
    auto d = transport_apply(f0, model, grid, OperatorPart::plus, df0_dt ? df0_dt : &zero, t, opt);
    const auto dm = transport_apply(eps_f1, model, grid, OperatorPart::minus, nullptr, t, opt);
    for (std::size_t q = 0; q < d.size(); ++q) {
        d.values()[q] += dm.values()[q];
    }
    const MaterialTable table(model, grid, t);
    return detail::solve_linearized(d, table, grid, false);
}

/// Size of the D+(D+ f0) contribution dropped by the leading-order identity; the first-order
/// term is built from D+ f0 alone and treated as frozen in time.
inline double plus_plus_contribution(const DistributionField& f0, const MatterModel& model, const PhaseGrid& grid,
                                     const DistributionField* df0_dt = nullptr, double t = 0.0,
                                     const TransportOptions& opt = analysis_transport(), const Band& band = {}) {
    const DistributionField zero(grid);
    const auto dp = transport_apply(f0, model, grid, OperatorPart::plus, df0_dt ? df0_dt : &zero, t, opt);
    const MaterialTable table(model, grid, t);
    const auto g1 = detail::solve_linearized(dp, table, grid, false);
    const auto dpp = transport_apply(g1, model, grid, OperatorPart::plus, &zero, t, opt);
    return weighted_norm(detail::mean(dpp, grid), grid, band);
}

struct MomentIdentityReport {
    double a = 0.0;     // mean of D f0 against the Lagrangian time derivative plus energy advection
    double b = 0.0;     // mean of D-(lambda D- f0) against the conservative diffusion operator
    double b_f1 = 0.0;  // mean of D-(eps f1) plus the diffusion operator
    double c = 0.0;     // leading-order balance
    double a_scale = 0.0;
    double b_scale = 0.0;
    MomentField b_lhs;
    MomentField b_rhs;

    explicit MomentIdentityReport(const PhaseGrid& g)
        : b_lhs(g, MomentRole::residual), b_rhs(g, MomentRole::residual) {}
};

/// (1/r^2) d_r(r^2 (lambda/3) d_r beta) with harmonic face coefficients, zero flux at r = 0 and
/// the last interior gradient carried to the outer face.
inline MomentField diffusion_operator(const MomentField& beta, const MatterModel& model, const PhaseGrid& grid,
                                      double t = 0.0) {
    const MaterialTable table(model, grid, t);
    const int nr = grid.n_r();
    const auto& rc = grid.r_centers();
    MomentField out(grid, MomentRole::residual);
    for (int g = 0; g < grid.n_omega(); ++g) {
        std::vector<double> flux(nr + 1, 0.0);
        for (int e = 1; e < nr; ++e) {
            const double sum = transport_opacity(table(e - 1, g)) + transport_opacity(table(e, g));
            if (!(sum > 0.0)) {
                throw SingularOpacity("diffusion_operator: zero transport opacity");
            }
            flux[e] = grid.area(e) * (2.0 / (3.0 * sum)) * (beta(e, g) - beta(e - 1, g)) / (rc[e] - rc[e - 1]);
        }
        if (nr > 1) {
            flux[nr] = grid.area(nr) / (3.0 * transport_opacity(table(nr - 1, g))) *
                       (beta(nr - 1, g) - beta(nr - 2, g)) / (rc[nr - 1] - rc[nr - 2]);
        }
        for (int i = 0; i < nr; ++i) {
            out(i, g) = (flux[i + 1] - flux[i]) / grid.volume(i);
        }
    }
    return out;
}

/// Energy advection and Lagrangian radial derivative of an isotropic field:
/// (v/c) d_r beta + (1/3)(d ln rho/(c dt)) omega d_omega beta, upwinded.
inline MomentField mean_advection(const MomentField& beta, const MatterModel& model, const PhaseGrid& grid,
                                  double t = 0.0, const TransportOptions& opt = analysis_transport()) {
    const MaterialTable table(model, grid, t);
    const TransportStencils st(grid, opt);
    const auto iso = isotropic_field(beta, grid.n_mu());
    const auto& w = grid.omega_groups();
    const int nw = grid.n_omega();
    MomentField out(grid, MomentRole::residual);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < nw; ++g) {
            const auto& m = table(i, g);
            double v = 0.0;
            if (m.v != 0.0) {
                v += m.v / grid.c() * st.nodal_upwind(i, 0, m.v < 0.0).apply(iso, g);
            }
            const double coef = m.dlnrho_cdt * w[g] / 3.0;
            if (coef > 0.0 && g > 0) {
                v += coef * (beta(i, g) - beta(i, g - 1)) / (w[g] - w[g - 1]);
            } else if (coef < 0.0 && g < nw - 1) {
                v += coef * (beta(i, g + 1) - beta(i, g)) / (w[g + 1] - w[g]);
            }
            out(i, g) = v;
        }
    }
    return out;
}

/// Quadrature and finite-difference checks of the moment identities for an isotropic f0.
inline MomentIdentityReport moment_identities_report(const DistributionField& f0, const MatterModel& model,
                                                     const PhaseGrid& grid, const DistributionField* df0_dt = nullptr,
                                                     double t = 0.0,
                                                     const TransportOptions& opt = analysis_transport(),
                                                     const Band& band = {}) {
    MomentIdentityReport rep(grid);
    const DistributionField zero(grid);
    const DistributionField& dt = df0_dt ? *df0_dt : zero;
    const MaterialTable table(model, grid, t);
    const auto beta0 = detail::mean(f0, grid);

    // (a)
    auto res_a = detail::mean(transport_apply(f0, model, grid, OperatorPart::full, &dt, t, opt), grid);
    auto rhs_a = mean_advection(beta0, model, grid, t, opt);
    detail::axpy(rhs_a, time_weight(model) / grid.c(), detail::mean(dt, grid));
    detail::axpy(res_a, -1.0, rhs_a);
    rep.a = weighted_norm(res_a, grid, band);
    rep.a_scale = weighted_norm(rhs_a, grid, band);

    // (b)
    auto inner = transport_apply(f0, model, grid, OperatorPart::minus, nullptr, t, opt);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const double lam = mean_free_path(table(i, g));
            for (int k = 0; k < grid.n_mu(); ++k) {
                inner(i, k, g) *= lam;
            }
        }
    }
    rep.b_lhs = detail::mean(transport_apply(inner, model, grid, OperatorPart::minus, nullptr, t, opt), grid);
    rep.b_rhs = diffusion_operator(beta0, model, grid, t);
    auto res_b = rep.b_lhs;
    detail::axpy(res_b, -1.0, rep.b_rhs);
    rep.b = weighted_norm(res_b, grid, band);
    rep.b_scale = weighted_norm(rep.b_rhs, grid, band);

    // (b) through the first-order term
    const auto ef1 = hilbert_f1(f0, model, grid, F1Variant::minus, nullptr, t, opt);
    auto res_bf1 = detail::mean(transport_apply(ef1, model, grid, OperatorPart::minus, nullptr, t, opt), grid);
    detail::axpy(res_bf1, 1.0, rep.b_rhs);
    rep.b_f1 = weighted_norm(res_bf1, grid, band);

    // (c)
    auto res_c = res_a;
    detail::axpy(res_c, 1.0, res_bf1);
    rep.c = weighted_norm(res_c, grid, band);
    return rep;
}

/// Fields entering a hierarchy level, as products with the matching power of epsilon.
struct HierarchyFields {
    const DistributionField* f0 = nullptr;
    const DistributionField* eps_f1 = nullptr;
    const DistributionField* eps2_f2 = nullptr;
    const DistributionField* df0_dt = nullptr;  // absent: f0 stationary
};

inline int hierarchy_levels(HierarchyVariant v) { return v == HierarchyVariant::time_and_reaction_scaled ? 3 : 2; }

/// Pointwise residual of one hierarchy level, written with the model's evaluated (scaled)
/// coefficients so that no explicit epsilon appears.
inline DistributionField hierarchy_residual_field(HierarchyVariant variant, int level, const HierarchyFields& fields,
                                                  const MatterModel& model, const PhaseGrid& grid, double t = 0.0,
                                                  const TransportOptions& opt = analysis_transport()) {
    if (level < 0 || level >= hierarchy_levels(variant)) {
        throw InvalidArgument("hierarchy_residual: level " + std::to_string(level) + " does not exist for " +
                              to_string(variant));
    }
    auto need = [](const DistributionField* f, const char* name) -> const DistributionField& {
        if (f == nullptr) {
            throw InvalidArgument(std::string("hierarchy_residual: missing field ") + name);
        }
        return *f;
    };
    const MaterialTable table(model, grid, t);
    const DistributionField zero(grid);
    const DistributionField& f0 = need(fields.f0, "f0");
    const DistributionField* dt = fields.df0_dt ? fields.df0_dt : &zero;
    auto minus = [&](const DistributionField& f) {
        return transport_apply(f, model, grid, OperatorPart::minus, nullptr, t, opt);
    };
    auto plus = [&](const DistributionField& f) {
        return transport_apply(f, model, grid, OperatorPart::plus, dt, t, opt);
    };
    DistributionField res(grid);
    switch (variant) {
        case HierarchyVariant::reaction_scaled:
            if (level == 0) {
                res = detail::apply_collision(f0, table, grid, true);
            } else {
                res = transport_apply(f0, model, grid, OperatorPart::full, dt, t, opt);
                detail::axpy(res, -1.0, detail::apply_collision(need(fields.eps_f1, "eps_f1"), table, grid, false));
            }
            break;
        case HierarchyVariant::time_and_reaction_scaled:
            if (level == 0) {
                res = detail::apply_collision(f0, table, grid, true);
            } else if (level == 1) {
                res = minus(f0);
                detail::axpy(res, -1.0, detail::apply_collision(need(fields.eps_f1, "eps_f1"), table, grid, false));
            } else {
                res = plus(f0);
                detail::axpy(res, 1.0, minus(need(fields.eps_f1, "eps_f1")));
                detail::axpy(res, -1.0, detail::apply_collision(need(fields.eps2_f2, "eps2_f2"), table, grid, false));
            }
            break;
        case HierarchyVariant::time_scaled:
            if (level == 0) {
                res = minus(f0);
                detail::axpy(res, -1.0, detail::apply_collision(f0, table, grid, true));
            } else {
                const auto& ef1 = need(fields.eps_f1, "eps_f1");
                res = plus(f0);
                detail::axpy(res, 1.0, minus(ef1));
                detail::axpy(res, -1.0, detail::apply_collision(ef1, table, grid, false));
            }
            break;
    }
    return res;
}

inline double hierarchy_residual(HierarchyVariant variant, int level, const HierarchyFields& fields,
                                 const MatterModel& model, const PhaseGrid& grid, double t = 0.0,
                                 const TransportOptions& opt = analysis_transport(), const Band& band = {}) {
    return weighted_norm(hierarchy_residual_field(variant, level, fields, model, grid, t, opt), grid, band);
}

/// Spatial operator and source of the angular-mean limit equation, so that
/// (tau/c) d_t beta = rhs. The free-streaming form is stationary and needs the full
/// distribution for its first moment; there rhs is the residual j - chi_tilde beta - <D- f>.
inline MomentField limit_equation_rhs(Limit limit, const MomentField& beta, const MatterModel& model,
                                      const PhaseGrid& grid, const DistributionField* f = nullptr, double t = 0.0,
                                      const TransportOptions& opt = implicit_transport(),
                                      F1Variant variant = F1Variant::minus) {
    if (!beta.matches(grid)) {
        throw InvalidArgument("limit_equation_rhs: field does not match grid");
    }
    const MaterialTable table(model, grid, t);
    MomentField rhs = detail::source_term(beta, table, grid);
    if (limit == Limit::free_streaming) {
        if (f == nullptr) {
            throw InvalidArgument("limit_equation_rhs: free streaming needs the distribution");
        }
        detail::axpy(rhs, -1.0,
                     detail::mean(transport_apply(*f, model, grid, OperatorPart::minus, nullptr, t, opt), grid));
        return rhs;
    }
    const auto iso = isotropic_field(beta, grid.n_mu());
    const DistributionField zero(grid);
    detail::axpy(rhs, -1.0,
                 detail::mean(transport_apply(iso, model, grid, OperatorPart::plus, &zero, t, opt), grid));
    if (limit == Limit::diffusion) {
        const auto ef1 = hilbert_f1(iso, model, grid, variant, &zero, t, opt);
        detail::axpy(rhs, -1.0,
                     detail::mean(transport_apply(ef1, model, grid, OperatorPart::minus, nullptr, t, opt), grid));
    }
    return rhs;
}

/// Angular mean of the discrete stationary equation: <D- f> + <P f> - (j - chi_tilde beta).
inline MomentField steady_residual(const DistributionField& f, const MatterModel& model, const PhaseGrid& grid,
                                   double t = 0.0, const TransportOptions& opt = implicit_transport()) {
    const MaterialTable table(model, grid, t);
    const DistributionField zero(grid);
    auto res = detail::mean(transport_apply(f, model, grid, OperatorPart::full, &zero, t, opt), grid);
    detail::axpy(res, -1.0, detail::source_term(detail::mean(f, grid), table, grid));
    return res;
}

// ---------------------------------------------------------------------------
// epsilon sweeps

struct SweepScenario {
    std::string name;
    MatterModel model;  // unscaled rates
    PhaseGrid grid;
    Band band;
    TransportOptions transport = implicit_transport();
    double steady_tol = 1e-13;
    int max_iter = 2000;
    int threads = 1;
};

struct ConvergenceReport {
    Limit limit = Limit::diffusion;
    F1Variant variant = F1Variant::minus;
    std::vector<double> epsilons;
    std::vector<double> errors;           // relative limit-equation residuals
    std::vector<double> reference_norms;  // norm of the leading term used for normalization
    std::vector<double> solver_residuals; // relative residual of the discrete steady equation
    std::vector<int> iterations;
    double fitted_slope = 0.0;
    double slope_stderr = 0.0;
    double discretization_floor = 0.0;   // |err(N) - err(N/2)| at the smallest epsilon
    double solver_floor = 0.0;           // largest solver residual over the sweep
    bool floor_measured = false;

    double smallest_error() const {
        double m = std::numeric_limits<double>::infinity();
        for (double e : errors) {
            m = std::min(m, e);
        }
        return m;
    }
    bool floors_ok() const {
        const double lim = 0.1 * smallest_error();
        return floor_measured && discretization_floor <= lim && solver_floor <= lim;
    }
};

inline double required_slope(Limit l) { return l == Limit::diffusion ? 1.8 : 0.8; }

inline bool passes(const ConvergenceReport& r) { return r.fitted_slope >= required_slope(r.limit) && r.floors_ok(); }

inline std::string verdict(const ConvergenceReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%s: slope %.4f +/- %.4f (required >= %.2f), discretization floor %.3e, solver floor %.3e, "
                  "smallest error %.3e -> %s",
                  to_string(r.limit).c_str(), r.fitted_slope, r.slope_stderr, required_slope(r.limit),
                  r.discretization_floor, r.solver_floor, r.smallest_error(), passes(r) ? "PASS" : "FAIL");
    return buf;
}

/// Least-squares slope of log(y) against log(x) and its standard error.
inline std::pair<double, double> fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
        sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
    }
    const double slope = sxy / sxx;
    double sse = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = std::log(y[k]) - my - slope * (std::log(x[k]) - mx);
        sse += r * r;
    }
    const double se = n > 2 ? std::sqrt(sse / static_cast<double>(n - 2) / sxx) : 0.0;
    return {slope, se};
}

namespace detail {

struct SweepMember {
    double error = 0.0;
    double reference = 0.0;
    double solver = 0.0;
    int iterations = 0;
};

inline SweepMember sweep_member(const SweepScenario& sc, const PhaseGrid& grid, double eps, Limit limit,
                                F1Variant variant) {
    MatterModel m = sc.model;
    m.scaling = limit_scaling(limit);
    m.epsilon = eps;
    m.omega_groups = grid.omega_groups();
    ImplicitStepper stepper(m, grid, sc.transport, 1);
    SweepMember out;
    const auto f = stepper.steady_state(hilbert_f0(m, grid), sc.steady_tol, sc.max_iter, &out.iterations);
    const auto beta = mean(f, grid);
    const MaterialTable table(m, grid);
    const DistributionField zero(grid);
    MomentField reference(grid, MomentRole::residual);
    switch (limit) {
        case Limit::diffusion: {
            const auto iso = isotropic_field(beta, grid.n_mu());
            const auto ef1 = hilbert_f1(iso, m, grid, variant, &zero, 0.0, sc.transport);
            reference = mean(transport_apply(ef1, m, grid, OperatorPart::minus, nullptr, 0.0, sc.transport), grid);
            break;
        }
        case Limit::reaction: {
            const auto iso = isotropic_field(beta, grid.n_mu());
            reference = mean(transport_apply(iso, m, grid, OperatorPart::plus, &zero, 0.0, sc.transport), grid);
            break;
        }
        case Limit::free_streaming:
            reference = source_term(beta, table, grid);
            break;
    }
    const auto rhs = limit_equation_rhs(limit, beta, m, grid, &f, 0.0, sc.transport, variant);
    out.reference = weighted_norm(reference, grid, sc.band);
    if (!(out.reference > 0.0)) {
        throw InvalidArgument("epsilon_sweep: leading term vanishes on the band");
    }
    out.error = weighted_norm(rhs, grid, sc.band) / out.reference;
    out.solver = weighted_norm(steady_residual(f, m, grid, 0.0, sc.transport), grid, sc.band) / out.reference;
    return out;
}

/// Every other radial edge of a grid with an even cell count.
inline PhaseGrid coarsen(const PhaseGrid& g) {
    if (g.n_r() % 2 != 0 || g.n_r() < 4) {
        throw InvalidArgument("coarsen: need an even radial cell count of at least 4");
    }
    std::vector<double> e;
    for (int i = 0; i <= g.n_r(); i += 2) {
        e.push_back(g.r_edges()[i]);
    }
    return PhaseGrid(e, g.n_mu(), g.omega_groups(), g.c());
}

}  // namespace detail

/// Runs the scaled stationary problem for each epsilon, evaluates the relative residual of the
/// matching limit equation on the solution's moments and fits the order. The discretization
/// floor repeats the smallest epsilon on a grid with half the radial cells.
inline ConvergenceReport epsilon_sweep(const SweepScenario& sc, const std::vector<double>& epsilons, Limit limit,
                                       F1Variant variant = F1Variant::minus, bool measure_floor = true) {
    if (epsilons.size() < 3) {
        throw InvalidArgument("epsilon_sweep: need at least 3 epsilon values");
    }
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
        if (!(epsilons[k] > 0.0) || (k > 0 && !(epsilons[k] < epsilons[k - 1]))) {
            throw InvalidArgument("epsilon_sweep: epsilons must be positive and strictly decreasing");
        }
    }
    ConvergenceReport rep;
    rep.limit = limit;
    rep.variant = variant;
    rep.epsilons = epsilons;
    const int n = static_cast<int>(epsilons.size());
    const int jobs = n + (measure_floor ? 1 : 0);
    std::vector<detail::SweepMember> members(jobs);
    const PhaseGrid coarse = measure_floor ? detail::coarsen(sc.grid) : sc.grid;
    parallel_for(jobs, sc.threads, [&](int q) {
        if (q < n) {
            members[q] = detail::sweep_member(sc, sc.grid, epsilons[q], limit, variant);
        } else {
            members[q] = detail::sweep_member(sc, coarse, epsilons.back(), limit, variant);
        }
    });
    for (int q = 0; q < n; ++q) {
        rep.errors.push_back(members[q].error);
        rep.reference_norms.push_back(members[q].reference);
        rep.solver_residuals.push_back(members[q].solver);
        rep.iterations.push_back(members[q].iterations);
        rep.solver_floor = std::max(rep.solver_floor, members[q].solver);
    }
    const auto fit = fit_log_slope(rep.epsilons, rep.errors);
    rep.fitted_slope = fit.first;
    rep.slope_stderr = fit.second;
    if (measure_floor) {
        rep.discretization_floor = std::abs(members[n].error - members[n - 1].error);
        rep.floor_measured = true;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// manufactured sweep scenarios on the unit sphere

namespace detail {

/// Knots on every center and edge of a uniform n_r-cell grid, so that the grid and its
/// coarsening sample `fn` exactly.
template <class Fn>
PiecewiseLinear sampled_table(int n_r, Fn&& fn) {
    PiecewiseLinear t;
    for (int q = 0; q <= 2 * n_r; ++q) {
        const double x = static_cast<double>(q) / (2 * n_r);
        t.x.push_back(x);
        t.y.push_back(fn(x));
    }
    return t;
}

}  // namespace detail

/// Smooth absorbing and scattering medium with a radially varying equilibrium.
inline SweepScenario diffusion_scenario(int n_r = 200, int n_mu = 8, int n_w = 6) {
    const auto groups = geometric_groups(n_w, 1.0, 1.3);
    SweepScenario sc{"diffusion", MatterModel{}, PhaseGrid(uniform_edges(n_r, 1.0), n_mu, groups), Band{}};
    MatterModel& m = sc.model;
    m.omega_groups = groups;
    m.j.clear();
    m.chi.clear();
    m.phi0.clear();
    m.phi1.clear();
    for (int g = 0; g < n_w; ++g) {
        const double kappa = 6.0 * (1.0 + 0.1 * g);
        auto b0 = [g](double x) { return 0.45 + 0.25 * std::cos(M_PI * x) / (1.0 + 0.1 * g); };
        m.j.push_back(detail::sampled_table(n_r, [&](double x) { return kappa * b0(x); }));
        m.chi.push_back(detail::sampled_table(n_r, [&](double x) { return kappa * (1.0 - b0(x)); }));
        m.phi0.push_back(PiecewiseLinear::constant(0.5 * kappa));
        m.phi1.push_back(PiecewiseLinear::constant(0.1 * kappa));
    }
    sc.band = Band{0.05, 0.75};
    return sc;
}

/// Compressing medium with energy-dependent equilibrium.
inline SweepScenario reaction_scenario(int n_r = 200, int n_mu = 8, int n_w = 6) {
    SweepScenario sc = diffusion_scenario(n_r, n_mu, n_w);
    sc.name = "reaction";
    MatterModel& m = sc.model;
    m.j.clear();
    m.chi.clear();
    for (int g = 0; g < n_w; ++g) {
        const double omega = m.omega_groups[g];
        const double kappa = 6.0 * (1.0 + 0.1 * g);
        auto b0 = [omega](double x) {
            return 0.2 + 0.6 / (1.0 + std::pow(omega / 2.0, 2)) * (1.0 + 0.2 * std::cos(M_PI * x));
        };
        m.j.push_back(detail::sampled_table(n_r, [&](double x) { return kappa * b0(x); }));
        m.chi.push_back(detail::sampled_table(n_r, [&](double x) { return kappa * (1.0 - b0(x)); }));
    }
    m.compression = PiecewiseLinear::constant(0.5);
    return sc;
}

/// Moderately opaque compressing medium away from equilibrium.
inline SweepScenario free_streaming_scenario(int n_r = 200, int n_mu = 8, int n_w = 6) {
    SweepScenario sc = reaction_scenario(n_r, n_mu, n_w);
    sc.name = "free_streaming";
    MatterModel& m = sc.model;
    for (auto* tables : {&m.j, &m.chi, &m.phi0, &m.phi1}) {
        for (auto& t : *tables) {
            for (double& y : t.y) {
                y /= 3.0;
            }
        }
    }
    m.compression = PiecewiseLinear::constant(1.0);
    return sc;
}

inline SweepScenario sweep_scenario(Limit l, int n_r = 200, int n_mu = 8, int n_w = 6) {
    switch (l) {
        case Limit::diffusion: return diffusion_scenario(n_r, n_mu, n_w);
        case Limit::reaction: return reaction_scenario(n_r, n_mu, n_w);
        case Limit::free_streaming: return free_streaming_scenario(n_r, n_mu, n_w);
    }
    return diffusion_scenario(n_r, n_mu, n_w);
}

}  // namespace nutrans
