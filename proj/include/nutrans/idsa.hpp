#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nutrans/errors.hpp"
#include "nutrans/grid.hpp"
#include "nutrans/kinetics.hpp"
#include "nutrans/matter.hpp"
#include "nutrans/parallel.hpp"

namespace nutrans {

enum class Regime { diffusion, free_streaming, reaction };
enum class LimiterVariant { idsa, global };
// outer edge of the trapped diffusion: vacuum sets beta_t = 0 on the face r = R
enum class TrappedBoundary { vacuum, reflecting };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::diffusion: return "diffusion";
        case Regime::free_streaming: return "free_streaming";
        case Regime::reaction: return "reaction";
    }
    return "diffusion";
}

inline std::string to_string(LimiterVariant v) { return v == LimiterVariant::idsa ? "idsa" : "global"; }

struct LimitedSource {
    double sigma = 0.0;
    Regime regime = Regime::diffusion;
};

struct SourceField {
    MomentField sigma_ids;
    MomentField sigma;
    std::vector<Regime> regime;
    LimiterVariant variant = LimiterVariant::idsa;

    SourceField(const PhaseGrid& g, LimiterVariant v)
        : sigma_ids(g, MomentRole::residual),
          sigma(g, MomentRole::residual),
          regime(static_cast<std::size_t>(g.n_r()) * g.n_omega(), Regime::diffusion),
          variant(v) {}

    Regime regime_at(int i, int g) const { return regime[static_cast<std::size_t>(i) * sigma.n_omega() + g]; }
    void set_regime(int i, int g, Regime r) { regime[static_cast<std::size_t>(i) * sigma.n_omega() + g] = r; }
    double fraction(Regime r, int first_cell, int last_cell) const {
        int hit = 0;
        int total = 0;
        for (int i = first_cell; i < last_cell; ++i) {
            for (int g = 0; g < sigma.n_omega(); ++g) {
                ++total;
                hit += regime_at(i, g) == r ? 1 : 0;
            }
        }
        return total == 0 ? 0.0 : static_cast<double>(hit) / total;
    }
};

/// Geometric flux factor of the streaming component.
inline double flux_factor(double r, double /*omega*/, double r_nu) {
    if (r_nu <= 0.0) {
        return 1.0;
    }
    const double x = r_nu / std::max(r, r_nu);
    return 0.5 * (1.0 + std::sqrt(std::max(0.0, 1.0 - x * x)));
}

namespace detail {

/// Face conductances A_e D_e / dr_e of the trapped diffusion, D = lambda/3 as a harmonic face mean;
/// faces with no opacity on either side carry no trapped flux.
inline std::vector<double> trapped_conductance(const MaterialTable& table, const PhaseGrid& grid, int g,
                                               TrappedBoundary outer) {
    const int nr = grid.n_r();
    const auto& rc = grid.r_centers();
    std::vector<double> cond(nr + 1, 0.0);
    auto harmonic = [](double ka, double kb) {
        const double sum = ka + kb;
        return sum > 0.0 ? 2.0 / (3.0 * sum) : 0.0;
    };
    for (int e = 1; e < nr; ++e) {
        const double d = harmonic(std::max(0.0, transport_opacity(table(e - 1, g))),
                                  std::max(0.0, transport_opacity(table(e, g))));
        cond[e] = grid.area(e) * d / (rc[e] - rc[e - 1]);
    }
    if (outer == TrappedBoundary::vacuum) {
        const double k = std::max(0.0, transport_opacity(table(nr - 1, g)));
        const double d = k > 0.0 ? 1.0 / (3.0 * k) : 0.0;
        cond[nr] = grid.area(nr) * d / (grid.r_edges()[nr] - rc[nr - 1]);
    }
    return cond;
}

}  // namespace detail

/// Sigma_ids = -(1/r^2) d_r(r^2 (lambda/3) d_r beta_t) + chi_tilde beta_s, zero flux at r = 0.
inline MomentField compute_sigma_ids(const MomentField& beta_t, const MomentField& beta_s, const MatterModel& model,
                                     const PhaseGrid& grid, double t = 0.0,
                                     TrappedBoundary outer = TrappedBoundary::vacuum) {
    if (!beta_t.matches(grid) || !beta_s.matches(grid)) {
        throw InvalidArgument("compute_sigma_ids: fields do not match grid");
    }
    const MaterialTable table(model, grid, t);
    const int nr = grid.n_r();
    MomentField out(grid, MomentRole::residual);
    for (int g = 0; g < grid.n_omega(); ++g) {
        const auto cond = detail::trapped_conductance(table, grid, g, outer);
        std::vector<double> flux(nr + 1, 0.0);
        for (int e = 1; e < nr; ++e) {
            flux[e] = cond[e] * (beta_t(e, g) - beta_t(e - 1, g));
        }
        flux[nr] = -cond[nr] * beta_t(nr - 1, g);
        for (int i = 0; i < nr; ++i) {
            out(i, g) = -(flux[i + 1] - flux[i]) / grid.volume(i) + table(i, g).chi_tilde * beta_s(i, g);
        }
    }
    return out;
}

/// Relative distance below j at which the source counts as saturated: the implicit trapped update
/// approaches Sigma = j - chi_tilde beta_t from below in transparent cells, so the upper clamp alone
/// would never tag them.
inline constexpr double kStreamingTolerance = 1e-3;

inline LimitedSource limit_sigma(double sigma_ids, const MaterialState& s, double beta_s, LimiterVariant variant,
                                 double streaming_tol = kStreamingTolerance) {
    const double lower = variant == LimiterVariant::idsa ? 0.0 : s.chi_tilde * beta_s;
    LimitedSource out;
    const double m = std::max(sigma_ids, lower);
    out.sigma = std::min(m, s.j);
    if (m > s.j || (s.j > 0.0 && m >= s.j * (1.0 - streaming_tol))) {
        out.regime = Regime::free_streaming;
    } else if (sigma_ids < lower) {
        out.regime = Regime::reaction;
    } else {
        out.regime = Regime::diffusion;
    }
    return out;
}

inline SourceField limit_field(const MomentField& sigma_ids, const MomentField& beta_s, const MatterModel& model,
                               const PhaseGrid& grid, LimiterVariant variant, double t = 0.0,
                               double streaming_tol = kStreamingTolerance) {
    if (!sigma_ids.matches(grid) || !beta_s.matches(grid)) {
        throw InvalidArgument("limit_field: fields do not match grid");
    }
    const MaterialTable table(model, grid, t);
    SourceField src(grid, variant);
    src.sigma_ids = sigma_ids.with_role(MomentRole::residual);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const auto l = limit_sigma(sigma_ids(i, g), table(i, g), beta_s(i, g), variant, streaming_tol);
            src.sigma(i, g) = l.sigma;
            src.set_regime(i, g, l.regime);
        }
    }
    return src;
}

struct LimiterBound {
    double beta_inf = 0.0;
    bool admissible = false;
};

inline LimiterBound limiter_bounds_check(const MaterialState& s, double sigma) {
    if (!(s.chi_tilde > 0.0)) {
        throw SingularOpacity("limiter_bounds_check: chi_tilde must be positive");
    }
    LimiterBound b;
    b.beta_inf = (s.j - sigma) / s.chi_tilde;
    b.admissible = -s.chi <= sigma && sigma <= s.j;
    return b;
}

namespace detail {

/// (1/3) a omega d_omega beta, upwind in the sign of a.
inline double omega_advection(const MomentField& beta, const MaterialState& s, const std::vector<double>& w, int i,
                              int g) {
    const double coef = s.dlnrho_cdt * w[g] / 3.0;
    const int nw = static_cast<int>(w.size());
    if (coef > 0.0 && g > 0) {
        return coef * (beta(i, g) - beta(i, g - 1)) / (w[g] - w[g - 1]);
    }
    if (coef < 0.0 && g < nw - 1) {
        return coef * (beta(i, g + 1) - beta(i, g)) / (w[g + 1] - w[g]);
    }
    return 0.0;
}

/// Thomas algorithm; a: sub, b: diagonal, c: super.
inline std::vector<double> solve_tridiagonal(std::vector<double> a, std::vector<double> b, std::vector<double> c,
                                             std::vector<double> d) {
    const std::size_t n = b.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    }
    return x;
}

}  // namespace detail

/// Trapped-component step with a given source: backward Euler in the reaction, explicit upwind
/// omega advection.
inline MomentField trapped_step(const MomentField& beta_t, const MomentField& sigma, const MatterModel& model,
                                const PhaseGrid& grid, double dt, double t = 0.0) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("trapped_step: dt must be positive");
    }
    if (!beta_t.matches(grid) || !sigma.matches(grid)) {
        throw InvalidArgument("trapped_step: fields do not match grid");
    }
    const MaterialTable table(model, grid, t);
    const double s = grid.c() * dt / time_weight(model);
    MomentField out(grid, MomentRole::beta_t);
    const auto& w = grid.omega_groups();
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const auto& m = table(i, g);
            const double adv = detail::omega_advection(beta_t, m, w, i, g);
            out(i, g) = (beta_t(i, g) + s * (m.j - sigma(i, g) - adv)) / (1.0 + s * m.chi_tilde);
        }
    }
    return out;
}

/// Trapped-component step using the limiter result: cells tagged diffusion carry the
/// diffusion part of the source implicitly (tridiagonal radial solve per group) with
/// effective absorption chi_tilde (beta_t + beta_s); other cells use the clamped source.
/// The source actually applied is written to `sigma_used` when given.
inline MomentField trapped_step(const MomentField& beta_t, const SourceField& src, const MomentField& beta_s,
                                const MatterModel& model, const PhaseGrid& grid, double dt, double t = 0.0,
                                MomentField* sigma_used = nullptr, int threads = 1,
                                TrappedBoundary outer = TrappedBoundary::vacuum) {
    if (!(dt > 0.0)) {
        throw InvalidArgument("trapped_step: dt must be positive");
    }
    const MaterialTable table(model, grid, t);
    const double s = grid.c() * dt / time_weight(model);
    const int nr = grid.n_r();
    const auto& w = grid.omega_groups();
    MomentField out(grid, MomentRole::beta_t);
    MomentField used(grid, MomentRole::residual);
    parallel_for(grid.n_omega(), threads, [&](int g) {
        const auto cond = detail::trapped_conductance(table, grid, g, outer);
        std::vector<double> a(nr, 0.0), b(nr, 0.0), c(nr, 0.0), d(nr, 0.0);
        for (int i = 0; i < nr; ++i) {
            const auto& m = table(i, g);
            const double adv = detail::omega_advection(beta_t, m, w, i, g);
            b[i] = 1.0 + s * m.chi_tilde;
            d[i] = beta_t(i, g) + s * (m.j - adv);
            if (src.regime_at(i, g) == Regime::diffusion) {
                d[i] -= s * m.chi_tilde * beta_s(i, g);
                const double v = grid.volume(i);
                if (i > 0) {
                    a[i] = -s * cond[i] / v;
                    b[i] += s * cond[i] / v;
                }
                if (i < nr - 1) {
                    c[i] = -s * cond[i + 1] / v;
                }
                b[i] += s * cond[i + 1] / v;
            } else {
                d[i] -= s * src.sigma(i, g);
            }
        }
        const auto x = detail::solve_tridiagonal(a, b, c, d);
        for (int i = 0; i < nr; ++i) {
            out(i, g) = x[i];
            if (src.regime_at(i, g) == Regime::diffusion) {
                const double fp = cond[i + 1] * ((i < nr - 1 ? x[i + 1] : 0.0) - x[i]);
                const double fm = i > 0 ? cond[i] * (x[i] - x[i - 1]) : 0.0;
                used(i, g) = -(fp - fm) / grid.volume(i) + table(i, g).chi_tilde * beta_s(i, g);
            } else {
                used(i, g) = src.sigma(i, g);
            }
        }
    });
    if (sigma_used != nullptr) {
        *sigma_used = std::move(used);
    }
    return out;
}

struct StreamingResult {
    explicit StreamingResult(const PhaseGrid& g) : beta_s(g, MomentRole::beta_s) {}
    MomentField beta_s;
    double min_value = 0.0;
    int clipped = 0;
    std::vector<std::string> warnings;
};

/// Scattering-sphere radius per group at time t.
inline std::vector<double> scattering_spheres(const MatterModel& model, const PhaseGrid& grid,
                                              double tau_threshold = 2.0 / 3.0, double t = 0.0) {
    std::vector<double> r(grid.n_omega());
    for (int g = 0; g < grid.n_omega(); ++g) {
        r[g] = scattering_sphere_radius(model, grid.omega_groups()[g], tau_threshold, t);
    }
    return r;
}

using FluxFactorFn = std::function<double(double r, int group)>;

/// Integrates (1/r^2) d_r(r^2 FF beta_s) = -chi_tilde beta_s + Sigma outward in the flux
/// variable Psi = r^2 FF beta_s, with Psi = 0 at the inner edge.
inline StreamingResult streaming_solve(const MomentField& sigma, const MatterModel& model, const PhaseGrid& grid,
                                       const FluxFactorFn& ff_override = {}, double t = 0.0,
                                       double tau_threshold = 2.0 / 3.0) {
    if (!sigma.matches(grid)) {
        throw InvalidArgument("streaming_solve: source does not match grid");
    }
    const MaterialTable table(model, grid, t);
    std::vector<double> r_nu;
    if (!ff_override) {
        r_nu = scattering_spheres(model, grid, tau_threshold, t);
    }
    StreamingResult res(grid);
    const int nr = grid.n_r();
    const auto& re = grid.r_edges();
    for (int g = 0; g < grid.n_omega(); ++g) {
        double psi = 0.0;
        for (int i = 0; i < nr; ++i) {
            const double ff = ff_override ? ff_override(re[i + 1], g)
                                          : flux_factor(re[i + 1], grid.omega_groups()[g], r_nu[g]);
            const double af = grid.area(i + 1) * ff;
            const double v = grid.volume(i);
            psi = (psi + v * sigma(i, g)) / (1.0 + v * table(i, g).chi_tilde / af);
            res.beta_s(i, g) = psi / af;
        }
    }
    for (int i = 0; i < nr; ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            double& b = res.beta_s(i, g);
            res.min_value = std::min(res.min_value, b);
            if (b < 0.0) {
                if (b < -1e-10) {
                    ++res.clipped;
                }
                b = 0.0;
            }
        }
    }
    if (res.clipped > 0) {
        res.warnings.push_back("streaming closure produced " + std::to_string(res.clipped) +
                               " negative values below -1e-10; clipped to 0");
    }
    return res;
}

struct IDSAOptions {
    LimiterVariant variant = LimiterVariant::idsa;
    double dt = 0.0;  // default: one light-crossing time of the smallest cell
    int cadence = 1;
    double tau_threshold = 2.0 / 3.0;
    TrappedBoundary outer = TrappedBoundary::vacuum;
    double streaming_tol = kStreamingTolerance;
    int threads = 1;
};

struct IDSASolution {
    std::vector<double> times;
    std::vector<MomentField> beta_t;
    std::vector<MomentField> beta_s;
    std::vector<SourceField> source;
    MomentField flux_factor;
    std::vector<double> r_nu;
    std::vector<std::string> diagnostics;
    int steps = 0;
    std::string time_variable = "t";

    explicit IDSASolution(const PhaseGrid& g) : flux_factor(g, MomentRole::residual) {}
};

inline IDSASolution idsa_run(const MatterModel& model, const PhaseGrid& grid, const MomentField& beta_t_init,
                             double t_end, const IDSAOptions& opt = {}) {
    if (!(t_end >= 0.0)) {
        throw InvalidArgument("idsa_run: t_end must be non-negative");
    }
    if (!beta_t_init.matches(grid)) {
        throw InvalidArgument("idsa_run: initial field does not match grid");
    }
    IDSASolution sol(grid);
    sol.time_variable = scales_time(model.scaling) ? "t_bar" : "t";
    sol.r_nu = scattering_spheres(model, grid, opt.tau_threshold);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            sol.flux_factor(i, g) = flux_factor(grid.r_centers()[i], grid.omega_groups()[g], sol.r_nu[g]);
        }
    }
    const FluxFactorFn ff = [&](double r, int g) { return flux_factor(r, grid.omega_groups()[g], sol.r_nu[g]); };
    auto note = [&](const StreamingResult& s, double t) {
        for (const auto& w : s.warnings) {
            sol.diagnostics.push_back("t=" + std::to_string(t) + ": " + w);
        }
    };

    MomentField beta_t = beta_t_init.with_role(MomentRole::beta_t);
    MomentField zero(grid, MomentRole::beta_s, 0.0);
    SourceField src = limit_field(compute_sigma_ids(beta_t, zero, model, grid, 0.0, opt.outer), zero, model, grid, opt.variant, 0.0, opt.streaming_tol);
    StreamingResult str = streaming_solve(src.sigma, model, grid, ff, 0.0);
    note(str, 0.0);
    MomentField beta_s = str.beta_s;
    sol.times.push_back(0.0);
    sol.beta_t.push_back(beta_t);
    sol.beta_s.push_back(beta_s);
    sol.source.push_back(src);

    const double dt_default = time_weight(model) * grid.min_dr() / grid.c();
    const double dt_nominal = opt.dt > 0.0 ? opt.dt : dt_default;
    const int cadence = std::max(1, opt.cadence);
    double t = 0.0;
    bool recorded_last = true;
    while (t < t_end) {
        double dt = dt_nominal;
        if (t + dt >= t_end * (1.0 - 1e-14)) {
            dt = t_end - t;
        }
        src = limit_field(compute_sigma_ids(beta_t, beta_s, model, grid, t, opt.outer), beta_s, model, grid, opt.variant, t, opt.streaming_tol);
        MomentField used(grid, MomentRole::residual);
        beta_t = trapped_step(beta_t, src, beta_s, model, grid, dt, t, &used, opt.threads, opt.outer);
        str = streaming_solve(used, model, grid, ff, t);
        t = (dt == t_end - t) ? t_end : t + dt;
        note(str, t);
        beta_s = str.beta_s;
        ++sol.steps;
        recorded_last = false;
        if (sol.steps % cadence == 0) {
            sol.times.push_back(t);
            sol.beta_t.push_back(beta_t);
            sol.beta_s.push_back(beta_s);
            sol.source.push_back(src);
            recorded_last = true;
        }
    }
    if (!recorded_last) {
        sol.times.push_back(t);
        sol.beta_t.push_back(beta_t);
        sol.beta_s.push_back(beta_s);
        sol.source.push_back(src);
    }
    return sol;
}

inline IDSASolution idsa_run(const MatterModel& model, const PhaseGrid& grid, const MomentField& beta_t_init,
                             double t_end, LimiterVariant variant) {
    IDSAOptions opt;
    opt.variant = variant;
    return idsa_run(model, grid, beta_t_init, t_end, opt);
}

}  // namespace nutrans
