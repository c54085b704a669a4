#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "nutrans/asymptotics.hpp"
#include "nutrans/boltzmann.hpp"
#include "nutrans/idsa.hpp"

namespace nutrans {

/// Round-trip decimal form used in every CSV cell.
inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Columns t, r, omega, beta, H, s for every recorded snapshot.
inline void write_moments_csv(std::ostream& out, const BoltzmannSolution& sol, const PhaseGrid& grid) {
    out << sol.time_variable << ",r,omega,beta,H,s\n";
    for (std::size_t n = 0; n < sol.times.size(); ++n) {
        for (int i = 0; i < grid.n_r(); ++i) {
            for (int g = 0; g < grid.n_omega(); ++g) {
                out << fmt(sol.times[n]) << ',' << fmt(grid.r_centers()[i]) << ',' << fmt(grid.omega_groups()[g])
                    << ',' << fmt(sol.beta[n](i, g)) << ',' << fmt(sol.first_moment[n](i, g)) << ','
                    << fmt(sol.interaction_rate[n](i, g)) << '\n';
            }
        }
    }
}

inline void write_ledger_csv(std::ostream& out, const BoltzmannSolution& sol) {
    out << "t,dt,n_before,n_after,emission,absorption,outflow,plus_terms,relative_imbalance\n";
    for (const auto& e : sol.ledger) {
        out << fmt(e.t) << ',' << fmt(e.dt) << ',' << fmt(e.n_before) << ',' << fmt(e.n_after) << ',' << fmt(e.emission) << ','
            << fmt(e.absorption) << ',' << fmt(e.boundary_outflow) << ',' << fmt(e.plus_terms) << ','
            << fmt(e.imbalance) << '\n';
    }
}

/// Columns t, r, omega, beta_t, beta_s, sigma_ids, sigma, regime, flux_factor for every snapshot.
inline void write_idsa_csv(std::ostream& out, const IDSASolution& sol, const PhaseGrid& grid) {
    out << sol.time_variable << ",r,omega,beta_t,beta_s,sigma_ids,sigma,regime,flux_factor\n";
    for (std::size_t n = 0; n < sol.times.size(); ++n) {
        const auto& src = sol.source[n];
        for (int i = 0; i < grid.n_r(); ++i) {
            for (int g = 0; g < grid.n_omega(); ++g) {
                out << fmt(sol.times[n]) << ',' << fmt(grid.r_centers()[i]) << ',' << fmt(grid.omega_groups()[g])
                    << ',' << fmt(sol.beta_t[n](i, g)) << ',' << fmt(sol.beta_s[n](i, g)) << ','
                    << fmt(src.sigma_ids(i, g)) << ',' << fmt(src.sigma(i, g)) << ','
                    << to_string(src.regime_at(i, g)) << ',' << fmt(sol.flux_factor(i, g)) << '\n';
            }
        }
    }
}

/// Columns epsilon, error, slope (slope against the previous row), then a verdict line.
inline void write_sweep_csv(std::ostream& out, const ConvergenceReport& rep) {
    out << "epsilon,error,slope\n";
    for (std::size_t n = 0; n < rep.epsilons.size(); ++n) {
        const double slope = n == 0 ? std::nan("")
                                    : std::log(rep.errors[n - 1] / rep.errors[n]) /
                                          std::log(rep.epsilons[n - 1] / rep.epsilons[n]);
        out << fmt(rep.epsilons[n]) << ',' << fmt(rep.errors[n]) << ',' << fmt(slope) << '\n';
    }
    out << "# " << verdict(rep) << '\n';
}

inline void write_sweep_details_csv(std::ostream& out, const ConvergenceReport& rep) {
    out << "epsilon,error,reference_norm,solver_residual,iterations\n";
    for (std::size_t n = 0; n < rep.epsilons.size(); ++n) {
        out << fmt(rep.epsilons[n]) << ',' << fmt(rep.errors[n]) << ',' << fmt(rep.reference_norms[n]) << ','
            << fmt(rep.solver_residuals[n]) << ',' << rep.iterations[n] << '\n';
    }
    out << "# fitted_slope=" << fmt(rep.fitted_slope) << " stderr=" << fmt(rep.slope_stderr)
        << " discretization_floor=" << fmt(rep.discretization_floor) << " solver_floor=" << fmt(rep.solver_floor)
        << '\n';
}

struct CompareRow {
    double omega = 0.0;
    double beta_difference = 0.0;  // relative L2(r^2 dr) of beta_Boltzmann - (beta_t + beta_s)
    double flux_difference = 0.0;  // relative L2(r^2 dr) of H - FF beta_s
    double diffusion = 0.0;        // regime occupancy fractions of the final snapshot
    double reaction = 0.0;
    double free_streaming = 0.0;
};

namespace detail {

inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b, const PhaseGrid& grid) {
    double num = 0.0;
    double den = 0.0;
    for (int i = 0; i < grid.n_r(); ++i) {
        num += grid.volume(i) * (a[i] - b[i]) * (a[i] - b[i]);
        den += grid.volume(i) * a[i] * a[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace detail

/// Final-snapshot comparison per energy group.
inline std::vector<CompareRow> compare_report(const BoltzmannSolution& boltz, const IDSASolution& idsa,
                                              const PhaseGrid& grid) {
    if (boltz.beta.empty() || idsa.beta_t.empty()) {
        throw InvalidArgument("compare_report: empty solution history");
    }
    const auto& beta = boltz.beta.back();
    const auto& h = boltz.first_moment.back();
    const auto& bt = idsa.beta_t.back();
    const auto& bs = idsa.beta_s.back();
    const auto& src = idsa.source.back();
    if (!beta.matches(grid) || !h.matches(grid) || !bt.matches(grid) || !bs.matches(grid) ||
        !idsa.flux_factor.matches(grid) || src.regime.size() != static_cast<std::size_t>(grid.n_r() * grid.n_omega())) {
        throw InvalidArgument("compare_report: solutions do not match grid");
    }
    std::vector<CompareRow> rows;
    const int nr = grid.n_r();
    for (int g = 0; g < grid.n_omega(); ++g) {
        std::vector<double> b0(nr), b1(nr), h0(nr), h1(nr);
        for (int i = 0; i < nr; ++i) {
            b0[i] = beta(i, g);
            b1[i] = bt(i, g) + bs(i, g);
            h0[i] = h(i, g);
            h1[i] = idsa.flux_factor(i, g) * bs(i, g);
        }
        CompareRow row;
        row.omega = grid.omega_groups()[g];
        row.beta_difference = detail::relative_l2(b0, b1, grid);
        row.flux_difference = detail::relative_l2(h0, h1, grid);
        int counts[3] = {0, 0, 0};
        for (int i = 0; i < nr; ++i) {
            ++counts[static_cast<int>(src.regime_at(i, g))];
        }
        row.diffusion = static_cast<double>(counts[static_cast<int>(Regime::diffusion)]) / nr;
        row.reaction = static_cast<double>(counts[static_cast<int>(Regime::reaction)]) / nr;
        row.free_streaming = static_cast<double>(counts[static_cast<int>(Regime::free_streaming)]) / nr;
        rows.push_back(row);
    }
    return rows;
}

inline void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
    out << "omega,beta_rel_l2,flux_rel_l2,diffusion_fraction,reaction_fraction,free_streaming_fraction\n";
    for (const auto& r : rows) {
        out << fmt(r.omega) << ',' << fmt(r.beta_difference) << ',' << fmt(r.flux_difference) << ','
            << fmt(r.diffusion) << ',' << fmt(r.reaction) << ',' << fmt(r.free_streaming) << '\n';
    }
}

/// Final-snapshot regime tags, one row per (r, omega).
inline void write_regime_map_csv(std::ostream& out, const IDSASolution& sol, const PhaseGrid& grid) {
    out << "r,omega,regime\n";
    const auto& src = sol.source.back();
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            out << fmt(grid.r_centers()[i]) << ',' << fmt(grid.omega_groups()[g]) << ','
                << to_string(src.regime_at(i, g)) << '\n';
        }
    }
}

}  // namespace nutrans
