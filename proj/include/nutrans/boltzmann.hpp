#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nutrans/errors.hpp"
#include "nutrans/grid.hpp"
#include "nutrans/kinetics.hpp"
#include "nutrans/matter.hpp"
#include "nutrans/parallel.hpp"

namespace nutrans {

/// Particle balance of one step, all groups summed. Terms are integrated over the step.
struct LedgerEntry {
    double t = 0.0;
    double dt = 0.0;
    double n_before = 0.0;
    double n_after = 0.0;
    double emission = 0.0;
    double absorption = 0.0;
    double boundary_outflow = 0.0;
    double plus_terms = 0.0;
    double imbalance = 0.0;  // relative

    double predicted_change() const { return emission - absorption - boundary_outflow - plus_terms; }
};

/// Discretization used by the explicit stepper: conservative, upwind in r and mu.
inline TransportOptions explicit_transport() {
    TransportOptions o;
    o.form = RadialForm::finite_volume;
    o.radial = RadialDifference::upwind;
    o.angular = AngularDifference::upwind;
    o.boundary = RadialBoundary::physical;
    return o;
}

/// Discretization used by the implicit stepper: conservative, centered in r, weighted diamond in mu.
inline TransportOptions implicit_transport() {
    TransportOptions o;
    o.form = RadialForm::finite_volume;
    o.radial = RadialDifference::centered;
    o.angular = AngularDifference::weighted_diamond;
    o.boundary = RadialBoundary::physical;
    return o;
}

struct StepOptions {
    TransportOptions transport = explicit_transport();
    double t = 0.0;
    int threads = 1;
};

struct StepReport {
    double dt_max = 0.0;
    double cfl = 0.0;
    LedgerEntry ledger;
};

inline double particle_count(const DistributionField& f, const PhaseGrid& grid) {
    double n = 0.0;
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            n += grid.volume(i) * angular_moment(f.slice(i, g), 0, grid);
        }
    }
    return n;
}

inline MomentField total_interaction_rate(const DistributionField& f, const MatterModel& model, const PhaseGrid& grid,
                                          double t = 0.0) {
    if (!f.matches(grid)) {
        throw InvalidArgument("total_interaction_rate: field does not match grid");
    }
    const MaterialTable table(model, grid, t);
    MomentField s(grid, MomentRole::residual);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            const auto& st = table(i, g);
            s(i, g) = st.j - st.chi_tilde * angular_moment(f.slice(i, g), 0, grid);
        }
    }
    return s;
}

namespace detail {

/// Largest explicit step keeping the update a convex combination of old values and
/// respecting c dt / tau <= min dr.
inline double stable_time_step(const MatterModel& model, const PhaseGrid& grid, const MaterialTable& table,
                               const TransportStencils& st) {
    const int nm = grid.n_mu();
    const auto& mu = grid.mu_nodes();
    const auto& w = grid.omega_groups();
    double dmax = 0.0;
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int k = 0; k < nm; ++k) {
            double dminus = 0.0;
            for (const auto& term : st.minus_row(i, k)) {
                if (term.i == i && term.k == k) {
                    dminus += term.c;
                }
            }
            for (int g = 0; g < grid.n_omega(); ++g) {
                const auto p = plus_coefficients(table(i, g), grid.r_centers()[i], mu[k], w[g], grid.c());
                double d = dminus;
                if (p.v_over_c != 0.0) {
                    const auto s = st.nodal_upwind(i, k, p.v_over_c < 0.0);
                    for (int a = 0; a < s.n; ++a) {
                        if (s.t[a].i == i && s.t[a].k == k) {
                            d += p.v_over_c * s.t[a].c;
                        }
                    }
                }
                if (p.f_mu > 0.0 && k > 0) {
                    d += p.f_mu / (mu[k] - mu[k - 1]);
                } else if (p.f_mu < 0.0 && k < nm - 1) {
                    d += -p.f_mu / (mu[k + 1] - mu[k]);
                }
                if (p.f_omega > 0.0 && g > 0) {
                    d += p.f_omega / (w[g] - w[g - 1]);
                } else if (p.f_omega < 0.0 && g < grid.n_omega() - 1) {
                    d += -p.f_omega / (w[g + 1] - w[g]);
                }
                dmax = std::max(dmax, d);
            }
        }
    }
    const double tau = time_weight(model);
    double smax = grid.min_dr();
    if (dmax > 0.0) {
        smax = std::min(smax, 1.0 / dmax);
    }
    return tau * smax / grid.c();
}

inline void check_denominator(double d) {
    if (!(std::isfinite(d) && d > 0.0)) {
        throw SingularOpacity("implicit collision stage: non-invertible system");
    }
}

/// Backward-Euler reaction and truncated collision step for one (r, omega) slice, in place.
/// Returns the new zeroth moment.
inline double implicit_collision_solve(std::span<double> f, const MaterialState& m, double s,
                                       const QuadratureRule& rule) {
    const double beta_star = angular_moment(f, 0, rule);
    const double h_star = angular_moment(f, 1, rule);
    const double d_beta = 1.0 + s * m.chi_tilde;
    const double d_h = 1.0 + s * (m.chi_tilde + m.phi0 - m.phi1);
    const double d_f = 1.0 + s * (m.chi_tilde + m.phi0);
    check_denominator(d_beta);
    check_denominator(d_h);
    check_denominator(d_f);
    const double beta = (beta_star + s * m.j) / d_beta;
    const double h = h_star / d_h;
    for (std::size_t k = 0; k < f.size(); ++k) {
        f[k] = (f[k] + s * (m.j + m.phi0 * beta + 3.0 * rule.nodes[k] * m.phi1 * h)) / d_f;
    }
    return beta;
}

inline double relative_imbalance(const LedgerEntry& e) {
    const double change = e.n_after - e.n_before;
    const double scale = std::max({std::abs(e.n_before), std::abs(e.n_after), std::abs(e.emission),
                                   std::abs(e.absorption), std::abs(e.boundary_outflow), std::abs(e.plus_terms),
                                   std::numeric_limits<double>::min()});
    return std::abs(change - e.predicted_change()) / scale;
}

}  // namespace detail

inline double stable_time_step(const MatterModel& model, const PhaseGrid& grid, double t = 0.0,
                               const TransportOptions& opt = explicit_transport()) {
    const MaterialTable table(model, grid, t);
    const TransportStencils st(grid, opt);
    return detail::stable_time_step(model, grid, table, st);
}

/// One IMEX step: explicit transport, implicit emission, absorption and truncated scattering.
inline DistributionField step(const DistributionField& f, double dt, const MatterModel& model, const PhaseGrid& grid,
                              const StepOptions& opt = {}, StepReport* report = nullptr) {
    if (!f.matches(grid)) {
        throw InvalidArgument("step: field does not match grid");
    }
    if (!(dt > 0.0)) {
        throw InvalidArgument("step: dt must be positive");
    }
    const MaterialTable table(model, grid, opt.t);
    const TransportStencils st(grid, opt.transport);
    const double dt_max = detail::stable_time_step(model, grid, table, st);
    if (dt > dt_max * (1.0 + 1e-12)) {
        throw StepRejected("step: time step exceeds the explicit stability limit", 0.9 * dt_max);
    }
    const double s = grid.c() * dt / time_weight(model);
    const int nr = grid.n_r();
    const int nm = grid.n_mu();
    const int nw = grid.n_omega();
    const auto& wts = grid.mu_weights();

    DistributionField out(grid);
    std::vector<double> emission(nw, 0.0), absorption(nw, 0.0), outflow(nw, 0.0), plus(nw, 0.0);
    parallel_for(nw, opt.threads, [&](int g) {
        for (int i = 0; i < nr; ++i) {
            for (int k = 0; k < nm; ++k) {
                const double p = plus_advective(f, st, grid, table(i, g), i, k, g);
                plus[g] += grid.volume(i) * 0.5 * wts[k] * p;
                out(i, k, g) = f(i, k, g) - s * (st.minus(f, i, k, g) + p);
            }
        }
        outflow[g] = st.face_flux(f, nr, g) - st.face_flux(f, 0, g);
        std::vector<double> slice(nm);
        for (int i = 0; i < nr; ++i) {
            for (int k = 0; k < nm; ++k) {
                slice[k] = out(i, k, g);
            }
            const auto& m = table(i, g);
            const double beta = detail::implicit_collision_solve(slice, m, s, grid.rule());
            for (int k = 0; k < nm; ++k) {
                out(i, k, g) = slice[k];
            }
            emission[g] += grid.volume(i) * m.j;
            absorption[g] += grid.volume(i) * m.chi_tilde * beta;
        }
    });
    if (report != nullptr) {
        LedgerEntry& e = report->ledger;
        e = LedgerEntry{};
        e.t = opt.t;
        e.dt = dt;
        e.n_before = particle_count(f, grid);
        e.n_after = particle_count(out, grid);
        for (int g = 0; g < nw; ++g) {
            e.emission += s * emission[g];
            e.absorption += s * absorption[g];
            e.boundary_outflow += s * outflow[g];
            e.plus_terms += s * plus[g];
        }
        e.imbalance = detail::relative_imbalance(e);
        report->dt_max = dt_max;
        report->cfl = dt / dt_max;
    }
    return out;
}

inline DistributionField step(const DistributionField& f, double dt, const MatterModel& model, const PhaseGrid& grid,
                              ScalingMode scaling, const StepOptions& opt = {}, StepReport* report = nullptr) {
    return step(f, dt, apply_scaling(model, model.epsilon, scaling), grid, opt, report);
}

struct BoltzmannSolution {
    DistributionField final_field;
    std::vector<double> times;
    std::vector<MomentField> beta;
    std::vector<MomentField> first_moment;
    std::vector<MomentField> interaction_rate;
    std::vector<LedgerEntry> ledger;
    std::vector<double> cfl;
    int steps = 0;
    bool reached_steady_state = false;
    std::string time_variable = "t";
};

struct SolveOptions {
    double cfl = 0.9;          // fraction of the stability limit
    double fixed_dt = 0.0;     // used instead of the adaptive step when positive
    int cadence = 1;           // record moments every `cadence` steps (and at the end)
    double steady_tol = 0.0;   // stop once max |f' - f| falls below this, when positive
    long max_steps = 100000000;
    StepOptions step;
};

namespace detail {

inline void record(BoltzmannSolution& sol, const DistributionField& f, const MatterModel& model,
                   const PhaseGrid& grid, double t) {
    sol.times.push_back(t);
    sol.beta.push_back(moment_field(f, grid, 0));
    auto h = moment_field(f, grid, 1);
    sol.first_moment.push_back(std::move(h));
    sol.interaction_rate.push_back(total_interaction_rate(f, model, grid, t));
}

inline double max_abs_difference(const DistributionField& a, const DistributionField& b) {
    double m = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        m = std::max(m, std::abs(a.values()[q] - b.values()[q]));
    }
    return m;
}

}  // namespace detail

inline BoltzmannSolution solve(const MatterModel& model, const PhaseGrid& grid, const DistributionField& f_init,
                               double t_end, const SolveOptions& opt = {}) {
    if (!(t_end >= 0.0)) {
        throw InvalidArgument("solve: t_end must be non-negative");
    }
    if (!f_init.matches(grid)) {
        throw InvalidArgument("solve: initial field does not match grid");
    }
    BoltzmannSolution sol;
    sol.time_variable = scales_time(model.scaling) ? "t_bar" : "t";
    sol.final_field = f_init;
    detail::record(sol, f_init, model, grid, 0.0);
    double t = 0.0;
    const int cadence = std::max(1, opt.cadence);
    bool recorded_last = true;
    while (t < t_end && sol.steps < opt.max_steps) {
        StepOptions so = opt.step;
        so.t = t;
        double dt;
        if (opt.fixed_dt > 0.0) {
            dt = opt.fixed_dt;
        } else {
            dt = opt.cfl * stable_time_step(model, grid, t, so.transport);
        }
        if (t + dt >= t_end * (1.0 - 1e-14)) {
            dt = t_end - t;
        }
        StepReport rep;
        DistributionField next = step(sol.final_field, dt, model, grid, so, &rep);
        const double change = detail::max_abs_difference(next, sol.final_field);
        sol.final_field = std::move(next);
        t = (dt == t_end - t) ? t_end : t + dt;
        ++sol.steps;
        sol.ledger.push_back(rep.ledger);
        sol.cfl.push_back(rep.cfl);
        recorded_last = false;
        if (sol.steps % cadence == 0) {
            detail::record(sol, sol.final_field, model, grid, t);
            recorded_last = true;
        }
        if (opt.steady_tol > 0.0 && change < opt.steady_tol) {
            sol.reached_steady_state = true;
            break;
        }
    }
    if (!recorded_last) {
        detail::record(sol, sol.final_field, model, grid, t);
    }
    return sol;
}

inline BoltzmannSolution solve(const MatterModel& model, const PhaseGrid& grid, const DistributionField& f_init,
                               double t_end, ScalingMode scaling, const SolveOptions& opt = {}) {
    return solve(apply_scaling(model, model.epsilon, scaling), grid, f_init, t_end, opt);
}

/// Backward-Euler stepper treating D^- and the collision terms implicitly, per energy group,
/// with the symmetric-part advective terms explicit. Uses the centered conservative stencil
/// so that the thick-medium limit of the scheme is a consistent diffusion discretization.
class ImplicitStepper {
public:
    ImplicitStepper(const MatterModel& model, const PhaseGrid& grid, TransportOptions opt = implicit_transport(),
                    int threads = 1)
        : model_(model), grid_(grid), opt_(opt), st_(grid_, opt_), table_(model_, grid_, 0.0), threads_(threads) {}
    ImplicitStepper(const ImplicitStepper&) = delete;
    ImplicitStepper& operator=(const ImplicitStepper&) = delete;

    const TransportStencils& stencils() const { return st_; }

    /// One step of size dt in the model's evolution time; dt = infinity drops the time derivative.
    DistributionField step(const DistributionField& f, double dt, double t = 0.0, LedgerEntry* ledger = nullptr) {
        if (!f.matches(grid_)) {
            throw InvalidArgument("ImplicitStepper: field does not match grid");
        }
        if (!(dt > 0.0)) {
            throw InvalidArgument("ImplicitStepper: dt must be positive");
        }
        const double inv_s = std::isinf(dt) ? 0.0 : time_weight(model_) / (grid_.c() * dt);
        factorize(inv_s);
        const MaterialTable table(model_, grid_, t);
        const int nr = grid_.n_r();
        const int nm = grid_.n_mu();
        const int nw = grid_.n_omega();
        DistributionField out(grid_);
        std::vector<double> plus(nw, 0.0);
        parallel_for(nw, threads_, [&](int g) {
            Eigen::VectorXd rhs(nr * nm);
            for (int i = 0; i < nr; ++i) {
                for (int k = 0; k < nm; ++k) {
                    const double p = plus_advective(f, st_, grid_, table(i, g), i, k, g);
                    plus[g] += grid_.volume(i) * 0.5 * grid_.mu_weights()[k] * p;
                    rhs(i * nm + k) = inv_s * f(i, k, g) + table(i, g).j - p;
                }
            }
            const Eigen::VectorXd x = lu_[g]->solve(rhs);
            if (lu_[g]->info() != Eigen::Success) {
                throw SingularOpacity("ImplicitStepper: linear solve failed");
            }
            for (int i = 0; i < nr; ++i) {
                for (int k = 0; k < nm; ++k) {
                    out(i, k, g) = x(i * nm + k);
                }
            }
        });
        for (double v : out.values()) {
            if (!std::isfinite(v)) {
                throw SingularOpacity("ImplicitStepper: non-finite solution");
            }
        }
        if (ledger != nullptr && inv_s > 0.0) {
            const double s = 1.0 / inv_s;
            LedgerEntry& e = *ledger;
            e = LedgerEntry{};
            e.t = t;
            e.dt = dt;
            e.n_before = particle_count(f, grid_);
            e.n_after = particle_count(out, grid_);
            for (int g = 0; g < nw; ++g) {
                for (int i = 0; i < nr; ++i) {
                    const auto& m = table(i, g);
                    e.emission += s * grid_.volume(i) * m.j;
                    e.absorption += s * grid_.volume(i) * m.chi_tilde * angular_moment(out.slice(i, g), 0, grid_);
                }
                e.boundary_outflow += s * (st_.face_flux(out, nr, g) - st_.face_flux(out, 0, g));
                e.plus_terms += s * plus[g];
            }
            e.imbalance = detail::relative_imbalance(e);
        }
        return out;
    }

    /// Stationary solution: fixed-point iteration on the explicit symmetric-part terms.
    DistributionField steady_state(const DistributionField& f_init, double tol, int max_iter, int* iterations = nullptr,
                                   double t = 0.0) {
        DistributionField f = f_init;
        const double inf = std::numeric_limits<double>::infinity();
        for (int it = 1; it <= max_iter; ++it) {
            DistributionField next = step(f, inf, t);
            const double change = detail::max_abs_difference(next, f);
            f = std::move(next);
            if (change <= tol) {
                if (iterations != nullptr) {
                    *iterations = it;
                }
                return f;
            }
        }
        if (iterations != nullptr) {
            *iterations = max_iter;
        }
        return f;
    }

private:
    void factorize(double inv_s) {
        if (!lu_.empty() && inv_s == cached_inv_s_) {
            return;
        }
        lu_.clear();
        const int nr = grid_.n_r();
        const int nm = grid_.n_mu();
        const int n = nr * nm;
        const auto& mu = grid_.mu_nodes();
        const auto& w = grid_.mu_weights();
        std::vector<std::vector<detail::Term>> rows(n);
        for (int i = 0; i < nr; ++i) {
            for (int k = 0; k < nm; ++k) {
                rows[i * nm + k] = st_.minus_row(i, k);
            }
        }
        lu_.resize(grid_.n_omega());
        parallel_for(grid_.n_omega(), threads_, [&](int g) {
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(static_cast<std::size_t>(n) * (nm + 8));
            for (int i = 0; i < nr; ++i) {
                const auto& m = table_(i, g);
                for (int k = 0; k < nm; ++k) {
                    const int row = i * nm + k;
                    trip.emplace_back(row, row, inv_s + m.chi_tilde + m.phi0);
                    for (int kp = 0; kp < nm; ++kp) {
                        const double c = -0.5 * w[kp] * (m.phi0 + 3.0 * mu[k] * m.phi1 * mu[kp]);
                        trip.emplace_back(row, i * nm + kp, c);
                    }
                    for (const auto& term : rows[row]) {
                        trip.emplace_back(row, term.i * nm + term.k, term.c);
                    }
                }
            }
            Eigen::SparseMatrix<double> a(n, n);
            a.setFromTriplets(trip.begin(), trip.end());
            a.makeCompressed();
            auto lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
            lu->compute(a);
            if (lu->info() != Eigen::Success) {
                throw SingularOpacity("ImplicitStepper: factorization failed");
            }
            lu_[g] = std::move(lu);
        });
        cached_inv_s_ = inv_s;
    }

    MatterModel model_;
    PhaseGrid grid_;
    TransportOptions opt_;
    TransportStencils st_;
    MaterialTable table_;
    int threads_;
    double cached_inv_s_ = -1.0;
    std::vector<std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>>> lu_;
};

/// Fixed-step time loop over the implicit stepper, recorded like `solve`.
inline BoltzmannSolution solve_implicit(const MatterModel& model, const PhaseGrid& grid,
                                        const DistributionField& f_init, double t_end, double dt, int cadence = 1,
                                        int threads = 1) {
    if (!(t_end >= 0.0) || !(dt > 0.0)) {
        throw InvalidArgument("solve_implicit: need t_end >= 0 and dt > 0");
    }
    ImplicitStepper stepper(model, grid, implicit_transport(), threads);
    BoltzmannSolution sol;
    sol.time_variable = scales_time(model.scaling) ? "t_bar" : "t";
    sol.final_field = f_init;
    detail::record(sol, f_init, model, grid, 0.0);
    double t = 0.0;
    bool recorded_last = true;
    while (t < t_end) {
        double h = dt;
        if (t + h >= t_end * (1.0 - 1e-14)) {
            h = t_end - t;
        }
        LedgerEntry e;
        sol.final_field = stepper.step(sol.final_field, h, t, &e);
        t = (h == t_end - t) ? t_end : t + h;
        ++sol.steps;
        sol.ledger.push_back(e);
        recorded_last = false;
        if (sol.steps % std::max(1, cadence) == 0) {
            detail::record(sol, sol.final_field, model, grid, t);
            recorded_last = true;
        }
    }
    if (!recorded_last) {
        detail::record(sol, sol.final_field, model, grid, t);
    }
    return sol;
}

}  // namespace nutrans
