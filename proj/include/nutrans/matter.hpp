#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nutrans/errors.hpp"
#include "nutrans/grid.hpp"

namespace nutrans {

/// Piecewise-linear table; constant beyond the end knots, constant if one knot.
struct PiecewiseLinear {
    std::vector<double> x;
    std::vector<double> y;

    PiecewiseLinear() = default;
    PiecewiseLinear(std::vector<double> xs, std::vector<double> ys) : x(std::move(xs)), y(std::move(ys)) {
        if (x.size() != y.size() || x.empty()) {
            throw InvalidArgument("PiecewiseLinear: knot and value counts differ or are empty");
        }
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (!(x[i] > x[i - 1])) {
                throw InvalidArgument("PiecewiseLinear: knots must be strictly increasing");
            }
        }
    }
    static PiecewiseLinear constant(double v) { return PiecewiseLinear({0.0}, {v}); }

    bool empty() const { return x.empty(); }

    std::size_t segment(double r) const {
        auto it = std::upper_bound(x.begin(), x.end(), r);
        std::size_t s = static_cast<std::size_t>(it - x.begin());
        return s == 0 ? 0 : std::min(s - 1, x.size() - 2);
    }
    double operator()(double r) const {
        if (x.empty()) {
            return 0.0;
        }
        if (x.size() == 1 || r <= x.front()) {
            return y.front();
        }
        if (r >= x.back()) {
            return y.back();
        }
        const std::size_t s = segment(r);
        const double t = (r - x[s]) / (x[s + 1] - x[s]);
        return y[s] + t * (y[s + 1] - y[s]);
    }
    double slope(double r) const {
        if (x.size() < 2 || r < x.front() || r > x.back()) {
            return 0.0;
        }
        const std::size_t s = segment(r);
        return (y[s + 1] - y[s]) / (x[s + 1] - x[s]);
    }
};

enum class ScalingMode { none, reaction_collision, time, both };

inline bool scales_reactions(ScalingMode m) { return m == ScalingMode::reaction_collision || m == ScalingMode::both; }
inline bool scales_time(ScalingMode m) { return m == ScalingMode::time || m == ScalingMode::both; }

inline std::string to_string(ScalingMode m) {
    switch (m) {
        case ScalingMode::none: return "none";
        case ScalingMode::reaction_collision: return "reaction_collision";
        case ScalingMode::time: return "time";
        case ScalingMode::both: return "both";
    }
    return "none";
}

struct MaterialState {
    double rho = 0.0;
    double v = 0.0;
    double dlnrho_cdt = 0.0;
    double j = 0.0;
    double chi = 0.0;
    double chi_tilde = 0.0;
    double phi0 = 0.0;
    double phi1 = 0.0;
};

inline MaterialState make_state(double j, double chi, double phi0 = 0.0, double phi1 = 0.0) {
    MaterialState s;
    s.rho = 1.0;
    s.j = j;
    s.chi = chi;
    s.chi_tilde = j + chi;
    s.phi0 = phi0;
    s.phi1 = phi1;
    return s;
}

/// Background profiles. Rate tables hold the epsilon-independent (barred) values;
/// evaluate() applies the scaling selected by `scaling` and `epsilon`.
struct MatterModel {
    double radius = 1.0;
    double light_speed = 1.0;
    std::vector<double> omega_groups{1.0};

    PiecewiseLinear rho = PiecewiseLinear::constant(1.0);
    PiecewiseLinear v = PiecewiseLinear::constant(0.0);
    // one table for all groups, or one per group
    std::vector<PiecewiseLinear> j{PiecewiseLinear::constant(0.0)};
    std::vector<PiecewiseLinear> chi{PiecewiseLinear::constant(0.0)};
    std::vector<PiecewiseLinear> phi0{PiecewiseLinear::constant(0.0)};
    std::vector<PiecewiseLinear> phi1{PiecewiseLinear::constant(0.0)};
    // uniform d ln(rho)/(c dt) as a function of the evolution time; empty means none
    PiecewiseLinear compression;

    ScalingMode scaling = ScalingMode::none;
    double epsilon = 1.0;

    bool time_dependent() const { return compression.x.size() > 1; }
};

namespace detail {

inline const PiecewiseLinear& group_table(const std::vector<PiecewiseLinear>& t, int g) {
    if (t.empty()) {
        throw InvalidArgument("MatterModel: missing rate table");
    }
    return t.size() == 1 ? t.front() : t.at(static_cast<std::size_t>(g));
}

inline void check_group_tables(const MatterModel& m) {
    const std::size_t n = m.omega_groups.size();
    for (const auto* t : {&m.j, &m.chi, &m.phi0, &m.phi1}) {
        if (t->size() != 1 && t->size() != n) {
            throw InvalidArgument("MatterModel: rate tables must have one entry or one per group");
        }
    }
}

}  // namespace detail

inline MaterialState evaluate_group(const MatterModel& m, double r, int g, double t = 0.0) {
    if (r < 0.0 || r > m.radius * (1.0 + 1e-12)) {
        throw OutOfDomain("evaluate: radius outside [0, R]");
    }
    if (g < 0 || g >= static_cast<int>(m.omega_groups.size())) {
        throw OutOfDomain("evaluate: energy group out of range");
    }
    detail::check_group_tables(m);
    MaterialState s;
    s.rho = m.rho(r);
    s.j = detail::group_table(m.j, g)(r);
    s.chi = detail::group_table(m.chi, g)(r);
    s.phi0 = detail::group_table(m.phi0, g)(r);
    s.phi1 = detail::group_table(m.phi1, g)(r);
    double v = m.v(r);
    double comp = m.compression.empty() ? 0.0 : m.compression(t);
    if (scales_reactions(m.scaling)) {
        s.j /= m.epsilon;
        s.chi /= m.epsilon;
        s.phi0 /= m.epsilon;
        s.phi1 /= m.epsilon;
    }
    if (scales_time(m.scaling)) {
        v *= m.epsilon;
        comp *= m.epsilon;
    }
    s.v = v;
    // Lagrangian rate approximated by the uniform part plus advection of the static profile
    const double dlnrho_dr = s.rho > 0.0 ? m.rho.slope(r) / s.rho : 0.0;
    s.dlnrho_cdt = comp + v * dlnrho_dr / m.light_speed;
    s.chi_tilde = s.j + s.chi;
    return s;
}

inline MaterialState evaluate(const MatterModel& m, double r, double omega, double t = 0.0) {
    const auto& w = m.omega_groups;
    const double tol = 1e-12 * w.back();
    if (!(omega >= w.front() - tol && omega <= w.back() + tol)) {
        throw OutOfDomain("evaluate: omega outside the group range");
    }
    if (w.size() == 1) {
        return evaluate_group(m, r, 0, t);
    }
    auto it = std::upper_bound(w.begin(), w.end(), omega);
    int g = static_cast<int>(it - w.begin()) - 1;
    g = std::clamp(g, 0, static_cast<int>(w.size()) - 2);
    const double a = std::clamp((omega - w[g]) / (w[g + 1] - w[g]), 0.0, 1.0);
    if (a == 0.0) {
        return evaluate_group(m, r, g, t);
    }
    if (a == 1.0) {
        return evaluate_group(m, r, g + 1, t);
    }
    const MaterialState lo = evaluate_group(m, r, g, t);
    const MaterialState hi = evaluate_group(m, r, g + 1, t);
    MaterialState s = lo;
    s.j = lo.j + a * (hi.j - lo.j);
    s.chi = lo.chi + a * (hi.chi - lo.chi);
    s.phi0 = lo.phi0 + a * (hi.phi0 - lo.phi0);
    s.phi1 = lo.phi1 + a * (hi.phi1 - lo.phi1);
    s.chi_tilde = s.j + s.chi;
    return s;
}

inline double mean_free_path(const MaterialState& s) {
    const double den = s.chi_tilde + s.phi0 - s.phi1;
    if (!(den > 0.0)) {
        throw SingularOpacity("mean_free_path: chi_tilde + phi0 - phi1 must be positive");
    }
    return 1.0 / den;
}

/// Transport opacity 1/lambda without the positivity requirement.
inline double transport_opacity(const MaterialState& s) { return s.chi_tilde + s.phi0 - s.phi1; }

inline void validate_state(const MaterialState& s) {
    if (s.j < 0.0 || s.chi < 0.0) {
        throw InvalidArgument("MaterialState: j and chi must be non-negative");
    }
    if (std::abs(s.phi1) > s.phi0 * (1.0 + 1e-14)) {
        throw InvalidArgument("MaterialState: |phi1| must not exceed phi0");
    }
}

inline MatterModel apply_scaling(const MatterModel& m, double epsilon, ScalingMode mode) {
    if (!(epsilon > 0.0)) {
        throw InvalidArgument("apply_scaling: epsilon must be positive");
    }
    MatterModel out = m;
    out.scaling = mode;
    out.epsilon = epsilon;
    return out;
}

/// Largest radius whose inward optical depth from R reaches tau_threshold; 0 when transparent.
inline double scattering_sphere_radius(const MatterModel& m, double omega, double tau_threshold = 2.0 / 3.0,
                                       double t = 0.0) {
    std::vector<double> knots{0.0, m.radius};
    for (const auto* tables : {&m.j, &m.chi, &m.phi0, &m.phi1}) {
        for (const auto& tab : *tables) {
            for (double x : tab.x) {
                if (x > 0.0 && x < m.radius) {
                    knots.push_back(x);
                }
            }
        }
    }
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    auto kappa = [&](double r) { return std::max(0.0, transport_opacity(evaluate(m, r, omega, t))); };

    double tau = 0.0;
    for (std::size_t s = knots.size() - 1; s > 0; --s) {
        const double a = knots[s - 1];
        const double b = knots[s];
        const double ka = kappa(a);
        const double kb = kappa(b);
        const double seg = 0.5 * (ka + kb) * (b - a);
        if (tau + seg >= tau_threshold) {
            // depth accumulated from b inward to b - u is kb u - slope u^2 / 2, monotone in u
            const double need = tau_threshold - tau;
            const double slope = (kb - ka) / (b - a);
            auto depth = [&](double u) { return kb * u - 0.5 * slope * u * u; };
            double lo = 0.0;
            double hi = b - a;
            for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, b); ++it) {
                const double mid = 0.5 * (lo + hi);
                (depth(mid) >= need ? hi : lo) = mid;
            }
            return b - hi;
        }
        tau += seg;
    }
    return 0.0;
}

/// Material states at every (cell, group) of a grid at time t.
class MaterialTable {
public:
    MaterialTable(const MatterModel& m, const PhaseGrid& grid, double t = 0.0)
        : n_w_(grid.n_omega()), states_(static_cast<std::size_t>(grid.n_r()) * grid.n_omega()) {
        if (static_cast<int>(m.omega_groups.size()) != grid.n_omega()) {
            throw InvalidArgument("MaterialTable: model and grid energy groups differ");
        }
        for (int i = 0; i < grid.n_r(); ++i) {
            for (int g = 0; g < n_w_; ++g) {
                states_[static_cast<std::size_t>(i) * n_w_ + g] = evaluate_group(m, grid.r_centers()[i], g, t);
            }
        }
    }
    const MaterialState& operator()(int i, int g) const { return states_[static_cast<std::size_t>(i) * n_w_ + g]; }

private:
    int n_w_;
    std::vector<MaterialState> states_;
};

}  // namespace nutrans
