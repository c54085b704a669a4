#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nutrans/errors.hpp"
#include "nutrans/grid.hpp"
#include "nutrans/matter.hpp"

namespace nutrans {

/// Premultiplied scattering kernel sampled on the ordinate grid of one energy group.
class CollisionKernel {
public:
    CollisionKernel() = default;
    CollisionKernel(int n, std::vector<double> values) : n_(n), values_(std::move(values)) {
        if (n < 1 || values_.size() != static_cast<std::size_t>(n) * n) {
            throw InvalidArgument("CollisionKernel: need an n x n sample matrix");
        }
    }
    static CollisionKernel from_function(const QuadratureRule& rule, const std::function<double(double, double)>& k) {
        const int n = static_cast<int>(rule.nodes.size());
        std::vector<double> v(static_cast<std::size_t>(n) * n);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                v[static_cast<std::size_t>(a) * n + b] = k(rule.nodes[a], rule.nodes[b]);
            }
        }
        return CollisionKernel(n, std::move(v));
    }
    static CollisionKernel truncated(const QuadratureRule& rule, double phi0, double phi1) {
        return from_function(rule, [=](double m, double mp) { return 0.5 * phi0 + 1.5 * phi1 * m * mp; });
    }

    int size() const { return n_; }
    double operator()(int k, int kp) const { return values_[static_cast<std::size_t>(k) * n_ + kp]; }
    const std::vector<double>& values() const { return values_; }

    bool symmetric(double rel_tol = 1e-13) const {
        double scale = 0.0;
        for (double x : values_) {
            scale = std::max(scale, std::abs(x));
        }
        for (int a = 0; a < n_; ++a) {
            for (int b = a + 1; b < n_; ++b) {
                if (std::abs((*this)(a, b) - (*this)(b, a)) > rel_tol * scale) {
                    return false;
                }
            }
        }
        return true;
    }

private:
    int n_ = 0;
    std::vector<double> values_;
};

enum class OperatorPart { full, plus, minus, frozen };

enum class RadialForm { finite_volume, nodal };
enum class RadialDifference { upwind, centered };
enum class AngularDifference { weighted_diamond, upwind };
enum class RadialBoundary { physical, extrapolate };

struct TransportOptions {
    RadialForm form = RadialForm::finite_volume;
    RadialDifference radial = RadialDifference::upwind;
    AngularDifference angular = AngularDifference::weighted_diamond;
    RadialBoundary boundary = RadialBoundary::physical;
};

// ---------------------------------------------------------------------------
// collision and reaction terms

inline std::vector<double> collision_full(std::span<const double> f, const CollisionKernel& kernel,
                                          const QuadratureRule& rule) {
    const int n = static_cast<int>(rule.nodes.size());
    if (static_cast<int>(f.size()) != n || kernel.size() != n) {
        throw InvalidArgument("collision_full: slice, kernel and rule sizes differ");
    }
    if (!kernel.symmetric()) {
        throw InvalidKernel("collision_full: kernel is not symmetric");
    }
    std::vector<double> c(n, 0.0);
    for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int kp = 0; kp < n; ++kp) {
            s += rule.weights[kp] * kernel(k, kp) * (f[kp] - f[k]);
        }
        c[k] = s;
    }
    return c;
}

struct LegendreCoefficients {
    double phi0 = 0.0;
    double phi1 = 0.0;
};

/// Projection of K onto span{1, mu mu'} in the product quadrature inner product.
inline LegendreCoefficients legendre_truncate(const CollisionKernel& kernel, const QuadratureRule& rule) {
    const int n = static_cast<int>(rule.nodes.size());
    if (kernel.size() != n) {
        throw InvalidArgument("legendre_truncate: kernel and rule sizes differ");
    }
    if (!kernel.symmetric()) {
        throw InvalidKernel("legendre_truncate: kernel is not symmetric");
    }
    // the basis functions are orthogonal under the product rule, so the projection decouples
    double k0 = 0.0;
    double k1 = 0.0;
    double m2 = 0.0;
    for (int a = 0; a < n; ++a) {
        m2 += rule.weights[a] * rule.nodes[a] * rule.nodes[a];
        for (int b = 0; b < n; ++b) {
            const double ww = rule.weights[a] * rule.weights[b];
            k0 += ww * kernel(a, b);
            k1 += ww * kernel(a, b) * rule.nodes[a] * rule.nodes[b];
        }
    }
    LegendreCoefficients out;
    out.phi0 = 2.0 * (k0 / 4.0);
    out.phi1 = (2.0 / 3.0) * (k1 / (m2 * m2));
    return out;
}

inline std::vector<double> collision_truncated(std::span<const double> f, const MaterialState& s,
                                               const QuadratureRule& rule) {
    const double beta = angular_moment(f, 0, rule);
    const double h = angular_moment(f, 1, rule);
    std::vector<double> c(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        c[k] = -s.phi0 * f[k] + s.phi0 * beta + 3.0 * rule.nodes[k] * s.phi1 * h;
    }
    return c;
}

/// j - chi_tilde f + C(f)
inline std::vector<double> rhs_J(std::span<const double> f, const MaterialState& s, const QuadratureRule& rule,
                                 bool use_full_kernel = false, const CollisionKernel* kernel = nullptr) {
    std::vector<double> c;
    if (use_full_kernel) {
        if (kernel == nullptr) {
            throw InvalidArgument("rhs_J: full-kernel evaluation needs a kernel");
        }
        c = collision_full(f, *kernel, rule);
    } else {
        c = collision_truncated(f, s, rule);
    }
    for (std::size_t k = 0; k < f.size(); ++k) {
        c[k] += s.j - s.chi_tilde * f[k];
    }
    return c;
}

// ---------------------------------------------------------------------------
// transport stencils

namespace detail {

struct Term {
    int i = 0;
    int k = 0;
    double c = 0.0;
};

struct Stencil {
    int n = 0;
    std::array<Term, 3> t{};
    void add(int i, int k, double c) { t[n++] = Term{i, k, c}; }
    double apply(const DistributionField& f, int g) const {
        double s = 0.0;
        for (int a = 0; a < n; ++a) {
            s += t[a].c * f(t[a].i, t[a].k, g);
        }
        return s;
    }
};

/// Derivative at x of the quadratic through (x0, x1, x2): weights for y0, y1, y2.
inline std::array<double, 3> deriv3(double x0, double x1, double x2, double x) {
    return {((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2)), ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2)),
            ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1))};
}

}  // namespace detail

/// Angular half-node data: alpha_{k+1/2} (alpha_{-1/2} = alpha_{N-1/2} = 0) and the
/// interpolation weight placing psi_{k+1/2} between nodes k and k+1.
struct AngularStencil {
    std::vector<double> alpha;  // size n+1, index h = k + 1/2 + 1/2
    std::vector<double> theta;  // size n+1, ends unused

    AngularStencil(const QuadratureRule& rule, AngularDifference scheme) {
        const int n = static_cast<int>(rule.nodes.size());
        alpha.assign(n + 1, 0.0);
        theta.assign(n + 1, 0.0);
        double a = 0.0;
        double t = 0.0;
        for (int k = 0; k < n - 1; ++k) {
            const double w = rule.weights[k];
            const double mu = rule.nodes[k];
            a -= 2.0 * w * mu;
            t += w * (1.0 - 3.0 * mu * mu);
            alpha[k + 1] = a;
            if (scheme == AngularDifference::weighted_diamond) {
                const double mu_half = t / a;
                theta[k + 1] = (mu_half - mu) / (rule.nodes[k + 1] - mu);
            }
        }
    }
};

class TransportStencils {
public:
    TransportStencils(const PhaseGrid& grid, const TransportOptions& opt)
        : grid_(grid), opt_(opt), ang_(grid.rule(), opt.angular) {
        const int nr = grid.n_r();
        if (opt.form == RadialForm::nodal && opt.radial == RadialDifference::centered && nr < 3) {
            throw InvalidArgument("transport: centered nodal differences need at least 3 radial cells");
        }
        kappa_.resize(nr);
        for (int i = 0; i < nr; ++i) {
            kappa_[i] = opt.form == RadialForm::finite_volume
                            ? (grid.area(i + 1) - grid.area(i)) / (2.0 * grid.volume(i))
                            : 1.0 / grid.r_centers()[i];
        }
    }

    const AngularStencil& angular() const { return ang_; }
    const TransportOptions& options() const { return opt_; }

    /// Value on radial face e (0..n_r) for ordinate k.
    detail::Stencil face(int e, int k) const {
        detail::Stencil s;
        const int nr = grid_.n_r();
        const auto& rc = grid_.r_centers();
        const auto& re = grid_.r_edges();
        const double mu = grid_.mu_nodes()[k];
        auto extrapolate = [&](int a, int b) {
            if (nr < 2) {
                s.add(a, k, 1.0);
                return;
            }
            const double x = re[e];
            const double wb = (x - rc[a]) / (rc[b] - rc[a]);
            s.add(a, k, 1.0 - wb);
            s.add(b, k, wb);
        };
        if (e == 0) {
            if (grid_.area(0) == 0.0) {
                return s;
            }
            if (opt_.boundary == RadialBoundary::extrapolate) {
                extrapolate(0, 1);
            } else if (opt_.radial == RadialDifference::upwind) {
                s.add(0, mu > 0.0 ? grid_.mirror(k) : k, 1.0);
            } else {
                s.add(0, k, 0.5);
                s.add(0, grid_.mirror(k), 0.5);
            }
            return s;
        }
        if (e == nr) {
            if (opt_.boundary == RadialBoundary::extrapolate) {
                extrapolate(nr - 2 < 0 ? 0 : nr - 2, nr - 1);
            } else if (mu < 0.0) {
                // vacuum inflow
            } else if (opt_.radial == RadialDifference::upwind) {
                s.add(nr - 1, k, 1.0);
            } else {
                extrapolate(nr - 2 < 0 ? 0 : nr - 2, nr - 1);
            }
            return s;
        }
        if (opt_.radial == RadialDifference::upwind) {
            s.add(mu > 0.0 ? e - 1 : e, k, 1.0);
        } else {
            const double wb = (re[e] - rc[e - 1]) / (rc[e] - rc[e - 1]);
            s.add(e - 1, k, 1.0 - wb);
            s.add(e, k, wb);
        }
        return s;
    }

    /// One-sided radial derivative at cell i; forward when `forward`, with a vacuum
    /// value at R for incoming ordinates under physical boundaries.
    detail::Stencil nodal_upwind(int i, int k, bool forward) const {
        detail::Stencil s;
        const int nr = grid_.n_r();
        const auto& rc = grid_.r_centers();
        const double mu = grid_.mu_nodes()[k];
        const bool physical = opt_.boundary == RadialBoundary::physical;
        if (!forward) {
            if (i > 0) {
                const double h = rc[i] - rc[i - 1];
                s.add(i, k, 1.0 / h);
                s.add(i - 1, k, -1.0 / h);
            } else if (physical) {
                const double h = 2.0 * (rc[0] - grid_.r_edges()[0]);
                s.add(0, k, 1.0 / h);
                s.add(0, grid_.mirror(k), -1.0 / h);
            } else if (nr > 1) {
                const double h = rc[1] - rc[0];
                s.add(1, k, 1.0 / h);
                s.add(0, k, -1.0 / h);
            }
            return s;
        }
        if (i < nr - 1) {
            const double h = rc[i + 1] - rc[i];
            s.add(i + 1, k, 1.0 / h);
            s.add(i, k, -1.0 / h);
        } else if (physical && mu < 0.0) {
            s.add(i, k, -1.0 / (grid_.radius() - rc[i]));
        } else if (nr > 1) {
            const double h = rc[i] - rc[i - 1];
            s.add(i, k, 1.0 / h);
            s.add(i - 1, k, -1.0 / h);
        }
        return s;
    }

    /// Three-point radial derivative at cell i (exact for quadratics in r).
    detail::Stencil nodal_centered(int i, int k) const {
        detail::Stencil s;
        const int nr = grid_.n_r();
        const auto& rc = grid_.r_centers();
        const double mu = grid_.mu_nodes()[k];
        const bool physical = opt_.boundary == RadialBoundary::physical;
        auto put = [&](int a, int b, int c, double x) {
            const auto w = detail::deriv3(rc[a], rc[b], rc[c], x);
            s.add(a, k, w[0]);
            s.add(b, k, w[1]);
            s.add(c, k, w[2]);
        };
        if (i > 0 && i < nr - 1) {
            put(i - 1, i, i + 1, rc[i]);
        } else if (i == 0) {
            if (physical) {
                const double xg = 2.0 * grid_.r_edges()[0] - rc[0];
                const auto w = detail::deriv3(xg, rc[0], rc[1], rc[0]);
                s.add(0, grid_.mirror(k), w[0]);
                s.add(0, k, w[1]);
                s.add(1, k, w[2]);
            } else {
                put(0, 1, 2, rc[0]);
            }
        } else {
            if (physical && mu < 0.0) {
                const auto w = detail::deriv3(rc[nr - 2], rc[nr - 1], grid_.radius(), rc[nr - 1]);
                s.add(nr - 2, k, w[0]);
                s.add(nr - 1, k, w[1]);
            } else {
                put(nr - 3, nr - 2, nr - 1, rc[nr - 1]);
            }
        }
        return s;
    }

    /// D^- at (i, k, g).
    double minus(const DistributionField& f, int i, int k, int g) const {
        const double mu = grid_.mu_nodes()[k];
        double radial;
        if (opt_.form == RadialForm::finite_volume) {
            const double fp = face(i + 1, k).apply(f, g);
            const double fm = face(i, k).apply(f, g);
            radial = mu * (grid_.area(i + 1) * fp - grid_.area(i) * fm) / grid_.volume(i);
        } else {
            const detail::Stencil d =
                opt_.radial == RadialDifference::centered ? nodal_centered(i, k) : nodal_upwind(i, k, mu < 0.0);
            radial = mu * d.apply(f, g);
        }
        return radial + kappa_[i] * angular_flux_difference(f, i, k, g) +
               (opt_.form == RadialForm::nodal ? kappa_[i] * 2.0 * mu * f(i, k, g) : 0.0);
    }

    /// (alpha_{k+1/2} psi_{k+1/2} - alpha_{k-1/2} psi_{k-1/2}) / w_k
    double angular_flux_difference(const DistributionField& f, int i, int k, int g) const {
        const int n = grid_.n_mu();
        auto half = [&](int h) {
            if (h == 0 || h == n) {
                return 0.0;
            }
            const double th = ang_.theta[h];
            return ang_.alpha[h] * ((1.0 - th) * f(i, h - 1, g) + th * f(i, h, g));
        };
        return (half(k + 1) - half(k)) / grid_.mu_weights()[k];
    }

    /// Linear coefficients of D^- at (i, k): pairs of ((cell, ordinate), weight).
    std::vector<detail::Term> minus_row(int i, int k) const {
        std::vector<detail::Term> row;
        const double mu = grid_.mu_nodes()[k];
        auto push = [&](const detail::Stencil& s, double scale) {
            for (int a = 0; a < s.n; ++a) {
                row.push_back(detail::Term{s.t[a].i, s.t[a].k, s.t[a].c * scale});
            }
        };
        if (opt_.form == RadialForm::finite_volume) {
            push(face(i + 1, k), mu * grid_.area(i + 1) / grid_.volume(i));
            push(face(i, k), -mu * grid_.area(i) / grid_.volume(i));
        } else {
            push(opt_.radial == RadialDifference::centered ? nodal_centered(i, k) : nodal_upwind(i, k, mu < 0.0), mu);
            row.push_back(detail::Term{i, k, kappa_[i] * 2.0 * mu});
        }
        const int n = grid_.n_mu();
        const double inv_w = kappa_[i] / grid_.mu_weights()[k];
        auto half = [&](int h, double sign) {
            if (h == 0 || h == n) {
                return;
            }
            const double th = ang_.theta[h];
            row.push_back(detail::Term{i, h - 1, sign * inv_w * ang_.alpha[h] * (1.0 - th)});
            row.push_back(detail::Term{i, h, sign * inv_w * ang_.alpha[h] * th});
        };
        half(k + 1, 1.0);
        half(k, -1.0);
        return row;
    }

    /// Outward face flux (1/2) sum_k w mu A psi at edge e, per group.
    double face_flux(const DistributionField& f, int e, int g) const {
        double s = 0.0;
        for (int k = 0; k < grid_.n_mu(); ++k) {
            s += grid_.mu_weights()[k] * grid_.mu_nodes()[k] * face(e, k).apply(f, g);
        }
        return 0.5 * grid_.area(e) * s;
    }

    double kappa(int i) const { return kappa_[i]; }

private:
    const PhaseGrid& grid_;
    TransportOptions opt_;
    AngularStencil ang_;
    std::vector<double> kappa_;
};

/// Coefficients of the symmetric-part advective terms at a phase point.
struct PlusCoefficients {
    double v_over_c = 0.0;
    double f_mu = 0.0;
    double f_omega = 0.0;
};

inline PlusCoefficients plus_coefficients(const MaterialState& s, double r, double mu, double omega, double c) {
    PlusCoefficients p;
    p.v_over_c = s.v / c;
    const double vcr = r > 0.0 ? s.v / (c * r) : 0.0;
    const double b = s.dlnrho_cdt + 3.0 * vcr;
    p.f_mu = mu * b * (1.0 - mu * mu);
    p.f_omega = (mu * mu * b - vcr) * omega;
    return p;
}

/// Advective part of D^+ (everything except the time derivative) at (i, k, g).
inline double plus_advective(const DistributionField& f, const TransportStencils& st, const PhaseGrid& grid,
                             const MaterialState& s, int i, int k, int g) {
    const double mu = grid.mu_nodes()[k];
    const auto& w = grid.omega_groups();
    const PlusCoefficients p = plus_coefficients(s, grid.r_centers()[i], mu, w[g], grid.c());
    double out = 0.0;
    if (p.v_over_c != 0.0) {
        out += p.v_over_c * st.nodal_upwind(i, k, p.v_over_c < 0.0).apply(f, g);
    }
    if (p.f_mu != 0.0) {
        const auto& m = grid.mu_nodes();
        const int n = grid.n_mu();
        if (p.f_mu > 0.0 && k > 0) {
            out += p.f_mu * (f(i, k, g) - f(i, k - 1, g)) / (m[k] - m[k - 1]);
        } else if (p.f_mu < 0.0 && k < n - 1) {
            out += p.f_mu * (f(i, k + 1, g) - f(i, k, g)) / (m[k + 1] - m[k]);
        }
    }
    if (p.f_omega != 0.0) {
        const int nw = grid.n_omega();
        if (p.f_omega > 0.0 && g > 0) {
            out += p.f_omega * (f(i, k, g) - f(i, k, g - 1)) / (w[g] - w[g - 1]);
        } else if (p.f_omega < 0.0 && g < nw - 1) {
            out += p.f_omega * (f(i, k, g + 1) - f(i, k, g)) / (w[g + 1] - w[g]);
        }
    }
    return out;
}

/// Weight of the time derivative in the transport operator: epsilon in time-scaled modes.
inline double time_weight(const MatterModel& m) { return scales_time(m.scaling) ? m.epsilon : 1.0; }

/// Applies D, D^+, D^- or the frozen-matter operator. `time_derivative` holds df/dt in the
/// model's evolution time (scaled time in time-scaled modes).
inline DistributionField transport_apply(const DistributionField& f, const MatterModel& model, const PhaseGrid& grid,
                                         OperatorPart part, const DistributionField* time_derivative = nullptr,
                                         double t = 0.0, const TransportOptions& opt = {}) {
    if (!f.matches(grid)) {
        throw InvalidArgument("transport_apply: field does not match grid");
    }
    if ((part == OperatorPart::plus || part == OperatorPart::full) && time_derivative == nullptr) {
        throw InvalidArgument("transport_apply: plus and full parts need the time derivative");
    }
    if (time_derivative != nullptr && !time_derivative->matches(grid)) {
        throw InvalidArgument("transport_apply: time derivative does not match grid");
    }
    const TransportStencils st(grid, opt);
    const bool need_states = part == OperatorPart::plus || part == OperatorPart::full;
    const MaterialTable* table = nullptr;
    std::unique_ptr<MaterialTable> owned;
    if (need_states) {
        owned = std::make_unique<MaterialTable>(model, grid, t);
        table = owned.get();
    }
    const double tw = time_weight(model) / grid.c();
    DistributionField out(grid);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int k = 0; k < grid.n_mu(); ++k) {
            for (int g = 0; g < grid.n_omega(); ++g) {
                double plus = 0.0;
                double minus = 0.0;
                if (part != OperatorPart::plus) {
                    minus = st.minus(f, i, k, g);
                }
                if (time_derivative != nullptr) {
                    plus += tw * (*time_derivative)(i, k, g);
                }
                if (need_states) {
                    plus += plus_advective(f, st, grid, (*table)(i, g), i, k, g);
                }
                switch (part) {
                    case OperatorPart::plus: out(i, k, g) = plus; break;
                    case OperatorPart::minus: out(i, k, g) = minus; break;
                    case OperatorPart::full:
                    case OperatorPart::frozen: out(i, k, g) = plus + minus; break;
                }
            }
        }
    }
    return out;
}

}  // namespace nutrans
