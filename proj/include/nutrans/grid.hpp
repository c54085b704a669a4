#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nutrans/errors.hpp"

namespace nutrans {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1], nodes ascending and exactly mirror-symmetric.
inline QuadratureRule gauss_legendre_rule(int n_ordinates) {
    if (n_ordinates < 2) {
        throw InvalidArgument("gauss_legendre_rule: need at least 2 ordinates");
    }
    const int n = n_ordinates;
    QuadratureRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const int half = n / 2;
    for (int m = 0; m < half; ++m) {
        // Newton on P_n starting from the Chebyshev-like guess of the m-th largest root
        double x = std::cos(std::numbers::pi * (m + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int l = 2; l <= n; ++l) {
                const double p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-17) {
                break;
            }
        }
        // recompute derivative at the converged root
        double p0 = 1.0;
        double p1 = x;
        for (int l = 2; l <= n; ++l) {
            const double p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[n - 1 - m] = x;
        rule.nodes[m] = -x;
        rule.weights[n - 1 - m] = w;
        rule.weights[m] = w;
    }
    if (n % 2 == 1) {
        double p0 = 1.0;
        double p1 = 0.0;
        for (int l = 2; l <= n; ++l) {
            const double p2 = (-(l - 1.0) * p0) / l;
            p0 = p1;
            p1 = p2;
        }
        // P_n'(0) = n * P_{n-1}(0)
        const double dp0 = n * p0;
        rule.nodes[half] = 0.0;
        rule.weights[half] = 2.0 / (dp0 * dp0);
    }
    return rule;
}

inline std::vector<double> uniform_edges(int n_cells, double radius) {
    if (n_cells < 1 || !(radius > 0.0)) {
        throw InvalidArgument("uniform_edges: need n_cells >= 1 and radius > 0");
    }
    std::vector<double> e(n_cells + 1);
    for (int i = 0; i <= n_cells; ++i) {
        e[i] = radius * static_cast<double>(i) / n_cells;
    }
    e[n_cells] = radius;
    return e;
}

inline std::vector<double> geometric_groups(int n_groups, double omega_min, double ratio = 1.3) {
    if (n_groups < 1 || !(omega_min > 0.0) || !(ratio > 1.0)) {
        throw InvalidArgument("geometric_groups: need n >= 1, omega_min > 0, ratio > 1");
    }
    std::vector<double> w(n_groups);
    w[0] = omega_min;
    for (int g = 1; g < n_groups; ++g) {
        w[g] = w[g - 1] * ratio;
    }
    return w;
}

class PhaseGrid {
public:
    PhaseGrid(std::vector<double> r_edges, int n_mu, std::vector<double> omega_groups, double c = 1.0)
        : r_edges_(std::move(r_edges)), omega_(std::move(omega_groups)), c_(c) {
        if (r_edges_.size() < 2) {
            throw InvalidArgument("PhaseGrid: need at least one radial cell");
        }
        if (r_edges_.front() < 0.0) {
            throw InvalidArgument("PhaseGrid: radii must be non-negative");
        }
        for (std::size_t i = 1; i < r_edges_.size(); ++i) {
            if (!(r_edges_[i] > r_edges_[i - 1])) {
                throw InvalidArgument("PhaseGrid: r_edges must be strictly increasing");
            }
        }
        if (omega_.empty()) {
            throw InvalidArgument("PhaseGrid: need at least one energy group");
        }
        for (std::size_t g = 0; g < omega_.size(); ++g) {
            if (!(omega_[g] > 0.0) || (g > 0 && !(omega_[g] > omega_[g - 1]))) {
                throw InvalidArgument("PhaseGrid: omega groups must be positive and increasing");
            }
        }
        if (!(c_ > 0.0)) {
            throw InvalidArgument("PhaseGrid: c must be positive");
        }
        rule_ = gauss_legendre_rule(n_mu);
        centers_.resize(r_edges_.size() - 1);
        for (std::size_t i = 0; i + 1 < r_edges_.size(); ++i) {
            centers_[i] = 0.5 * (r_edges_[i] + r_edges_[i + 1]);
        }
    }

    int n_r() const { return static_cast<int>(centers_.size()); }
    int n_mu() const { return static_cast<int>(rule_.nodes.size()); }
    int n_omega() const { return static_cast<int>(omega_.size()); }
    std::size_t size() const { return centers_.size() * rule_.nodes.size() * omega_.size(); }

    const std::vector<double>& r_edges() const { return r_edges_; }
    const std::vector<double>& r_centers() const { return centers_; }
    const std::vector<double>& mu_nodes() const { return rule_.nodes; }
    const std::vector<double>& mu_weights() const { return rule_.weights; }
    const QuadratureRule& rule() const { return rule_; }
    const std::vector<double>& omega_groups() const { return omega_; }
    double c() const { return c_; }
    double radius() const { return r_edges_.back(); }

    double dr(int i) const { return r_edges_[i + 1] - r_edges_[i]; }
    double min_dr() const {
        double m = dr(0);
        for (int i = 1; i < n_r(); ++i) {
            m = std::min(m, dr(i));
        }
        return m;
    }
    // shell volume / 4 pi
    double volume(int i) const {
        const double a = r_edges_[i];
        const double b = r_edges_[i + 1];
        return (b * b * b - a * a * a) / 3.0;
    }
    // face area / 4 pi at edge i
    double area(int edge) const { return r_edges_[edge] * r_edges_[edge]; }
    int mirror(int k) const { return n_mu() - 1 - k; }

    bool same_shape(const PhaseGrid& o) const {
        return r_edges_ == o.r_edges_ && rule_.nodes == o.rule_.nodes && omega_ == o.omega_;
    }

private:
    std::vector<double> r_edges_;
    std::vector<double> centers_;
    QuadratureRule rule_;
    std::vector<double> omega_;
    double c_;
};

/// Occupation numbers f(r_i, mu_k, omega_g); ordinate-major within a radial cell.
class DistributionField {
public:
    DistributionField() = default;
    DistributionField(int n_r, int n_mu, int n_w, double value = 0.0)
        : n_r_(n_r), n_mu_(n_mu), n_w_(n_w), values_(static_cast<std::size_t>(n_r) * n_mu * n_w, value) {}
    explicit DistributionField(const PhaseGrid& g, double value = 0.0)
        : DistributionField(g.n_r(), g.n_mu(), g.n_omega(), value) {}

    int n_r() const { return n_r_; }
    int n_mu() const { return n_mu_; }
    int n_omega() const { return n_w_; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(int i, int k, int g) const {
        return (static_cast<std::size_t>(i) * n_mu_ + k) * n_w_ + g;
    }
    double& operator()(int i, int k, int g) { return values_[index(i, k, g)]; }
    double operator()(int i, int k, int g) const { return values_[index(i, k, g)]; }

    std::vector<double> slice(int i, int g) const {
        std::vector<double> s(n_mu_);
        for (int k = 0; k < n_mu_; ++k) {
            s[k] = (*this)(i, k, g);
        }
        return s;
    }
    void set_slice(int i, int g, std::span<const double> s) {
        for (int k = 0; k < n_mu_; ++k) {
            (*this)(i, k, g) = s[k];
        }
    }

    bool matches(const PhaseGrid& g) const {
        return n_r_ == g.n_r() && n_mu_ == g.n_mu() && n_w_ == g.n_omega();
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

private:
    int n_r_ = 0;
    int n_mu_ = 0;
    int n_w_ = 0;
    std::vector<double> values_;
};

enum class MomentRole { beta, beta_t, beta_s, first_moment, residual };

inline std::string to_string(MomentRole r) {
    switch (r) {
        case MomentRole::beta: return "beta";
        case MomentRole::beta_t: return "beta_t";
        case MomentRole::beta_s: return "beta_s";
        case MomentRole::first_moment: return "first_moment";
        case MomentRole::residual: return "residual";
    }
    return "unknown";
}

class MomentField {
public:
    MomentField(int n_r, int n_w, MomentRole role, double value = 0.0)
        : n_r_(n_r), n_w_(n_w), role_(role), values_(static_cast<std::size_t>(n_r) * n_w, value) {}
    MomentField(const PhaseGrid& g, MomentRole role, double value = 0.0)
        : MomentField(g.n_r(), g.n_omega(), role, value) {}

    MomentField(const MomentField&) = default;
    MomentField(MomentField&&) = default;
    // Assignment keeps the tag of the target; mismatched tags are rejected.
    MomentField& operator=(const MomentField& o) {
        if (o.role_ != role_) {
            throw InvalidArgument("MomentField: role tag is immutable");
        }
        n_r_ = o.n_r_;
        n_w_ = o.n_w_;
        values_ = o.values_;
        return *this;
    }
    MomentField& operator=(MomentField&& o) {
        if (o.role_ != role_) {
            throw InvalidArgument("MomentField: role tag is immutable");
        }
        n_r_ = o.n_r_;
        n_w_ = o.n_w_;
        values_ = std::move(o.values_);
        return *this;
    }

    int n_r() const { return n_r_; }
    int n_omega() const { return n_w_; }
    MomentRole role() const { return role_; }
    std::size_t size() const { return values_.size(); }

    double& operator()(int i, int g) { return values_[static_cast<std::size_t>(i) * n_w_ + g]; }
    double operator()(int i, int g) const { return values_[static_cast<std::size_t>(i) * n_w_ + g]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool matches(const PhaseGrid& g) const { return n_r_ == g.n_r() && n_w_ == g.n_omega(); }

    MomentField with_role(MomentRole r) const {
        MomentField m(n_r_, n_w_, r);
        m.values_ = values_;
        return m;
    }

private:
    int n_r_;
    int n_w_;
    MomentRole role_;
    std::vector<double> values_;
};

/// (1/2) sum_k w_k f_k mu_k^p
inline double angular_moment(std::span<const double> f, int order, const QuadratureRule& rule) {
    if (f.size() != rule.nodes.size()) {
        throw InvalidArgument("angular_moment: slice length does not match ordinate count");
    }
    if (order < 0 || order > 2) {
        throw InvalidArgument("angular_moment: order must be 0, 1 or 2");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        double m = 1.0;
        for (int p = 0; p < order; ++p) {
            m *= rule.nodes[k];
        }
        s += rule.weights[k] * f[k] * m;
    }
    return 0.5 * s;
}

inline double angular_moment(std::span<const double> f, int order, const PhaseGrid& grid) {
    return angular_moment(f, order, grid.rule());
}

inline MomentField moment_field(const DistributionField& f, const PhaseGrid& grid, int order) {
    if (!f.matches(grid)) {
        throw InvalidArgument("moment_field: field does not match grid");
    }
    const MomentRole role = order == 0 ? MomentRole::beta : (order == 1 ? MomentRole::first_moment : MomentRole::residual);
    MomentField m(grid, role);
    for (int i = 0; i < grid.n_r(); ++i) {
        for (int g = 0; g < grid.n_omega(); ++g) {
            m(i, g) = angular_moment(f.slice(i, g), order, grid);
        }
    }
    return m;
}

/// Isotropic field carrying the given moment values on every ordinate.
inline DistributionField isotropic_field(const MomentField& m, int n_mu) {
    DistributionField f(m.n_r(), n_mu, m.n_omega());
    for (int i = 0; i < m.n_r(); ++i) {
        for (int k = 0; k < n_mu; ++k) {
            for (int g = 0; g < m.n_omega(); ++g) {
                f(i, k, g) = m(i, g);
            }
        }
    }
    return f;
}

}  // namespace nutrans
