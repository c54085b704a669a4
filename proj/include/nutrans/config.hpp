#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nutrans/asymptotics.hpp"
#include "nutrans/errors.hpp"
#include "nutrans/idsa.hpp"

namespace nutrans {

enum class RunMode { boltzmann, idsa, compare, hierarchy_check, epsilon_sweep };
enum class InitialCondition { vacuum, equilibrium, custom };
enum class SolverKind { explicit_imex, implicit };

inline std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::boltzmann: return "boltzmann";
        case RunMode::idsa: return "idsa";
        case RunMode::compare: return "compare";
        case RunMode::hierarchy_check: return "hierarchy-check";
        case RunMode::epsilon_sweep: return "epsilon-sweep";
    }
    return "?";
}

struct ConfigEntry {
    std::string value;
    int line = 0;
};

/// Parsed `key = value` text; `#` starts a comment.
class ConfigMap {
public:
    static ConfigMap parse(std::istream& in, const std::string& file) {
        ConfigMap m;
        m.file_ = file;
        std::string raw;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            m.text_ += raw + "\n";
            const auto hash = raw.find('#');
            std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (s.empty()) {
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(file, line, "expected 'key = value'");
            }
            const std::string key = trim(s.substr(0, eq));
            const std::string value = trim(s.substr(eq + 1));
            if (key.empty() || key.find_first_of(" \t") != std::string::npos) {
                throw ConfigError(file, line, "malformed key '" + key + "'");
            }
            if (value.empty()) {
                throw ConfigError(file, line, "empty value for '" + key + "'");
            }
            if (m.entries_.count(key) != 0) {
                throw ConfigError(file, line,
                                  "duplicate key '" + key + "' (first at line " +
                                      std::to_string(m.entries_[key].line) + ")");
            }
            m.entries_[key] = {value, line};
            m.order_.push_back(key);
        }
        return m;
    }

    static ConfigMap from_string(const std::string& text, const std::string& file = "<string>") {
        std::istringstream in(text);
        return parse(in, file);
    }

    static ConfigMap load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError(path, 0, "cannot open scenario file");
        }
        return parse(in, path);
    }

    const std::string& file() const { return file_; }
    const std::string& text() const { return text_; }
    const std::vector<std::string>& keys() const { return order_; }
    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const ConfigEntry& entry(const std::string& key) const { return entries_.at(key); }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const int line = has(key) ? entries_.at(key).line : 0;
        throw ConfigError(file_, line, key + ": " + msg);
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        return has(key) ? entries_.at(key).value : fallback;
    }
    std::string require(const std::string& key) const {
        used_.insert(key);
        if (!has(key)) {
            throw ConfigError(file_, 0, "missing required key '" + key + "'");
        }
        return entries_.at(key).value;
    }

    double number(const std::string& key, double fallback) const {
        used_.insert(key);
        return has(key) ? to_number(key, entries_.at(key).value) : fallback;
    }
    double number(const std::string& key) const { return to_number(key, require(key)); }

    int integer(const std::string& key, int fallback) const {
        const double v = number(key, fallback);
        if (v != static_cast<double>(static_cast<int>(v))) {
            fail(key, "expected an integer");
        }
        return static_cast<int>(v);
    }

    std::vector<double> list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split(require(key), ',')) {
            out.push_back(to_number(key, item));
        }
        return out;
    }

    /// Table written as comma-separated `x:y` pairs, or a single number for a constant.
    PiecewiseLinear table(const std::string& key) const {
        const std::string v = require(key);
        if (v.find(':') == std::string::npos) {
            return PiecewiseLinear::constant(to_number(key, v));
        }
        std::vector<double> xs;
        std::vector<double> ys;
        for (const auto& item : split(v, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) {
                fail(key, "table entries must be 'x:value' pairs");
            }
            xs.push_back(to_number(key, item.substr(0, colon)));
            ys.push_back(to_number(key, item.substr(colon + 1)));
        }
        try {
            return PiecewiseLinear(std::move(xs), std::move(ys));
        } catch (const InvalidArgument& e) {
            fail(key, e.what());
        }
    }

    template <class Enum>
    Enum choice(const std::string& key, const std::string& fallback, const std::map<std::string, Enum>& options) const {
        const std::string v = str(key, fallback);
        const auto it = options.find(v);
        if (it == options.end()) {
            std::string names;
            for (const auto& [name, e] : options) {
                names += (names.empty() ? "" : ", ") + name;
            }
            fail(key, "unknown value '" + v + "' (expected one of: " + names + ")");
        }
        return it->second;
    }

    /// Rejects keys that no accessor has read.
    void check_all_used() const {
        for (const auto& key : order_) {
            if (used_.count(key) == 0) {
                throw ConfigError(file_, entries_.at(key).line, "unknown key '" + key + "'");
            }
        }
    }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) {
            return "";
        }
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, sep)) {
            out.push_back(trim(item));
        }
        return out;
    }

    double to_number(const std::string& key, const std::string& s) const {
        const std::string t = trim(s);
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) {
            fail(key, "expected a finite number, got '" + t + "'");
        }
        return v;
    }

    std::string file_;
    std::string text_;
    std::map<std::string, ConfigEntry> entries_;
    std::vector<std::string> order_;
    mutable std::set<std::string> used_;
};

struct RunSpec {
    double t_end = 0.0;
    int cadence = 1;
    double dt = 0.0;  // fixed step when positive
    double cfl = 0.9;
    SolverKind solver = SolverKind::explicit_imex;
};

struct SweepSpec {
    std::string preset = "manufactured";  // or "scenario" to sweep the configured model
    Limit limit = Limit::diffusion;
    F1Variant variant = F1Variant::minus;
    std::vector<double> epsilons{0.2, 0.1, 0.05, 0.025};
    Band band{0.05, 0.75};
};

struct Scenario {
    std::string path;
    std::string text;
    RunMode mode = RunMode::boltzmann;
    PhaseGrid grid{uniform_edges(1, 1.0), 2, {1.0}};
    MatterModel model;
    InitialCondition initial = InitialCondition::vacuum;
    PiecewiseLinear initial_beta;
    RunSpec run;
    LimiterVariant limiter = LimiterVariant::idsa;
    TrappedBoundary trapped_outer = TrappedBoundary::vacuum;
    double tau_threshold = 2.0 / 3.0;
    HierarchyVariant hierarchy = HierarchyVariant::time_and_reaction_scaled;
    double hierarchy_tol = 1e-10;
    SweepSpec sweep;
    long seed = 0;
};

namespace detail {

inline std::vector<PiecewiseLinear> rate_tables(const ConfigMap& c, const std::string& key, int n_w, bool required) {
    std::vector<PiecewiseLinear> per_group;
    bool any_group = false;
    for (int g = 0; g < n_w; ++g) {
        if (c.has(key + "." + std::to_string(g))) {
            any_group = true;
        }
    }
    if (any_group) {
        for (int g = 0; g < n_w; ++g) {
            const std::string k = key + "." + std::to_string(g);
            if (c.has(k)) {
                per_group.push_back(c.table(k));
            } else if (c.has(key)) {
                per_group.push_back(c.table(key));
            } else {
                c.fail(k, "missing table for group " + std::to_string(g));
            }
        }
        if (c.has(key)) {
            c.str(key, "");
        }
        return per_group;
    }
    if (c.has(key)) {
        return {c.table(key)};
    }
    if (required) {
        c.require(key);
    }
    return {PiecewiseLinear::constant(0.0)};
}

}  // namespace detail

/// Builds a scenario; `command` is the mode chosen on the command line, which a `mode` key must agree with.
inline Scenario parse_scenario(const ConfigMap& c, std::optional<RunMode> command = std::nullopt) {
    Scenario sc;
    sc.path = c.file();
    sc.text = c.text();
    sc.mode = c.choice<RunMode>("mode", to_string(command.value_or(RunMode::boltzmann)),
                                {{"boltzmann", RunMode::boltzmann},
                                 {"idsa", RunMode::idsa},
                                 {"compare", RunMode::compare},
                                 {"hierarchy-check", RunMode::hierarchy_check},
                                 {"epsilon-sweep", RunMode::epsilon_sweep}});
    if (command && sc.mode != *command) {
        c.fail("mode", "scenario mode '" + to_string(sc.mode) + "' conflicts with the '" + to_string(*command) +
                           "' command");
    }
    sc.seed = c.integer("seed", 0);

    const int n_r = c.integer("grid.n_r", 100);
    const double radius = c.number("grid.radius", 1.0);
    const int n_mu = c.integer("grid.n_mu", 8);
    const int n_w = c.integer("grid.n_omega", 1);
    const double omega_min = c.number("grid.omega_min", 1.0);
    const double ratio = c.number("grid.omega_ratio", 1.3);
    const double light = c.number("grid.c", 1.0);
    if (n_r < 1) c.fail("grid.n_r", "must be at least 1");
    if (n_mu < 2 || n_mu % 2 != 0) c.fail("grid.n_mu", "must be an even number >= 2");
    if (n_w < 1) c.fail("grid.n_omega", "must be at least 1");
    if (!(radius > 0.0)) c.fail("grid.radius", "must be positive");
    try {
        sc.grid = PhaseGrid(uniform_edges(n_r, radius), n_mu, geometric_groups(n_w, omega_min, ratio), light);
    } catch (const InvalidArgument& e) {
        throw ConfigError(c.file(), 0, std::string("grid: ") + e.what());
    }

    MatterModel& m = sc.model;
    m.radius = radius;
    m.light_speed = light;
    m.omega_groups = sc.grid.omega_groups();
    if (c.has("matter.rho")) m.rho = c.table("matter.rho");
    if (c.has("matter.v")) m.v = c.table("matter.v");
    if (c.has("matter.compression")) m.compression = c.table("matter.compression");
    const bool preset_sweep = sc.mode == RunMode::epsilon_sweep && c.str("sweep.preset", "manufactured") == "manufactured";
    m.j = detail::rate_tables(c, "rates.j", n_w, !preset_sweep);
    m.chi = detail::rate_tables(c, "rates.chi", n_w, !preset_sweep);
    m.phi0 = detail::rate_tables(c, "rates.phi0", n_w, false);
    m.phi1 = detail::rate_tables(c, "rates.phi1", n_w, false);
    m.scaling = c.choice<ScalingMode>("scaling.mode", "none",
                                      {{"none", ScalingMode::none},
                                       {"reaction_collision", ScalingMode::reaction_collision},
                                       {"time", ScalingMode::time},
                                       {"both", ScalingMode::both}});
    m.epsilon = c.number("scaling.epsilon", 1.0);
    if (!(m.epsilon > 0.0)) c.fail("scaling.epsilon", "must be positive");

    // every rate must be admissible on the grid
    for (int i = 0; i < sc.grid.n_r() && !preset_sweep; ++i) {
        for (int g = 0; g < n_w; ++g) {
            const auto s = evaluate_group(m, sc.grid.r_centers()[i], g);
            const std::string where = " at r=" + std::to_string(sc.grid.r_centers()[i]) + ", group " + std::to_string(g);
            const auto key = [&](const std::string& base) {
                const std::string k = base + "." + std::to_string(g);
                return c.has(k) ? k : base;
            };
            if (s.j < 0.0) c.fail(key("rates.j"), "negative emissivity" + where);
            if (s.chi < 0.0) c.fail(key("rates.chi"), "negative absorptivity" + where);
            if (std::abs(s.phi1) > s.phi0 * (1.0 + 1e-14)) {
                c.fail(key("rates.phi1"), "|phi1| exceeds phi0" + where);
            }
        }
    }

    sc.initial = c.choice<InitialCondition>("initial", "vacuum",
                                            {{"vacuum", InitialCondition::vacuum},
                                             {"equilibrium", InitialCondition::equilibrium},
                                             {"custom", InitialCondition::custom}});
    if (sc.initial == InitialCondition::custom) {
        sc.initial_beta = c.table("initial.beta");
    }

    const bool timed = sc.mode == RunMode::boltzmann || sc.mode == RunMode::idsa || sc.mode == RunMode::compare;
    if (timed) {
        sc.run.t_end = c.number("run.t_end");
        if (!(sc.run.t_end >= 0.0)) c.fail("run.t_end", "must be non-negative");
    }
    sc.run.cadence = c.integer("run.cadence", 1);
    if (sc.run.cadence < 1) c.fail("run.cadence", "must be at least 1");
    sc.run.dt = c.number("run.dt", 0.0);
    if (sc.run.dt < 0.0) c.fail("run.dt", "must be non-negative");
    sc.run.cfl = c.number("run.cfl", 0.9);
    if (!(sc.run.cfl > 0.0 && sc.run.cfl <= 1.0)) c.fail("run.cfl", "must lie in (0, 1]");
    sc.run.solver = c.choice<SolverKind>("run.solver", "explicit",
                                         {{"explicit", SolverKind::explicit_imex}, {"implicit", SolverKind::implicit}});
    if (sc.run.solver == SolverKind::implicit && timed && sc.mode != RunMode::idsa && !(sc.run.dt > 0.0)) {
        c.fail("run.solver", "the implicit solver needs run.dt");
    }

    sc.limiter = c.choice<LimiterVariant>("idsa.variant", "idsa",
                                          {{"idsa", LimiterVariant::idsa}, {"global", LimiterVariant::global}});
    sc.trapped_outer = c.choice<TrappedBoundary>(
        "idsa.outer", "vacuum", {{"vacuum", TrappedBoundary::vacuum}, {"reflecting", TrappedBoundary::reflecting}});
    sc.tau_threshold = c.number("idsa.tau_threshold", 2.0 / 3.0);
    if (!(sc.tau_threshold > 0.0)) c.fail("idsa.tau_threshold", "must be positive");

    sc.hierarchy = c.choice<HierarchyVariant>("hierarchy.variant", "time_and_reaction_scaled",
                                              {{"reaction_scaled", HierarchyVariant::reaction_scaled},
                                               {"time_and_reaction_scaled", HierarchyVariant::time_and_reaction_scaled},
                                               {"time_scaled", HierarchyVariant::time_scaled}});
    sc.hierarchy_tol = c.number("hierarchy.tolerance", 1e-10);

    sc.sweep.preset = c.str("sweep.preset", "manufactured");
    if (sc.sweep.preset != "manufactured" && sc.sweep.preset != "scenario") {
        c.fail("sweep.preset", "unknown value '" + sc.sweep.preset + "' (expected manufactured or scenario)");
    }
    sc.sweep.limit = c.choice<Limit>("sweep.limit", "diffusion",
                                     {{"diffusion", Limit::diffusion},
                                      {"reaction", Limit::reaction},
                                      {"free_streaming", Limit::free_streaming}});
    sc.sweep.variant = c.choice<F1Variant>("sweep.f1_variant", "minus",
                                           {{"minus", F1Variant::minus}, {"full", F1Variant::full}});
    if (c.has("sweep.epsilons")) sc.sweep.epsilons = c.list("sweep.epsilons");
    sc.sweep.band.r_min = c.number("sweep.band_min", 0.05 * radius);
    sc.sweep.band.r_max = c.number("sweep.band_max", 0.75 * radius);

    c.check_all_used();
    return sc;
}

inline Scenario load_scenario(const std::string& path, std::optional<RunMode> command = std::nullopt) {
    return parse_scenario(ConfigMap::load(path), command);
}

/// Isotropic initial distribution per the scenario's initial-condition setting.
inline DistributionField initial_field(const Scenario& sc) {
    const auto& g = sc.grid;
    DistributionField f(g);
    for (int i = 0; i < g.n_r(); ++i) {
        for (int w = 0; w < g.n_omega(); ++w) {
            double beta = 0.0;
            if (sc.initial == InitialCondition::equilibrium) {
                const auto s = evaluate_group(sc.model, g.r_centers()[i], w);
                if (!(s.chi_tilde > 0.0)) {
                    throw SingularOpacity("initial: equilibrium needs chi_tilde > 0 everywhere");
                }
                beta = s.j / s.chi_tilde;
            } else if (sc.initial == InitialCondition::custom) {
                beta = sc.initial_beta(g.r_centers()[i]);
            }
            for (int k = 0; k < g.n_mu(); ++k) {
                f(i, k, w) = beta;
            }
        }
    }
    return f;
}

/// Scenario selected by a sweep: a manufactured preset on the configured grid sizes, or the configured model.
inline SweepScenario sweep_scenario(const Scenario& sc, int threads) {
    SweepScenario out = sc.sweep.preset == "manufactured"
                            ? sweep_scenario(sc.sweep.limit, sc.grid.n_r(), sc.grid.n_mu(), sc.grid.n_omega())
                            : SweepScenario{"scenario", sc.model, sc.grid, sc.sweep.band};
    if (sc.sweep.preset == "scenario") {
        out.model.scaling = ScalingMode::none;
        out.model.epsilon = 1.0;
    }
    out.band = sc.sweep.band;
    out.threads = threads;
    return out;
}

}  // namespace nutrans
