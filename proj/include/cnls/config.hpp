#pragma once

// Run configuration: a flat JSON document with strict key checking. Every
// science parameter lives here; the process flags only point at the file and
// override the seed and output directory.

#include <cstdint>
#include <set>

#include "cnls/bifurcation.hpp"
#include "cnls/core.hpp"
#include "cnls/flow.hpp"

namespace cnls {

enum class Command { Spectrum, Feasibility, Solve, Bracket, Sweep, Selftest };

inline const char* to_string(Command c) {
    switch (c) {
        case Command::Spectrum: return "spectrum";
        case Command::Feasibility: return "feasibility";
        case Command::Solve: return "solve";
        case Command::Bracket: return "bracket";
        case Command::Sweep: return "sweep";
        default: return "selftest";
    }
}

struct RunConfig {
    Command command = Command::Spectrum;
    SystemParams params;      // validated
    std::vector<int> sizes;   // grid interior nodes per axis
    int K = 8;                // spectral basis size
    StepControl flow;         // dt_*, armijo_factor, v_tol, max_steps, delta, rho, m1
    bool rho_set = false;     // rho/m1 given explicitly (otherwise from feasibility)
    bool m1_set = false;
    bool delta_set = false;
    // linking
    int k = 1;
    int d = 0;          //, 0: no semi-nodal split
    int J = 8;
    int samples = 10000;
    std::uint64_t seed = 12345;
    double rho_override = 0.0;
    bool rho_override_set = false;
    // sweep
    std::vector<double> direction{0.5, 0.5};
    std::vector<double> radii{1e-2, 1e-3, 1e-4};
    std::string target = "positive";  // positive | sign_changing | semi_nodal | semi_trivial
    int target_k = 1;
    int target_d = 1;
    std::vector<int> active{1};  // 1-based, for semi_trivial
    // io
    std::string output_dir = "out";
    bool quiet = false;
};

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& known) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw std::invalid_argument("unknown config key: " + it.key());
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    static const std::set<std::string> known = {
        "command",   "m",         "mu",       "beta",     "masses",   "dim",       "lengths",
        "sizes",     "K",         "dt_init",  "dt_min",   "dt_max",   "armijo_factor",
        "v_tol",     "max_steps", "delta",    "rho",      "m1",       "use_cutoff",
        "cutoff_a",  "cutoff_b",  "cutoff_eps", "classify_theta",     "k",         "d",
        "J",         "samples",   "seed",     "rho_override",         "direction", "radii",
        "target",    "target_k",  "target_d", "active",   "output_dir", "quiet"};
    detail::require_keys(j, known);

    RunConfig cfg;
    const std::string cmd = j.at("command").get<std::string>();
    if (cmd == "spectrum")
        cfg.command = Command::Spectrum;
    else if (cmd == "feasibility")
        cfg.command = Command::Feasibility;
    else if (cmd == "solve")
        cfg.command = Command::Solve;
    else if (cmd == "bracket")
        cfg.command = Command::Bracket;
    else if (cmd == "sweep")
        cfg.command = Command::Sweep;
    else if (cmd == "selftest")
        cfg.command = Command::Selftest;
    else
        throw std::invalid_argument("unknown command: " + cmd);

    SystemParams p;
    p.m = 2;
    p.mu = {1.0, 1.0};
    p.beta = {{0.0, 0.1}, {0.1, 0.0}};
    p.masses = {1e-3, 1e-3};
    p.dim = 1;
    p.lengths = {M_PI};
    detail::read(j, "dim", p.dim);
    detail::read(j, "lengths", p.lengths);
    detail::read(j, "mu", p.mu);
    detail::read(j, "beta", p.beta);
    detail::read(j, "masses", p.masses);
    if (j.contains("m"))
        p.m = j.at("m").get<int>();
    else
        p.m = static_cast<int>(p.mu.size());
    cfg.params = validate_params(std::move(p));

    cfg.sizes.assign(static_cast<std::size_t>(cfg.params.dim), 200);
    detail::read(j, "sizes", cfg.sizes);
    detail::read(j, "K", cfg.K);

    detail::read(j, "dt_init", cfg.flow.dt_init);
    detail::read(j, "dt_min", cfg.flow.dt_min);
    detail::read(j, "dt_max", cfg.flow.dt_max);
    detail::read(j, "armijo_factor", cfg.flow.armijo_factor);
    detail::read(j, "v_tol", cfg.flow.v_tol);
    long max_steps = cfg.flow.max_steps;
    detail::read(j, "max_steps", max_steps);
    cfg.flow.max_steps = max_steps;
    if (j.contains("delta")) {
        cfg.flow.delta = j.at("delta").get<double>();
        cfg.delta_set = true;
    }
    if (j.contains("rho")) {
        cfg.flow.rho = j.at("rho").get<double>();
        cfg.rho_set = true;
    }
    if (j.contains("m1")) {
        cfg.flow.m1 = j.at("m1").get<double>();
        cfg.m1_set = true;
    }
    detail::read(j, "use_cutoff", cfg.flow.use_cutoff);
    detail::read(j, "cutoff_a", cfg.flow.cutoff_a);
    detail::read(j, "cutoff_b", cfg.flow.cutoff_b);
    detail::read(j, "cutoff_eps", cfg.flow.cutoff_eps);
    detail::read(j, "classify_theta", cfg.flow.classify_theta);
    if (!(cfg.flow.dt_min <= cfg.flow.dt_init && cfg.flow.dt_init <= cfg.flow.dt_max))
        throw std::invalid_argument("need dt_min <= dt_init <= dt_max");
    if (!(cfg.flow.armijo_factor > 0.0 && cfg.flow.armijo_factor < 1.0))
        throw std::invalid_argument("armijo_factor must lie in (0,1)");

    detail::read(j, "k", cfg.k);
    detail::read(j, "d", cfg.d);
    detail::read(j, "J", cfg.J);
    detail::read(j, "samples", cfg.samples);
    detail::read(j, "seed", cfg.seed);
    if (j.contains("rho_override")) {
        cfg.rho_override = j.at("rho_override").get<double>();
        cfg.rho_override_set = true;
    }
    detail::read(j, "direction", cfg.direction);
    detail::read(j, "radii", cfg.radii);
    detail::read(j, "target", cfg.target);
    detail::read(j, "target_k", cfg.target_k);
    detail::read(j, "target_d", cfg.target_d);
    detail::read(j, "active", cfg.active);
    detail::read(j, "output_dir", cfg.output_dir);
    detail::read(j, "quiet", cfg.quiet);
    if (cfg.target != "positive" && cfg.target != "sign_changing" && cfg.target != "semi_nodal" &&
        cfg.target != "semi_trivial")
        throw std::invalid_argument("unknown sweep target: " + cfg.target);
    if (static_cast<int>(cfg.sizes.size()) != cfg.params.dim)
        throw std::invalid_argument("sizes must have dim entries");
    if (cfg.K < 1) throw std::invalid_argument("K must be positive");
    if (cfg.k < 1) throw std::invalid_argument("linking index k must be positive");
    if (cfg.d < 0 || cfg.d >= cfg.params.m)
        throw std::invalid_argument("semi-nodal d must satisfy 0 <= d <= m-1");
    return cfg;
}

// Effective-config echo: every field the parser fills, so that
// parse(serialize(cfg)) reproduces cfg.
inline json to_json(const RunConfig& cfg) {
    json j{{"command", to_string(cfg.command)},
           {"m", cfg.params.m},
           {"mu", cfg.params.mu},
           {"beta", cfg.params.beta},
           {"masses", cfg.params.masses},
           {"dim", cfg.params.dim},
           {"lengths", cfg.params.lengths},
           {"sizes", cfg.sizes},
           {"K", cfg.K},
           {"dt_init", cfg.flow.dt_init},
           {"dt_min", cfg.flow.dt_min},
           {"dt_max", cfg.flow.dt_max},
           {"armijo_factor", cfg.flow.armijo_factor},
           {"v_tol", cfg.flow.v_tol},
           {"max_steps", cfg.flow.max_steps},
           {"use_cutoff", cfg.flow.use_cutoff},
           {"cutoff_a", cfg.flow.cutoff_a},
           {"cutoff_b", cfg.flow.cutoff_b},
           {"cutoff_eps", cfg.flow.cutoff_eps},
           {"classify_theta", cfg.flow.classify_theta},
           {"k", cfg.k},
           {"d", cfg.d},
           {"J", cfg.J},
           {"samples", cfg.samples},
           {"seed", cfg.seed},
           {"direction", cfg.direction},
           {"radii", cfg.radii},
           {"target", cfg.target},
           {"target_k", cfg.target_k},
           {"target_d", cfg.target_d},
           {"active", cfg.active},
           {"output_dir", cfg.output_dir},
           {"quiet", cfg.quiet}};
    if (cfg.delta_set) j["delta"] = cfg.flow.delta;
    if (cfg.rho_set) j["rho"] = cfg.flow.rho;
    if (cfg.m1_set) j["m1"] = cfg.flow.m1;
    if (cfg.rho_override_set) j["rho_override"] = cfg.rho_override;
    return j;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return to_json(a) == to_json(b); }

}  // namespace cnls
