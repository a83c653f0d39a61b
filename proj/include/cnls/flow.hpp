#pragma once

// Descending flow on the product of mass spheres: explicit Euler steps on
// u' = -h V(u) with backtracking and re-projection, invariant-set monitors
// (kinetic ball, energy barrier, cone tubes), and sign classification.

#include <algorithm>

#include "cnls/core.hpp"
#include "cnls/discretization.hpp"
#include "cnls/energy.hpp"
#include "cnls/gmap.hpp"

namespace cnls {

struct StepControl {
    double dt_init = 1.0;
    double dt_min = 1e-12;
    double dt_max = 1.0;
    double armijo_factor = 0.2;
    double v_tol = 1e-9;
    long max_steps = 5000;
    double delta = 0.0;                                   // cone tube width (0: tube monitor off)
    double rho = std::numeric_limits<double>::infinity();  // kinetic ball radius
    double m1 = std::numeric_limits<double>::infinity();   // energy barrier
    double c4 = 0.0;  // Sobolev constant for the cone-distance lower bracket
    double el_factor = 10.0;  // convergence needs EL residual < el_factor * v_tol
    double classify_theta = 1e-3;
    bool use_cutoff = false;  // plain solves run with h == 1
    double cutoff_a = 0.0, cutoff_b = 0.0, cutoff_eps = 1.0;
    // components required to stay nonnegative (semi-nodal runs), 0-based
    std::vector<int> positive_components;
    CgOptions cg{1e-12, 0, false};
};

// Bracket for dist(u, +-P_i): [c4 * ||u_i_mp||_L4, ||u_i_mp||_H1].
struct ConeBracket {
    double lower_pos = 0.0, upper_pos = 0.0;  // distance to P_i (negative part norms)
    double lower_neg = 0.0, upper_neg = 0.0;  // distance to -P_i (positive part norms)
};

inline std::vector<ConeBracket> cone_brackets(const VecField& u, const LaplacianOp& lap, double c4) {
    std::vector<ConeBracket> out(static_cast<std::size_t>(u.m()));
    for (int i = 0; i < u.m(); ++i) {
        Field neg = negative_part(u[i]);
        Field pos = positive_part(u[i]);
        auto& b = out[static_cast<std::size_t>(i)];
        b.lower_pos = c4 * norm_lp(neg, 4.0);
        b.upper_pos = norm_h1(lap, neg);
        b.lower_neg = c4 * norm_lp(pos, 4.0);
        b.upper_neg = norm_h1(lap, pos);
    }
    return out;
}

// Exact H1 distance to the cone {v_i >= 0}: obstacle problem
// min ||u_i - v||_H1 over v >= 0, solved by projected SOR. Validation-only
// companion to the bracket; O(iters * n) and meant for small grids.
inline double cone_distance_exact(const Field& u, const LaplacianOp& lap, int sweeps = 4000,
                                  double omega = 1.5) {
    const auto& g = *u.grid;
    Field x = positive_part(u);
    const int n0 = g.sizes[0], n1 = g.dim > 1 ? g.sizes[1] : 1, n2 = g.dim > 2 ? g.sizes[2] : 1;
    const std::size_t s2 = 1, s1 = static_cast<std::size_t>(n2), s0 = static_cast<std::size_t>(n1) * n2;
    const double diag = lap.diag_value();
    Field b = lap.apply(u);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        std::size_t idx = 0;
        double change = 0.0;
        for (int i0 = 0; i0 < n0; ++i0)
            for (int i1 = 0; i1 < n1; ++i1)
                for (int i2 = 0; i2 < n2; ++i2, ++idx) {
                    double off = 0.0;
                    off += lap.inv_h2[0] * ((i0 > 0 ? x[idx - s0] : 0.0) + (i0 + 1 < n0 ? x[idx + s0] : 0.0));
                    if (g.dim > 1)
                        off += lap.inv_h2[1] * ((i1 > 0 ? x[idx - s1] : 0.0) + (i1 + 1 < n1 ? x[idx + s1] : 0.0));
                    if (g.dim > 2)
                        off += lap.inv_h2[2] * ((i2 > 0 ? x[idx - s2] : 0.0) + (i2 + 1 < n2 ? x[idx + s2] : 0.0));
                    const double xg = (b[idx] + off) / diag;
                    const double xn = std::max(0.0, x[idx] + omega * (xg - x[idx]));
                    change = std::max(change, std::abs(xn - x[idx]));
                    x[idx] = xn;
                }
        if (change < 1e-14) break;
    }
    Field d(u.grid);
    for (std::size_t t = 0; t < d.size(); ++t) d[t] = u[t] - x[t];
    return norm_h1(lap, d);
}

// ---------------------------------------------------------------------------
// Sphere projection: exact per-component mass rescaling. Idempotent: a
// component already within a few ulps of its mass is left untouched.
// ---------------------------------------------------------------------------
inline VecField project_to_spheres(const VecField& u, const std::vector<double>& masses) {
    if (u.m() != static_cast<int>(masses.size()))
        throw std::invalid_argument("masses must match component count");
    VecField out = u;
    for (int i = 0; i < u.m(); ++i) {
        const double mass = inner_l2(u[i], u[i]);
        if (!(mass > 0.0)) throw std::runtime_error("component vanished: cannot project to sphere");
        const double c = masses[static_cast<std::size_t>(i)];
        if (std::abs(mass - c) <= 8.0 * std::numeric_limits<double>::epsilon() * c) continue;
        const double s = std::sqrt(c / mass);
        for (auto& x : out[i].v) x *= s;
    }
    return out;
}

// Energy-band surrogate of the deformation cutoff: 0 where E >= b + 2 eps or
// E <= a - 2 eps, 1 on the band [a - eps, b + eps], linear in between.
inline double cutoff_h_value(double E, double a, double b, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("cutoff eps must be positive");
    if (a > b) throw std::invalid_argument("cutoff requires a <= b");
    if (E >= b + 2.0 * eps || E <= a - 2.0 * eps) return 0.0;
    if (E >= a - eps && E <= b + eps) return 1.0;
    if (E > b + eps) return (b + 2.0 * eps - E) / eps;
    return (E - (a - 2.0 * eps)) / eps;
}

inline double cutoff_h(const VecField& u, double a, double b, double eps, const SystemParams& p,
                       const LaplacianOp& lap) {
    return cutoff_h_value(energy_total(u, p, lap), a, b, eps);
}

// ---------------------------------------------------------------------------
// Flow state and stepping.
// ---------------------------------------------------------------------------
enum class FlowStatus { Running, Converged, MaxSteps, Stagnated, Diverged, ComponentVanished, Frozen };

inline const char* to_string(FlowStatus s) {
    switch (s) {
        case FlowStatus::Running: return "running";
        case FlowStatus::Converged: return "converged";
        case FlowStatus::MaxSteps: return "max_steps";
        case FlowStatus::Stagnated: return "stagnated";
        case FlowStatus::Diverged: return "diverged";
        case FlowStatus::ComponentVanished: return "component_vanished";
        default: return "frozen";
    }
}

struct LogRow {
    long step;
    double t, dt, energy, v_norm;
    std::vector<double> lambdas;
    double mass_err_max, cone_lb_min;
    bool in_B_rho, below_M1;
};

struct FlowState {
    VecField u;
    double t = 0.0;
    double energy = 0.0;
    double v_norm = 0.0;
    std::vector<double> lambdas;
    std::vector<ConeBracket> cone;
    long step_count = 0;
    double dt_next = 1.0;
    double dt_last = 0.0;
    FlowStatus status = FlowStatus::Running;
    VecField v_cache;
    double descent_product = 0.0;
};

struct InvariantReport {
    bool in_B_rho = true;
    bool below_M1 = true;
    double kinetic = 0.0;
    double mass_err_max = 0.0;
    double cone_lb_min = 0.0;  // min over components and signs of the lower bracket
    bool positive_ok = true;   // monitored components stayed nonnegative
};

inline InvariantReport check_invariant_sets(const FlowState& st, const StepControl& ctl,
                                            const SystemParams& p, const LaplacianOp& lap) {
    InvariantReport rep;
    rep.kinetic = kinetic_sum(lap, st.u);
    rep.in_B_rho = rep.kinetic < ctl.rho;
    rep.below_M1 = st.energy < ctl.m1;
    for (int i = 0; i < p.m; ++i) {
        const double c = p.masses[static_cast<std::size_t>(i)];
        rep.mass_err_max = std::max(rep.mass_err_max, std::abs(inner_l2(st.u[i], st.u[i]) - c) / c);
    }
    double lb = std::numeric_limits<double>::infinity();
    for (const auto& b : st.cone) lb = std::min({lb, b.lower_pos, b.lower_neg});
    rep.cone_lb_min = std::isfinite(lb) ? lb : 0.0;
    for (int i : ctl.positive_components) {
        for (double x : st.u[i].v)
            if (x < 0.0) {
                rep.positive_ok = false;
                break;
            }
    }
    return rep;
}

inline void refresh_diagnostics(FlowState& st, const StepControl& ctl, const SystemParams& p,
                                const LaplacianOp& lap, bool certify = false) {
    GOptions gopt;
    gopt.cg = ctl.cg;
    PseudogradientResult pg = pseudogradient_v(st.u, p, lap, gopt, certify);
    st.v_cache = std::move(pg.v);
    st.v_norm = pg.v_norm_h1;
    st.lambdas = std::move(pg.lambdas);
    st.descent_product = pg.descent_product;
    st.energy = energy_total(st.u, p, lap);
    st.cone = cone_brackets(st.u, lap, ctl.c4);
}

inline FlowState init_flow_state(const VecField& init, const StepControl& ctl, const SystemParams& p,
                                 const LaplacianOp& lap) {
    FlowState st;
    st.u = project_to_spheres(init, p.masses);
    st.dt_next = ctl.dt_init;
    refresh_diagnostics(st, ctl, p, lap);
    return st;
}

// One accepted Euler step (or a terminal status change). dt halves until the
// energy decreases by at least armijo_factor * dt * h * ||V||^2.
inline FlowState flow_step(FlowState st, const StepControl& ctl, const SystemParams& p,
                           const LaplacianOp& lap) {
    if (st.status != FlowStatus::Running) return st;
    if (st.v_norm < ctl.v_tol) {
        st.status = FlowStatus::Converged;
        return st;
    }
    const double h = ctl.use_cutoff
                         ? cutoff_h_value(st.energy, ctl.cutoff_a, ctl.cutoff_b, ctl.cutoff_eps)
                         : 1.0;
    if (h == 0.0) {
        st.status = FlowStatus::Frozen;
        return st;
    }
    double dt = std::clamp(st.dt_next, ctl.dt_min, ctl.dt_max);
    const double need = ctl.armijo_factor * h * st.v_norm * st.v_norm;
    // Near convergence the required decrease sinks below the evaluation noise
    // of E; the slack keeps the line search from stalling there while staying
    // far inside the per-step monotonicity budget.
    const double noise = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(st.energy));
    while (true) {
        VecField trial = st.u;
        for (int i = 0; i < p.m; ++i)
            for (std::size_t t = 0; t < trial[i].size(); ++t)
                trial[i][t] -= dt * h * st.v_cache[i][t];
        bool vanished = false;
        VecField projected;
        try {
            projected = project_to_spheres(trial, p.masses);
        } catch (const std::runtime_error&) {
            vanished = true;
        }
        if (!vanished) {
            const double e_trial = energy_total(projected, p, lap);
            if (st.energy - e_trial >= need * dt - noise) {
                st.u = std::move(projected);
                st.t += dt * h;
                st.step_count += 1;
                st.dt_last = dt;
                st.dt_next = std::min(dt * 2.0, ctl.dt_max);
                refresh_diagnostics(st, ctl, p, lap);
                return st;
            }
        }
        if (dt <= ctl.dt_min) {
            st.status = vanished ? FlowStatus::ComponentVanished : FlowStatus::Stagnated;
            return st;
        }
        dt *= 0.5;
        if (dt < ctl.dt_min) dt = ctl.dt_min;
    }
}

// ---------------------------------------------------------------------------
// Classification by nodal values relative to theta * ||u_i||_inf.
// ---------------------------------------------------------------------------
inline Classification classify(const VecField& u, double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("classification threshold must be positive");
    Classification c;
    c.per_component.resize(static_cast<std::size_t>(u.m()));
    double global_sup = 0.0;
    for (int i = 0; i < u.m(); ++i) global_sup = std::max(global_sup, norm_lp(u[i], std::numeric_limits<double>::infinity()));
    const double floor_abs = 1e-13 * global_sup + std::numeric_limits<double>::min();
    int n_zero = 0, n_pos = 0, n_neg = 0, n_sign = 0;
    for (int i = 0; i < u.m(); ++i) {
        double lo = 0.0, hi = 0.0, sup = 0.0;
        for (double x : u[i].v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            sup = std::max(sup, std::abs(x));
        }
        ComponentSign tag;
        if (sup <= floor_abs) {
            tag = ComponentSign::Zero;
            ++n_zero;
        } else if (lo < -theta * sup && hi > theta * sup) {
            tag = ComponentSign::SignChanging;
            ++n_sign;
        } else if (hi > theta * sup && lo >= -theta * sup) {
            tag = ComponentSign::Positive;
            ++n_pos;
        } else if (lo < -theta * sup && hi <= theta * sup) {
            tag = ComponentSign::Negative;
            ++n_neg;
        } else {
            tag = ComponentSign::Zero;  // below threshold everywhere
            ++n_zero;
        }
        c.per_component[static_cast<std::size_t>(i)] = tag;
    }
    const int m = u.m();
    if (n_zero == m)
        c.tag = SolutionTag::Trivial;
    else if (n_zero > 0)
        c.tag = SolutionTag::SemiTrivial;
    else if (n_sign == m)
        c.tag = SolutionTag::SignChanging;
    else if (n_pos == m)
        c.tag = SolutionTag::Positive;
    else if (n_sign >= 1 && n_sign + n_pos == m) {
        c.tag = SolutionTag::SemiNodal;
        c.d = n_sign;
    } else
        c.tag = SolutionTag::Mixed;
    return c;
}

// ---------------------------------------------------------------------------
// Drive the flow to a critical point.
// ---------------------------------------------------------------------------
struct SolveReport {
    VecField u;
    std::vector<double> lambdas;
    double energy = 0.0;
    double v_norm = 0.0;
    double el_residual = 0.0;
    Classification classification;
    FlowStatus status = FlowStatus::Running;
    long steps = 0;
    std::vector<LogRow> log;
    std::vector<std::string> violations;
};

inline json to_json(const SolveReport& r) {
    json cls = json::array();
    for (auto s : r.classification.per_component) cls.push_back(to_string(s));
    return json{{"lambdas", r.lambdas},
                {"energy", r.energy},
                {"v_norm", r.v_norm},
                {"el_residual", r.el_residual},
                {"classification", to_string(r.classification)},
                {"per_component", cls},
                {"status", to_string(r.status)},
                {"steps", r.steps},
                {"violations", r.violations},
                {"u", to_json(r.u)}};
}

inline SolveReport run_to_critical(const VecField& init, const StepControl& ctl, const SystemParams& p,
                                   const LaplacianOp& lap) {
    FlowState st = init_flow_state(init, ctl, p, lap);
    SolveReport rep;
    auto log_state = [&](const FlowState& s, double dt_used) {
        InvariantReport inv = check_invariant_sets(s, ctl, p, lap);
        LogRow row{s.step_count, s.t,        dt_used,        s.energy,
                   s.v_norm,     s.lambdas,  inv.mass_err_max, inv.cone_lb_min,
                   inv.in_B_rho, inv.below_M1};
        rep.log.push_back(std::move(row));
        if (std::isfinite(ctl.rho) && !inv.in_B_rho)
            rep.violations.push_back("step " + std::to_string(s.step_count) + ": left B_rho");
        if (std::isfinite(ctl.m1) && !inv.below_M1)
            rep.violations.push_back("step " + std::to_string(s.step_count) + ": outside B_rho^M1 (E >= M1)");
        if (!inv.positive_ok)
            rep.violations.push_back("step " + std::to_string(s.step_count) +
                                     ": monitored component went negative");
        return inv;
    };
    InvariantReport inv0 = log_state(st, 0.0);
    if (std::isfinite(ctl.rho) && !inv0.in_B_rho) st.status = FlowStatus::Diverged;

    long logged = st.step_count;
    while (st.status == FlowStatus::Running && st.step_count < ctl.max_steps) {
        st = flow_step(std::move(st), ctl, p, lap);
        if (st.step_count > logged) {
            logged = st.step_count;
            InvariantReport inv = log_state(st, st.dt_last);
            if (std::isfinite(ctl.rho) && !inv.in_B_rho) {
                st.status = FlowStatus::Diverged;
                break;
            }
        }
    }
    if (st.status == FlowStatus::Running) st.status = FlowStatus::MaxSteps;

    rep.u = st.u;
    rep.lambdas = st.lambdas;
    rep.energy = st.energy;
    rep.v_norm = st.v_norm;
    rep.el_residual = euler_lagrange_residual(st.u, st.lambdas, p, lap, ctl.cg);
    rep.classification = classify(st.u, ctl.classify_theta);
    rep.steps = st.step_count;
    if (st.status == FlowStatus::Converged && rep.el_residual >= ctl.el_factor * ctl.v_tol)
        st.status = FlowStatus::Stagnated;  // dt_min artifact guard
    rep.status = st.status;
    return rep;
}

}  // namespace cnls
