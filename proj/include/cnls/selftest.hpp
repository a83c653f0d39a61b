#pragma once

// Built-in verification suite: twelve analytic-oracle and property checks
// covering the spectrum, gradients, the G operator contract, the descent
// inequality, the energy barriers, the minimax sandwich, flow contracts,
// the solve pipelines, the mass-to-zero sweeps, the manifold rate test, and
// the cone mapping. Each check prints one pass/fail line.

#include <chrono>
#include <iomanip>
#include <sstream>

#include "cnls/bifurcation.hpp"

namespace cnls::selftest {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

namespace detail {

inline SystemParams make_params(std::vector<double> mu, std::vector<std::vector<double>> beta,
                                std::vector<double> masses) {
    SystemParams p;
    p.m = static_cast<int>(mu.size());
    p.mu = std::move(mu);
    p.beta = std::move(beta);
    p.masses = std::move(masses);
    p.dim = 1;
    p.lengths = {M_PI};
    return validate_params(std::move(p));
}

inline SystemParams pair_params(double mu1, double mu2, double b12, double c1, double c2) {
    return make_params({mu1, mu2}, {{0.0, b12}, {b12, 0.0}}, {c1, c2});
}

// The 1D two-component benchmark used across the solve-level checks.
inline SystemParams benchmark2() { return pair_params(1.0, 1.0, 0.1, 1e-3, 1e-3); }

struct Context {
    GridPtr grid = Grid::make(1, {200}, {M_PI});
    LaplacianOp lap = LaplacianOp::make(grid);
    SpectralBasis basis = eigenpairs(lap, 12);
    SobolevEstimate c4 = estimate_sobolev_c4(lap);
};

inline const Context& ctx() {
    static Context c;
    return c;
}

inline VecField random_on_spheres(const SystemParams& p, const SpectralBasis& basis,
                                  std::mt19937_64& rng, int modes, bool decay = false) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Field> comps;
    for (int i = 0; i < p.m; ++i) {
        Field f(basis.grid);
        for (int k = 1; k <= modes; ++k) {
            const double c = g(rng) * (decay ? basis.lam(1) / basis.lam(k) : 1.0);
            for (std::size_t t = 0; t < f.size(); ++t) f[t] += c * basis.mode(k)[t];
        }
        const double s = std::sqrt(p.masses[static_cast<std::size_t>(i)]) / norm_l2(f);
        for (auto& x : f.v) x *= s;
        comps.push_back(std::move(f));
    }
    return VecField(std::move(comps));
}

inline VecField mode_point(const SpectralBasis& basis, const std::vector<int>& ks,
                           const std::vector<double>& masses) {
    std::vector<Field> comps;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        Field f = basis.mode(ks[i]);
        const double s = std::sqrt(masses[i]) / norm_l2(f);
        for (auto& x : f.v) x *= s;
        comps.push_back(std::move(f));
    }
    return VecField(std::move(comps));
}

inline std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(3) << std::scientific << x;
    return os.str();
}

}  // namespace detail

// 1. Spectrum oracle: |Lambda_k^h - k^2|/k^2 < 1e-3 for k <= 5 at n = 200,
//    and refining to n = 400 shrinks each error by a factor of at least 3.5.
inline CriterionResult criterion_spectrum() {
    CriterionResult r;
    r.id = 1;
    r.name = "spectrum oracle and second-order refinement";
    auto lapA = LaplacianOp::make(Grid::make(1, {200}, {M_PI}));
    auto lapB = LaplacianOp::make(Grid::make(1, {400}, {M_PI}));
    SpectralBasis a = eigenpairs(lapA, 5), b = eigenpairs(lapB, 5);
    double worst_rel = 0.0, worst_ratio = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 5; ++k) {
        const double exact = static_cast<double>(k) * k;
        const double errA = std::abs(a.lam(k) - exact) / exact;
        const double errB = std::abs(b.lam(k) - exact) / exact;
        worst_rel = std::max(worst_rel, errA);
        worst_ratio = std::min(worst_ratio, errA / errB);
    }
    r.pass = worst_rel < 1e-3 && worst_ratio >= 3.5;
    r.detail = "max rel err " + detail::fmt(worst_rel) + " (< 1e-3), refinement ratio " +
               detail::fmt(worst_ratio) + " (>= 3.5)";
    return r;
}

// 2. Gradient check: central finite differences of E against the H1 pairing
//    with the free gradient, 50 random pairs, 1e-6 relative.
inline CriterionResult criterion_gradient() {
    CriterionResult r;
    r.id = 2;
    r.name = "free gradient vs central finite differences";
    const auto& c = detail::ctx();
    SystemParams p = detail::pair_params(1.0, -0.6, -0.3, 1.0, 0.7);
    std::mt19937_64 rng(1002);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        VecField u = detail::random_on_spheres(p, c.basis, rng, 5);
        VecField v = detail::random_on_spheres(p, c.basis, rng, 5);
        VecField g = free_gradient(u, p, c.lap);
        double gv = 0.0;
        for (int i = 0; i < p.m; ++i) gv += inner_h1(c.lap, g[i], v[i]);
        const double t = 1e-5;
        VecField up = u, um = u;
        for (int i = 0; i < p.m; ++i)
            for (std::size_t n = 0; n < u[i].size(); ++n) {
                up[i][n] += t * v[i][n];
                um[i][n] -= t * v[i][n];
            }
        const double fd = (energy_total(up, p, c.lap) - energy_total(um, p, c.lap)) / (2.0 * t);
        worst = std::max(worst, std::abs(gv - fd) / (0.5 * (std::abs(gv) + std::abs(fd)) + 1e-300));
    }
    r.pass = worst < 1e-6;
    r.detail = "max rel deviation " + detail::fmt(worst) + " (< 1e-6) over 50 pairs";
    return r;
}

// 3. G-operator contract on 100 random manifold points with mixed-sign
//    coefficients, m = 3: constraint rows to 1e-11 c_i, strong-form dual
//    residual below 1e-10 (1 + |u|^3), and re-solve agreement to 1e-10.
inline CriterionResult criterion_g_contract() {
    CriterionResult r;
    r.id = 3;
    r.name = "G-operator constraint, residual, uniqueness";
    const auto& c = detail::ctx();
    SystemParams p = detail::make_params({1.0, -0.8, 0.6},
                                         {{0.0, 0.3, -0.2}, {0.3, 0.0, 0.4}, {-0.2, 0.4, 0.0}},
                                         {0.4, 0.25, 0.3});
    std::mt19937_64 rng(1003);
    double worst_con = 0.0, worst_res = 0.0, worst_uni = 0.0;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        VecField u = detail::random_on_spheres(p, c.basis, rng, 5);
        GResult g = g_map(u, p, c.lap);
        for (int i = 0; i < p.m; ++i) {
            const double ci = p.masses[static_cast<std::size_t>(i)];
            worst_con = std::max(worst_con, std::abs(inner_l2(u[i], g.w[i]) - ci) / (1e-11 * ci));
        }
        const double un = norm_h1_vec(c.lap, u);
        worst_res = std::max(worst_res,
                             g_strong_residual(u, g, p, c.lap) / (1e-10 * (1.0 + un * un * un)));
        for (int i = 0; i < p.m; ++i) {
            Field warm(u.grid());
            for (auto& x : warm.v) x = gauss(rng);
            GOptions opt;
            opt.start_rhs = &warm;
            auto [w_b, lam_b] = solve_component_g(u, i, p, c.lap, opt);
            Field diff(u.grid());
            for (std::size_t t = 0; t < diff.size(); ++t) diff[t] = g.w[i][t] - w_b[t];
            worst_uni = std::max(worst_uni, norm_h1(c.lap, diff) /
                                                (1e-10 * (1.0 + norm_h1(c.lap, g.w[i]))));
        }
    }
    r.pass = worst_con <= 1.0 && worst_res <= 1.0 && worst_uni <= 1.0;
    r.detail = "constraint " + detail::fmt(worst_con) + "x, residual " + detail::fmt(worst_res) +
               "x, uniqueness " + detail::fmt(worst_uni) + "x of their budgets";
    return r;
}

// 4. Pseudogradient inequality <grad E|_S, V> >= |V|^2 - 1e-9 across signed
//    coefficient patterns, and V == constrained gradient to 1e-9 when every
//    coefficient is positive.
inline CriterionResult criterion_pseudogradient() {
    CriterionResult r;
    r.id = 4;
    r.name = "pseudogradient descent inequality";
    const auto& c = detail::ctx();
    std::mt19937_64 rng(1004);
    double worst_gap = -std::numeric_limits<double>::infinity(), worst_eq = 0.0;
    SystemParams mixed_a = detail::pair_params(-1.0, 0.7, -0.3, 0.4, 0.5);
    SystemParams mixed_b = detail::pair_params(-0.5, -0.9, 0.6, 0.3, 0.3);
    SystemParams pos = detail::pair_params(1.0, 0.7, 0.3, 0.4, 0.5);
    for (const auto* p : {&mixed_a, &mixed_b})
        for (int trial = 0; trial < 25; ++trial) {
            VecField u = detail::random_on_spheres(*p, c.basis, rng, 5);
            PseudogradientResult pg = pseudogradient_v(u, *p, c.lap);
            worst_gap = std::max(worst_gap, pg.v_norm_h1 * pg.v_norm_h1 - pg.descent_product);
        }
    for (int trial = 0; trial < 50; ++trial) {
        VecField u = detail::random_on_spheres(pos, c.basis, rng, 5);
        PseudogradientResult pg = pseudogradient_v(u, pos, c.lap);
        worst_gap = std::max(worst_gap, pg.v_norm_h1 * pg.v_norm_h1 - pg.descent_product);
        VecField cg = constrained_gradient(u, pos, c.lap);
        double err2 = 0.0;
        for (int i = 0; i < pos.m; ++i) {
            Field diff(u.grid());
            for (std::size_t t = 0; t < diff.size(); ++t) diff[t] = pg.v[i][t] - cg[i][t];
            err2 += inner_h1(c.lap, diff, diff);
        }
        worst_eq = std::max(worst_eq, std::sqrt(err2));
    }
    r.pass = worst_gap <= 1e-9 && worst_eq <= 1e-9;
    r.detail = "worst |V|^2 - <gradE,V> = " + detail::fmt(worst_gap) +
               " (<= 1e-9), gradient-route mismatch " + detail::fmt(worst_eq) + " (<= 1e-9)";
    return r;
}

// 5. Coercivity floor E >= M0 |u|^2 - 1e-10 on 1000 random kinetic-ball
//    points of the feasible benchmark.
inline CriterionResult criterion_energy_floor() {
    CriterionResult r;
    r.id = 5;
    r.name = "energy floor on the kinetic ball";
    const auto& c = detail::ctx();
    SystemParams p = detail::benchmark2();
    FeasibilityReport f = feasibility_report(p, c.basis, 1, {}, c.c4.c4);
    if (!f.feasible) {
        r.detail = "benchmark unexpectedly infeasible";
        return r;
    }
    std::mt19937_64 rng(1005);
    double worst = -std::numeric_limits<double>::infinity();
    int accepted = 0, attempts = 0;
    while (accepted < 1000 && attempts < 60000) {
        ++attempts;
        VecField u = detail::random_on_spheres(p, c.basis, rng, 8, true);
        const double kin = kinetic_sum(c.lap, u);
        if (kin >= f.rho_chosen) continue;
        ++accepted;
        worst = std::max(worst, f.m0 * kin - energy_total(u, p, c.lap));
    }
    r.pass = accepted == 1000 && worst <= 1e-10;
    r.detail = "worst M0|u|^2 - E = " + detail::fmt(worst) + " (<= 1e-10) on " +
               std::to_string(accepted) + " ball points";
    return r;
}

// 6. Minimax sandwich at 1e4 samples on the feasible benchmark, and bracket
//    collapse to (1/2) sum c_i Lambda_2 within 1e-6 in the vanishing limit.
inline CriterionResult criterion_sandwich() {
    CriterionResult r;
    r.id = 6;
    r.name = "minimax sandwich and linear-limit collapse";
    const auto& c = detail::ctx();
    SystemParams p = detail::benchmark2();
    FeasibilityReport f = feasibility_report(p, c.basis, 1, {}, c.c4.c4);
    BracketResult b = estimate_minimax_bracket(1, {}, p, c.basis, c.lap, f, 10000, 1006);
    bool ok = f.feasible && b.ok && b.margin_left > 0.0 && b.margin_right > 0.0;
    double worst_collapse = 0.0;
    for (double sign : {1.0, -1.0}) {
        SystemParams q = detail::pair_params(sign * 1e-10, sign * 1e-10, sign * 1e-10, 1e-3, 1e-3);
        FeasibilityReport fq = feasibility_report(q, c.basis, 1, {}, c.c4.c4);
        BracketResult bq = estimate_minimax_bracket(1, {}, q, c.basis, c.lap, fq, 10000, 1007);
        const double v = 0.5 * q.mass_sum() * c.basis.lam(2);
        ok = ok && fq.feasible && bq.ok;
        worst_collapse = std::max({worst_collapse, std::abs(bq.lower - v) / v, std::abs(bq.upper - v) / v});
    }
    r.pass = ok && worst_collapse <= 1e-6;
    r.detail = "margins " + detail::fmt(b.margin_left) + " / " + detail::fmt(b.margin_right) +
               " (> 0), collapse deviation " + detail::fmt(worst_collapse) + " (<= 1e-6)";
    return r;
}

// 7. Flow contracts over a 500-step run: per-step mass drift <= 1e-10 c_i,
//    monotone energy to 1e-12 per step, zero invariant-set violations from a
//    feasible start.
inline CriterionResult criterion_flow_contracts() {
    CriterionResult r;
    r.id = 7;
    r.name = "flow step contracts over 500 steps";
    const auto& c = detail::ctx();
    SystemParams p = detail::pair_params(1.0, -0.5, -0.2, 2e-3, 1e-3);
    FeasibilityReport f = feasibility_report(p, c.basis, 1, {}, c.c4.c4);
    if (!f.feasible) {
        r.detail = "benchmark unexpectedly infeasible";
        return r;
    }
    StepControl ctl;
    ctl.dt_init = ctl.dt_max = 0.01;  // fixed small steps so the run spans 500 accepted steps
    ctl.v_tol = 1e-13;
    ctl.max_steps = 500;
    ctl.rho = f.rho_chosen;
    ctl.m1 = f.m1;
    ctl.c4 = c.c4.c4;
    VecField init = detail::mode_point(c.basis, {2, 2}, p.masses);
    SolveReport rep = run_to_critical(init, ctl, p, c.lap);
    double worst_drift = 0.0, worst_rise = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n < rep.log.size(); ++n) {
        worst_drift = std::max(worst_drift, rep.log[n].mass_err_max);
        worst_rise = std::max(worst_rise, rep.log[n].energy - rep.log[n - 1].energy);
    }
    r.pass = rep.steps == 500 && rep.violations.empty() && worst_drift <= 1e-10 &&
             worst_rise <= 1e-12;
    r.detail = std::to_string(rep.steps) + " steps, max mass drift " + detail::fmt(worst_drift) +
               " (<= 1e-10), max energy rise " + detail::fmt(worst_rise) + " (<= 1e-12), " +
               std::to_string(rep.violations.size()) + " violations";
    return r;
}

// 8. Sign-changing solve on the benchmark: converged with |V| < 1e-8,
//    Euler-Lagrange residual < 1e-6, both components sign-changing.
inline CriterionResult criterion_sign_changing_solve() {
    CriterionResult r;
    r.id = 8;
    r.name = "sign-changing solve (linking index 1)";
    const auto& c = detail::ctx();
    SystemParams p = detail::benchmark2();
    FeasibilityReport f = feasibility_report(p, c.basis, 1, {}, c.c4.c4);
    const double delta =
        0.1 * delta0_estimate(1, {}, c.basis, p.masses, f.rho_chosen, c.c4.c4, c.lap, 10000, 1008);
    StepControl ctl;
    ctl.rho = f.rho_chosen;
    ctl.m1 = f.m1;
    ctl.c4 = c.c4.c4;
    ctl.delta = delta;
    VecField init = pick_linking_init(1, 0, p, c.basis, c.lap, 2000, 1008, delta, c.c4.c4);
    SolveReport rep = run_to_critical(init, ctl, p, c.lap);
    Classification cls = classify(rep.u, 1e-3);
    r.pass = rep.status == FlowStatus::Converged && rep.v_norm < 1e-8 && rep.el_residual < 1e-6 &&
             cls.tag == SolutionTag::SignChanging;
    r.detail = std::string(to_string(rep.status)) + ", |V| = " + detail::fmt(rep.v_norm) +
               " (< 1e-8), EL residual " + detail::fmt(rep.el_residual) + " (< 1e-6), class " +
               to_string(cls);
    return r;
}

// 9. Semi-nodal solve (d = 1): first component sign-changing, second strictly
//    positive at every node, positivity never violated along the run.
inline CriterionResult criterion_semi_nodal_solve() {
    CriterionResult r;
    r.id = 9;
    r.name = "semi-nodal solve (d = 1)";
    const auto& c = detail::ctx();
    SystemParams p = detail::benchmark2();
    FeasibilityReport f = feasibility_report(p, c.basis, 1, 1, c.c4.c4);
    const double delta =
        0.1 * delta0_estimate(1, 1, c.basis, p.masses, f.rho_chosen, c.c4.c4, c.lap, 10000, 1009);
    StepControl ctl;
    ctl.rho = f.rho_chosen;
    ctl.m1 = f.m1;
    ctl.c4 = c.c4.c4;
    ctl.delta = delta;
    ctl.positive_components = {1};
    VecField init = pick_linking_init(1, 1, p, c.basis, c.lap, 2000, 1009, delta, c.c4.c4);
    SolveReport rep = run_to_critical(init, ctl, p, c.lap);
    Classification cls = classify(rep.u, 1e-3);
    double min_node = std::numeric_limits<double>::infinity();
    for (double x : rep.u[1].v) min_node = std::min(min_node, x);
    r.pass = rep.status == FlowStatus::Converged && rep.violations.empty() &&
             cls.per_component[0] == ComponentSign::SignChanging &&
             cls.per_component[1] == ComponentSign::Positive && min_node > 0.0;
    r.detail = std::string(to_string(rep.status)) + ", class " + to_string(cls) +
               ", min node of component 2 = " + detail::fmt(min_node) + " (> 0), " +
               std::to_string(rep.violations.size()) + " positivity violations";
    return r;
}

// 10. Mass-to-zero sweeps: multipliers approach the spectral targets with
//     shrinking errors (final < 5e-2 relative), profiles land within 1e-2 of
//     the signed eigenfunctions, and the semi-trivial embedding reproduces
//     the reduced residual to round-off.
inline CriterionResult criterion_sweeps() {
    CriterionResult r;
    r.id = 10;
    r.name = "bifurcation sweeps toward the spectrum";
    const auto& c = detail::ctx();
    SystemParams p = detail::pair_params(1.0, 1.0, 0.1, 1.0, 1.0);
    const std::vector<double> radii{1e-2, 1e-3, 1e-4};
    bool ok = true;
    std::string note;
    const std::vector<SweepTarget> targets = {{TargetKind::Positive, 1, 0},
                                              {TargetKind::SignChanging, 2, 0},
                                              {TargetKind::SemiNodal, 2, 1}};
    for (const auto& target : targets) {
        SweepReport rep = sweep(p, {0.5, 0.5}, radii, target, {}, c.lap, c.basis, c.c4.c4);
        bool good = rep.trend_ok && rep.final_max_rel_err < 5e-2;
        for (const auto& rec : rep.records) good = good && rec.converged && rec.feasible;
        const auto& last = rep.records.back();
        for (int i = 0; i < p.m; ++i) good = good && last.profile_dist[static_cast<std::size_t>(i)] < 1e-2;
        ok = ok && good;
        note += std::string(to_string(target.kind)) + ": err " + detail::fmt(rep.final_max_rel_err) +
                ", profile " + detail::fmt(*std::max_element(last.profile_dist.begin(),
                                                             last.profile_dist.end())) +
                "; ";
    }
    SemiTrivialReport st = semi_trivial_sweep(p, {0}, {1.0}, radii, {TargetKind::SignChanging, 2, 0},
                                              {}, c.lap, c.basis, c.c4.c4);
    double worst_embed = 0.0;
    for (std::size_t n = 0; n < st.embedded.size(); ++n) {
        worst_embed = std::max(worst_embed, std::abs(st.embedded_residuals[n] - st.reduced_residuals[n]) /
                                                (1e-12 * (1.0 + st.reduced_residuals[n])));
        ok = ok && st.classifications[n] == "semi_trivial";
    }
    ok = ok && worst_embed <= 1.0 && st.reduced.trend_ok;
    r.pass = ok;
    r.detail = note + "embedding residual mismatch " + detail::fmt(worst_embed) + "x of round-off";
    return r;
}

// 11. Manifold rate test: dist(u + sV(u), S_c) scales like s^2, slope within
//     2 +- 0.1 on the log-log fit over s in {1e-3, 1e-4, 1e-5}.
inline CriterionResult criterion_tangent_rate() {
    CriterionResult r;
    r.id = 11;
    r.name = "quadratic re-projection rate for tangent steps";
    const auto& c = detail::ctx();
    SystemParams p = detail::pair_params(1.0, -0.5, 0.3, 1.0, 0.7);
    std::mt19937_64 rng(1011);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        VecField u = detail::random_on_spheres(p, c.basis, rng, 6);
        PseudogradientResult pg = pseudogradient_v(u, p, c.lap, {}, false);
        const std::vector<double> ss{1e-3, 1e-4, 1e-5};
        std::vector<double> dd;
        for (double s : ss) {
            VecField pert = u;
            for (int i = 0; i < p.m; ++i)
                for (std::size_t t = 0; t < pert[i].size(); ++t) pert[i][t] += s * pg.v[i][t];
            VecField proj = project_to_spheres(pert, p.masses);
            double d2 = 0.0;
            for (int i = 0; i < p.m; ++i) {
                Field diff(u.grid());
                for (std::size_t t = 0; t < diff.size(); ++t) diff[t] = pert[i][t] - proj[i][t];
                d2 += inner_h1(c.lap, diff, diff);
            }
            dd.push_back(std::sqrt(d2));
        }
        const double slope = (std::log(dd[0]) - std::log(dd[2])) / (std::log(ss[0]) - std::log(ss[2]));
        worst = std::max(worst, std::abs(slope - 2.0));
    }
    r.pass = worst <= 0.1;
    r.detail = "max |slope - 2| = " + detail::fmt(worst) + " (<= 0.1) over 20 points";
    return r;
}

// 12. Cone mapping: G keeps nonnegative components nonnegative on the ball
//     under the mass condition, and contracts the delta-tube to delta/2 in
//     the upper cone-distance surrogate.
inline CriterionResult criterion_cone_mapping() {
    CriterionResult r;
    r.id = 12;
    r.name = "cone preservation and tube contraction of G";
    const auto& c = detail::ctx();
    SystemParams p = detail::benchmark2();
    const double rho = recipe_rho(c.basis.lam(2), p.mass_sum());
    for (int i = 0; i < p.m; ++i) {
        const double lhs = std::pow(p.mu_pos(i) + p.beta_max_pos, 2) * rho * rho * rho;
        if (!(lhs <= c.basis.lam(1) * std::pow(c.c4.c4, 8) * p.masses[static_cast<std::size_t>(i)])) {
            r.detail = "benchmark violates the cone mass condition";
            return r;
        }
    }
    std::mt19937_64 rng(1012);
    std::normal_distribution<double> g(0.0, 1.0);
    auto cone_point = [&]() {
        while (true) {
            std::vector<Field> comps;
            for (int i = 0; i < 2; ++i) {
                Field f(c.grid);
                for (int k = 1; k <= 3; ++k) {
                    const double w = g(rng);
                    for (std::size_t t = 0; t < f.size(); ++t) f[t] += w * c.basis.mode(k)[t];
                }
                if (i == 0)
                    for (auto& x : f.v) x = std::abs(x);
                const double s = std::sqrt(p.masses[static_cast<std::size_t>(i)]) / norm_l2(f);
                for (auto& x : f.v) x *= s;
                comps.push_back(std::move(f));
            }
            VecField u(std::move(comps));
            if (kinetic_sum(c.lap, u) < rho) return u;
        }
    };
    double worst_neg = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        VecField u = cone_point();
        GResult gr = g_map(u, p, c.lap);
        double lo = 0.0, sup = 0.0;
        for (double x : gr.w[0].v) {
            lo = std::min(lo, x);
            sup = std::max(sup, std::abs(x));
        }
        worst_neg = std::max(worst_neg, -lo / (1e-9 * sup));
    }
    const double delta =
        0.1 * delta0_estimate(1, {}, c.basis, p.masses, rho, c.c4.c4, c.lap, 10000, 1012);
    double worst_tube = -std::numeric_limits<double>::infinity();
    int tube_tested = 0;
    for (int trial = 0; trial < 200 && tube_tested < 50; ++trial) {
        VecField u = cone_point();
        Field z(c.grid);
        for (auto& x : z.v) x = g(rng);
        const double zn = norm_h1(c.lap, z);
        for (auto& x : z.v) x *= 0.9 * delta / zn;
        for (std::size_t t = 0; t < u[0].size(); ++t) u[0][t] += z[t];
        u = project_to_spheres(u, p.masses);
        if (kinetic_sum(c.lap, u) >= rho) continue;
        ++tube_tested;
        GResult gr = g_map(u, p, c.lap);
        const double upper = norm_h1(c.lap, negative_part(gr.w[0]));
        worst_tube = std::max(worst_tube, upper - 0.5 * delta);
    }
    r.pass = worst_neg <= 1.0 && tube_tested == 50 && worst_tube <= 1e-9;
    r.detail = "cone negativity " + detail::fmt(worst_neg) + "x of budget, tube excess " +
               detail::fmt(worst_tube) + " (<= 1e-9, delta = " + detail::fmt(delta) + ")";
    return r;
}

inline std::vector<CriterionResult> run_criteria() {
    using Fn = CriterionResult (*)();
    const Fn criteria[] = {criterion_spectrum,      criterion_gradient,
                           criterion_g_contract,    criterion_pseudogradient,
                           criterion_energy_floor,  criterion_sandwich,
                           criterion_flow_contracts, criterion_sign_changing_solve,
                           criterion_semi_nodal_solve, criterion_sweeps,
                           criterion_tangent_rate,  criterion_cone_mapping};
    std::vector<CriterionResult> results;
    for (Fn fn : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        CriterionResult res;
        try {
            res = fn();
        } catch (const std::exception& e) {
            res.pass = false;
            res.detail = std::string("exception: ") + e.what();
        }
        res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back(std::move(res));
    }
    for (std::size_t i = 0; i < results.size(); ++i)
        if (results[i].id == 0) results[i].id = static_cast<int>(i) + 1;
    return results;
}

inline bool run_all(std::ostream& out, std::ostream* copy = nullptr) {
    std::vector<CriterionResult> results = run_criteria();
    bool all = true;
    for (const auto& r : results) {
        std::ostringstream line;
        line << (r.pass ? "[PASS]" : "[FAIL]") << " criterion " << std::setw(2) << r.id << ": "
             << r.name << " -- " << r.detail << " [" << std::fixed << std::setprecision(1)
             << r.seconds << "s]";
        out << line.str() << "\n";
        if (copy) (*copy) << line.str() << "\n";
        all = all && r.pass;
    }
    out << (all ? "acceptance: all criteria passed\n" : "acceptance: FAILURES present\n");
    if (copy) (*copy) << (all ? "acceptance: all criteria passed\n" : "acceptance: FAILURES present\n");
    return all;
}

}  // namespace cnls::selftest
