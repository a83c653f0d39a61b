#pragma once

// The operator G: per component, the unique solution of a linear elliptic
// problem carrying the mass-constraint row, solved as a bordered system via
// a Schur complement on the single constraint. V = Id - G is a pseudogradient
// for the energy on the mass spheres.

#include "cnls/core.hpp"
#include "cnls/discretization.hpp"
#include "cnls/energy.hpp"

namespace cnls {

struct ComponentSolveStats {
    int iterations_rhs = 0;
    int iterations_constraint = 0;
    double rel_residual = 0.0;
    double ritz_min = 0.0;  // smallest Ritz value seen by CG: SPD certificate
};

struct GResult {
    VecField w;
    std::vector<double> lambdas;
    std::vector<ComponentSolveStats> stats;
};

inline json to_json(const GResult& g) {
    json st = json::array();
    for (const auto& s : g.stats)
        st.push_back(json{{"iterations_rhs", s.iterations_rhs},
                          {"iterations_constraint", s.iterations_constraint},
                          {"rel_residual", s.rel_residual},
                          {"ritz_min", s.ritz_min}});
    return json{{"w", to_json(g.w)}, {"lambdas", g.lambdas}, {"stats", st}};
}

namespace detail {

// Left operator of the component problem: L + q(x) with
//   q = sum_{(i,j) in J^-} (-beta_ij) u_j^2            (mu_i > 0)
//   q = -mu_i u_i^2 + sum_{(i,j) in J^-} (-beta_ij) u_j^2   (mu_i < 0)
// Both sign conventions make q >= 0, so the operator stays SPD.
inline Field g_shift_coefficient(const VecField& u, const SystemParams& p, int i) {
    Field q(u.grid());
    const double mu_i = p.mu[static_cast<std::size_t>(i)];
    if (mu_i < 0.0)
        for (std::size_t t = 0; t < q.size(); ++t) q[t] = -mu_i * u[i][t] * u[i][t];
    for (int j = 0; j < p.m; ++j) {
        if (j == i) continue;
        const double b = p.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (b < 0.0)
            for (std::size_t t = 0; t < q.size(); ++t) q[t] += (-b) * u[j][t] * u[j][t];
    }
    return q;
}

// Right-hand side before the multiplier row: the positively-coupled sources.
inline Field g_rhs(const VecField& u, const SystemParams& p, int i) {
    Field b(u.grid());
    const double mu_i = p.mu[static_cast<std::size_t>(i)];
    if (mu_i > 0.0)
        for (std::size_t t = 0; t < b.size(); ++t) {
            const double x = u[i][t];
            b[t] = mu_i * x * x * x;
        }
    for (int j = 0; j < p.m; ++j) {
        if (j == i) continue;
        const double bij = p.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (bij > 0.0)
            for (std::size_t t = 0; t < b.size(); ++t) b[t] += bij * u[j][t] * u[j][t] * u[i][t];
    }
    return b;
}

}  // namespace detail

struct GOptions {
    CgOptions cg{1e-12, 0, true};
    // Optional override of the CG starting vector for the re-solve/uniqueness check.
    const Field* start_rhs = nullptr;
};

// Solve the bordered component problem: find (w_i, lambda_i) with
//   (L + q) w_i = b - lambda_i u_i,   <u_i, w_i>_{L2} = c_i.
// Two SPD solves and a scalar Schur complement on the constraint row.
inline std::pair<Field, double> solve_component_g(const VecField& u, int i, const SystemParams& p,
                                                  const LaplacianOp& lap, const GOptions& opt = {},
                                                  ComponentSolveStats* stats_out = nullptr) {
    check_on_spheres(u, p);
    const Field q = detail::g_shift_coefficient(u, p, i);
    const Field b = detail::g_rhs(u, p, i);
    const double base_diag = lap.diag_value();
    std::vector<double> inv_diag(q.size());
    for (std::size_t t = 0; t < q.size(); ++t) inv_diag[t] = 1.0 / (base_diag + q[t]);
    auto A = [&lap, &q](std::span<const double> in, std::span<double> out) {
        lap.apply(in, out);
        for (std::size_t t = 0; t < out.size(); ++t) out[t] += q[t] * in[t];
    };

    Field w0(u.grid());
    if (opt.start_rhs) w0.v = opt.start_rhs->v;
    CgResult r0 = conjugate_gradient(A, b.v, w0.v, inv_diag, opt.cg);
    Field w1(u.grid());
    CgResult r1 = conjugate_gradient(A, u[i].v, w1.v, inv_diag, opt.cg);
    if (!r0.converged || !r1.converged)
        throw std::runtime_error("SPD solve breakdown in component G (grid/params defect)");

    const double c_i = p.masses[static_cast<std::size_t>(i)];
    const double denom = inner_l2(u[i], w1);
    if (!(denom > 0.0)) throw std::runtime_error("constraint Schur complement lost positivity");
    const double lambda = (inner_l2(u[i], w0) - c_i) / denom;
    Field w(u.grid());
    for (std::size_t t = 0; t < w.size(); ++t) w[t] = w0[t] - lambda * w1[t];

    if (stats_out) {
        stats_out->iterations_rhs = r0.iterations;
        stats_out->iterations_constraint = r1.iterations;
        stats_out->rel_residual = std::max(r0.rel_residual, r1.rel_residual);
        double rmin = std::numeric_limits<double>::quiet_NaN();
        if (!std::isnan(r0.ritz_min)) rmin = r0.ritz_min;
        if (!std::isnan(r1.ritz_min)) rmin = std::isnan(rmin) ? r1.ritz_min : std::min(rmin, r1.ritz_min);
        stats_out->ritz_min = rmin;
    }
    return {std::move(w), lambda};
}

inline GResult g_map(const VecField& u, const SystemParams& p, const LaplacianOp& lap,
                     const GOptions& opt = {}) {
    GResult res;
    res.w = VecField(u.grid(), p.m);
    res.lambdas.resize(static_cast<std::size_t>(p.m));
    res.stats.resize(static_cast<std::size_t>(p.m));
    for (int i = 0; i < p.m; ++i) {
        auto [w, lam] = solve_component_g(u, i, p, lap, opt, &res.stats[static_cast<std::size_t>(i)]);
        res.w[i] = std::move(w);
        res.lambdas[static_cast<std::size_t>(i)] = lam;
    }
    return res;
}

// Dual-norm residual of the strong-form component equations at (w, lambda);
// the bordered-system consistency check.
inline double g_strong_residual(const VecField& u, const GResult& g, const SystemParams& p,
                                const LaplacianOp& lap, const CgOptions& cg = {}) {
    double worst = 0.0;
    for (int i = 0; i < p.m; ++i) {
        const Field q = detail::g_shift_coefficient(u, p, i);
        const Field b = detail::g_rhs(u, p, i);
        Field r = lap.apply(g.w[i]);
        for (std::size_t t = 0; t < r.size(); ++t)
            r[t] += q[t] * g.w[i][t] - b[t] + g.lambdas[static_cast<std::size_t>(i)] * u[i][t];
        Field pr = solve_poisson(lap, r, cg);
        worst = std::max(worst, std::sqrt(std::max(0.0, inner_l2(pr, r))));
    }
    return worst;
}

struct PseudogradientResult {
    VecField v;
    std::vector<double> lambdas;
    double v_norm_h1 = 0.0;
    // <grad E|_{S_c}(u), V(u)>_{H1}, evaluated through the independent
    // constrained-gradient path; certifies the descent inequality.
    double descent_product = 0.0;
    GResult g;
};

inline PseudogradientResult pseudogradient_v(const VecField& u, const SystemParams& p,
                                             const LaplacianOp& lap, const GOptions& opt = {},
                                             bool certify = true) {
    PseudogradientResult out;
    out.g = g_map(u, p, lap, opt);
    out.lambdas = out.g.lambdas;
    out.v = VecField(u.grid(), p.m);
    for (int i = 0; i < p.m; ++i)
        for (std::size_t t = 0; t < u[i].size(); ++t) out.v[i][t] = u[i][t] - out.g.w[i][t];
    out.v_norm_h1 = norm_h1_vec(lap, out.v);
    if (certify) {
        VecField cg_field = constrained_gradient(u, p, lap, opt.cg);
        double s = 0.0;
        for (int i = 0; i < p.m; ++i) s += inner_h1(lap, cg_field[i], out.v[i]);
        out.descent_product = s;
    }
    return out;
}

}  // namespace cnls
