#pragma once

// Energy functional of the coupled system, its H1-metric gradients, and the
// Euler-Lagrange residual in the discrete dual norm.

#include "cnls/core.hpp"
#include "cnls/discretization.hpp"

namespace cnls {

struct EnergyBreakdown {
    double kinetic = 0.0;        // 1/2 sum ||grad u_i||^2
    double self_quartic = 0.0;   // 1/4 sum mu_i int u_i^4
    double cross_quartic = 0.0;  // 1/4 sum_{i != j} beta_ij int u_i^2 u_j^2
    double total = 0.0;          // kinetic - self_quartic - cross_quartic
};

inline json to_json(const EnergyBreakdown& e) {
    return json{{"kinetic", e.kinetic},
                {"self_quartic", e.self_quartic},
                {"cross_quartic", e.cross_quartic},
                {"total", e.total}};
}

inline void check_compatible(const VecField& u, const SystemParams& p) {
    if (u.m() != p.m) throw std::invalid_argument("vector field has wrong component count");
    if (u.grid()->dim != p.dim) throw std::invalid_argument("grid/params dimension mismatch");
}

inline EnergyBreakdown energy(const VecField& u, const SystemParams& p, const LaplacianOp& lap) {
    check_compatible(u, p);
    EnergyBreakdown e;
    const double w = u.grid()->cell_volume;
    for (int i = 0; i < p.m; ++i) {
        e.kinetic += 0.5 * inner_h1(lap, u[i], u[i]);
        double q = 0.0;
        for (double x : u[i].v) {
            const double x2 = x * x;
            q += x2 * x2;
        }
        e.self_quartic += 0.25 * p.mu[static_cast<std::size_t>(i)] * q * w;
    }
    for (int i = 0; i < p.m; ++i)
        for (int j = i + 1; j < p.m; ++j) {
            double q = 0.0;
            for (std::size_t t = 0; t < u[i].size(); ++t) {
                const double a = u[i][t], b = u[j][t];
                q += a * a * b * b;
            }
            e.cross_quartic += 0.5 * p.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * q * w;
        }
    e.total = e.kinetic - e.self_quartic - e.cross_quartic;
    return e;
}

inline double energy_total(const VecField& u, const SystemParams& p, const LaplacianOp& lap) {
    return energy(u, p, lap).total;
}

// Per-component cubic sources: mu_i u_i^3 + sum_{j != i} beta_ij u_j^2 u_i.
inline Field nonlinear_term(const VecField& u, const SystemParams& p, int i) {
    Field f(u.grid());
    const double mu_i = p.mu[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < f.size(); ++t) {
        const double x = u[i][t];
        f[t] = mu_i * x * x * x;
    }
    for (int j = 0; j < p.m; ++j) {
        if (j == i) continue;
        const double b = p.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        for (std::size_t t = 0; t < f.size(); ++t) f[t] += b * u[j][t] * u[j][t] * u[i][t];
    }
    return f;
}

// H1-metric representative of dE(u): g_i = u_i - L^{-1}(mu_i u_i^3 + sum beta_ij u_j^2 u_i),
// so that <g, v>_{H1} = dE(u)[v] for every v.
inline VecField free_gradient(const VecField& u, const SystemParams& p, const LaplacianOp& lap,
                              const CgOptions& cg = {}) {
    check_compatible(u, p);
    VecField g(u.grid(), p.m);
    for (int i = 0; i < p.m; ++i) {
        Field rhs = nonlinear_term(u, p, i);
        Field pc = solve_poisson(lap, rhs, cg);
        for (std::size_t t = 0; t < pc.size(); ++t) g[i][t] = u[i][t] - pc[t];
    }
    return g;
}

inline void check_on_spheres(const VecField& u, const SystemParams& p, double rel_tol = 1e-10) {
    for (int i = 0; i < p.m; ++i) {
        const double c = p.masses[static_cast<std::size_t>(i)];
        if (std::abs(inner_l2(u[i], u[i]) - c) > rel_tol * c)
            throw std::invalid_argument("mass constraint violated beyond tolerance");
    }
}

// Tangential part of the free gradient in the H1 metric: per component
// g_i - theta_i L^{-1} u_i with theta_i fixed by <out_i, u_i>_{L2} = 0.
inline VecField constrained_gradient(const VecField& u, const SystemParams& p, const LaplacianOp& lap,
                                     const CgOptions& cg = {}) {
    check_on_spheres(u, p);
    VecField g = free_gradient(u, p, lap, cg);
    for (int i = 0; i < p.m; ++i) {
        Field z = solve_poisson(lap, u[i], cg);
        const double theta = inner_l2(g[i], u[i]) / inner_l2(z, u[i]);
        for (std::size_t t = 0; t < z.size(); ++t) g[i][t] -= theta * z[t];
    }
    return g;
}

// Max over components of the dual (discrete H^-1) norm of
// -Lap u_j + lambda_j u_j - mu_j u_j^3 - sum beta_kj u_k^2 u_j.
inline double euler_lagrange_residual(const VecField& u, const std::vector<double>& lambdas,
                                      const SystemParams& p, const LaplacianOp& lap,
                                      const CgOptions& cg = {}) {
    check_compatible(u, p);
    if (static_cast<int>(lambdas.size()) != p.m) throw std::invalid_argument("lambdas must have m entries");
    double worst = 0.0;
    for (int i = 0; i < p.m; ++i) {
        Field r = lap.apply(u[i]);
        Field nl = nonlinear_term(u, p, i);
        for (std::size_t t = 0; t < r.size(); ++t)
            r[t] += lambdas[static_cast<std::size_t>(i)] * u[i][t] - nl[t];
        Field pr = solve_poisson(lap, r, cg);
        worst = std::max(worst, std::sqrt(std::max(0.0, inner_l2(pr, r))));
    }
    return worst;
}

}  // namespace cnls
