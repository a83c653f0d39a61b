#pragma once

// Discrete calculus on tensor-product Dirichlet grids: second-difference
// Laplacian, mass-lumped quadratures, a matrix-free conjugate-gradient
// solver, a Lanczos eigensolver with full reorthogonalization, and the
// discrete Sobolev H1 -> L4 constant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

#include <Eigen/Dense>

#include "cnls/core.hpp"

namespace cnls {

// ---------------------------------------------------------------------------
// Discrete -Laplace with homogeneous Dirichlet boundary.
// ---------------------------------------------------------------------------
struct LaplacianOp {
    GridPtr grid;
    std::array<double, 3> inv_h2{0, 0, 0};

    static LaplacianOp make(GridPtr g) {
        LaplacianOp op;
        op.grid = std::move(g);
        for (int a = 0; a < op.grid->dim; ++a)
            op.inv_h2[a] = 1.0 / (op.grid->spacings[a] * op.grid->spacings[a]);
        return op;
    }

    double diag_value() const {
        double d = 0.0;
        for (int a = 0; a < grid->dim; ++a) d += 2.0 * inv_h2[a];
        return d;
    }

    void apply(std::span<const double> u, std::span<double> out) const {
        const int n0 = grid->dim > 0 ? grid->sizes[0] : 1;
        const int n1 = grid->dim > 1 ? grid->sizes[1] : 1;
        const int n2 = grid->dim > 2 ? grid->sizes[2] : 1;
        const std::size_t s2 = 1, s1 = static_cast<std::size_t>(n2), s0 = static_cast<std::size_t>(n1) * n2;
        const double w0 = inv_h2[0], w1 = inv_h2[1], w2 = inv_h2[2];
        std::size_t idx = 0;
        for (int i0 = 0; i0 < n0; ++i0)
            for (int i1 = 0; i1 < n1; ++i1)
                for (int i2 = 0; i2 < n2; ++i2, ++idx) {
                    const double c = u[idx];
                    double acc = w0 * (2.0 * c - (i0 > 0 ? u[idx - s0] : 0.0) - (i0 + 1 < n0 ? u[idx + s0] : 0.0));
                    if (grid->dim > 1)
                        acc += w1 * (2.0 * c - (i1 > 0 ? u[idx - s1] : 0.0) - (i1 + 1 < n1 ? u[idx + s1] : 0.0));
                    if (grid->dim > 2)
                        acc += w2 * (2.0 * c - (i2 > 0 ? u[idx - s2] : 0.0) - (i2 + 1 < n2 ? u[idx + s2] : 0.0));
                    out[idx] = acc;
                }
    }

    Field apply(const Field& u) const {
        if (!u.grid->same_as(*grid)) throw std::invalid_argument("grid mismatch");
        Field out(u.grid);
        apply(u.v, out.v);
        return out;
    }

    // Eigenvalue of the second-difference operator for mode tuple k (1-based).
    // Exact closed form on tensor grids; used as the spectrum oracle.
    double analytic_eigenvalue(const std::array<int, 3>& k) const {
        double lam = 0.0;
        for (int a = 0; a < grid->dim; ++a) {
            const double s = std::sin(0.5 * k[a] * M_PI / (grid->sizes[a] + 1));
            lam += 4.0 * inv_h2[a] * s * s;
        }
        return lam;
    }
};

inline Field apply_laplacian(const LaplacianOp& op, const Field& u) { return op.apply(u); }

// ---------------------------------------------------------------------------
// Mass-lumped quadratures. inner_h1 is the summation-by-parts form
// <L u, v>_{L2}; both inners share one arithmetic path through inner_l2.
// ---------------------------------------------------------------------------
inline double inner_l2(const Field& u, const Field& v) {
    check_same_grid(u, v);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s * u.grid->cell_volume;
}

inline double norm_l2(const Field& u) { return std::sqrt(inner_l2(u, u)); }

inline double inner_h1(const LaplacianOp& op, const Field& u, const Field& v) {
    return inner_l2(op.apply(u), v);
}

inline double norm_h1(const LaplacianOp& op, const Field& u) {
    return std::sqrt(std::max(0.0, inner_h1(op, u, u)));
}

inline double norm_lp(const Field& u, double p) {
    if (p == std::numeric_limits<double>::infinity()) {
        double m = 0.0;
        for (double x : u.v) m = std::max(m, std::abs(x));
        return m;
    }
    if (p != 1.0 && p != 2.0 && p != 4.0 && p != 6.0) throw std::invalid_argument("unsupported Lp exponent");
    double s = 0.0;
    if (p == 1.0)
        for (double x : u.v) s += std::abs(x);
    else if (p == 2.0)
        for (double x : u.v) s += x * x;
    else if (p == 4.0)
        for (double x : u.v) {
            const double x2 = x * x;
            s += x2 * x2;
        }
    else
        for (double x : u.v) {
            const double x2 = x * x;
            s += x2 * x2 * x2;
        }
    return std::pow(s * u.grid->cell_volume, 1.0 / p);
}

inline Field negative_part(const Field& u) {
    Field f(u.grid);
    for (std::size_t t = 0; t < u.size(); ++t) f[t] = std::min(u[t], 0.0);
    return f;
}

inline Field positive_part(const Field& u) {
    Field f(u.grid);
    for (std::size_t t = 0; t < u.size(); ++t) f[t] = std::max(u[t], 0.0);
    return f;
}

inline double norm_h1_vec(const LaplacianOp& op, const VecField& u) {
    double s = 0.0;
    for (const auto& c : u.comp) s += inner_h1(op, c, c);
    return std::sqrt(std::max(0.0, s));
}

inline double kinetic_sum(const LaplacianOp& op, const VecField& u) {
    double s = 0.0;
    for (const auto& c : u.comp) s += inner_h1(op, c, c);
    return s;
}

// ---------------------------------------------------------------------------
// Preconditioned conjugate gradients for SPD stencil systems.
// ---------------------------------------------------------------------------
struct CgOptions {
    double rel_tol = 1e-12;
    int max_iter = 0;  // 0: 10n + 100
    bool track_ritz = false;
};

struct CgResult {
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    double ritz_min = std::numeric_limits<double>::quiet_NaN();
    double ritz_max = std::numeric_limits<double>::quiet_NaN();
};

// Smallest/largest Ritz values from the CG coefficients (the implicit Lanczos
// tridiagonal); used as the SPD certificate of the left operator.
inline void cg_ritz_bounds(const std::vector<double>& alphas, const std::vector<double>& betas,
                           double& rmin, double& rmax) {
    const int k = static_cast<int>(alphas.size());
    if (k == 0) return;
    Eigen::VectorXd diag(k), sub(std::max(0, k - 1));
    for (int i = 0; i < k; ++i) {
        diag[i] = 1.0 / alphas[i] + (i > 0 ? betas[i - 1] / alphas[i - 1] : 0.0);
        if (i + 1 < k) sub[i] = std::sqrt(std::max(0.0, betas[i])) / alphas[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    rmin = es.eigenvalues()(0);
    rmax = es.eigenvalues()(k - 1);
}

template <class ApplyOp>
CgResult conjugate_gradient(ApplyOp&& A, std::span<const double> b, std::span<double> x,
                            std::span<const double> inv_diag, const CgOptions& opt = {}) {
    const std::size_t n = b.size();
    std::vector<double> r(n), z(n), p(n), Ap(n);
    A(x, std::span<double>(Ap));
    double bnorm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b[i] - Ap[i];
        bnorm2 += b[i] * b[i];
    }
    const double btol = std::sqrt(bnorm2) * opt.rel_tol;
    CgResult res;
    std::vector<double> alphas, betas;
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = inv_diag[i] * r[i];
        p[i] = z[i];
        rz += r[i] * z[i];
    }
    double rnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) rnorm += r[i] * r[i];
    rnorm = std::sqrt(rnorm);
    const int max_iter = opt.max_iter > 0 ? opt.max_iter : static_cast<int>(10 * n + 100);
    int it = 0;
    while (rnorm > btol && bnorm2 > 0.0 && it < max_iter) {
        A(std::span<const double>(p), std::span<double>(Ap));
        double pAp = 0.0;
        for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        if (!(pAp > 0.0)) break;  // loss of positive definiteness
        const double alpha = rz / pAp;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
        }
        double rz_new = 0.0;
        rnorm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = inv_diag[i] * r[i];
            rz_new += r[i] * z[i];
            rnorm += r[i] * r[i];
        }
        rnorm = std::sqrt(rnorm);
        const double beta = rz_new / rz;
        if (opt.track_ritz) {
            alphas.push_back(alpha);
            betas.push_back(beta);
        }
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        ++it;
    }
    res.iterations = it;
    res.rel_residual = bnorm2 > 0.0 ? rnorm / std::sqrt(bnorm2) : 0.0;
    res.converged = rnorm <= btol || bnorm2 == 0.0;
    if (opt.track_ritz && !alphas.empty()) cg_ritz_bounds(alphas, betas, res.ritz_min, res.ritz_max);
    return res;
}

// Solve L x = b. The pure Laplacian has a constant diagonal, so the diagonal
// preconditioner is a uniform scaling here; it matters for the shifted
// operators in the G solves.
inline Field solve_poisson(const LaplacianOp& op, const Field& b, const CgOptions& opt = {},
                           CgResult* stats = nullptr) {
    Field x(b.grid);
    std::vector<double> inv_diag(b.size(), 1.0 / op.diag_value());
    auto A = [&op](std::span<const double> in, std::span<double> out) { op.apply(in, out); };
    CgResult r = conjugate_gradient(A, b.v, x.v, inv_diag, opt);
    if (!r.converged) throw std::runtime_error("poisson solve failed to converge");
    if (stats) *stats = r;
    return x;
}

// ---------------------------------------------------------------------------
// Spectral basis of the discrete -Laplace.
// ---------------------------------------------------------------------------
struct SpectralBasis {
    GridPtr grid;
    std::vector<double> lambda;   // ascending
    std::vector<Field> phi;       // L2-orthonormal, phi[0] > 0
    std::vector<bool> gap_after;  // gap_after[k]: lambda[k] < lambda[k+1] (k = 0 .. K-2)

    int size() const { return static_cast<int>(lambda.size()); }
    // 1-based accessors matching the usual eigenvalue indexing.
    double lam(int k) const { return lambda.at(static_cast<std::size_t>(k - 1)); }
    const Field& mode(int k) const { return phi.at(static_cast<std::size_t>(k - 1)); }
    bool has_gap(int k) const { return gap_after.at(static_cast<std::size_t>(k - 1)); }
};

struct EigOptions {
    int max_iter_per_pass = 0;  // 0: min(n, max(800, 60 K))
    int max_passes = 40;
    double res_tol = 1e-10;
    std::uint64_t seed = 0x5eed5eedULL;
};

namespace detail {

inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

// Lanczos with full reorthogonalization. A single Krylov space cannot hold
// two copies of a degenerate eigenvalue and misses anything the start vector
// does not overlap, so converged pairs are deflated and fresh random passes
// run until a verification pass certifies that nothing below the K-th value
// was skipped.
inline SpectralBasis eigenpairs(const LaplacianOp& op, int K, const EigOptions& opt = {}) {
    const std::size_t n = op.grid->node_count;
    if (K < 1 || static_cast<std::size_t>(K) > n)
        throw std::invalid_argument("eigenpair count K must satisfy 1 <= K <= node_count");
    std::mt19937_64 rng(opt.seed);
    const int cap = opt.max_iter_per_pass > 0
                        ? opt.max_iter_per_pass
                        : static_cast<int>(std::min<std::size_t>(n, std::max(800, 60 * K)));

    std::vector<std::vector<double>> conv_vecs;  // converged, plain-dot orthonormal
    std::vector<double> conv_vals;

    std::vector<double> tmp(n);
    auto operator_residual = [&](const std::vector<double>& v, double lam) {
        op.apply(v, std::span<double>(tmp));
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = tmp[i] - lam * v[i];
            s += r * r;
        }
        return std::sqrt(s);
    };
    auto kth_smallest = [&]() {
        std::vector<double> vals = conv_vals;
        std::nth_element(vals.begin(), vals.begin() + (K - 1), vals.end());
        return vals[static_cast<std::size_t>(K - 1)];
    };

    std::normal_distribution<double> gauss(0.0, 1.0);
    bool complete = false;
    std::vector<double> restart_seed;  // best unconverged Ritz vector from a capped pass
    for (int pass = 0; pass < opt.max_passes && !complete; ++pass) {
        const bool verifying = static_cast<int>(conv_vals.size()) >= K;
        const double threshold = verifying ? kth_smallest() : 0.0;
        const int want = verifying ? 1 : K - static_cast<int>(conv_vals.size());
        if (static_cast<std::size_t>(conv_vecs.size()) >= n) {
            complete = true;  // deflated space is empty
            break;
        }

        std::vector<std::vector<double>> V;
        std::vector<double> alpha, beta;
        std::vector<double> v(n);
        if (!restart_seed.empty()) {
            v = std::move(restart_seed);
            restart_seed.clear();
        } else {
            for (auto& x : v) x = gauss(rng);
        }
        for (int sweep = 0; sweep < 2; ++sweep)
            for (const auto& q : conv_vecs) detail::axpy(v, -detail::dot(q, v), q);
        double nv = std::sqrt(detail::dot(v, v));
        if (nv < 1e-300) continue;
        for (auto& x : v) x /= nv;
        V.push_back(v);

        std::vector<double> w(n);
        for (int j = 0; j < cap; ++j) {
            op.apply(V[static_cast<std::size_t>(j)], std::span<double>(w));
            if (j > 0) detail::axpy(w, -beta[static_cast<std::size_t>(j - 1)], V[static_cast<std::size_t>(j - 1)]);
            const double a = detail::dot(V[static_cast<std::size_t>(j)], w);
            alpha.push_back(a);
            detail::axpy(w, -a, V[static_cast<std::size_t>(j)]);
            // full reorthogonalization, two sweeps, against both the Lanczos
            // basis and the deflation set
            for (int sweep = 0; sweep < 2; ++sweep) {
                for (const auto& q : V) detail::axpy(w, -detail::dot(q, w), q);
                for (const auto& q : conv_vecs) detail::axpy(w, -detail::dot(q, w), q);
            }
            const double b = std::sqrt(detail::dot(w, w));
            const int mcur = j + 1;
            // Krylov closure makes every Ritz pair exact; hitting the iteration
            // cap does not, so a capped pass keeps its residual gates and hands
            // its best Ritz vector to the next pass instead.
            const bool space_exhausted =
                (b < 1e-13) || (static_cast<std::size_t>(mcur) + conv_vecs.size() >= n);
            const bool cap_hit = (mcur == cap);
            const bool check_now = space_exhausted || cap_hit || (mcur >= 2 * want && mcur % 20 == 0);
            if (check_now) {
                Eigen::VectorXd d(mcur), e(std::max(0, mcur - 1));
                for (int i = 0; i < mcur; ++i) d[i] = alpha[static_cast<std::size_t>(i)];
                for (int i = 0; i + 1 < mcur; ++i) e[i] = beta[static_cast<std::size_t>(i)];
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
                es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
                const double scale = std::max(1.0, es.eigenvalues()(mcur - 1));
                const double bres = space_exhausted && b < 1e-13 ? 0.0 : b;

                auto assemble = [&](int i) {
                    std::vector<double> y(n, 0.0);
                    for (int t = 0; t < mcur; ++t)
                        detail::axpy(y, es.eigenvectors()(t, i), V[static_cast<std::size_t>(t)]);
                    const double ny = std::sqrt(detail::dot(y, y));
                    if (ny > 1e-12)
                        for (auto& x : y) x /= ny;
                    return y;
                };

                if (verifying) {
                    const double theta = es.eigenvalues()(0);
                    const double bound = bres * std::abs(es.eigenvectors()(mcur - 1, 0));
                    // Certified: even the unconverged lowest Ritz value of the
                    // deflated operator lies above the K-th accepted value.
                    if (theta - bound > threshold * (1.0 + 1e-9) + 1e-14 * scale) {
                        complete = true;
                        break;
                    }
                }

                int got = 0;
                std::vector<std::vector<double>> ritz_vecs;
                std::vector<double> ritz_vals;
                for (int i = 0; i < std::min(mcur, want); ++i) {
                    const double bound = bres * std::abs(es.eigenvectors()(mcur - 1, i));
                    if (bound > opt.res_tol * scale && !space_exhausted) break;
                    std::vector<double> y = assemble(i);
                    if (operator_residual(y, es.eigenvalues()(i)) > 10.0 * opt.res_tol * scale &&
                        !space_exhausted)
                        break;
                    ritz_vecs.push_back(std::move(y));
                    ritz_vals.push_back(es.eigenvalues()(i));
                    ++got;
                }
                if (got == want || space_exhausted || cap_hit) {
                    for (int i = 0; i < got; ++i) {
                        auto& y = ritz_vecs[static_cast<std::size_t>(i)];
                        for (const auto& q : conv_vecs) detail::axpy(y, -detail::dot(q, y), q);
                        const double ny = std::sqrt(detail::dot(y, y));
                        if (ny < 1e-8) continue;
                        for (auto& x : y) x /= ny;
                        conv_vecs.push_back(y);
                        conv_vals.push_back(ritz_vals[static_cast<std::size_t>(i)]);
                    }
                    if (cap_hit && !space_exhausted && got < want && got < mcur)
                        restart_seed = assemble(got);  // resume toward the next pair
                    break;
                }
            }
            if (space_exhausted || cap_hit) break;
            beta.push_back(b);
            std::vector<double> vn(n);
            for (std::size_t i = 0; i < n; ++i) vn[i] = w[i] / b;
            V.push_back(std::move(vn));
        }
    }
    if (static_cast<int>(conv_vals.size()) < K || !complete)
        throw std::runtime_error("eigensolver failed to converge: iteration cap exceeded");

    // Sort ascending, rescale to L2-orthonormal fields, fix the ground sign.
    std::vector<int> order(conv_vals.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return conv_vals[a] < conv_vals[b]; });

    SpectralBasis basis;
    basis.grid = op.grid;
    const double scale = 1.0 / std::sqrt(op.grid->cell_volume);
    for (int k = 0; k < K; ++k) {
        const auto& src = conv_vecs[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        Field f(op.grid);
        for (std::size_t i = 0; i < n; ++i) f[i] = src[i] * scale;
        basis.phi.push_back(std::move(f));
    }
    // Modified Gram-Schmidt in the L2 inner product tightens orthonormality
    // of near-degenerate pairs; eigenvalues are then Rayleigh quotients.
    for (int k = 0; k < K; ++k) {
        Field& f = basis.phi[static_cast<std::size_t>(k)];
        for (int j = 0; j < k; ++j) {
            const double c = inner_l2(basis.phi[static_cast<std::size_t>(j)], f);
            for (std::size_t i = 0; i < n; ++i) f[i] -= c * basis.phi[static_cast<std::size_t>(j)][i];
        }
        const double nf = norm_l2(f);
        for (std::size_t i = 0; i < n; ++i) f[i] /= nf;
        basis.lambda.push_back(inner_h1(op, f, f));
    }
    double fsum = 0.0;
    for (double x : basis.phi[0].v) fsum += x;
    if (fsum < 0.0)
        for (auto& x : basis.phi[0].v) x = -x;
    for (int k = 0; k + 1 < K; ++k) {
        const double a = basis.lambda[static_cast<std::size_t>(k)], b = basis.lambda[static_cast<std::size_t>(k + 1)];
        basis.gap_after.push_back(b - a > 1e-8 * std::max(1.0, std::abs(b)));
    }
    return basis;
}

// Enumerated closed-form spectrum of the tensor-product second-difference
// operator; the independent oracle for eigenpairs().
inline std::vector<double> analytic_spectrum(const LaplacianOp& op, int K) {
    const auto& g = *op.grid;
    std::vector<double> all;
    const int n0 = g.sizes[0], n1 = g.dim > 1 ? g.sizes[1] : 1, n2 = g.dim > 2 ? g.sizes[2] : 1;
    all.reserve(static_cast<std::size_t>(n0) * n1 * n2);
    for (int k0 = 1; k0 <= n0; ++k0)
        for (int k1 = 1; k1 <= (g.dim > 1 ? n1 : 1); ++k1)
            for (int k2 = 1; k2 <= (g.dim > 2 ? n2 : 1); ++k2) {
                double lam = 0.0;
                const int ks[3] = {k0, k1, k2};
                for (int a = 0; a < g.dim; ++a) {
                    const double s = std::sin(0.5 * ks[a] * M_PI / (g.sizes[a] + 1));
                    lam += 4.0 * op.inv_h2[a] * s * s;
                }
                all.push_back(lam);
            }
    std::sort(all.begin(), all.end());
    all.resize(static_cast<std::size_t>(std::min<std::size_t>(all.size(), static_cast<std::size_t>(K))));
    return all;
}

// ---------------------------------------------------------------------------
// Discrete Sobolev constant: inf ||grad u|| / ||u||_4 over nonzero fields.
// H1-preconditioned projected gradient descent on the quotient, multi-start.
// ---------------------------------------------------------------------------
struct SobolevOptions {
    int starts = 4;
    int max_iter = 2000;
    // Armijo on the raw quotient bottoms out near sqrt(eps), so the gradient
    // floor sits above machine precision; the quotient value itself is then
    // accurate to O(grad_tol^2).
    double grad_tol = 1e-7;
    std::uint64_t seed = 42;
    CgOptions cg{};
};

struct SobolevEstimate {
    double c4 = 0.0;
    bool converged = false;
    double grad_norm = 0.0;
    int iterations = 0;
};

inline SobolevEstimate estimate_sobolev_c4(const LaplacianOp& op, const SobolevOptions& opt = {}) {
    const std::size_t n = op.grid->node_count;
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SobolevEstimate best;
    best.c4 = std::numeric_limits<double>::infinity();

    for (int s = 0; s < opt.starts; ++s) {
        Field u(op.grid);
        if (s == 0) {
            // smooth positive bump; the infimum is attained at a one-signed field
            const int nn0 = op.grid->sizes[0];
            const int nn1 = op.grid->dim > 1 ? op.grid->sizes[1] : 1;
            const int nn2 = op.grid->dim > 2 ? op.grid->sizes[2] : 1;
            std::size_t idx = 0;
            for (int i0 = 0; i0 < nn0; ++i0)
                for (int i1 = 0; i1 < nn1; ++i1)
                    for (int i2 = 0; i2 < nn2; ++i2, ++idx) {
                        double val = std::sin(M_PI * (i0 + 1) / (nn0 + 1));
                        if (op.grid->dim > 1) val *= std::sin(M_PI * (i1 + 1) / (nn1 + 1));
                        if (op.grid->dim > 2) val *= std::sin(M_PI * (i2 + 1) / (nn2 + 1));
                        u[idx] = val;
                    }
        } else {
            for (std::size_t i = 0; i < n; ++i) u[i] = gauss(rng);
        }
        double n4 = norm_lp(u, 4.0);
        for (std::size_t i = 0; i < n; ++i) u[i] /= n4;

        double f = inner_h1(op, u, u);
        double gnorm = 0.0;
        int iters = 0;
        bool ok = false;
        for (int it = 0; it < opt.max_iter; ++it, ++iters) {
            // L2 gradient of the scale-free quotient at ||u||_4 = 1 is
            // 2(Lu - f u^3); precondition with L^{-1}.
            Field cube(u.grid);
            for (std::size_t i = 0; i < n; ++i) cube[i] = u[i] * u[i] * u[i];
            Field pc = solve_poisson(op, cube, opt.cg);
            Field gH(u.grid);
            for (std::size_t i = 0; i < n; ++i) gH[i] = 2.0 * (u[i] - f * pc[i]);
            gnorm = norm_h1(op, gH);
            if (gnorm <= opt.grad_tol * std::max(1.0, f)) {
                ok = true;
                break;
            }
            // Armijo backtracking on the quotient value
            double tau = 0.5 / std::max(f, 1e-30);
            bool accepted = false;
            for (int bt = 0; bt < 60; ++bt) {
                Field trial(u.grid);
                for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] - tau * gH[i];
                const double t4 = norm_lp(trial, 4.0);
                if (t4 < 1e-300) {
                    tau *= 0.5;
                    continue;
                }
                for (std::size_t i = 0; i < n; ++i) trial[i] /= t4;
                const double ft = inner_h1(op, trial, trial);
                if (ft <= f - 1e-4 * tau * gnorm * gnorm) {
                    u = std::move(trial);
                    f = ft;
                    accepted = true;
                    break;
                }
                tau *= 0.5;
            }
            if (!accepted) break;
        }
        const double val = std::sqrt(f) / norm_lp(u, 4.0);
        if (val < best.c4) {
            best.c4 = val;
            best.converged = ok;
            best.grad_norm = gnorm;
            best.iterations = iters;
        }
    }
    return best;
}

}  // namespace cnls
