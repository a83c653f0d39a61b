#include <gtest/gtest.h>

#include <random>

#include "cnls/energy.hpp"

using namespace cnls;

namespace {

struct Setup {
    GridPtr grid = Grid::make(1, {120}, {M_PI});
    LaplacianOp lap = LaplacianOp::make(grid);
    SpectralBasis basis = eigenpairs(lap, 4);
};

const Setup& setup() {
    static Setup s;
    return s;
}

SystemParams raw_params(std::vector<double> mu, double b12, std::vector<double> masses) {
    SystemParams p;
    p.m = static_cast<int>(mu.size());
    p.mu = std::move(mu);
    p.beta.assign(static_cast<std::size_t>(p.m), std::vector<double>(static_cast<std::size_t>(p.m), 0.0));
    for (int i = 0; i < p.m; ++i)
        for (int j = 0; j < p.m; ++j)
            if (i != j) p.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = b12;
    p.masses = std::move(masses);
    p.dim = 1;
    p.lengths = {M_PI};
    return p;
}

VecField random_on_spheres(const SystemParams& p, const SpectralBasis& basis, std::mt19937_64& rng,
                           int modes = 4) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Field> comps;
    for (int i = 0; i < p.m; ++i) {
        Field f(basis.grid);
        for (int k = 1; k <= modes; ++k) {
            const double c = g(rng);
            for (std::size_t t = 0; t < f.size(); ++t) f[t] += c * basis.mode(k)[t];
        }
        const double s = std::sqrt(p.masses[static_cast<std::size_t>(i)]) / norm_l2(f);
        for (auto& x : f.v) x *= s;
        comps.push_back(std::move(f));
    }
    return VecField(std::move(comps));
}

// Quadrature oracle: every term summed directly, no shared code with energy().
double energy_by_direct_quadrature(const VecField& u, const SystemParams& p, const LaplacianOp& lap) {
    const double w = u.grid()->cell_volume;
    double kin = 0.0;
    for (int i = 0; i < p.m; ++i) {
        Field Lu = apply_laplacian(lap, u[i]);
        for (std::size_t t = 0; t < Lu.size(); ++t) kin += Lu[t] * u[i][t] * w;
    }
    double self = 0.0;
    for (int i = 0; i < p.m; ++i)
        for (std::size_t t = 0; t < u[i].size(); ++t)
            self += p.mu[static_cast<std::size_t>(i)] * std::pow(u[i][t], 4) * w;
    double cross = 0.0;
    for (int i = 0; i < p.m; ++i)
        for (int j = 0; j < p.m; ++j) {
            if (i == j) continue;
            for (std::size_t t = 0; t < u[i].size(); ++t)
                cross += p.beta[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * u[i][t] * u[i][t] *
                         u[j][t] * u[j][t] * w;
        }
    return 0.5 * kin - 0.25 * self - 0.25 * cross;
}

}  // namespace

TEST(Energy, BreakdownMatchesDirectQuadrature) {
    const auto& s = setup();
    SystemParams p = raw_params({1.3, -0.7}, 0.4, {0.5, 0.8});
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        VecField u = random_on_spheres(p, s.basis, rng);
        EnergyBreakdown e = energy(u, p, s.lap);
        const double oracle = energy_by_direct_quadrature(u, p, s.lap);
        EXPECT_NEAR(e.total, oracle, 1e-12 * (1.0 + std::abs(oracle)));
        EXPECT_EQ(e.total, e.kinetic - e.self_quartic - e.cross_quartic);
    }
}

TEST(Energy, VanishingQuarticLimitLeavesKinetic) {
    const auto& s = setup();
    SystemParams p = raw_params({0.0, 0.0}, 0.0, {0.3, 0.4});
    std::mt19937_64 rng(22);
    VecField u = random_on_spheres(p, s.basis, rng);
    EnergyBreakdown e = energy(u, p, s.lap);
    EXPECT_EQ(e.self_quartic, 0.0);
    EXPECT_EQ(e.cross_quartic, 0.0);
    double kin = 0.0;
    for (int i = 0; i < p.m; ++i) kin += 0.5 * inner_h1(s.lap, u[i], u[i]);
    EXPECT_DOUBLE_EQ(e.total, kin);
}

TEST(Energy, SymmetricSwapInvariance) {
    const auto& s = setup();
    SystemParams p = raw_params({0.9, 0.9}, 0.25, {0.2, 0.2});
    std::mt19937_64 rng(23);
    VecField u = random_on_spheres(p, s.basis, rng);
    VecField swapped(std::vector<Field>{u[1], u[0]});
    EXPECT_NEAR(energy_total(u, p, s.lap), energy_total(swapped, p, s.lap),
                1e-13 * (1.0 + std::abs(energy_total(u, p, s.lap))));
}

TEST(Energy, PermutationWithMatchingParamsInvariance) {
    const auto& s = setup();
    SystemParams p = raw_params({1.0, -0.5}, 0.3, {0.2, 0.7});
    std::mt19937_64 rng(24);
    VecField u = random_on_spheres(p, s.basis, rng);
    SystemParams q = raw_params({-0.5, 1.0}, 0.3, {0.7, 0.2});
    VecField perm(std::vector<Field>{u[1], u[0]});
    EXPECT_NEAR(energy_total(u, p, s.lap), energy_total(perm, q, s.lap),
                1e-13 * (1.0 + std::abs(energy_total(u, p, s.lap))));
}

TEST(Energy, GroundModeProductFormula) {
    const auto& s = setup();
    const double c1 = 0.3, c2 = 0.5, mu1 = 1.2, mu2 = -0.4, b12 = 0.6;
    SystemParams p = raw_params({mu1, mu2}, b12, {c1, c2});
    const Field& phi = s.basis.mode(1);
    std::vector<Field> comps;
    for (double c : {c1, c2}) {
        Field f = phi;
        for (auto& x : f.v) x *= std::sqrt(c);
        comps.push_back(std::move(f));
    }
    VecField u(std::move(comps));
    const double lam1 = s.basis.lam(1);
    const double Q = std::pow(norm_lp(phi, 4.0), 4);
    const double expected =
        0.5 * (c1 + c2) * lam1 - 0.25 * (mu1 * c1 * c1 + mu2 * c2 * c2) * Q - 0.5 * b12 * c1 * c2 * Q;
    EXPECT_NEAR(energy_total(u, p, s.lap), expected, 1e-12 * (1.0 + std::abs(expected)));
}

TEST(FreeGradient, MatchesCentralFiniteDifferences) {
    const auto& s = setup();
    SystemParams p = raw_params({1.0, -0.6}, -0.3, {1.0, 0.7});
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        VecField u = random_on_spheres(p, s.basis, rng);
        VecField v = random_on_spheres(p, s.basis, rng);  // direction, any scale
        VecField g = free_gradient(u, p, s.lap);
        double gv = 0.0;
        for (int i = 0; i < p.m; ++i) gv += inner_h1(s.lap, g[i], v[i]);
        const double t = 1e-5;
        VecField up = u, um = u;
        for (int i = 0; i < p.m; ++i)
            for (std::size_t n = 0; n < u[i].size(); ++n) {
                up[i][n] += t * v[i][n];
                um[i][n] -= t * v[i][n];
            }
        const double fd = (energy_total(up, p, s.lap) - energy_total(um, p, s.lap)) / (2.0 * t);
        EXPECT_NEAR(gv, fd, 1e-6 * (std::abs(fd) + std::abs(gv)) + 1e-12);
    }
}

TEST(FreeGradient, LinearCaseIsIdentity) {
    const auto& s = setup();
    SystemParams p = raw_params({0.0, 0.0}, 0.0, {0.2, 0.2});
    std::mt19937_64 rng(26);
    VecField u = random_on_spheres(p, s.basis, rng);
    VecField g = free_gradient(u, p, s.lap);
    for (int i = 0; i < p.m; ++i)
        for (std::size_t t = 0; t < u[i].size(); ++t) EXPECT_EQ(g[i][t], u[i][t]);
}

TEST(FreeGradient, NotHomogeneousWithCubicTerm) {
    const auto& s = setup();
    SystemParams p = raw_params({1.0, 1.0}, 0.2, {0.4, 0.4});
    std::mt19937_64 rng(27);
    VecField u = random_on_spheres(p, s.basis, rng);
    VecField u2 = u;
    for (auto& f : u2.comp)
        for (auto& x : f.v) x *= 2.0;
    VecField g1 = free_gradient(u, p, s.lap);
    VecField g2 = free_gradient(u2, p, s.lap);
    double diff = 0.0;
    for (int i = 0; i < p.m; ++i)
        for (std::size_t t = 0; t < u[i].size(); ++t) diff = std::max(diff, std::abs(g2[i][t] - 2.0 * g1[i][t]));
    EXPECT_GT(diff, 1e-6);
}

TEST(ConstrainedGradient, TangentToTheSpheres) {
    const auto& s = setup();
    SystemParams p = raw_params({1.0, -0.8}, 0.5, {0.3, 0.6});
    std::mt19937_64 rng(28);
    VecField u = random_on_spheres(p, s.basis, rng);
    VecField g = constrained_gradient(u, p, s.lap);
    for (int i = 0; i < p.m; ++i)
        EXPECT_NEAR(inner_l2(g[i], u[i]), 0.0, 1e-12 * p.masses[static_cast<std::size_t>(i)]);
}

TEST(ConstrainedGradient, EigenfieldIsLinearCriticalPoint) {
    const auto& s = setup();
    SystemParams p = raw_params({0.0, 0.0}, 0.0, {0.3, 0.6});
    std::vector<Field> comps;
    for (int i = 0; i < 2; ++i) {
        Field f = s.basis.mode(2);
        const double sc = std::sqrt(p.masses[static_cast<std::size_t>(i)]) / norm_l2(f);
        for (auto& x : f.v) x *= sc;
        comps.push_back(std::move(f));
    }
    VecField u(std::move(comps));
    VecField g = constrained_gradient(u, p, s.lap);
    EXPECT_LE(norm_h1_vec(s.lap, g), 1e-9);
}

TEST(ConstrainedGradient, RejectsOffSpherePoints) {
    const auto& s = setup();
    SystemParams p = raw_params({1.0, 1.0}, 0.1, {0.3, 0.6});
    std::mt19937_64 rng(29);
    VecField u = random_on_spheres(p, s.basis, rng);
    for (auto& x : u[0].v) x *= 1.01;
    EXPECT_THROW(constrained_gradient(u, p, s.lap), std::invalid_argument);
}

TEST(EulerLagrange, LinearEigenCaseHasZeroResidual) {
    const auto& s = setup();
    SystemParams p = raw_params({0.0, 0.0}, 0.0, {0.3, 0.6});
    const int k = 3;
    std::vector<Field> comps;
    for (int i = 0; i < 2; ++i) {
        Field f = s.basis.mode(k);
        const double sc = std::sqrt(p.masses[static_cast<std::size_t>(i)]) / norm_l2(f);
        for (auto& x : f.v) x *= sc;
        comps.push_back(std::move(f));
    }
    VecField u(std::move(comps));
    const double lam = s.basis.lam(k);
    EXPECT_LE(euler_lagrange_residual(u, {-lam, -lam}, p, s.lap), 1e-10);
}

TEST(EulerLagrange, MultiplierPerturbationGrowsMonotonically) {
    const auto& s = setup();
    SystemParams p = raw_params({0.0, 0.0}, 0.0, {0.3, 0.6});
    std::vector<Field> comps;
    for (int i = 0; i < 2; ++i) {
        Field f = s.basis.mode(1);
        const double sc = std::sqrt(p.masses[static_cast<std::size_t>(i)]) / norm_l2(f);
        for (auto& x : f.v) x *= sc;
        comps.push_back(std::move(f));
    }
    VecField u(std::move(comps));
    const double lam = s.basis.lam(1);
    const double r0 = euler_lagrange_residual(u, {-lam, -lam}, p, s.lap);
    const double r1 = euler_lagrange_residual(u, {-lam + 1e-3, -lam}, p, s.lap);
    const double r2 = euler_lagrange_residual(u, {-lam + 1e-2, -lam}, p, s.lap);
    EXPECT_LT(r0, r1);
    EXPECT_LT(r1, r2);
    // dual-norm residual is linear in the multiplier perturbation
    EXPECT_NEAR(r2 / r1, 10.0, 0.5);
}

TEST(Energy, BreakdownSerializesWithTheFourNamedFields) {
    const auto& s = setup();
    SystemParams p = raw_params({1.0, -0.5}, 0.2, {0.3, 0.4});
    std::mt19937_64 rng(30);
    VecField u = random_on_spheres(p, s.basis, rng);
    json j = to_json(energy(u, p, s.lap));
    for (const char* key : {"kinetic", "self_quartic", "cross_quartic", "total"})
        EXPECT_TRUE(j.contains(key));
    EXPECT_DOUBLE_EQ(j.at("total").get<double>(),
                     j.at("kinetic").get<double>() - j.at("self_quartic").get<double>() -
                         j.at("cross_quartic").get<double>());
}
