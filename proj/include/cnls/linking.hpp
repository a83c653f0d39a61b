#pragma once

// Spectral linking sets on the mass spheres, feasibility constants, and
// sampled minimax-level bracketing. Minimax values are bracketed by sampling,
// never claimed exactly; every inequality carries its margin.

#include <cstdint>
#include <optional>
#include <random>

#include "cnls/core.hpp"
#include "cnls/discretization.hpp"
#include "cnls/energy.hpp"

namespace cnls {

struct Inequality {
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok = false;
    bool applicable = true;
    double margin() const { return rhs - lhs; }
};

inline json to_json(const Inequality& q) {
    return json{{"lhs", q.lhs}, {"rhs", q.rhs}, {"ok", q.ok}, {"applicable", q.applicable}, {"margin", q.margin()}};
}

inline Inequality strict_less(double lhs, double rhs) { return Inequality{lhs, rhs, lhs < rhs, true}; }
inline Inequality at_most(double lhs, double rhs) { return Inequality{lhs, rhs, lhs <= rhs, true}; }

// ---------------------------------------------------------------------------
// Feasibility constants. All inequalities are evaluated with the discrete
// Sobolev constant of the grid actually in use.
// ---------------------------------------------------------------------------
struct FeasibilityReport {
    int k = 0;
    int d = -1;  // -1: sign-changing case, no semi-nodal split
    double c4 = 0.0;
    double rho_window_hi = 0.0;  // window is (0, rho_window_hi)
    double rho_chosen = 0.0;
    bool rho_from_recipe = false;
    bool rho_in_window = false;
    double m0 = 0.0;
    double m1 = 0.0;
    bool spectral_gap_ok = false;
    Inequality cond_2_14;  // value-separation, mass-sum side
    Inequality cond_2_15;  // value-separation, gap side
    Inequality cond_5_2;   // semi-nodal analogue of 2.14
    Inequality cond_5_3;   // semi-nodal analogue of 2.15
    std::vector<Inequality> cone_mass_cond;  // per component
    double n4_level_threshold = 0.0;         // quarter of C^4 / (mu+ + beta+)
    double n4_level_margin = 0.0;            // threshold - M1
    Inequality n4_rho_cond;                  // 2 rho < C^2 / beta+
    bool feasible = false;
};

inline json to_json(const FeasibilityReport& f) {
    json cones = json::array();
    for (const auto& c : f.cone_mass_cond) cones.push_back(to_json(c));
    return json{{"k", f.k},
                {"d", f.d},
                {"c4", f.c4},
                {"rho_window", json::array({0.0, f.rho_window_hi})},
                {"rho_chosen", f.rho_chosen},
                {"rho_from_recipe", f.rho_from_recipe},
                {"rho_in_window", f.rho_in_window},
                {"m0", f.m0},
                {"m1", f.m1},
                {"spectral_gap_ok", f.spectral_gap_ok},
                {"cond_2_14", to_json(f.cond_2_14)},
                {"cond_2_15", to_json(f.cond_2_15)},
                {"cond_5_2", to_json(f.cond_5_2)},
                {"cond_5_3", to_json(f.cond_5_3)},
                {"cone_mass_cond", cones},
                {"n4_level_threshold", f.n4_level_threshold},
                {"n4_level_margin", f.n4_level_margin},
                {"n4_rho_cond", to_json(f.n4_rho_cond)},
                {"feasible", f.feasible}};
}

inline double rho_window_upper(const SystemParams& p, double c4) {
    const double denom = 4.0 * (p.mu_max_pos + p.beta_max_pos) - 3.0 * (p.mu_min_neg + p.beta_min_neg);
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 * std::pow(c4, 4) / denom;
}

// Recipe pick: midpoint of ( (4/3) Lam_ref sum(c), 2 Lam_ref sum(c) ).
inline double recipe_rho(double lambda_ref, double mass_sum) { return (5.0 / 3.0) * lambda_ref * mass_sum; }

inline FeasibilityReport feasibility_report(const SystemParams& p, const SpectralBasis& basis, int k,
                                            std::optional<int> d, double c4,
                                            std::optional<double> rho_override = {}) {
    if (!p.validated) throw std::invalid_argument("params must pass validate_params first");
    if (k < 1) throw std::invalid_argument("linking index k must be positive");
    if (basis.size() < k + 1) throw std::invalid_argument("basis must contain at least k+1 eigenpairs");
    if (d && (*d < 1 || *d > p.m - 1)) throw std::invalid_argument("semi-nodal d must satisfy 1 <= d <= m-1");
    FeasibilityReport f;
    f.k = k;
    f.d = d ? *d : -1;
    f.c4 = c4;
    const double C4 = std::pow(c4, 4);
    const double lam_k = basis.lam(k), lam_k1 = basis.lam(k + 1), lam_1 = basis.lam(1);
    f.spectral_gap_ok = basis.has_gap(k);
    f.rho_window_hi = rho_window_upper(p, c4);
    const double cs = p.mass_sum();
    f.rho_from_recipe = !rho_override.has_value();
    f.rho_chosen = rho_override ? *rho_override : recipe_rho(lam_k1, cs);
    const double rho = f.rho_chosen;
    f.rho_in_window = rho > 0.0 && rho < f.rho_window_hi;
    f.m0 = 0.5 - 0.25 * (p.mu_max_pos + p.beta_max_pos) / C4 * rho;
    f.m1 = f.m0 * rho;

    const double neg_factor = 2.0 - (p.mu_min_neg + p.beta_min_neg) / C4 * rho;
    double cs2 = 0.0, cmin = p.mass_min();
    for (double c : p.masses) cs2 += c * c;

    f.cond_2_14 = strict_less(0.25 * neg_factor * lam_k1 * cs, f.m1);
    f.cond_2_15 = strict_less(
        (p.beta_max_pos - p.mu_min_neg - p.beta_min_neg) / C4 * rho * lam_k1 * cs +
            p.mu_max_pos / C4 * lam_k1 * lam_k1 * cs2,
        neg_factor * (lam_k1 - lam_k) * cmin);

    if (d) {
        double cs_d = 0.0, cs2_d = 0.0, cs_rest = 0.0, cs2_rest = 0.0;
        double cmin_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < p.m; ++i) {
            const double c = p.masses[static_cast<std::size_t>(i)];
            if (i < *d) {
                cs_d += c;
                cs2_d += c * c;
                cmin_d = std::min(cmin_d, c);
            } else {
                cs_rest += c;
                cs2_rest += c * c;
            }
        }
        f.cond_5_2 = strict_less(0.25 * neg_factor * lam_k1 * cs, f.m1);
        f.cond_5_3 = strict_less(
            (p.beta_max_pos - p.mu_min_neg - p.beta_min_neg) / C4 * rho * (lam_k1 * cs_d + lam_1 * cs_rest) +
                p.mu_max_pos / C4 * (lam_k1 * lam_k1 * cs2_d + lam_1 * lam_1 * cs2_rest),
            neg_factor * (lam_k1 - lam_k) * cmin_d);
    } else {
        f.cond_5_2.applicable = false;
        f.cond_5_3.applicable = false;
    }

    const double C8 = C4 * C4;
    for (int i = 0; i < p.m; ++i) {
        const double mp = p.mu_pos(i) + p.beta_max_pos;
        f.cone_mass_cond.push_back(
            at_most(mp * mp * rho * rho * rho, lam_1 * C8 * p.masses[static_cast<std::size_t>(i)]));
    }

    const double pos_sum = p.mu_max_pos + p.beta_max_pos;
    f.n4_level_threshold =
        pos_sum > 0.0 ? 0.25 * C4 / pos_sum : std::numeric_limits<double>::infinity();
    f.n4_level_margin = f.n4_level_threshold - f.m1;
    f.n4_rho_cond = p.beta_max_pos > 0.0
                        ? strict_less(2.0 * rho, c4 * c4 / p.beta_max_pos)
                        : Inequality{2.0 * rho, std::numeric_limits<double>::infinity(), true, true};

    // The n4 conditions matter only in the Sobolev-critical dimension, which
    // a desk grid (dim <= 3) never reaches; they are reported, not gated on.
    bool ok = f.spectral_gap_ok && f.rho_in_window && f.m0 > 0.0;
    if (d)
        ok = ok && f.cond_5_2.ok && f.cond_5_3.ok;
    else
        ok = ok && f.cond_2_14.ok && f.cond_2_15.ok;
    for (const auto& c : f.cone_mass_cond) ok = ok && c.ok;
    f.feasible = ok;
    return f;
}

// ---------------------------------------------------------------------------
// Linking-set samplers. Points are built from eigenmode coefficients and then
// rescaled to the exact masses, so every sample is on S_c by construction.
// ---------------------------------------------------------------------------
enum class LinkSetKind { SK, MK1, SKPerpBrho, MK1dTimesGround, SKdPerpTimesS };

struct LinkSampleSet {
    LinkSetKind kind;
    int k = 0;
    int d = -1;
    std::vector<VecField> points;
};

namespace detail {

inline Field combine_modes(const SpectralBasis& basis, int first_mode, const std::vector<double>& coeff,
                           double mass) {
    Field f(basis.grid);
    for (std::size_t j = 0; j < coeff.size(); ++j) {
        const Field& phi = basis.mode(first_mode + static_cast<int>(j));
        for (std::size_t t = 0; t < f.size(); ++t) f[t] += coeff[j] * phi[t];
    }
    const double n2 = norm_l2(f);
    if (!(n2 > 0.0)) throw std::runtime_error("degenerate sample: zero combination");
    const double s = std::sqrt(mass) / n2;
    for (auto& x : f.v) x *= s;
    return f;
}

inline std::vector<double> gaussian_coeffs(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> t(static_cast<std::size_t>(n));
    double s = 0.0;
    do {
        s = 0.0;
        for (auto& x : t) {
            x = g(rng);
            s += x * x;
        }
    } while (!(s > 0.0));
    const double inv = 1.0 / std::sqrt(s);
    for (auto& x : t) x *= inv;
    return t;
}

// Coefficients over high modes with 1/lambda decay: keeps a useful fraction
// of candidates inside the kinetic ball before the exact B_rho filter.
inline std::vector<double> decaying_coeffs(std::mt19937_64& rng, const SpectralBasis& basis,
                                           int first_mode, int count) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> t(static_cast<std::size_t>(count));
    const double lam0 = basis.lam(first_mode);
    double s = 0.0;
    for (int j = 0; j < count; ++j) {
        t[static_cast<std::size_t>(j)] = g(rng) * lam0 / basis.lam(first_mode + j);
        s += t[static_cast<std::size_t>(j)] * t[static_cast<std::size_t>(j)];
    }
    const double inv = 1.0 / std::sqrt(s);
    for (auto& x : t) x *= inv;
    return t;
}

}  // namespace detail

inline LinkSampleSet sample_linking_set(LinkSetKind kind, int k, int d, const SpectralBasis& basis,
                                        const std::vector<double>& masses, int count, std::uint64_t seed,
                                        double rho = std::numeric_limits<double>::infinity(), int J = 8,
                                        const LaplacianOp* lap = nullptr) {
    if (count < 1) throw std::invalid_argument("sample count must be at least 1");
    const int m = static_cast<int>(masses.size());
    std::mt19937_64 rng(seed);
    LinkSampleSet set;
    set.kind = kind;
    set.k = k;
    set.d = d;

    auto ground = [&](int i) {
        Field f = basis.mode(1);
        const double s = std::sqrt(masses[static_cast<std::size_t>(i)]) / norm_l2(f);
        for (auto& x : f.v) x *= s;
        return f;
    };
    auto axis_point = [&](int mode, int lo, int hi_excl) {
        // components in [lo, hi_excl) on the given mode; the rest on phi_1
        std::vector<Field> comps;
        for (int i = 0; i < m; ++i) {
            if (i >= lo && i < hi_excl) {
                Field f = basis.mode(mode);
                const double s = std::sqrt(masses[static_cast<std::size_t>(i)]) / norm_l2(f);
                for (auto& x : f.v) x *= s;
                comps.push_back(std::move(f));
            } else {
                comps.push_back(ground(i));
            }
        }
        return VecField(std::move(comps));
    };
    auto in_ball = [&](const VecField& u) {
        if (!std::isfinite(rho)) return true;
        if (!lap) throw std::invalid_argument("B_rho filter needs the Laplacian");
        return kinetic_sum(*lap, u) < rho;
    };

    switch (kind) {
        case LinkSetKind::SK: {
            for (int n = 0; n < count; ++n) {
                std::vector<Field> comps;
                for (int i = 0; i < m; ++i)
                    comps.push_back(detail::combine_modes(basis, 1, detail::gaussian_coeffs(rng, k),
                                                          masses[static_cast<std::size_t>(i)]));
                set.points.emplace_back(std::move(comps));
            }
            break;
        }
        case LinkSetKind::MK1: {
            set.points.push_back(axis_point(k + 1, 0, m));  // the distinguished point
            for (int n = 1; n < count; ++n) {
                std::vector<Field> comps;
                for (int i = 0; i < m; ++i) {
                    auto t = detail::gaussian_coeffs(rng, k + 1);
                    t.back() = std::abs(t.back());
                    comps.push_back(detail::combine_modes(basis, 1, t, masses[static_cast<std::size_t>(i)]));
                }
                set.points.emplace_back(std::move(comps));
            }
            break;
        }
        case LinkSetKind::SKPerpBrho: {
            if (basis.size() < k + J) throw std::invalid_argument("basis too small for requested span");
            for (int j = 1; j <= J; ++j) {
                VecField pt = axis_point(k + j, 0, m);
                if (in_ball(pt)) set.points.push_back(std::move(pt));
            }
            int attempts = 0;
            const int max_attempts = 60 * count;
            while (static_cast<int>(set.points.size()) < count && attempts < max_attempts) {
                ++attempts;
                std::vector<Field> comps;
                for (int i = 0; i < m; ++i)
                    comps.push_back(detail::combine_modes(basis, k + 1,
                                                          detail::decaying_coeffs(rng, basis, k + 1, J),
                                                          masses[static_cast<std::size_t>(i)]));
                VecField pt(std::move(comps));
                if (in_ball(pt)) set.points.push_back(std::move(pt));
            }
            if (set.points.empty())
                throw std::runtime_error("B_rho filter rejected all candidates: rho too small for this k");
            break;
        }
        case LinkSetKind::MK1dTimesGround: {
            set.points.push_back(axis_point(k + 1, 0, d));
            for (int n = 1; n < count; ++n) {
                std::vector<Field> comps;
                for (int i = 0; i < m; ++i) {
                    if (i < d) {
                        auto t = detail::gaussian_coeffs(rng, k + 1);
                        t.back() = std::abs(t.back());
                        comps.push_back(
                            detail::combine_modes(basis, 1, t, masses[static_cast<std::size_t>(i)]));
                    } else {
                        comps.push_back(ground(i));
                    }
                }
                set.points.emplace_back(std::move(comps));
            }
            break;
        }
        case LinkSetKind::SKdPerpTimesS: {
            if (basis.size() < k + J) throw std::invalid_argument("basis too small for requested span");
            for (int j = 1; j <= J; ++j) {
                VecField pt = axis_point(k + j, 0, d);
                if (in_ball(pt)) set.points.push_back(std::move(pt));
            }
            int attempts = 0;
            const int max_attempts = 60 * count;
            while (static_cast<int>(set.points.size()) < count && attempts < max_attempts) {
                ++attempts;
                std::vector<Field> comps;
                for (int i = 0; i < m; ++i) {
                    if (i < d)
                        comps.push_back(detail::combine_modes(basis, k + 1,
                                                              detail::decaying_coeffs(rng, basis, k + 1, J),
                                                              masses[static_cast<std::size_t>(i)]));
                    else
                        comps.push_back(detail::combine_modes(basis, 1,
                                                              detail::decaying_coeffs(rng, basis, 1, J),
                                                              masses[static_cast<std::size_t>(i)]));
                }
                VecField pt(std::move(comps));
                if (in_ball(pt)) set.points.push_back(std::move(pt));
            }
            if (set.points.empty())
                throw std::runtime_error("B_rho filter rejected all candidates: rho too small for this k");
            break;
        }
    }
    return set;
}

// Boundary of the M-set: one component constrained to the k-sphere, the rest
// free on the (k+1)-half-sphere (ground components stay pinned for d-sets).
inline LinkSampleSet sample_boundary_mk1(int k, int d, const SpectralBasis& basis,
                                         const std::vector<double>& masses, int count, std::uint64_t seed) {
    const int m = static_cast<int>(masses.size());
    const int dd = d > 0 ? d : m;
    std::mt19937_64 rng(seed);
    LinkSampleSet set;
    set.kind = d > 0 ? LinkSetKind::MK1dTimesGround : LinkSetKind::MK1;
    set.k = k;
    set.d = d;
    for (int n = 0; n < count; ++n) {
        const int s = n % dd;
        std::vector<Field> comps;
        for (int i = 0; i < m; ++i) {
            if (d > 0 && i >= d) {
                Field f = basis.mode(1);
                const double sc = std::sqrt(masses[static_cast<std::size_t>(i)]) / norm_l2(f);
                for (auto& x : f.v) x *= sc;
                comps.push_back(std::move(f));
            } else if (i == s) {
                comps.push_back(detail::combine_modes(basis, 1, detail::gaussian_coeffs(rng, k),
                                                      masses[static_cast<std::size_t>(i)]));
            } else {
                auto t = detail::gaussian_coeffs(rng, k + 1);
                t.back() = std::abs(t.back());
                comps.push_back(detail::combine_modes(basis, 1, t, masses[static_cast<std::size_t>(i)]));
            }
        }
        set.points.emplace_back(std::move(comps));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Sampled minimax bracket: the inequality chain
//   sup_{boundary} E < inf_{perp cap B_rho} E <= sup_{M} E < M1
// evaluated on samples, margins reported, violations never silently passed.
// ---------------------------------------------------------------------------
struct BracketResult {
    double lower = 0.0;         // sampled inf over the perp set
    double upper = 0.0;         // sampled sup over the M-set
    double sup_boundary = 0.0;  // sampled sup over the boundary
    double m1 = 0.0;
    double margin_left = 0.0;   // lower - sup_boundary
    double margin_right = 0.0;  // m1 - upper
    bool ok = false;
    int samples = 0;
    std::vector<std::string> violations;
};

inline json to_json(const BracketResult& b) {
    return json{{"lower", b.lower},
                {"upper", b.upper},
                {"sup_boundary", b.sup_boundary},
                {"m1", b.m1},
                {"margin_left", b.margin_left},
                {"margin_right", b.margin_right},
                {"ok", b.ok},
                {"samples", b.samples},
                {"violations", b.violations}};
}

inline BracketResult estimate_minimax_bracket(int k, std::optional<int> d, const SystemParams& p,
                                              const SpectralBasis& basis, const LaplacianOp& lap,
                                              const FeasibilityReport& feas, int sample_count,
                                              std::uint64_t seed, int J = 8) {
    BracketResult out;
    out.m1 = feas.m1;
    out.samples = sample_count;
    const double rho = feas.rho_chosen;
    const int dd = d ? *d : -1;

    LinkSampleSet mset = sample_linking_set(d ? LinkSetKind::MK1dTimesGround : LinkSetKind::MK1, k,
                                            dd, basis, p.masses, sample_count, seed);
    LinkSampleSet perp = sample_linking_set(d ? LinkSetKind::SKdPerpTimesS : LinkSetKind::SKPerpBrho, k,
                                            dd, basis, p.masses, sample_count, seed + 1, rho, J, &lap);
    LinkSampleSet bset = sample_boundary_mk1(k, d ? *d : 0, basis, p.masses, sample_count, seed + 2);

    double sup_m = -std::numeric_limits<double>::infinity();
    for (const auto& u : mset.points) sup_m = std::max(sup_m, energy_total(u, p, lap));
    double inf_perp = std::numeric_limits<double>::infinity();
    for (const auto& u : perp.points) inf_perp = std::min(inf_perp, energy_total(u, p, lap));
    double sup_b = -std::numeric_limits<double>::infinity();
    for (const auto& u : bset.points) sup_b = std::max(sup_b, energy_total(u, p, lap));

    out.lower = inf_perp;
    out.upper = sup_m;
    out.sup_boundary = sup_b;
    out.margin_left = inf_perp - sup_b;
    out.margin_right = feas.m1 - sup_m;
    out.ok = out.margin_left > 0.0 && out.margin_right > 0.0;
    if (out.margin_left <= 0.0)
        out.violations.push_back("sampled sup over the boundary reaches the perp infimum "
                                 "(infeasible params or under-sampling)");
    if (out.margin_right <= 0.0)
        out.violations.push_back("sampled sup over the M-set reaches M1 "
                                 "(infeasible params or under-sampling)");
    return out;
}

// Flow initial point: the highest-energy sampled M-set point that the cone
// brackets certify to lie outside the delta-tube. A heuristic stand-in for a
// minimax-realizing point; the distinguished point is the fallback.
inline VecField pick_linking_init(int k, int d, const SystemParams& p, const SpectralBasis& basis,
                                  const LaplacianOp& lap, int samples, std::uint64_t seed, double delta,
                                  double c4) {
    LinkSampleSet mset = sample_linking_set(d > 0 ? LinkSetKind::MK1dTimesGround : LinkSetKind::MK1, k,
                                            d, basis, p.masses, samples, seed);
    const int active = d > 0 ? d : p.m;
    const VecField* best = &mset.points.front();  // the distinguished point
    double best_e = -std::numeric_limits<double>::infinity();
    for (const auto& u : mset.points) {
        double lb = std::numeric_limits<double>::infinity();
        for (int i = 0; i < active; ++i) {
            lb = std::min(lb, c4 * norm_lp(negative_part(u[i]), 4.0));
            lb = std::min(lb, c4 * norm_lp(positive_part(u[i]), 4.0));
        }
        if (lb <= delta) continue;  // not certified outside the tube
        const double e = energy_total(u, p, lap);
        if (e > best_e) {
            best_e = e;
            best = &u;
        }
    }
    return *best;
}

// Sampled stand-in for the positive cone-distance floor on the perp set:
// min over samples, components, and signs of the lower bracket c4*||u_mp||_4.
inline double delta0_estimate(int k, std::optional<int> d, const SpectralBasis& basis,
                              const std::vector<double>& masses, double rho, double c4,
                              const LaplacianOp& lap, int sample_count, std::uint64_t seed, int J = 8) {
    const int dd = d ? *d : -1;
    LinkSampleSet perp = sample_linking_set(d ? LinkSetKind::SKdPerpTimesS : LinkSetKind::SKPerpBrho, k,
                                            dd, basis, masses, sample_count, seed, rho, J, &lap);
    const int active = d ? *d : static_cast<int>(masses.size());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& u : perp.points)
        for (int i = 0; i < active; ++i) {
            best = std::min(best, c4 * norm_lp(negative_part(u[i]), 4.0));
            best = std::min(best, c4 * norm_lp(positive_part(u[i]), 4.0));
        }
    return best;
}

}  // namespace cnls
