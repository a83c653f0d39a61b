#pragma once

// Mass-to-zero sweeps: track Lagrange multipliers and normalized profiles of
// converged solutions along a shrinking mass ladder and compare -lambda with
// the Dirichlet spectrum. Warm starts follow one solution branch.

#include "cnls/core.hpp"
#include "cnls/discretization.hpp"
#include "cnls/flow.hpp"
#include "cnls/linking.hpp"

namespace cnls {

enum class TargetKind { Positive, SignChanging, SemiNodal };

// k is the eigenvalue index the multipliers should approach: -lambda_i ->
// Lambda_k for the sign-changing components. At the linking level this means
// flowing from the M_k family, i.e. linking index k-1.
struct SweepTarget {
    TargetKind kind = TargetKind::Positive;
    int k = 1;
    int d = 0;
};

inline const char* to_string(TargetKind t) {
    switch (t) {
        case TargetKind::Positive: return "positive";
        case TargetKind::SignChanging: return "sign_changing";
        default: return "semi_nodal";
    }
}

struct TargetGate {
    double rho = 0.0;
    double m0 = 0.0;
    double m1 = 0.0;
    bool feasible = false;
    std::string reason;
};

inline TargetGate target_feasibility(const SystemParams& p, const SpectralBasis& basis,
                                     const SweepTarget& target, double c4) {
    TargetGate gate;
    if (target.kind == TargetKind::Positive) {
        const double C4 = std::pow(c4, 4);
        gate.rho = recipe_rho(basis.lam(1), p.mass_sum());
        gate.m0 = 0.5 - 0.25 * (p.mu_max_pos + p.beta_max_pos) / C4 * gate.rho;
        gate.m1 = gate.m0 * gate.rho;
        bool ok = gate.rho < rho_window_upper(p, c4) && gate.m0 > 0.0;
        if (!ok) gate.reason = "rho outside the admissible window";
        // the ground family must start strictly below the barrier
        const double neg_factor = 2.0 - (p.mu_min_neg + p.beta_min_neg) / C4 * gate.rho;
        if (ok && !(0.25 * neg_factor * basis.lam(1) * p.mass_sum() < gate.m1)) {
            ok = false;
            gate.reason = "ground level reaches the M1 barrier";
        }
        const double C8 = C4 * C4;
        for (int i = 0; ok && i < p.m; ++i) {
            const double mp = p.mu_pos(i) + p.beta_max_pos;
            if (!(mp * mp * gate.rho * gate.rho * gate.rho <=
                  basis.lam(1) * C8 * p.masses[static_cast<std::size_t>(i)])) {
                ok = false;
                gate.reason = "cone mass condition fails for component " + std::to_string(i + 1);
            }
        }
        gate.feasible = ok;
        return gate;
    }
    if (target.k < 2) throw std::invalid_argument("sign-changing targets need eigenvalue index k >= 2");
    std::optional<int> d;
    if (target.kind == TargetKind::SemiNodal) d = target.d;
    FeasibilityReport f = feasibility_report(p, basis, target.k - 1, d, c4);
    gate.rho = f.rho_chosen;
    gate.m0 = f.m0;
    gate.m1 = f.m1;
    gate.feasible = f.feasible;
    if (!f.feasible) {
        if (!f.spectral_gap_ok)
            gate.reason = "missing spectral gap";
        else if (!f.rho_in_window)
            gate.reason = "rho outside the admissible window";
        else
            gate.reason = "mass conditions fail";
    }
    return gate;
}

struct SweepRecord {
    double r = 0.0;
    std::vector<double> masses;
    std::vector<double> lambdas;
    std::vector<double> minus_lambdas;
    std::vector<double> profile_dist;  // min_k || u_i/sqrt(c_i) -+ phi_k ||_L2
    std::vector<int> profile_mode;
    double energy = 0.0;
    double v_norm = 0.0;
    double el_residual = 0.0;
    double kinetic_ratio = 0.0;  // sum ||grad u_i||^2 / sum c_i Lambda_target,i
    bool feasible = false;
    bool converged = false;
    std::string flow_status;
    std::string classification;
    std::string note;  // cold-start retries and other per-radius events
    long steps = 0;
};

struct SweepReport {
    SweepTarget target;
    std::vector<double> direction;
    std::vector<double> target_lambda;  // discrete Lambda for each component
    std::vector<SweepRecord> records;
    std::vector<VecField> solutions;
    bool trend_ok = false;
    double final_max_rel_err = std::numeric_limits<double>::infinity();
};

inline json to_json(const SweepRecord& rec) {
    return json{{"r", rec.r},
                {"masses", rec.masses},
                {"lambdas", rec.lambdas},
                {"minus_lambdas", rec.minus_lambdas},
                {"profile_dist", rec.profile_dist},
                {"profile_mode", rec.profile_mode},
                {"energy", rec.energy},
                {"v_norm", rec.v_norm},
                {"el_residual", rec.el_residual},
                {"kinetic_ratio", rec.kinetic_ratio},
                {"feasible", rec.feasible},
                {"converged", rec.converged},
                {"flow_status", rec.flow_status},
                {"classification", rec.classification},
                {"note", rec.note},
                {"steps", rec.steps}};
}

inline json to_json(const SweepReport& rep) {
    json recs = json::array();
    for (const auto& r : rep.records) recs.push_back(to_json(r));
    return json{{"target", to_string(rep.target.kind)},
                {"target_k", rep.target.k},
                {"target_d", rep.target.d},
                {"direction", rep.direction},
                {"target_lambda", rep.target_lambda},
                {"records", recs},
                {"trend_ok", rep.trend_ok},
                {"final_max_rel_err", rep.final_max_rel_err}};
}

namespace detail {

inline Field scaled_mode_field(const SpectralBasis& basis, int k, double mass) {
    Field f = basis.mode(k);
    const double s = std::sqrt(mass) / norm_l2(f);
    for (auto& x : f.v) x *= s;
    return f;
}

inline int target_mode(const SweepTarget& target, int i) {
    if (target.kind == TargetKind::SignChanging) return target.k;
    if (target.kind == TargetKind::SemiNodal && i < target.d) return target.k;
    return 1;
}

inline VecField target_cold_start(const SpectralBasis& basis, const SweepTarget& target,
                                  const std::vector<double>& masses) {
    std::vector<Field> comps;
    const int m = static_cast<int>(masses.size());
    for (int i = 0; i < m; ++i)
        comps.push_back(scaled_mode_field(basis, target_mode(target, i), masses[static_cast<std::size_t>(i)]));
    return VecField(std::move(comps));
}

// Warm starts carry the previous solve's residual error in the spectral
// directions below the target mode. Those are exactly the directions the
// descending flow amplifies at an excited-state saddle, so chaining radii
// without a cleanup walks off the branch. The branch's own content in those
// modes is O(c^{3/2}); dropping it costs no more than a cold start while the
// useful high-mode corrections survive.
inline VecField stabilize_warm_start(const VecField& warm, const SpectralBasis& basis,
                                     const SweepTarget& target) {
    VecField out = warm;
    for (int i = 0; i < out.m(); ++i) {
        const int mode = target_mode(target, i);
        for (int j = 1; j < mode; ++j) {
            const double c = inner_l2(out[i], basis.mode(j));
            for (std::size_t t = 0; t < out[i].size(); ++t) out[i][t] -= c * basis.mode(j)[t];
        }
    }
    return out;
}

inline bool matches_target(const Classification& cls, const SweepTarget& target) {
    switch (target.kind) {
        case TargetKind::Positive: return cls.tag == SolutionTag::Positive;
        case TargetKind::SignChanging: return cls.tag == SolutionTag::SignChanging;
        default: return cls.tag == SolutionTag::SemiNodal && cls.d == target.d;
    }
}

}  // namespace detail

inline SweepReport sweep(const SystemParams& params_template, const std::vector<double>& direction,
                         const std::vector<double>& radii, const SweepTarget& target,
                         const StepControl& ctl_base, const LaplacianOp& lap, const SpectralBasis& basis,
                         double c4) {
    const int m = params_template.m;
    if (static_cast<int>(direction.size()) != m)
        throw std::invalid_argument("direction must have m entries");
    double dsum = 0.0;
    for (double t : direction) {
        if (!(t > 0.0)) throw std::invalid_argument("direction must be a strictly positive simplex point");
        dsum += t;
    }
    if (std::abs(dsum - 1.0) > 1e-12) throw std::invalid_argument("direction must sum to one");
    if (radii.size() < 2) throw std::invalid_argument("need at least two radii");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] < radii[i - 1])) throw std::invalid_argument("radii must decrease strictly");
    if (target.kind == TargetKind::SemiNodal && (target.d < 1 || target.d > m - 1))
        throw std::invalid_argument("semi-nodal d must satisfy 1 <= d <= m-1");

    SweepReport rep;
    rep.target = target;
    rep.direction = direction;
    for (int i = 0; i < m; ++i) {
        int mode = 1;
        if (target.kind == TargetKind::SignChanging) mode = target.k;
        if (target.kind == TargetKind::SemiNodal && i < target.d) mode = target.k;
        rep.target_lambda.push_back(basis.lam(mode));
    }

    std::optional<VecField> warm;
    for (double r : radii) {
        SystemParams p = params_template;
        p.masses.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) p.masses[static_cast<std::size_t>(i)] = r * direction[static_cast<std::size_t>(i)];
        p = validate_params(std::move(p));

        TargetGate gate = target_feasibility(p, basis, target, c4);
        StepControl ctl = ctl_base;
        ctl.rho = gate.feasible ? gate.rho : std::numeric_limits<double>::infinity();
        ctl.m1 = gate.feasible ? gate.m1 : std::numeric_limits<double>::infinity();
        ctl.c4 = c4;
        ctl.positive_components.clear();
        if (target.kind == TargetKind::Positive)
            for (int i = 0; i < m; ++i) ctl.positive_components.push_back(i);
        if (target.kind == TargetKind::SemiNodal)
            for (int i = target.d; i < m; ++i) ctl.positive_components.push_back(i);

        std::string note;
        VecField init = warm ? project_to_spheres(detail::stabilize_warm_start(*warm, basis, target),
                                                  p.masses)
                             : detail::target_cold_start(basis, target, p.masses);
        SolveReport solve = run_to_critical(init, ctl, p, lap);
        if (warm && solve.status == FlowStatus::Converged &&
            !detail::matches_target(solve.classification, target)) {
            note = "warm start left the branch; retried from the cold start";
            solve = run_to_critical(detail::target_cold_start(basis, target, p.masses), ctl, p, lap);
        }

        SweepRecord rec;
        rec.r = r;
        rec.note = note;
        rec.masses = p.masses;
        rec.lambdas = solve.lambdas;
        for (double lam : solve.lambdas) rec.minus_lambdas.push_back(-lam);
        rec.energy = solve.energy;
        rec.v_norm = solve.v_norm;
        rec.el_residual = solve.el_residual;
        rec.feasible = gate.feasible;
        rec.converged = solve.status == FlowStatus::Converged;
        rec.flow_status = to_string(solve.status);
        rec.classification = to_string(solve.classification);
        rec.steps = solve.steps;
        double kin = kinetic_sum(lap, solve.u), denom = 0.0;
        for (int i = 0; i < m; ++i)
            denom += p.masses[static_cast<std::size_t>(i)] * rep.target_lambda[static_cast<std::size_t>(i)];
        rec.kinetic_ratio = kin / denom;
        for (int i = 0; i < m; ++i) {
            Field v = solve.u[i];
            const double s = 1.0 / std::sqrt(p.masses[static_cast<std::size_t>(i)]);
            for (auto& x : v.v) x *= s;
            double best = std::numeric_limits<double>::infinity();
            int best_mode = 0;
            for (int kk = 1; kk <= basis.size(); ++kk) {
                Field dplus = v, dminus = v;
                for (std::size_t t = 0; t < v.size(); ++t) {
                    dplus[t] -= basis.mode(kk)[t];
                    dminus[t] += basis.mode(kk)[t];
                }
                const double dist = std::min(norm_l2(dplus), norm_l2(dminus));
                if (dist < best) {
                    best = dist;
                    best_mode = kk;
                }
            }
            rec.profile_dist.push_back(best);
            rec.profile_mode.push_back(best_mode);
        }
        rep.records.push_back(std::move(rec));
        rep.solutions.push_back(solve.u);
        warm = solve.status == FlowStatus::Converged ? std::optional<VecField>(solve.u) : std::nullopt;
    }

    // trend: relative multiplier error shrinks down the ladder and ends small
    rep.trend_ok = true;
    double prev_err = std::numeric_limits<double>::infinity();
    for (const auto& rec : rep.records) {
        if (!rec.converged) {
            rep.trend_ok = false;
            continue;
        }
        double err = 0.0;
        for (int i = 0; i < m; ++i)
            err = std::max(err, std::abs(rec.minus_lambdas[static_cast<std::size_t>(i)] -
                                         rep.target_lambda[static_cast<std::size_t>(i)]) /
                                    rep.target_lambda[static_cast<std::size_t>(i)]);
        if (err >= prev_err + 1e-12) rep.trend_ok = false;
        prev_err = err;
    }
    rep.final_max_rel_err = prev_err;
    return rep;
}

// ---------------------------------------------------------------------------
// Semi-trivial branches: sweep a reduced subsystem and pad with zeros. Zero
// components annihilate every coupling term, so the embedded field satisfies
// the full system with the reduced residual, and the inactive multipliers are
// free parameters.
// ---------------------------------------------------------------------------
struct SemiTrivialReport {
    std::vector<int> active;  // 0-based component indices of the reduced system
    SweepReport reduced;
    std::vector<VecField> embedded;
    std::vector<std::vector<double>> full_lambdas;  // inactive entries are free, reported as 0
    std::vector<double> embedded_residuals;
    std::vector<double> reduced_residuals;
    std::vector<std::string> classifications;
};

inline json to_json(const SemiTrivialReport& rep) {
    return json{{"active", rep.active},
                {"reduced", to_json(rep.reduced)},
                {"full_lambdas", rep.full_lambdas},
                {"embedded_residuals", rep.embedded_residuals},
                {"reduced_residuals", rep.reduced_residuals},
                {"classifications", rep.classifications}};
}

inline SemiTrivialReport semi_trivial_sweep(const SystemParams& params_template,
                                            const std::vector<int>& active,
                                            const std::vector<double>& direction_active,
                                            const std::vector<double>& radii, const SweepTarget& target,
                                            const StepControl& ctl_base, const LaplacianOp& lap,
                                            const SpectralBasis& basis, double c4) {
    const int m = params_template.m;
    const int md = static_cast<int>(active.size());
    if (md < 1 || md >= m)
        throw std::invalid_argument("active set must be a nonempty proper subset of components");
    for (int i : active)
        if (i < 0 || i >= m) throw std::invalid_argument("active component index out of range");

    SystemParams reduced;
    reduced.m = md;
    reduced.dim = params_template.dim;
    reduced.lengths = params_template.lengths;
    reduced.beta.assign(static_cast<std::size_t>(md), std::vector<double>(static_cast<std::size_t>(md), 0.0));
    for (int a = 0; a < md; ++a) {
        reduced.mu.push_back(params_template.mu[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])]);
        reduced.masses.push_back(1.0);  // replaced per radius inside sweep
        for (int b = 0; b < md; ++b)
            reduced.beta[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                params_template.beta[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])]
                                    [static_cast<std::size_t>(active[static_cast<std::size_t>(b)])];
    }

    SemiTrivialReport rep;
    rep.active = active;
    rep.reduced = sweep(reduced, direction_active, radii, target, ctl_base, lap, basis, c4);

    for (std::size_t n = 0; n < rep.reduced.records.size(); ++n) {
        const VecField& u_red = rep.reduced.solutions[n];
        VecField full(u_red.grid(), m);
        std::vector<double> lam_full(static_cast<std::size_t>(m), 0.0);
        for (int a = 0; a < md; ++a) {
            full[active[static_cast<std::size_t>(a)]] = u_red[a];
            lam_full[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])] =
                rep.reduced.records[n].lambdas[static_cast<std::size_t>(a)];
        }
        rep.embedded_residuals.push_back(
            euler_lagrange_residual(full, lam_full, params_template, lap, ctl_base.cg));
        rep.reduced_residuals.push_back(rep.reduced.records[n].el_residual);
        rep.classifications.push_back(to_string(classify(full, ctl_base.classify_theta)));
        rep.embedded.push_back(std::move(full));
        rep.full_lambdas.push_back(std::move(lam_full));
    }
    return rep;
}

}  // namespace cnls
