#pragma once

// Domain data model: problem parameters, tensor-product Dirichlet grids and
// grid functions. Everything here is immutable after construction and safe
// for concurrent reads.

#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cnls {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// SystemParams: m coupled cubic equations on a box, with prescribed masses.
// beta is symmetric with zero diagonal; the self-interactions live in mu.
// ---------------------------------------------------------------------------
struct SystemParams {
    int m = 0;
    std::vector<double> mu;                 // mu[j] != 0
    std::vector<std::vector<double>> beta;  // m x m, beta[j][j] == 0, beta[k][j] == beta[j][k] != 0
    std::vector<double> masses;             // c[j] > 0
    int dim = 1;
    std::vector<double> lengths;            // box side lengths, one per axis

    // Sign-split aggregates, cached by validate_params.
    double mu_max_pos = 0.0;    // max(0, mu_i : mu_i > 0)
    double beta_max_pos = 0.0;  // max(0, beta_ij : beta_ij > 0)
    double mu_min_neg = 0.0;    // min(0, mu_i : mu_i < 0)
    double beta_min_neg = 0.0;  // min(0, beta_ij : beta_ij < 0)
    bool validated = false;

    double mass_sum() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }
    double mass_min() const {
        double v = masses.at(0);
        for (double c : masses) v = std::min(v, c);
        return v;
    }
    double mu_pos(int i) const { return std::max(mu.at(static_cast<std::size_t>(i)), 0.0); }
};

inline SystemParams validate_params(SystemParams p) {
    if (p.m <= 0) throw std::invalid_argument("component count m must be positive");
    if (static_cast<int>(p.mu.size()) != p.m) throw std::invalid_argument("mu must have m entries");
    if (static_cast<int>(p.masses.size()) != p.m) throw std::invalid_argument("masses must have m entries");
    if (static_cast<int>(p.beta.size()) != p.m) throw std::invalid_argument("beta must be m x m");
    for (const auto& row : p.beta)
        if (static_cast<int>(row.size()) != p.m) throw std::invalid_argument("beta must be m x m");
    if (p.dim < 1 || p.dim > 3) throw std::invalid_argument("dim must be 1, 2, or 3");
    if (static_cast<int>(p.lengths.size()) != p.dim) throw std::invalid_argument("lengths must have dim entries");
    for (double L : p.lengths)
        if (!(L > 0.0)) throw std::invalid_argument("box side lengths must be positive");
    for (int j = 0; j < p.m; ++j) {
        if (p.mu[j] == 0.0) throw std::invalid_argument("self-interaction mu must be nonzero");
        if (!(p.masses[j] > 0.0)) throw std::invalid_argument("masses must be positive");
        if (p.beta[j][j] != 0.0)
            throw std::invalid_argument("beta diagonal must be zero (self-interaction lives in mu)");
        for (int k = 0; k < p.m; ++k) {
            if (k == j) continue;
            if (p.beta[k][j] == 0.0) throw std::invalid_argument("coupling must be nonzero");
            if (p.beta[k][j] != p.beta[j][k]) throw std::invalid_argument("beta must be symmetric");
        }
    }
    p.mu_max_pos = 0.0;
    p.mu_min_neg = 0.0;
    for (double v : p.mu) {
        p.mu_max_pos = std::max(p.mu_max_pos, v);
        p.mu_min_neg = std::min(p.mu_min_neg, v);
    }
    p.beta_max_pos = 0.0;
    p.beta_min_neg = 0.0;
    for (int i = 0; i < p.m; ++i)
        for (int j = 0; j < p.m; ++j) {
            if (i == j) continue;
            p.beta_max_pos = std::max(p.beta_max_pos, p.beta[i][j]);
            p.beta_min_neg = std::min(p.beta_min_neg, p.beta[i][j]);
        }
    p.validated = true;
    return p;
}

// ---------------------------------------------------------------------------
// Grid: interior nodes of a tensor-product box grid. Boundary values are
// implicit zeros; only interior nodes are stored. Nodes are ordered
// lexicographically (C order: last axis fastest).
// ---------------------------------------------------------------------------
struct Grid {
    int dim = 1;
    std::array<int, 3> sizes{1, 1, 1};       // interior nodes per axis (1 on unused axes)
    std::array<double, 3> lengths{0, 0, 0};
    std::array<double, 3> spacings{0, 0, 0};
    std::size_t node_count = 0;
    double cell_volume = 0.0;

    static std::shared_ptr<const Grid> make(int dim, const std::vector<int>& sizes,
                                            const std::vector<double>& lengths) {
        if (dim < 1 || dim > 3) throw std::invalid_argument("grid dim must be 1, 2, or 3");
        if (static_cast<int>(sizes.size()) != dim || static_cast<int>(lengths.size()) != dim)
            throw std::invalid_argument("grid sizes/lengths must have dim entries");
        auto g = std::make_shared<Grid>();
        g->dim = dim;
        g->node_count = 1;
        g->cell_volume = 1.0;
        for (int a = 0; a < dim; ++a) {
            if (sizes[a] < 1) throw std::invalid_argument("grid sizes must be positive");
            if (!(lengths[a] > 0.0)) throw std::invalid_argument("grid lengths must be positive");
            g->sizes[a] = sizes[a];
            g->lengths[a] = lengths[a];
            g->spacings[a] = lengths[a] / (sizes[a] + 1);
            g->node_count *= static_cast<std::size_t>(sizes[a]);
            g->cell_volume *= g->spacings[a];
        }
        return g;
    }

    // Coordinate of interior node index i on axis a (1-based offset from the boundary).
    double coord(int a, int i) const { return spacings[a] * (i + 1); }

    bool same_as(const Grid& o) const {
        return dim == o.dim && sizes == o.sizes && lengths == o.lengths;
    }
};

using GridPtr = std::shared_ptr<const Grid>;

// ---------------------------------------------------------------------------
// Field: real grid function vanishing on the boundary.
// ---------------------------------------------------------------------------
struct Field {
    GridPtr grid;
    std::vector<double> v;

    Field() = default;
    explicit Field(GridPtr g) : grid(std::move(g)), v(grid->node_count, 0.0) {}
    Field(GridPtr g, std::vector<double> values) : grid(std::move(g)), v(std::move(values)) {
        if (v.size() != grid->node_count) throw std::invalid_argument("field length != grid node count");
    }

    std::size_t size() const { return v.size(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

inline void check_same_grid(const Field& a, const Field& b) {
    if (a.grid == b.grid) return;
    if (!a.grid || !b.grid || !a.grid->same_as(*b.grid)) throw std::invalid_argument("grid mismatch");
}

struct VecField {
    std::vector<Field> comp;

    VecField() = default;
    VecField(GridPtr g, int m) : comp(static_cast<std::size_t>(m), Field(g)) {}
    explicit VecField(std::vector<Field> components) : comp(std::move(components)) {
        for (std::size_t i = 1; i < comp.size(); ++i) check_same_grid(comp[0], comp[i]);
    }

    int m() const { return static_cast<int>(comp.size()); }
    const GridPtr& grid() const { return comp.at(0).grid; }
    Field& operator[](int i) { return comp[static_cast<std::size_t>(i)]; }
    const Field& operator[](int i) const { return comp[static_cast<std::size_t>(i)]; }
};

// ---------------------------------------------------------------------------
// Classification of a vector field by component sign structure.
// ---------------------------------------------------------------------------
enum class ComponentSign { Zero, Positive, Negative, SignChanging };

enum class SolutionTag { Trivial, SemiTrivial, SignChanging, SemiNodal, Positive, Mixed };

struct Classification {
    SolutionTag tag = SolutionTag::Trivial;
    int d = 0;  // number of sign-changing components when tag == SemiNodal
    std::vector<ComponentSign> per_component;
};

inline const char* to_string(ComponentSign s) {
    switch (s) {
        case ComponentSign::Zero: return "zero";
        case ComponentSign::Positive: return "positive";
        case ComponentSign::Negative: return "negative";
        default: return "sign_changing";
    }
}

inline std::string to_string(const Classification& c) {
    switch (c.tag) {
        case SolutionTag::Trivial: return "trivial";
        case SolutionTag::SemiTrivial: return "semi_trivial";
        case SolutionTag::SignChanging: return "sign_changing";
        case SolutionTag::SemiNodal: return "semi_nodal(" + std::to_string(c.d) + ")";
        case SolutionTag::Positive: return "positive";
        default: return "mixed";
    }
}

// ---------------------------------------------------------------------------
// JSON serialization. nlohmann emits shortest round-trip decimals, so a
// VecField survives a serialize/parse cycle bit-exactly.
// ---------------------------------------------------------------------------
inline json to_json(const SystemParams& p) {
    return json{{"m", p.m},      {"mu", p.mu},           {"beta", p.beta},
                {"masses", p.masses}, {"dim", p.dim},    {"lengths", p.lengths}};
}

inline SystemParams params_from_json(const json& j) {
    SystemParams p;
    p.m = j.at("m").get<int>();
    p.mu = j.at("mu").get<std::vector<double>>();
    p.beta = j.at("beta").get<std::vector<std::vector<double>>>();
    p.masses = j.at("masses").get<std::vector<double>>();
    p.dim = j.at("dim").get<int>();
    p.lengths = j.at("lengths").get<std::vector<double>>();
    return validate_params(std::move(p));
}

inline json to_json(const Grid& g) {
    std::vector<int> sizes(g.sizes.begin(), g.sizes.begin() + g.dim);
    std::vector<double> lengths(g.lengths.begin(), g.lengths.begin() + g.dim);
    std::vector<double> spacings(g.spacings.begin(), g.spacings.begin() + g.dim);
    return json{{"dim", g.dim},
                {"sizes", sizes},
                {"lengths", lengths},
                {"spacings", spacings},
                {"node_count", g.node_count}};
}

inline GridPtr grid_from_json(const json& j) {
    return Grid::make(j.at("dim").get<int>(), j.at("sizes").get<std::vector<int>>(),
                      j.at("lengths").get<std::vector<double>>());
}

inline json to_json(const VecField& u) {
    json fields = json::array();
    for (const auto& f : u.comp) fields.push_back(f.v);
    return json{{"grid", to_json(*u.grid())}, {"components", fields}};
}

inline VecField vecfield_from_json(const json& j) {
    GridPtr g = grid_from_json(j.at("grid"));
    std::vector<Field> comps;
    for (const auto& arr : j.at("components")) comps.emplace_back(g, arr.get<std::vector<double>>());
    return VecField(std::move(comps));
}

}  // namespace cnls
