#pragma once

#include <vector>

#include "ekc/core.hpp"
#include "ekc/grid.hpp"
#include "ekc/locality.hpp"
#include "ekc/prm.hpp"

namespace ekc {

// Member fields are stored as flat f32 arrays, [nj*ni] for surface variables
// and [nk*nj*ni] for volume variables, row-major with k slowest.

namespace update {

inline size_t field_size(const Grid& g, bool issurface) {
    return static_cast<size_t>(issurface ? 1 : g.nk) * g.nj * g.ni;
}

inline size_t cell_index(const Grid& g, int k, int j, int i) {
    return (static_cast<size_t>(k) * g.nj + j) * g.ni + i;
}

}  // namespace update

// ---------------------------------------------------------------------------
// EnKF field update: at each wet cell the row of member values is multiplied
// by the transform interpolated at that cell. Land cells are left untouched.
// ---------------------------------------------------------------------------

inline void update_field_enkf(std::vector<std::vector<float>>& members, const Grid& grid,
                              const TransformField& field, bool issurface) {
    int m = static_cast<int>(members.size());
    if (m != field.m) throw error("update_field: member count mismatch");
    size_t fs = update::field_size(grid, issurface);
    for (const auto& f : members)
        if (f.size() != fs) throw error("update_field: field size mismatch");
    int nk = issurface ? 1 : grid.nk;

    parallel_for(static_cast<std::int64_t>(grid.nj) * grid.ni, [&](std::int64_t cell) {
        int j = static_cast<int>(cell) / grid.ni;
        int i = static_cast<int>(cell) % grid.ni;
        if (grid.land(j, i)) return;
        LocalTransform t = interp_transform(field, i, j);
        Eigen::RowVectorXd v(m), va(m);
        int kmax = issurface ? 1 : std::min(nk, grid.levels_at(j, i));
        for (int k = 0; k < kmax; ++k) {
            size_t idx = update::cell_index(grid, k, j, i);
            for (int e = 0; e < m; ++e) v[e] = members[e][idx];
            va = v * t.X5;
            for (int e = 0; e < m; ++e) members[e][idx] = static_cast<float>(va[e]);
        }
    });
}

// ---------------------------------------------------------------------------
// EnOI field update: background + static-ensemble anomalies times the local
// weights. The static members are read-only.
// ---------------------------------------------------------------------------

inline void update_field_enoi(std::vector<float>& background,
                              const std::vector<std::vector<float>>& static_members,
                              const Grid& grid, const TransformField& field,
                              bool issurface) {
    int m = static_cast<int>(static_members.size());
    if (m != field.m) throw error("update_field: member count mismatch");
    size_t fs = update::field_size(grid, issurface);
    if (background.size() != fs) throw error("update_field: field size mismatch");
    for (const auto& f : static_members)
        if (f.size() != fs) throw error("update_field: field size mismatch");
    int nk = issurface ? 1 : grid.nk;

    parallel_for(static_cast<std::int64_t>(grid.nj) * grid.ni, [&](std::int64_t cell) {
        int j = static_cast<int>(cell) / grid.ni;
        int i = static_cast<int>(cell) % grid.ni;
        if (grid.land(j, i)) return;
        LocalTransform t = interp_transform(field, i, j);
        int kmax = issurface ? 1 : std::min(nk, grid.levels_at(j, i));
        for (int k = 0; k < kmax; ++k) {
            size_t idx = update::cell_index(grid, k, j, i);
            double mean = 0;
            for (int e = 0; e < m; ++e) mean += static_members[e][idx];
            mean /= m;
            double incr = 0;
            for (int e = 0; e < m; ++e) incr += t.w[e] * (static_members[e][idx] - mean);
            background[idx] = static_cast<float>(background[idx] + incr);
        }
    });
}

// ---------------------------------------------------------------------------
// Inflation with capping. Per state element: the anomalies of the analysed
// members are scaled by min(mult, max(1, 1 + cap (sigma_f / sigma_a - 1))),
// or by mult unconditionally in PLAIN mode. Elements with zero analysed
// spread are left alone. Returns the applied multiple per element when
// requested (for --write-inflation).
// ---------------------------------------------------------------------------

inline void inflate(const std::vector<std::vector<float>>& forecast,
                    std::vector<std::vector<float>>& analysis, const Inflation& inf,
                    std::vector<float>* applied = nullptr) {
    int m = static_cast<int>(analysis.size());
    if (m < 2 || forecast.size() != analysis.size())
        throw error("inflate: member count mismatch");
    size_t fs = analysis[0].size();
    for (const auto& f : forecast)
        if (f.size() != fs) throw error("inflate: field size mismatch");
    for (const auto& f : analysis)
        if (f.size() != fs) throw error("inflate: field size mismatch");
    if (!(inf.mult >= 1)) throw error("inflate: multiple must be >= 1");
    if (applied) applied->assign(fs, 1.0f);
    if (inf.mult == 1.0 && !inf.plain) return;

    parallel_for(static_cast<std::int64_t>(fs), [&](std::int64_t e) {
        double mean_f = 0, mean_a = 0;
        for (int c = 0; c < m; ++c) {
            mean_f += forecast[c][e];
            mean_a += analysis[c][e];
        }
        mean_f /= m;
        mean_a /= m;
        double var_f = 0, var_a = 0;
        for (int c = 0; c < m; ++c) {
            double df = forecast[c][e] - mean_f, da = analysis[c][e] - mean_a;
            var_f += df * df;
            var_a += da * da;
        }
        var_f /= (m - 1);
        var_a /= (m - 1);
        if (var_a <= 0) return;
        double eff;
        if (inf.plain) {
            eff = inf.mult;
        } else {
            double ratio = std::sqrt(var_f / var_a);
            eff = std::min(inf.mult, std::max(1.0, 1.0 + inf.cap * (ratio - 1.0)));
        }
        if (applied) (*applied)[e] = static_cast<float>(eff);
        for (int c = 0; c < m; ++c)
            analysis[c][e] =
                static_cast<float>(mean_a + eff * (analysis[c][e] - mean_a));
    });
}

// ---------------------------------------------------------------------------
// Forgetting stochastic model for bias-like fields:
//   x <- lambda x + sqrt(1 - lambda^2) N(0, sigma0^2)
// applied per element per member. lambda = 1 is the identity.
// ---------------------------------------------------------------------------

inline void randomise(std::vector<std::vector<float>>& members, double lambda,
                      double sigma0, std::uint64_t seed) {
    if (!(lambda > 0) || lambda > 1) throw error("randomise: lambda must be in (0,1]");
    if (lambda == 1.0) return;
    double fade = std::sqrt(1.0 - lambda * lambda);
    parallel_for(static_cast<std::int64_t>(members.size()), [&](std::int64_t c) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(c));
        std::normal_distribution<double> noise(0.0, sigma0);
        for (auto& x : members[c])
            x = static_cast<float>(lambda * x + fade * noise(rng));
    });
}

}  // namespace ekc
