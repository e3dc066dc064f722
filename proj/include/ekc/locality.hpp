#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ekc/analysis.hpp"
#include "ekc/core.hpp"
#include "ekc/grid.hpp"
#include "ekc/obs.hpp"

namespace ekc {

// Localisation taper: a weight-normalised linear combination of quintic
// piecewise polynomial tapers with different support radii. An empty radius
// list means no localisation (f == 1 everywhere).
struct TaperSpec {
    std::vector<double> radii;
    std::vector<double> weights;

    TaperSpec() = default;
    TaperSpec(std::vector<double> r, std::vector<double> w = {})
        : radii(std::move(r)), weights(std::move(w)) {
        for (double rad : radii)
            if (!(rad > 0)) throw error("taper: support radius must be > 0");
        if (weights.empty()) weights.assign(radii.size(), 1.0);
        if (weights.size() != radii.size())
            throw error("taper: radii and weights must have the same length");
        double sum = 0;
        for (double w : weights) sum += w;
        if (!radii.empty()) {
            if (sum <= 0) throw error("taper: weights must have a positive sum");
            for (double& w : weights) w /= sum;
        }
    }

    bool global() const { return radii.empty(); }
    double max_radius() const {
        double r = 0;
        for (double x : radii) r = std::max(r, x);
        return r;
    }
};

namespace locality {

// Quintic taper polynomial on x = 2 r / R; support ends at x = 2.
inline double taper0(double x) {
    if (x < 0) x = -x;
    if (x <= 1.0)
        return 1.0 - (5.0 / 3.0) * x * x + (5.0 / 8.0) * x * x * x +
               0.5 * x * x * x * x - 0.25 * x * x * x * x * x;
    if (x <= 2.0)
        return -(2.0 / 3.0) / x + 4.0 - 5.0 * x + (5.0 / 3.0) * x * x +
               (5.0 / 8.0) * x * x * x - 0.5 * x * x * x * x +
               (1.0 / 12.0) * x * x * x * x * x;
    return 0.0;
}

}  // namespace locality

inline double taper(double r_km, const TaperSpec& spec) {
    if (r_km < 0) throw error("taper: negative distance");
    if (spec.global()) return 1.0;
    double f = 0;
    for (size_t i = 0; i < spec.radii.size(); ++i)
        f += spec.weights[i] * locality::taper0(2.0 * r_km / spec.radii[i]);
    return f;
}

// ---------------------------------------------------------------------------
// Local observation selection: all GOOD observations with a positive taper
// coefficient at the given location. Brute force; an optional spatial index
// must be result-identical.
// ---------------------------------------------------------------------------

struct LocalObs {
    int index;  // into the observation table
    double f;   // taper coefficient
};

inline std::vector<LocalObs> select_local_obs(
    const ObsTable& obs, double lon, double lat,
    const std::function<const TaperSpec&(const std::string&)>& taper_for_type) {
    std::vector<LocalObs> out;
    for (size_t o = 0; o < obs.size(); ++o) {
        if (obs[o].status != ObsStatus::GOOD) continue;
        const TaperSpec& spec = taper_for_type(obs[o].type);
        double f;
        if (spec.global()) {
            f = 1.0;
        } else {
            double r = great_circle_km(lon, lat, obs[o].lon, obs[o].lat);
            f = taper(r, spec);
        }
        if (f > 0) out.push_back(LocalObs{static_cast<int>(o), f});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transform field on a stride subgrid
// ---------------------------------------------------------------------------

inline std::vector<int> stride_positions(int n, int stride) {
    if (n < 1) throw error("stride_positions: empty axis");
    if (stride < 1) throw error("stride_positions: stride must be >= 1");
    if (n == 1) return {0};
    int count = (n - 2) / stride + 2;  // ceil((n-1)/stride) + 1
    std::vector<int> pos(count);
    for (int k = 0; k < count; ++k) pos[k] = std::min(k * stride, n - 1);
    return pos;
}

struct TransformField {
    bool enkf = true;
    int stride = 1;
    int m = 0;
    std::vector<int> pos_i, pos_j;
    std::vector<LocalTransform> nodes;  // [nj_s * ni_s], row-major
    std::vector<std::string> type_names;
    // per-node (dfs, srf) recomputed per observation type, same layout as nodes
    std::vector<std::vector<std::pair<double, double>>> per_type;

    int ni_s() const { return static_cast<int>(pos_i.size()); }
    int nj_s() const { return static_cast<int>(pos_j.size()); }
    const LocalTransform& node(int js, int is) const {
        return nodes[static_cast<size_t>(js) * pos_i.size() + is];
    }
    LocalTransform& node(int js, int is) {
        return nodes[static_cast<size_t>(js) * pos_i.size() + is];
    }
};

// Per-observation quantities entering the local analyses; taper coefficients
// are applied per node on top of these.
struct ObsQuantities {
    Mat HE;         // [p x m]: ensemble observations (EnKF) or anomalies + Hx (EnOI)
    Vec Hx;         // [p]: ensemble/background mean observation
    Vec innovation; // [p]: y - Hx (or prescribed directly)
    Vec sigma_eff;  // [p]: effective error std after R-factors and moderation
};

inline LocalTransform identity_transform(int m, bool enkf) {
    LocalTransform t;
    t.w = Vec::Zero(m);
    if (enkf) {
        t.T_R = Mat::Identity(m, m);
        t.X5 = Mat::Identity(m, m);
    }
    return t;
}

struct BuildOptions {
    bool enkf = true;
    DaScheme scheme = DaScheme::DENKF;
    double alpha = 1.0;
    int stride = 1;
    bool per_type_impact = false;
    bool mean_update = true;  // false: w forced to 0
};

// Standardised rows for a selection of observations with taper applied.
inline StdObs standardize_selection(const ObsQuantities& q,
                                    const std::vector<LocalObs>& sel, int m) {
    Eigen::Index p = static_cast<Eigen::Index>(sel.size());
    Mat HE(p, m);
    Vec Hx(p), inn(p), sig(p), f(p);
    for (Eigen::Index r = 0; r < p; ++r) {
        HE.row(r) = q.HE.row(sel[r].index);
        Hx[r] = q.Hx[sel[r].index];
        inn[r] = q.innovation[sel[r].index];
        sig[r] = q.sigma_eff[sel[r].index];
        f[r] = sel[r].f;
    }
    return standardize(HE, Hx, inn, sig, f);
}

inline TransformField build_transform_field(
    const Grid& grid, const ObsTable& obs, const ObsQuantities& q,
    const std::function<const TaperSpec&(const std::string&)>& taper_for_type,
    const BuildOptions& opt) {
    TransformField field;
    field.enkf = opt.enkf;
    field.stride = opt.stride;
    field.m = static_cast<int>(q.HE.cols());
    field.pos_i = stride_positions(grid.ni, opt.stride);
    field.pos_j = stride_positions(grid.nj, opt.stride);
    field.nodes.resize(static_cast<size_t>(field.ni_s()) * field.nj_s());
    if (opt.per_type_impact) {
        for (const auto& o : obs)
            if (std::find(field.type_names.begin(), field.type_names.end(), o.type) ==
                field.type_names.end())
                field.type_names.push_back(o.type);
        field.per_type.resize(field.nodes.size());
    }

    int m = field.m;
    parallel_for(static_cast<std::int64_t>(field.nodes.size()), [&](std::int64_t idx) {
        int js = static_cast<int>(idx) / field.ni_s();
        int is = static_cast<int>(idx) % field.ni_s();
        int i = field.pos_i[is], j = field.pos_j[js];
        try {
            if (grid.land(j, i)) {
                field.nodes[idx] = identity_transform(m, opt.enkf);
                if (opt.per_type_impact)
                    field.per_type[idx].assign(field.type_names.size(), {0.0, 0.0});
                return;
            }
            auto [lon, lat] = fij_to_xy(grid, i, j);
            auto sel = select_local_obs(obs, lon, lat, taper_for_type);
            if (sel.empty()) {
                field.nodes[idx] = identity_transform(m, opt.enkf);
                if (opt.per_type_impact)
                    field.per_type[idx].assign(field.type_names.size(), {0.0, 0.0});
                return;
            }
            StdObs so = standardize_selection(q, sel, m);
            LocalTransform t;
            if (opt.enkf) {
                t = compute_transform(so.S, so.s, opt.scheme, opt.alpha);
                if (!opt.mean_update) {
                    t.w = Vec::Zero(m);
                    t.X5 = analysis::assemble_x5(t.w, t.T_R);
                }
            } else {
                t.w = opt.mean_update ? enoi_weights(so.S, so.s) : Vec::Zero(m);
                Mat GS = compute_gain(so.S) * so.S;
                t.dfs = GS.trace();
                double signal = (so.S.transpose() * so.S).trace();
                t.srf = t.dfs > 0 ? std::sqrt(signal / t.dfs) - 1.0 : 0.0;
            }
            field.nodes[idx] = std::move(t);
            if (opt.per_type_impact) {
                field.per_type[idx].resize(field.type_names.size());
                for (size_t ti = 0; ti < field.type_names.size(); ++ti) {
                    std::vector<LocalObs> sub;
                    for (const auto& lo : sel)
                        if (obs[lo.index].type == field.type_names[ti]) sub.push_back(lo);
                    if (sub.empty()) {
                        field.per_type[idx][ti] = {0.0, 0.0};
                        continue;
                    }
                    StdObs st = standardize_selection(q, sub, m);
                    Mat GS = compute_gain(st.S) * st.S;
                    double dfs = GS.trace();
                    double signal = (st.S.transpose() * st.S).trace();
                    double srf = dfs > 0 ? std::sqrt(signal / dfs) - 1.0 : 0.0;
                    field.per_type[idx][ti] = {dfs, srf};
                }
            }
        } catch (const std::exception& e) {
            throw error("transform at node (" + std::to_string(i) + "," +
                        std::to_string(j) + "): " + e.what());
        }
    });
    return field;
}

// ---------------------------------------------------------------------------
// Bilinear interpolation of transforms between stride nodes
// ---------------------------------------------------------------------------

namespace locality {

inline std::pair<int, double> bracket(const std::vector<int>& pos, int stride, double f) {
    int count = static_cast<int>(pos.size());
    if (count == 1) return {0, 0.0};
    int k = std::clamp(static_cast<int>(std::floor(f / stride)), 0, count - 2);
    if (f < pos[k]) k = std::max(0, k - 1);
    double t = (f - pos[k]) / static_cast<double>(pos[k + 1] - pos[k]);
    return {k, std::clamp(t, 0.0, 1.0)};
}

}  // namespace locality

inline LocalTransform interp_transform(const TransformField& field, double fi, double fj) {
    auto [ki, u] = locality::bracket(field.pos_i, field.stride, fi);
    auto [kj, v] = locality::bracket(field.pos_j, field.stride, fj);
    if (u == 0.0 && v == 0.0) return field.node(kj, ki);

    const LocalTransform& t00 = field.node(kj, ki);
    const LocalTransform& t10 = field.node(kj, std::min(ki + 1, field.ni_s() - 1));
    const LocalTransform& t01 = field.node(std::min(kj + 1, field.nj_s() - 1), ki);
    const LocalTransform& t11 =
        field.node(std::min(kj + 1, field.nj_s() - 1), std::min(ki + 1, field.ni_s() - 1));
    double w00 = (1 - u) * (1 - v), w10 = u * (1 - v), w01 = (1 - u) * v, w11 = u * v;

    LocalTransform t;
    t.w = w00 * t00.w + w10 * t10.w + w01 * t01.w + w11 * t11.w;
    if (field.enkf) {
        t.T_R = w00 * t00.T_R + w10 * t10.T_R + w01 * t01.T_R + w11 * t11.T_R;
        t.X5 = w00 * t00.X5 + w10 * t10.X5 + w01 * t01.X5 + w11 * t11.X5;
    }
    t.dfs = w00 * t00.dfs + w10 * t10.dfs + w01 * t01.dfs + w11 * t11.dfs;
    t.srf = w00 * t00.srf + w10 * t10.srf + w01 * t01.srf + w11 * t11.srf;
    return t;
}

// ---------------------------------------------------------------------------
// Persistence: ArrayFile of dims [nj_s, ni_s, m, m] (EnKF) or [nj_s, ni_s, m]
// (EnOI). Node positions are reconstructed from the grid shape and stride.
// ---------------------------------------------------------------------------

inline void save_transform_field(const std::string& path, const TransformField& f) {
    int m = f.m, nis = f.ni_s(), njs = f.nj_s();
    std::vector<float> data;
    std::vector<int> dims;
    if (f.enkf) {
        dims = {njs, nis, m, m};
        data.reserve(static_cast<size_t>(njs) * nis * m * m);
        for (const auto& n : f.nodes)
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) data.push_back(static_cast<float>(n.X5(r, c)));
    } else {
        dims = {njs, nis, m};
        data.reserve(static_cast<size_t>(njs) * nis * m);
        for (const auto& n : f.nodes)
            for (int r = 0; r < m; ++r) data.push_back(static_cast<float>(n.w[r]));
    }
    write_array(path, dims, data);
}

inline TransformField load_transform_field(const std::string& path, int grid_ni,
                                           int grid_nj, int stride, bool enkf) {
    ArrayFile a = read_array(path);
    TransformField f;
    f.enkf = enkf;
    f.stride = stride;
    f.pos_i = stride_positions(grid_ni, stride);
    f.pos_j = stride_positions(grid_nj, stride);
    int nis = f.ni_s(), njs = f.nj_s();
    if (enkf) {
        if (a.dims.size() != 4 || a.dims[0] != njs || a.dims[1] != nis ||
            a.dims[2] != a.dims[3])
            throw error(path + ": transform dims do not match grid/stride");
        f.m = a.dims[2];
    } else {
        if (a.dims.size() != 3 || a.dims[0] != njs || a.dims[1] != nis)
            throw error(path + ": weight dims do not match grid/stride");
        f.m = a.dims[2];
    }
    int m = f.m;
    f.nodes.resize(static_cast<size_t>(njs) * nis);
    size_t pos = 0;
    for (auto& n : f.nodes) {
        if (enkf) {
            n.X5.resize(m, m);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) n.X5(r, c) = a.data[pos++];
            n.w = Vec::Zero(m);
        } else {
            n.w.resize(m);
            for (int r = 0; r < m; ++r) n.w[r] = a.data[pos++];
        }
    }
    return f;
}

}  // namespace ekc
