#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ekc/core.hpp"
#include "ekc/grid.hpp"
#include "ekc/obs.hpp"
#include "ekc/prm.hpp"

namespace ekc {

// ---------------------------------------------------------------------------
// Error-std operators, applied in file order to the running total.
// ---------------------------------------------------------------------------

inline double apply_error_std_op(double sigma, ErrorStdOp op, double sigma_now) {
    if (!(sigma_now > 0)) throw error("ERROR_STD: value must be > 0");
    switch (op) {
        case ErrorStdOp::EQUAL: return sigma_now;
        case ErrorStdOp::PLUS: return std::sqrt(sigma * sigma + sigma_now * sigma_now);
        case ErrorStdOp::MULT: return sigma * sigma_now;
        case ErrorStdOp::MIN: return std::max(sigma, sigma_now);
        case ErrorStdOp::MAX: return std::min(sigma, sigma_now);
    }
    throw error("ERROR_STD: unknown operation");
}

// field_value resolves a from-file entry to a per-observation value; it is
// only consulted for such entries.
inline void apply_error_std(
    ObsTable& obs, const std::vector<ErrorStdEntry>& entries,
    const std::function<double(const ErrorStdEntry&, const Observation&)>& field_value =
        nullptr) {
    for (const auto& e : entries) {
        if (e.from_file && !field_value)
            throw error("ERROR_STD: no resolver for file-based entry " + e.file);
        for (auto& o : obs) {
            double now = e.from_file ? field_value(e, o) : e.value;
            o.std = apply_error_std_op(o.std, e.op, now);
        }
    }
}

// ---------------------------------------------------------------------------
// Screening: map to grid coordinates, apply domain bounds and value bounds.
// Observations outside the grid or the type's geographic bounds become
// OUTSIDE; values outside [minvalue, maxvalue] become BAD.
// ---------------------------------------------------------------------------

inline void screen_obs(ObsTable& obs, const Grid& grid, const ObsTypeSpec& type) {
    for (auto& o : obs) {
        if (o.type != type.name) continue;
        auto fij = xy_to_fij(grid, o.lon, o.lat);
        if (!fij) {
            o.status = ObsStatus::OUTSIDE;
            continue;
        }
        o.fi = fij->first;
        o.fj = fij->second;
        o.fk = type.issurface ? 0.0 : z_to_fk(grid, o.depth);
        if (o.lon < type.xmin || o.lon > type.xmax || o.lat < type.ymin ||
            o.lat > type.ymax || o.depth < type.zmin || o.depth > type.zmax) {
            o.status = ObsStatus::OUTSIDE;
            continue;
        }
        if (o.status == ObsStatus::GOOD &&
            (o.value < type.minvalue || o.value > type.maxvalue))
            o.status = ObsStatus::BAD;
    }
}

// ---------------------------------------------------------------------------
// Offset: a known model bias added to the observed values.
// ---------------------------------------------------------------------------

inline void apply_offset(ObsTable& obs, const Grid& grid,
                         const std::vector<float>& offset_field, bool issurface) {
    size_t expect = static_cast<size_t>(grid.ni) * grid.nj * (issurface ? 1 : grid.nk);
    if (offset_field.size() != expect) throw error("offset field dims mismatch");
    for (auto& o : obs) {
        if (o.status == ObsStatus::OUTSIDE) continue;
        try {
            double off = issurface ? h_surface(grid, offset_field, o.fi, o.fj)
                                   : h_volume(grid, offset_field, o.fi, o.fj, o.fk);
            o.value += off;
        } catch (const std::exception&) {
            throw error("offset undefined at observation " + std::to_string(o.id));
        }
    }
}

// ---------------------------------------------------------------------------
// Asynchronous binning: intervals centred on assim_date + slot * interval.
// ---------------------------------------------------------------------------

inline int assign_slot(double obs_time, double assim_date, double async_interval) {
    if (!(async_interval > 0)) throw error("assign_slot: interval must be > 0");
    return static_cast<int>(std::lround((obs_time - assim_date) / async_interval));
}

inline void assign_slots(ObsTable& obs, const ObsTypeSpec& type, double assim_date) {
    for (auto& o : obs) {
        if (o.type != type.name) continue;
        o.slot = type.async ? assign_slot(o.time, assim_date, *type.async) : 0;
    }
}

// ---------------------------------------------------------------------------
// Superobing: precision-weighted merge of GOOD observations sharing a cell of
// the sobstride supergrid, a type, a slot and a layer. BAD and OUTSIDE
// observations pass through unmerged.
// ---------------------------------------------------------------------------

inline ObsTable superob(const ObsTable& obs, const Grid& grid, int sobstride,
                        bool consider_subgrid = false) {
    if (sobstride < 0) throw error("superob: sobstride must be >= 0");
    ObsTable out;
    if (sobstride == 0) {
        out = obs;
        return out;
    }

    using Key = std::tuple<std::string, int, int, int, int>;
    std::map<Key, std::vector<int>> cells;
    for (size_t idx = 0; idx < obs.size(); ++idx) {
        const auto& o = obs[idx];
        if (o.status != ObsStatus::GOOD) {
            out.push_back(o);
            continue;
        }
        int ci = static_cast<int>(std::floor(o.fi / sobstride));
        int cj = static_cast<int>(std::floor(o.fj / sobstride));
        int layer = static_cast<int>(std::lround(o.fk));
        cells[Key{o.type, o.slot, ci, cj, layer}].push_back(static_cast<int>(idx));
    }

    for (const auto& [key, members] : cells) {
        if (members.size() == 1) {
            out.push_back(obs[members[0]]);
            continue;
        }
        Observation s = obs[members[0]];
        double wsum = 0, value = 0, fi = 0, fj = 0, fk = 0, time = 0;
        bool same_product = true, same_instrument = true, same_batch = true;
        s.merged_ids.clear();
        for (int idx : members) {
            const auto& o = obs[idx];
            double w = 1.0 / (o.std * o.std);
            wsum += w;
            value += w * o.value;
            fi += w * o.fi;
            fj += w * o.fj;
            fk += w * o.fk;
            time += w * o.time;
            same_product = same_product && o.product == s.product;
            same_instrument = same_instrument && o.instrument == s.instrument;
            same_batch = same_batch && o.batch == s.batch;
            s.merged_ids.push_back(o.id);
        }
        s.value = value / wsum;
        s.fi = fi / wsum;
        s.fj = fj / wsum;
        s.fk = fk / wsum;
        s.time = time / wsum;
        s.std = std::sqrt(1.0 / wsum);
        auto [lon, lat] = fij_to_xy(grid, s.fi, s.fj);
        s.lon = lon;
        s.lat = lat;
        {
            int a = std::clamp(static_cast<int>(std::floor(s.fk)), 0,
                               std::max(0, grid.nk - 2));
            double t = s.fk - a;
            s.depth = grid.nk == 1 ? grid.z[0]
                                   : grid.z[a] + t * (grid.z[a + 1] - grid.z[a]);
        }
        if (!same_product) s.product = "N/A";
        if (!same_instrument) s.instrument = "N/A";
        if (!same_batch) s.batch = -1;
        s.n_merged = static_cast<int>(members.size());
        if (consider_subgrid) {
            double mean = 0;
            for (int idx : members) mean += obs[idx].value;
            mean /= static_cast<double>(members.size());
            double ss = 0;
            for (int idx : members) {
                double d = obs[idx].value - mean;
                ss += d * d;
            }
            double sd = std::sqrt(ss / (static_cast<double>(members.size()) - 1));
            s.std = std::max(s.std, sd);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bad batches: observations whose (type, batch) were flagged in a previous
// run get status BAD.
// ---------------------------------------------------------------------------

struct BadBatchEntry {
    std::string type;
    int batch = 0;
    double bias = 0;
    double mad = 0;
    int n = 0;
};

using BadBatchReport = std::vector<BadBatchEntry>;

inline void mark_bad_batches(ObsTable& obs, const BadBatchReport& report) {
    for (auto& o : obs)
        for (const auto& b : report)
            if (o.type == b.type && o.batch == b.batch) o.status = ObsStatus::BAD;
}

}  // namespace ekc
