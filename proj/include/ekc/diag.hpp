#pragma once

#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ekc/analysis.hpp"
#include "ekc/core.hpp"
#include "ekc/io.hpp"
#include "ekc/locality.hpp"
#include "ekc/obs.hpp"
#include "ekc/obsprep.hpp"
#include "ekc/prm.hpp"

namespace ekc {

// ---------------------------------------------------------------------------
// Analysed ensemble observations: apply the locally interpolated transforms
// to the forecast ensemble observations.
//   EnKF: H(E^a)_o = H(E^f)_o X5(o)
//   EnOI: H(E^a)_o = (Hx_o + HA_o w(o)) 1^T + HA_o
// ---------------------------------------------------------------------------

inline Mat analysed_obs(const ObsTable& obs, const Mat& HE_f, const TransformField& field) {
    Eigen::Index p = HE_f.rows(), m = HE_f.cols();
    if (static_cast<size_t>(p) != obs.size()) throw error("analysed_obs: shape mismatch");
    Mat HE_a(p, m);
    for (Eigen::Index o = 0; o < p; ++o) {
        LocalTransform t = interp_transform(field, obs[o].fi, obs[o].fj);
        if (field.enkf) {
            HE_a.row(o) = HE_f.row(o) * t.X5;
        } else {
            double hx = HE_f.row(o).mean();
            Eigen::RowVectorXd ha = HE_f.row(o).array() - hx;
            double mean_a = hx + ha * t.w;
            HE_a.row(o) = ha.array() + mean_a;
        }
    }
    return HE_a;
}

// ---------------------------------------------------------------------------
// Innovation statistics
// ---------------------------------------------------------------------------

enum class StatMetric { MAD, RMSD };

struct StatRow {
    std::string region;
    std::string type;
    std::string group;  // "", "slot <k>", "inst <name>", "<z1>-<z2>m"
    int n_obs = 0;
    double bias_f = 0, bias_a = 0;
    double mad_f = 0, mad_a = 0;
    double spread_f = 0, spread_a = 0;
};

namespace diag {

inline StatRow accumulate(const std::vector<int>& idx, const Vec& inn_f, const Vec& inn_a,
                          const Vec& spr_f, const Vec& spr_a, StatMetric metric) {
    StatRow r;
    r.n_obs = static_cast<int>(idx.size());
    if (idx.empty()) return r;
    for (int o : idx) {
        r.bias_f += inn_f[o];
        r.bias_a += inn_a[o];
        if (metric == StatMetric::MAD) {
            r.mad_f += std::abs(inn_f[o]);
            r.mad_a += std::abs(inn_a[o]);
        } else {
            r.mad_f += inn_f[o] * inn_f[o];
            r.mad_a += inn_a[o] * inn_a[o];
        }
        r.spread_f += spr_f[o];
        r.spread_a += spr_a[o];
    }
    double n = static_cast<double>(idx.size());
    r.bias_f /= n;
    r.bias_a /= n;
    r.mad_f /= n;
    r.mad_a /= n;
    if (metric == StatMetric::RMSD) {
        r.mad_f = std::sqrt(r.mad_f);
        r.mad_a = std::sqrt(r.mad_a);
    }
    r.spread_f /= n;
    r.spread_a /= n;
    return r;
}

}  // namespace diag

// Rows are grouped per region, then per type: a summary row, then per-slot
// rows for asynchronous types, per-instrument rows, and per-depth-interval
// rows for volume types. Only GOOD observations enter the statistics.
inline std::vector<StatRow> innovation_stats(const ObsTable& obs, const Mat& HE_f,
                                             const Mat& HE_a,
                                             const std::vector<Region>& regions,
                                             const std::vector<std::pair<double, double>>& zints,
                                             const std::vector<ObsTypeSpec>& types,
                                             StatMetric metric = StatMetric::MAD) {
    Eigen::Index p = HE_f.rows();
    if (static_cast<size_t>(p) != obs.size() || HE_a.rows() != p)
        throw error("innovation_stats: shape mismatch");
    Vec inn_f(p), inn_a(p), spr_f(p), spr_a(p);
    for (Eigen::Index o = 0; o < p; ++o) {
        inn_f[o] = obs[o].value - HE_f.row(o).mean();
        inn_a[o] = obs[o].value - HE_a.row(o).mean();
        double m1 = static_cast<double>(HE_f.cols()) - 1;
        spr_f[o] = std::sqrt((HE_f.row(o).array() - HE_f.row(o).mean()).square().sum() / m1);
        spr_a[o] = std::sqrt((HE_a.row(o).array() - HE_a.row(o).mean()).square().sum() / m1);
    }

    std::vector<StatRow> rows;
    for (const auto& reg : regions) {
        for (const auto& type : types) {
            std::vector<int> sel;
            for (Eigen::Index o = 0; o < p; ++o) {
                const auto& ob = obs[o];
                if (ob.status != ObsStatus::GOOD || ob.type != type.name) continue;
                if (ob.lon < reg.lon1 || ob.lon > reg.lon2 || ob.lat < reg.lat1 ||
                    ob.lat > reg.lat2)
                    continue;
                sel.push_back(static_cast<int>(o));
            }
            auto emit = [&](const std::vector<int>& idx, const std::string& group) {
                StatRow r = diag::accumulate(idx, inn_f, inn_a, spr_f, spr_a, metric);
                r.region = reg.name;
                r.type = type.name;
                r.group = group;
                rows.push_back(std::move(r));
            };
            emit(sel, "");
            if (sel.empty()) continue;
            if (type.async) {
                std::map<int, std::vector<int>> by_slot;
                for (int o : sel) by_slot[obs[o].slot].push_back(o);
                for (const auto& [slot, idx] : by_slot)
                    emit(idx, "slot " + std::to_string(slot));
            }
            std::map<std::string, std::vector<int>> by_inst;
            for (int o : sel) by_inst[obs[o].instrument].push_back(o);
            if (by_inst.size() > 1)
                for (const auto& [inst, idx] : by_inst) emit(idx, "inst " + inst);
            if (!type.issurface) {
                const auto& zi = reg.zints.empty() ? zints : reg.zints;
                for (const auto& [z1, z2] : zi) {
                    std::vector<int> idx;
                    for (int o : sel)
                        if (obs[o].depth >= z1 && obs[o].depth < z2) idx.push_back(o);
                    std::ostringstream lab;
                    lab << z1 << "-";
                    if (std::isinf(z2)) lab << "inf";
                    else lab << z2;
                    lab << "m";
                    emit(idx, lab.str());
                }
            }
        }
    }
    return rows;
}

// Console rendering in the familiar tabular layout.
inline std::string format_stats(const std::vector<StatRow>& rows) {
    std::ostringstream o;
    std::string region;
    for (const auto& r : rows) {
        if (r.region != region) {
            region = r.region;
            o << "  region \"" << region << "\":\n";
            o << "    type    group        nobs    bias.f    bias.a     mad.f     mad.a"
                 "  spread.f  spread.a\n";
        }
        o << "    " << std::left << std::setw(8) << r.type << std::setw(12)
          << (r.group.empty() ? "-" : r.group) << std::right << std::setw(8) << r.n_obs;
        o << std::fixed << std::setprecision(4);
        o << std::setw(10) << r.bias_f << std::setw(10) << r.bias_a << std::setw(10)
          << r.mad_f << std::setw(10) << r.mad_a << std::setw(10) << r.spread_f
          << std::setw(10) << r.spread_a << "\n";
        o.unsetf(std::ios::fixed);
    }
    return o.str();
}

inline void write_stats_csv(const std::string& path, const std::vector<StatRow>& rows) {
    std::ofstream f(path);
    if (!f) throw error("cannot write \"" + path + "\"");
    f << "region,type,group,n_obs,bias_f,bias_a,mad_f,mad_a,spread_f,spread_a\n";
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    for (const auto& r : rows)
        f << "\"" << r.region << "\",\"" << r.type << "\",\"" << r.group << "\","
          << r.n_obs << "," << num(r.bias_f) << "," << num(r.bias_a) << ","
          << num(r.mad_f) << "," << num(r.mad_a) << "," << num(r.spread_f) << ","
          << num(r.spread_a) << "\n";
}

// ---------------------------------------------------------------------------
// Bad-batch detection from forecast innovations
// ---------------------------------------------------------------------------

inline BadBatchReport detect_bad_batches(const ObsTable& obs, const Mat& HE_f,
                                         const std::vector<BadBatchSpec>& specs) {
    if (static_cast<size_t>(HE_f.rows()) != obs.size())
        throw error("detect_bad_batches: shape mismatch");
    BadBatchReport report;
    for (const auto& spec : specs) {
        std::map<int, std::vector<int>> by_batch;
        for (size_t o = 0; o < obs.size(); ++o)
            if (obs[o].status == ObsStatus::GOOD && obs[o].type == spec.type)
                by_batch[obs[o].batch].push_back(static_cast<int>(o));
        for (const auto& [batch, idx] : by_batch) {
            if (static_cast<int>(idx.size()) <= spec.min_nobs) continue;
            double bias = 0, mad = 0;
            for (int o : idx) {
                double inn = obs[o].value - HE_f.row(o).mean();
                bias += inn;
                mad += std::abs(inn);
            }
            bias /= static_cast<double>(idx.size());
            mad /= static_cast<double>(idx.size());
            if (std::abs(bias) > spec.max_bias || mad > spec.max_mad)
                report.push_back(BadBatchEntry{spec.type, batch, bias, mad,
                                               static_cast<int>(idx.size())});
        }
    }
    return report;
}

inline void write_badbatches(const std::string& path, const BadBatchReport& report) {
    std::ofstream f(path);
    if (!f) throw error("cannot write \"" + path + "\"");
    char buf[64];
    for (const auto& b : report) {
        std::snprintf(buf, sizeof buf, "%s %d %.9g %.9g %d", b.type.c_str(), b.batch,
                      b.bias, b.mad, b.n);
        f << buf << "\n";
    }
}

inline BadBatchReport read_badbatches(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw error("cannot open \"" + path + "\"");
    BadBatchReport report;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        BadBatchEntry b;
        if (!(is >> b.type >> b.batch >> b.bias >> b.mad >> b.n))
            throw error(path + ": malformed line \"" + line + "\"");
        report.push_back(std::move(b));
    }
    return report;
}

// ---------------------------------------------------------------------------
// DFS / SRF node fields, total and per observation type
// ---------------------------------------------------------------------------

inline void write_dfs_srf(const std::string& dir, const TransformField& field) {
    int nis = field.ni_s(), njs = field.nj_s();
    size_t n = field.nodes.size();
    std::vector<float> dfs(n), srf(n);
    for (size_t k = 0; k < n; ++k) {
        dfs[k] = static_cast<float>(field.nodes[k].dfs);
        srf[k] = static_cast<float>(field.nodes[k].srf);
    }
    auto p = [&dir](const std::string& name) {
        return (std::filesystem::path(dir) / name).string();
    };
    write_array(p("dfs.ekc"), {njs, nis}, dfs);
    write_array(p("srf.ekc"), {njs, nis}, srf);
    for (size_t ti = 0; ti < field.type_names.size(); ++ti) {
        for (size_t k = 0; k < n; ++k) {
            dfs[k] = static_cast<float>(field.per_type[k][ti].first);
            srf[k] = static_cast<float>(field.per_type[k][ti].second);
        }
        write_array(p("dfs_" + field.type_names[ti] + ".ekc"), {njs, nis}, dfs);
        write_array(p("srf_" + field.type_names[ti] + ".ekc"), {njs, nis}, srf);
    }
}

// ---------------------------------------------------------------------------
// Point logs
// ---------------------------------------------------------------------------

inline PointLogRecord build_pointlog(
    int i, int j, const Grid& grid, const ObsTable& obs, const ObsQuantities& q,
    const std::function<const TaperSpec&(const std::string&)>& taper_for_type,
    const TransformField& field, const DaConfig& cfg) {
    if (i < 0 || i >= grid.ni || j < 0 || j >= grid.nj)
        throw error("pointlog: location outside grid");
    PointLogRecord r;
    r.i = i;
    r.j = j;
    auto [lon, lat] = fij_to_xy(grid, i, j);
    r.lon = lon;
    r.lat = lat;
    r.depth = grid.depth_at(j, i);
    r.date = cfg.date;
    r.enkf = cfg.mode == DaMode::ENKF;

    auto sel = select_local_obs(obs, lon, lat, taper_for_type);
    int m = field.m;
    for (const auto& lo : sel) {
        const auto& ob = obs[lo.index];
        r.obs_ids.push_back(ob.id);
        r.lcoeffs.push_back(lo.f);
        r.obs_lon.push_back(ob.lon);
        r.obs_lat.push_back(ob.lat);
        r.obs_depth.push_back(ob.depth);
        r.obs_val.push_back(ob.value);
        r.obs_std.push_back(ob.std);
        r.obs_fi.push_back(ob.fi);
        r.obs_fj.push_back(ob.fj);
        r.obs_fk.push_back(ob.fk);
        r.obs_type.push_back(ob.type);
        r.obs_time.push_back(ob.time);
    }
    if (sel.empty()) {
        r.s = Vec();
        r.S = Mat(0, m);
        r.w = Vec::Zero(m);
        if (r.enkf) r.X5 = Mat::Identity(m, m);
    } else {
        StdObs so = standardize_selection(q, sel, m);
        r.s = so.s;
        r.S = so.S;
        if (r.enkf) {
            LocalTransform t = compute_transform(so.S, so.s, cfg.scheme, cfg.alpha);
            r.w = t.w;
            r.X5 = t.X5;
        } else {
            r.w = enoi_weights(so.S, so.s);
        }
    }
    LocalTransform used = interp_transform(field, i, j);
    if (r.enkf) r.X5_actual = used.X5;
    else r.X5_actual = used.w;  // stored as an m x 1 matrix for EnOI

    return r;
}

}  // namespace ekc
