#pragma once

#include <glob.h>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ekc/analysis.hpp"
#include "ekc/core.hpp"
#include "ekc/diag.hpp"
#include "ekc/grid.hpp"
#include "ekc/io.hpp"
#include "ekc/locality.hpp"
#include "ekc/obsprep.hpp"
#include "ekc/prm.hpp"
#include "ekc/update.hpp"

namespace ekc {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline std::vector<std::string> glob_files(const std::vector<std::string>& patterns) {
    std::vector<std::string> out;
    for (const auto& pat : patterns) {
        glob_t g;
        int rc = ::glob(pat.c_str(), 0, nullptr, &g);
        if (rc == 0)
            for (size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
        ::globfree(&g);
    }
    return out;
}

// Taper specs per observation type: common LOCRAD/WEIGHT with per-type
// overrides.
struct TaperMap {
    TaperSpec common;
    std::map<std::string, TaperSpec> per_type;

    const TaperSpec& for_type(const std::string& type) const {
        auto it = per_type.find(type);
        return it == per_type.end() ? common : it->second;
    }
};

inline TaperMap make_taper_map(const DaConfig& cfg) {
    TaperMap tm;
    tm.common = TaperSpec(cfg.locrad, cfg.locweight);
    for (const auto& t : cfg.obstypes)
        if (!t.locrad.empty()) tm.per_type.emplace(t.name, TaperSpec(t.locrad, t.locweight));
    return tm;
}

// Number of members present in a directory for a given variable.
inline int detect_ensemble_size(const std::string& dir, const std::string& var) {
    int m = 0;
    while (std::filesystem::exists(member_path(dir, m + 1, var))) ++m;
    if (m < 1) throw error("no ensemble member files for \"" + var + "\" in " + dir);
    return m;
}

namespace run {

// A field read as flat floats together with its surface/volume layout.
struct LoadedField {
    std::vector<float> data;
    bool issurface = true;
};

inline LoadedField load_field(const std::string& path, const Grid& grid) {
    ArrayFile a = read_array(path);
    LoadedField f;
    if (a.dims.size() == 2 && a.dims[0] == grid.nj && a.dims[1] == grid.ni) {
        f.issurface = true;
    } else if (a.dims.size() == 3 && a.dims[0] == grid.nk && a.dims[1] == grid.nj &&
               a.dims[2] == grid.ni) {
        f.issurface = false;
    } else {
        throw error(path + ": field dims do not match grid");
    }
    f.data = std::move(a.data);
    return f;
}

inline double apply_h(const Grid& grid, const LoadedField& f, const Observation& o) {
    return f.issurface ? h_surface(grid, f.data, o.fi, o.fj)
                       : h_volume(grid, f.data, o.fi, o.fj, o.fk);
}

}  // namespace run

// ---------------------------------------------------------------------------
// prep: read raw observation files, normalise, screen, superob, write the
// observations tables.
// ---------------------------------------------------------------------------

struct PrepOptions {
    std::string out_dir = ".";
    bool consider_subgrid = false;
    bool log_all_obs = false;
    bool no_superob = false;
    int describe_superob = -1;  // superobservation id to describe, -1 = off
};

inline ObsTable prep_run(const DaConfig& cfg, const PrepOptions& opt,
                         std::ostream& log = std::cout) {
    Grid grid = load_grid(cfg.grid);
    std::filesystem::create_directories(opt.out_dir);
    ObsTable all;

    for (const auto& section : cfg.obsdata) {
        if (section.reader != "csv")
            throw error("unknown reader \"" + section.reader + "\" for product " +
                        section.product);
        const ObsTypeSpec* type = cfg.find_type(section.type);
        if (!type) throw error("unknown obs type \"" + section.type + "\"");
        auto files = glob_files(section.files);
        if (files.empty()) {
            log << "  " << section.product << ": no files found (patterns:";
            for (const auto& p : section.files) log << " " << p;
            log << ")\n";
            continue;
        }
        ObsTable raw;
        for (const auto& file : files) {
            if (!std::filesystem::exists(file)) {
                log << "  " << section.product << ": missing file " << file << "\n";
                continue;
            }
            ObsTable part = read_obs(file);
            log << "  " << section.product << ": " << file << ": " << part.size()
                << " obs\n";
            raw.insert(raw.end(), part.begin(), part.end());
        }
        for (auto& o : raw) {
            o.type = section.type;
            o.product = section.product;
        }
        screen_obs(raw, grid, *type);
        std::map<std::string, run::LoadedField> cache;
        apply_error_std(raw, section.error_std,
                        [&](const ErrorStdEntry& e, const Observation& o) {
                            std::string path = e.file;
                            if (std::filesystem::is_directory(path))
                                path = (std::filesystem::path(path) /
                                        (e.varname + ".ekc")).string();
                            auto it = cache.find(path);
                            if (it == cache.end())
                                it = cache.emplace(path, run::load_field(path, grid)).first;
                            return run::apply_h(grid, it->second, o);
                        });
        if (type->offset) {
            std::string path = type->offset->first;
            if (std::filesystem::is_directory(path))
                path = (std::filesystem::path(path) / (type->offset->second + ".ekc"))
                           .string();
            run::LoadedField off = run::load_field(path, grid);
            if (off.issurface != type->issurface)
                throw error("offset field dims mismatch for type " + type->name);
            apply_offset(raw, grid, off.data, type->issurface);
        }
        assign_slots(raw, *type, cfg.date);
        all.insert(all.end(), raw.begin(), raw.end());
    }

    for (size_t i = 0; i < all.size(); ++i) all[i].id = static_cast<int>(i);

    std::string bb = (std::filesystem::path(opt.out_dir) / "badbatches.out").string();
    if (std::filesystem::exists(bb)) {
        BadBatchReport report = read_badbatches(bb);
        mark_bad_batches(all, report);
        log << "  applied " << report.size() << " bad-batch entries from " << bb << "\n";
    }

    ObsTable orig;
    for (const auto& o : all)
        if (opt.log_all_obs || o.status != ObsStatus::OUTSIDE) orig.push_back(o);
    write_obs((std::filesystem::path(opt.out_dir) / "observations-orig.csv").string(),
              orig);

    ObsTable superobed =
        opt.no_superob ? all : superob(all, grid, cfg.sobstride, opt.consider_subgrid);
    ObsTable good;
    for (const auto& o : superobed)
        if (o.status == ObsStatus::GOOD) good.push_back(o);
    for (size_t i = 0; i < good.size(); ++i) good[i].id = static_cast<int>(i);
    write_obs((std::filesystem::path(opt.out_dir) / "observations.csv").string(), good);

    std::map<std::string, std::pair<int, int>> per_type;  // raw good, super
    for (const auto& o : all)
        if (o.status == ObsStatus::GOOD) per_type[o.type].first++;
    for (const auto& o : good) per_type[o.type].second += 1;
    for (const auto& [t, c] : per_type)
        log << "  " << t << ": " << c.first << " good obs -> " << c.second
            << " superobs\n";

    if (opt.describe_superob >= 0) {
        if (opt.describe_superob >= static_cast<int>(good.size()))
            throw error("no superobservation with id " +
                        std::to_string(opt.describe_superob));
        const auto& s = good[opt.describe_superob];
        log << "superobservation " << s.id << ": type " << s.type << ", value "
            << s.value << ", std " << s.std << ", n_merged " << s.n_merged << "\n";
        log << "  merged ids:";
        if (s.merged_ids.empty()) log << " " << s.id << " (unmerged)";
        for (int id : s.merged_ids) log << " " << id;
        log << "\n";
    }
    return good;
}

// ---------------------------------------------------------------------------
// calc: ensemble observations, per-node transforms, statistics, diagnostics
// and point logs.
// ---------------------------------------------------------------------------

struct SingleObs {
    bool ijk = false;  // coordinates given as grid indices instead of lon/lat
    double a = 0, b = 0, c = 0;  // lon/lat/depth or fi/fj/fk
    std::string type;
    double innovation = 0;
    double std = 0;
};

struct CalcOptions {
    std::string out_dir = ".";
    bool forecast_stats_only = false;
    bool ignore_no_obs = false;
    bool no_mean_update = false;
    bool point_logs_only = false;
    bool print_batch_stats = false;
    bool use_rmsd = false;
    std::string use_these_obs;  // override the observations file
    std::optional<SingleObs> single_obs;
};

struct CalcResult {
    ObsTable obs;
    ObsQuantities q;
    TransformField field;
    Mat HE_a;
    std::vector<StatRow> stats;
    int m = 0;
};

namespace run {

// Resolve the ensemble/background files for one variable and slot, with the
// asynchronous fallback to the slot-0 and then the slot-less file. Returns
// the loaded member fields and the log glyph: 'a' for asynchronous use of the
// requested slot, 's' for a synchronous fallback.
struct SlotFields {
    std::vector<LoadedField> members;
    char glyph = 'a';
};

inline std::optional<std::vector<LoadedField>> try_load_members(
    const std::string& dir, int m, const std::string& var, std::optional<int> slot,
    const Grid& grid) {
    for (int e = 1; e <= m; ++e)
        if (!std::filesystem::exists(member_path(dir, e, var, slot))) return std::nullopt;
    std::vector<LoadedField> out(m);
    parallel_for(m, [&](std::int64_t e) {
        out[e] = load_field(member_path(dir, static_cast<int>(e) + 1, var, slot), grid);
    });
    return out;
}

inline SlotFields load_slot_members(const std::string& dir, int m, const std::string& var,
                                    bool async, int slot, const Grid& grid) {
    SlotFields sf;
    if (async) {
        if (auto f = try_load_members(dir, m, var, slot, grid)) {
            sf.members = std::move(*f);
            sf.glyph = 'a';
            return sf;
        }
        if (slot != 0)
            if (auto f = try_load_members(dir, m, var, 0, grid)) {
                sf.members = std::move(*f);
                sf.glyph = 's';
                return sf;
            }
    }
    if (auto f = try_load_members(dir, m, var, std::nullopt, grid)) {
        sf.members = std::move(*f);
        sf.glyph = async ? 's' : 'a';
        return sf;
    }
    throw error("no member files for \"" + var + "\" in " + dir);
}

inline std::optional<LoadedField> try_load_bg(const std::string& dir,
                                              const std::string& var,
                                              std::optional<int> slot, const Grid& grid) {
    std::string path = bg_path(dir, var, slot);
    if (!std::filesystem::exists(path)) return std::nullopt;
    return load_field(path, grid);
}

}  // namespace run

inline CalcResult calc_run(const DaConfig& cfg, const CalcOptions& opt,
                           std::ostream& log = std::cout) {
    Grid grid = load_grid(cfg.grid);
    std::filesystem::create_directories(opt.out_dir);
    bool enkf = cfg.mode == DaMode::ENKF;
    TaperMap tapers = make_taper_map(cfg);

    CalcResult res;

    if (opt.single_obs) {
        Observation o;
        const SingleObs& so = *opt.single_obs;
        o.type = so.type;
        o.std = so.std;
        o.value = so.innovation;  // interpreted as the innovation directly
        if (so.ijk) {
            o.fi = so.a;
            o.fj = so.b;
            o.fk = so.c;
            auto [lon, lat] = fij_to_xy(grid, o.fi, o.fj);
            o.lon = lon;
            o.lat = lat;
        } else {
            o.lon = so.a;
            o.lat = so.b;
            o.depth = so.c;
            auto fij = xy_to_fij(grid, o.lon, o.lat);
            if (!fij) throw error("single observation outside grid");
            o.fi = fij->first;
            o.fj = fij->second;
            o.fk = z_to_fk(grid, o.depth);
        }
        o.id = 0;
        o.time = cfg.date;
        res.obs.push_back(std::move(o));
    } else {
        std::string path = opt.use_these_obs.empty()
                               ? (std::filesystem::path(opt.out_dir) /
                                  "observations.csv").string()
                               : opt.use_these_obs;
        res.obs = read_obs(path);
        for (const auto& type : cfg.obstypes) assign_slots(res.obs, type, cfg.date);
    }
    if (res.obs.empty() && !opt.ignore_no_obs)
        throw error("no observations (use --ignore-no-obs to proceed)");

    // ensemble size
    std::string var0 = cfg.model.vars.empty() ? "" : cfg.model.vars[0].name;
    bool stats_without_ens = !enkf && opt.forecast_stats_only;
    res.m = stats_without_ens ? 2 : detect_ensemble_size(cfg.ensdir, var0);
    int m = res.m;

    // ensemble observations, per (type, slot)
    Eigen::Index p = static_cast<Eigen::Index>(res.obs.size());
    res.q.HE = Mat::Zero(p, m);
    res.q.Hx = Vec::Zero(p);
    res.q.innovation = Vec::Zero(p);
    res.q.sigma_eff = Vec::Zero(p);

    std::map<std::pair<std::string, int>, std::vector<int>> groups;
    for (Eigen::Index o = 0; o < p; ++o)
        if (res.obs[o].status == ObsStatus::GOOD)
            groups[{res.obs[o].type, res.obs[o].slot}].push_back(static_cast<int>(o));

    std::map<std::string, std::map<int, char>> glyphs;
    for (auto& [key, idx] : groups) {
        const ObsTypeSpec* type = cfg.find_type(key.first);
        if (!type) throw error("unknown obs type \"" + key.first + "\"");
        bool async = type->async.has_value();

        std::vector<run::LoadedField> members;
        char glyph = 'a';
        run::LoadedField bg;
        bool have_bg = false;
        if (!stats_without_ens) {
            run::SlotFields sf = run::load_slot_members(cfg.ensdir, m, type->var, async,
                                                        key.second, grid);
            members = std::move(sf.members);
            glyph = sf.glyph;
        }
        if (!enkf) {
            // FGAT: prefer the background at the observation slot
            std::optional<run::LoadedField> b;
            if (async) {
                b = run::try_load_bg(cfg.bgdir, type->var, key.second, grid);
                if (b) glyph = 'a';
            }
            if (!b) {
                b = run::try_load_bg(cfg.bgdir, type->var, std::nullopt, grid);
                if (async) glyph = 's';
            }
            if (!b) throw error("no background file for \"" + type->var + "\"");
            bg = std::move(*b);
            have_bg = true;
        }
        glyphs[key.first][key.second] = glyph;

        for (int o : idx) {
            Observation& ob = res.obs[o];
            try {
                if (enkf) {
                    for (int e = 0; e < m; ++e)
                        res.q.HE(o, e) = run::apply_h(grid, members[e], ob);
                    res.q.Hx[o] = res.q.HE.row(o).mean();
                } else {
                    double hx = run::apply_h(grid, bg, ob);
                    res.q.Hx[o] = hx;
                    if (stats_without_ens) {
                        res.q.HE.row(o).setConstant(hx);
                    } else {
                        double emean = 0;
                        for (int e = 0; e < m; ++e)
                            res.q.HE(o, e) = run::apply_h(grid, members[e], ob);
                        emean = res.q.HE.row(o).mean();
                        res.q.HE.row(o) = res.q.HE.row(o).array() - emean + hx;
                    }
                }
            } catch (const std::exception&) {
                ob.status = ObsStatus::BAD;  // H undefined (land)
                continue;
            }
            res.q.innovation[o] =
                opt.single_obs ? ob.value : ob.value - res.q.Hx[o];
        }
        (void)have_bg;
    }

    // effective observation error: R-factors then adaptive moderation
    for (Eigen::Index o = 0; o < p; ++o) {
        const Observation& ob = res.obs[o];
        if (ob.status != ObsStatus::GOOD) continue;
        const ObsTypeSpec* type = cfg.find_type(ob.type);
        double var = ob.std * ob.std * cfg.rfactor * (type ? type->rfactor : 1.0);
        if (std::isfinite(cfg.kfactor) && m > 1) {
            double mean = res.q.HE.row(o).mean();
            double sf2 = (res.q.HE.row(o).array() - mean).square().sum() /
                         (static_cast<double>(m) - 1);
            var = moderate_obs_error(var, sf2, res.q.innovation[o], cfg.kfactor);
        }
        res.q.sigma_eff[o] = std::sqrt(var);
    }

    // asynchronous slot usage, rendered per type
    for (const auto& [type, slots] : glyphs) {
        const ObsTypeSpec* t = cfg.find_type(type);
        if (!t || !t->async) continue;
        int lo = slots.begin()->first, hi = slots.rbegin()->first;
        std::string line;
        for (int s = lo; s <= hi; ++s) {
            auto it = slots.find(s);
            line += it == slots.end() ? '.' : it->second;
        }
        log << "  " << type << " slots " << lo << ".." << hi << ": |" << line << "|\n";
    }

    if (opt.print_batch_stats || !cfg.badbatches.empty()) {
        std::map<std::pair<std::string, int>, std::vector<int>> batches;
        for (Eigen::Index o = 0; o < p; ++o)
            if (res.obs[o].status == ObsStatus::GOOD)
                batches[{res.obs[o].type, res.obs[o].batch}].push_back(
                    static_cast<int>(o));
        if (opt.print_batch_stats)
            for (const auto& [key, idx] : batches) {
                double bias = 0, mad = 0;
                for (int o : idx) {
                    double inn = res.q.innovation[o];
                    bias += inn;
                    mad += std::abs(inn);
                }
                bias /= static_cast<double>(idx.size());
                mad /= static_cast<double>(idx.size());
                log << "  batch " << key.first << "/" << key.second << ": n="
                    << idx.size() << " bias=" << bias << " mad=" << mad << "\n";
            }
        if (!cfg.badbatches.empty()) {
            BadBatchReport report = detect_bad_batches(res.obs, res.q.HE, cfg.badbatches);
            write_badbatches(
                (std::filesystem::path(opt.out_dir) / "badbatches.out").string(), report);
            log << "  " << report.size() << " bad batches detected\n";
        }
    }

    auto taper_fn = [&tapers](const std::string& t) -> const TaperSpec& {
        return tapers.for_type(t);
    };

    BuildOptions bo;
    bo.enkf = enkf;
    bo.scheme = cfg.scheme;
    bo.alpha = cfg.alpha;
    bo.stride = cfg.stride;
    bo.per_type_impact = true;
    bo.mean_update = !opt.no_mean_update;

    if (!opt.forecast_stats_only) {
        res.field = build_transform_field(grid, res.obs, res.q, taper_fn, bo);
        if (!opt.point_logs_only) {
            save_transform_field(
                (std::filesystem::path(opt.out_dir) /
                 (enkf ? "transforms.ekc" : "weights.ekc")).string(),
                res.field);
            write_dfs_srf(opt.out_dir, res.field);
        }
        res.HE_a = analysed_obs(res.obs, res.q.HE, res.field);
    } else {
        res.HE_a = res.q.HE;
    }

    res.stats = innovation_stats(res.obs, res.q.HE, res.HE_a, cfg.regions, cfg.zstatints,
                                 cfg.obstypes,
                                 opt.use_rmsd ? StatMetric::RMSD : StatMetric::MAD);
    log << format_stats(res.stats);
    if (!opt.point_logs_only)
        write_stats_csv((std::filesystem::path(opt.out_dir) / "stats.csv").string(),
                        res.stats);

    if (!opt.forecast_stats_only) {
        for (const auto& [pi, pj] : cfg.pointlogs) {
            PointLogRecord r = build_pointlog(pi, pj, grid, res.obs, res.q, taper_fn,
                                              res.field, cfg);
            // forecast member values per variable at this location
            for (const auto& mv : cfg.model.vars) {
                if (stats_without_ens) break;
                run::SlotFields sf =
                    run::load_slot_members(cfg.ensdir, m, mv.name, false, 0, grid);
                int nlev = sf.members[0].issurface
                               ? 1
                               : std::max(1, grid.levels_at(pj, pi));
                PointLogVariable v;
                v.forecast.resize(nlev, m);
                for (int e = 0; e < m; ++e)
                    for (int k = 0; k < nlev; ++k)
                        v.forecast(k, e) =
                            sf.members[e].data[update::cell_index(
                                grid, sf.members[e].issurface ? 0 : k, pj, pi)];
                Inflation inf = mv.inflation ? *mv.inflation : cfg.inflation;
                v.inflation_mult = inf.mult;
                v.inflation_cap = inf.cap;
                v.inflation_plain = inf.plain;
                r.variables[mv.name] = std::move(v);
            }
            write_pointlog(pointlog_path(opt.out_dir, pi, pj), r);
            log << "  point log written for (" << pi << "," << pj << ")\n";
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// update: apply the persisted transforms to the state fields, inflate,
// randomise and write the analyses.
// ---------------------------------------------------------------------------

struct UpdateOptions {
    std::string out_dir = ".";
    bool output_increment = false;
    bool calculate_spread = false;
    bool no_fields_write = false;
    bool joint_output = false;
    bool write_inflation = false;
    bool direct_write = false;  // accepted and ignored
    bool leave_tiles = false;   // accepted and ignored
};

inline void update_run(const DaConfig& cfg, const UpdateOptions& opt,
                       std::ostream& log = std::cout) {
    Grid grid = load_grid(cfg.grid);
    bool enkf = cfg.mode == DaMode::ENKF;
    if (opt.direct_write || opt.leave_tiles)
        log << "  tile-control flags accepted and ignored\n";

    std::string var0 = cfg.model.vars.empty() ? "" : cfg.model.vars[0].name;
    int m = detect_ensemble_size(cfg.ensdir, var0);
    TransformField field = load_transform_field(
        (std::filesystem::path(opt.out_dir) / (enkf ? "transforms.ekc" : "weights.ekc"))
            .string(),
        grid.ni, grid.nj, cfg.stride, enkf);
    if (field.m != m) throw error("transform ensemble size does not match member files");

    auto spread_of = [&](const std::vector<std::vector<float>>& members) {
        std::vector<float> s(members[0].size());
        for (size_t e = 0; e < s.size(); ++e) {
            double mean = 0;
            for (const auto& f : members) mean += f[e];
            mean /= static_cast<double>(members.size());
            double var = 0;
            for (const auto& f : members) {
                double d = f[e] - mean;
                var += d * d;
            }
            s[e] = static_cast<float>(
                std::sqrt(var / (static_cast<double>(members.size()) - 1)));
        }
        return s;
    };

    for (const auto& mv : cfg.model.vars) {
        std::string sample = enkf ? member_path(cfg.ensdir, 1, mv.name)
                                  : bg_path(cfg.bgdir, mv.name);
        ArrayFile head = read_array(sample);
        bool issurface = head.dims.size() == 2;
        std::vector<int> dims = head.dims;

        if (enkf) {
            std::vector<std::vector<float>> members(m);
            parallel_for(m, [&](std::int64_t e) {
                members[e] = read_array(member_path(cfg.ensdir, static_cast<int>(e) + 1,
                                                    mv.name))
                                 .data;
            });
            std::vector<std::vector<float>> forecast = members;
            update_field_enkf(members, grid, field, issurface);

            Inflation inf = mv.inflation ? *mv.inflation : cfg.inflation;
            std::vector<float> applied;
            inflate(forecast, members, inf, opt.write_inflation ? &applied : nullptr);
            if (mv.randomise)
                randomise(members, mv.randomise->lambda, mv.randomise->sigma0,
                          static_cast<std::uint64_t>(cfg.date * 86400.0));

            if (!opt.no_fields_write) {
                parallel_for(m, [&](std::int64_t e) {
                    std::string base =
                        member_path(cfg.ensdir, static_cast<int>(e) + 1, mv.name);
                    std::string out =
                        opt.joint_output
                            ? member_path(cfg.ensdir, static_cast<int>(e) + 1,
                                          mv.name + "_an")
                            : base + ".analysis";
                    write_array(out, dims, members[e]);
                    if (opt.output_increment) {
                        std::vector<float> inc(members[e].size());
                        for (size_t x = 0; x < inc.size(); ++x)
                            inc[x] = members[e][x] - forecast[e][x];
                        write_array(base + ".increment", dims, inc);
                    }
                });
            }
            if (opt.calculate_spread) {
                write_array((std::filesystem::path(opt.out_dir) /
                             ("spread_" + mv.name + ".ekc")).string(),
                            dims, spread_of(forecast));
                write_array((std::filesystem::path(opt.out_dir) /
                             ("spread_" + mv.name + "_an.ekc")).string(),
                            dims, spread_of(members));
            }
            if (opt.write_inflation)
                write_array((std::filesystem::path(opt.out_dir) /
                             ("inflation_" + mv.name + ".ekc")).string(),
                            dims, applied);

            // append analysed columns to any point logs at this stage
            for (const auto& [pi, pj] : cfg.pointlogs) {
                std::string plpath = pointlog_path(opt.out_dir, pi, pj);
                if (!std::filesystem::exists(plpath)) continue;
                PointLogRecord r = read_pointlog(plpath);
                auto it = r.variables.find(mv.name);
                if (it == r.variables.end()) continue;
                int nlev = static_cast<int>(it->second.forecast.rows());
                it->second.analysis.resize(nlev, m);
                for (int e = 0; e < m; ++e)
                    for (int k = 0; k < nlev; ++k)
                        it->second.analysis(k, e) = members[e][update::cell_index(
                            grid, issurface ? 0 : k, pj, pi)];
                write_pointlog(plpath, r);
            }
        } else {
            std::vector<float> bg = read_array(bg_path(cfg.bgdir, mv.name)).data;
            std::vector<float> forecast = bg;
            std::vector<std::vector<float>> members(m);
            parallel_for(m, [&](std::int64_t e) {
                members[e] = read_array(member_path(cfg.ensdir, static_cast<int>(e) + 1,
                                                    mv.name))
                                 .data;
            });
            update_field_enoi(bg, members, grid, field, issurface);
            if (!opt.no_fields_write) {
                std::string base = bg_path(cfg.bgdir, mv.name);
                std::string out = opt.joint_output
                                      ? bg_path(cfg.bgdir, mv.name + "_an")
                                      : base + ".analysis";
                write_array(out, dims, bg);
                if (opt.output_increment) {
                    std::vector<float> inc(bg.size());
                    for (size_t x = 0; x < inc.size(); ++x)
                        inc[x] = bg[x] - forecast[x];
                    write_array(base + ".increment", dims, inc);
                }
            }
        }
        log << "  updated " << mv.name << "\n";
    }
}

}  // namespace ekc
