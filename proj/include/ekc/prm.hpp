#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ekc/core.hpp"

namespace ekc {

enum class DaMode { ENKF, ENOI };
enum class DaScheme { DENKF, ETKF };

struct Inflation {
    double mult = 1.0;
    double cap = 0.5;
    bool plain = false;
};

struct Region {
    std::string name;
    double lon1 = -999, lon2 = 999, lat1 = -999, lat2 = 999;
    std::vector<std::pair<double, double>> zints;  // optional override
};

struct BadBatchSpec {
    std::string type;
    double max_bias = 0;
    double max_mad = 0;
    int min_nobs = 0;
};

// The model prm names this entry RANDOMISE <deflation> <sigma>; we store the
// pair as (lambda, sigma0) without resolving the naming clash.
struct RandomiseSpec {
    double lambda = 1.0;
    double sigma0 = 0.0;
};

struct ModelVarCfg {
    std::string name;
    std::string grid;
    std::optional<Inflation> inflation;
    std::optional<RandomiseSpec> randomise;
};

struct ModelCfg {
    std::string name;
    std::vector<ModelVarCfg> vars;
};

struct GridCfg {
    std::string name;
    std::string vtype = "z";
    std::string data;
    std::string xdimname, ydimname, zdimname;
    std::string xvarname, yvarname, zvarname;
    std::string depthvarname, numlevelsvarname;
};

struct ObsTypeSpec {
    std::string name;
    std::string var;
    std::optional<std::string> var2;
    bool issurface = true;
    std::optional<std::pair<std::string, std::string>> offset;  // (file, varname)
    std::string hfunction = "standard";
    std::optional<double> async;  // days; absent = synchronous
    std::vector<double> locrad;   // empty = inherit common
    std::vector<double> locweight;
    double rfactor = 1;
    double minvalue = -kInf, maxvalue = kInf;
    double xmin = -kInf, xmax = kInf;
    double ymin = -kInf, ymax = kInf;
    double zmin = -kInf, zmax = kInf;
};

enum class ErrorStdOp { EQUAL, PLUS, MULT, MIN, MAX };

struct ErrorStdEntry {
    bool from_file = false;
    double value = 0;       // when !from_file
    std::string file;       // when from_file
    std::string varname;    // when from_file
    ErrorStdOp op = ErrorStdOp::EQUAL;
};

struct ObsDataSection {
    std::string product;
    std::string reader;
    std::string type;
    std::vector<std::string> files;
    std::vector<ErrorStdEntry> error_std;
    std::vector<std::pair<std::string, std::string>> parameters;
};

struct DaConfig {
    DaMode mode = DaMode::ENKF;
    DaScheme scheme = DaScheme::DENKF;
    double alpha = 1.0;
    std::string model_file, grid_file, obstypes_file, obs_file;
    double date = 0;
    std::string ensdir, bgdir;
    double kfactor = kNaN;  // NaN = moderation disabled
    double rfactor = 1.0;
    std::vector<double> locrad;  // empty = global (no localisation)
    std::vector<double> locweight;
    int stride = 1;
    int sobstride = 1;
    Inflation inflation;
    std::vector<std::pair<double, double>> zstatints;
    std::vector<Region> regions;
    std::vector<std::pair<int, int>> pointlogs;
    std::vector<BadBatchSpec> badbatches;

    ModelCfg model;
    GridCfg grid;
    std::vector<ObsTypeSpec> obstypes;
    std::vector<ObsDataSection> obsdata;

    const ObsTypeSpec* find_type(const std::string& name) const {
        for (const auto& t : obstypes)
            if (t.name == name) return &t;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Lexer: line-oriented, "#" starts a comment, keys case-insensitive, "=" is
// optional and "==" is treated as "=".
// ---------------------------------------------------------------------------

namespace prm {

struct Line {
    int number = 0;
    std::string key;
    std::vector<std::string> values;
};

inline std::vector<Line> lex(const std::string& text, bool strip_brackets = false) {
    std::vector<Line> lines;
    std::istringstream in(text);
    std::string raw;
    int number = 0;
    while (std::getline(in, raw)) {
        ++number;
        if (auto pos = raw.find('#'); pos != std::string::npos) raw.resize(pos);
        if (strip_brackets) {
            std::erase(raw, '[');
            std::erase(raw, ']');
        }
        // split only at the first "=" (or "==") so that values may contain "="
        if (auto pos = raw.find('='); pos != std::string::npos) {
            size_t len = (pos + 1 < raw.size() && raw[pos + 1] == '=') ? 2 : 1;
            raw.replace(pos, len, " ");
        }
        std::istringstream ls(raw);
        Line line;
        line.number = number;
        std::string tok;
        while (ls >> tok) {
            if (line.key.empty()) line.key = uppercase(tok);
            else line.values.push_back(tok);
        }
        if (!line.key.empty()) lines.push_back(std::move(line));
    }
    return lines;
}

inline double to_double(const std::string& s, int lineno) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw error("malformed number \"" + s + "\" at line " + std::to_string(lineno));
    }
}

inline int to_int(const std::string& s, int lineno) {
    try {
        size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw error("malformed integer \"" + s + "\" at line " + std::to_string(lineno));
    }
}

inline bool is_number(const std::string& s) {
    try {
        size_t pos = 0;
        std::stod(s, &pos);
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

inline void need_values(const Line& l, size_t n) {
    if (l.values.size() < n)
        throw error(l.key + " at line " + std::to_string(l.number) +
                    ": expected at least " + std::to_string(n) + " value(s)");
}

inline void normalise_weights(std::vector<double>& radii, std::vector<double>& weights,
                              const std::string& where) {
    if (!weights.empty() && weights.size() != radii.size())
        throw error(where + ": LOCRAD and WEIGHT must have the same length");
    if (radii.empty()) return;
    if (weights.empty()) weights.assign(radii.size(), 1.0);
    double sum = 0;
    for (double w : weights) sum += w;
    if (sum <= 0) throw error(where + ": weights must have a positive sum");
    for (double& w : weights) w /= sum;
}

inline Inflation parse_inflation(const Line& l) {
    need_values(l, 1);
    Inflation inf;
    inf.mult = to_double(l.values[0], l.number);
    if (inf.mult < 1.0) throw error("INFLATION multiple must be >= 1 at line " +
                                    std::to_string(l.number));
    if (l.values.size() == 1) {
        inf.cap = 1.0;  // "INFLATION = 1.06" is equivalent to "INFLATION = 1.06 1"
    } else if (uppercase(l.values[1]) == "PLAIN") {
        inf.plain = true;
    } else {
        inf.cap = to_double(l.values[1], l.number);
        if (inf.cap < 0) throw error("INFLATION cap must be >= 0 at line " +
                                     std::to_string(l.number));
    }
    return inf;
}

}  // namespace prm

// ---------------------------------------------------------------------------
// parse_main
// ---------------------------------------------------------------------------

inline DaConfig parse_main(const std::string& text) {
    DaConfig c;
    std::map<std::string, int> seen;
    bool have_mode = false, have_date = false, have_inflation = false;

    auto once = [&seen](const prm::Line& l) {
        if (seen.count(l.key))
            throw error("duplicate key " + l.key + " at line " + std::to_string(l.number) +
                        " (first at line " + std::to_string(seen[l.key]) + ")");
        seen[l.key] = l.number;
    };

    for (const auto& l : prm::lex(text, /*strip_brackets=*/true)) {
        const std::string& k = l.key;
        if (k == "MODE") {
            once(l);
            prm::need_values(l, 1);
            std::string v = uppercase(l.values[0]);
            if (v == "ENKF") c.mode = DaMode::ENKF;
            else if (v == "ENOI") c.mode = DaMode::ENOI;
            else throw error("unknown MODE \"" + l.values[0] + "\" at line " +
                             std::to_string(l.number));
            have_mode = true;
        } else if (k == "SCHEME") {
            once(l);
            prm::need_values(l, 1);
            std::string v = uppercase(l.values[0]);
            if (v == "DENKF") c.scheme = DaScheme::DENKF;
            else if (v == "ETKF") c.scheme = DaScheme::ETKF;
            else throw error("unknown SCHEME \"" + l.values[0] + "\" at line " +
                             std::to_string(l.number));
        } else if (k == "ALPHA") {
            once(l);
            prm::need_values(l, 1);
            c.alpha = prm::to_double(l.values[0], l.number);
            if (c.alpha < 0 || c.alpha > 1)
                throw error("ALPHA must be in [0,1] at line " + std::to_string(l.number));
        } else if (k == "MODEL") {
            once(l); prm::need_values(l, 1); c.model_file = l.values[0];
        } else if (k == "GRID") {
            once(l); prm::need_values(l, 1); c.grid_file = l.values[0];
        } else if (k == "OBSTYPES") {
            once(l); prm::need_values(l, 1); c.obstypes_file = l.values[0];
        } else if (k == "OBS") {
            once(l); prm::need_values(l, 1); c.obs_file = l.values[0];
        } else if (k == "DATE") {
            once(l);
            prm::need_values(l, 1);
            c.date = prm::to_double(l.values[0], l.number);
            have_date = true;
        } else if (k == "ENSDIR") {
            once(l); prm::need_values(l, 1); c.ensdir = l.values[0];
        } else if (k == "BGDIR") {
            once(l); prm::need_values(l, 1); c.bgdir = l.values[0];
        } else if (k == "KFACTOR") {
            once(l);
            prm::need_values(l, 1);
            c.kfactor = prm::to_double(l.values[0], l.number);
            if (c.kfactor <= 0) throw error("KFACTOR must be > 0 at line " +
                                            std::to_string(l.number));
        } else if (k == "RFACTOR") {
            once(l);
            prm::need_values(l, 1);
            c.rfactor = prm::to_double(l.values[0], l.number);
            if (c.rfactor <= 0) throw error("RFACTOR must be > 0 at line " +
                                            std::to_string(l.number));
        } else if (k == "LOCRAD") {
            once(l);
            prm::need_values(l, 1);
            for (const auto& v : l.values) c.locrad.push_back(prm::to_double(v, l.number));
        } else if (k == "WEIGHT") {
            once(l);
            prm::need_values(l, 1);
            for (const auto& v : l.values) c.locweight.push_back(prm::to_double(v, l.number));
        } else if (k == "STRIDE") {
            once(l);
            prm::need_values(l, 1);
            c.stride = prm::to_int(l.values[0], l.number);
            if (c.stride < 1) throw error("STRIDE must be >= 1 at line " +
                                          std::to_string(l.number));
        } else if (k == "SOBSTRIDE") {
            once(l);
            prm::need_values(l, 1);
            c.sobstride = prm::to_int(l.values[0], l.number);
            if (c.sobstride < 0) throw error("SOBSTRIDE must be >= 0 at line " +
                                             std::to_string(l.number));
        } else if (k == "INFLATION") {
            once(l);
            c.inflation = prm::parse_inflation(l);
            have_inflation = true;
        } else if (k == "ZSTATINTS") {
            once(l);
            if (l.values.size() % 2 != 0)
                throw error("ZSTATINTS expects pairs of depths at line " +
                            std::to_string(l.number));
            for (size_t i = 0; i + 1 < l.values.size(); i += 2)
                c.zstatints.emplace_back(prm::to_double(l.values[i], l.number),
                                         prm::to_double(l.values[i + 1], l.number));
        } else if (k == "REGION") {
            prm::need_values(l, 5);
            Region r;
            r.name = l.values[0];
            r.lon1 = prm::to_double(l.values[1], l.number);
            r.lon2 = prm::to_double(l.values[2], l.number);
            r.lat1 = prm::to_double(l.values[3], l.number);
            r.lat2 = prm::to_double(l.values[4], l.number);
            if (r.lon1 > r.lon2 || r.lat1 > r.lat2)
                throw error("REGION bounds must satisfy lon1<=lon2, lat1<=lat2 at line " +
                            std::to_string(l.number));
            if ((l.values.size() - 5) % 2 != 0)
                throw error("REGION depth intervals must come in pairs at line " +
                            std::to_string(l.number));
            for (size_t i = 5; i + 1 < l.values.size(); i += 2)
                r.zints.emplace_back(prm::to_double(l.values[i], l.number),
                                     prm::to_double(l.values[i + 1], l.number));
            c.regions.push_back(std::move(r));
        } else if (k == "POINTLOG") {
            prm::need_values(l, 2);
            c.pointlogs.emplace_back(prm::to_int(l.values[0], l.number),
                                     prm::to_int(l.values[1], l.number));
            // an optional third token names the grid; we have a single grid
        } else if (k == "BADBATCHES") {
            prm::need_values(l, 4);
            BadBatchSpec b;
            b.type = l.values[0];
            b.max_bias = prm::to_double(l.values[1], l.number);
            b.max_mad = prm::to_double(l.values[2], l.number);
            b.min_nobs = prm::to_int(l.values[3], l.number);
            c.badbatches.push_back(std::move(b));
        } else if (k == "FIELDBUFFERSIZE" || k == "EXITACTION") {
            once(l);  // accepted for compatibility; has no effect here
        } else {
            throw error("unknown key " + k + " at line " + std::to_string(l.number));
        }
    }

    if (!have_mode) throw error("MODE required");
    if (c.model_file.empty()) throw error("MODEL required");
    if (c.grid_file.empty()) throw error("GRID required");
    if (c.obstypes_file.empty()) throw error("OBSTYPES required");
    if (c.obs_file.empty()) throw error("OBS required");
    if (!have_date) throw error("DATE required");
    if (c.ensdir.empty()) throw error("ENSDIR required");
    if (c.mode == DaMode::ENOI && c.bgdir.empty()) throw error("BGDIR required for ENOI");
    if (!have_inflation) c.inflation = Inflation{1.0, 0.5, false};

    prm::normalise_weights(c.locrad, c.locweight, "main prm");

    if (c.zstatints.empty())
        c.zstatints = {{0, 50}, {50, 500}, {500, kInf}};
    if (c.regions.empty())
        c.regions.push_back(Region{"Global", -999, 999, -999, 999, {}});
    return c;
}

// ---------------------------------------------------------------------------
// parse_model
// ---------------------------------------------------------------------------

inline ModelCfg parse_model(const std::string& text) {
    ModelCfg m;
    ModelVarCfg* cur = nullptr;
    for (const auto& l : prm::lex(text)) {
        const std::string& k = l.key;
        if (k == "NAME") {
            prm::need_values(l, 1);
            m.name = l.values[0];
        } else if (k == "VAR") {
            prm::need_values(l, 1);
            m.vars.push_back(ModelVarCfg{l.values[0], "", std::nullopt, std::nullopt});
            cur = &m.vars.back();
        } else if (k == "GRID") {
            if (!cur) throw error("GRID before VAR at line " + std::to_string(l.number));
            prm::need_values(l, 1);
            cur->grid = l.values[0];
        } else if (k == "INFLATION") {
            if (!cur) throw error("INFLATION before VAR at line " + std::to_string(l.number));
            cur->inflation = prm::parse_inflation(l);
        } else if (k == "RANDOMISE") {
            if (!cur) throw error("RANDOMISE before VAR at line " + std::to_string(l.number));
            prm::need_values(l, 2);
            RandomiseSpec r;
            r.lambda = prm::to_double(l.values[0], l.number);
            r.sigma0 = prm::to_double(l.values[1], l.number);
            if (r.lambda <= 0 || r.lambda > 1)
                throw error("RANDOMISE factor must be in (0,1] at line " +
                            std::to_string(l.number));
            cur->randomise = r;
        } else {
            throw error("unknown key " + k + " at line " + std::to_string(l.number));
        }
    }
    if (m.name.empty()) throw error("model prm: NAME required");
    if (m.vars.empty()) throw error("model prm: at least one VAR required");
    return m;
}

// ---------------------------------------------------------------------------
// parse_grid
// ---------------------------------------------------------------------------

inline GridCfg parse_grid(const std::string& text) {
    GridCfg g;
    for (const auto& l : prm::lex(text)) {
        const std::string& k = l.key;
        prm::need_values(l, 1);
        const std::string& v = l.values[0];
        if (k == "NAME") {
            if (!g.name.empty())
                throw error("multiple grids are not supported (line " +
                            std::to_string(l.number) + ")");
            g.name = v;
        } else if (k == "VTYPE") {
            g.vtype = v;
            if (uppercase(v) != "Z")
                throw error("VTYPE \"" + v + "\" not supported; only z layers");
        } else if (k == "DATA") g.data = v;
        else if (k == "XDIMNAME") g.xdimname = v;
        else if (k == "YDIMNAME") g.ydimname = v;
        else if (k == "ZDIMNAME") g.zdimname = v;
        else if (k == "XVARNAME") g.xvarname = v;
        else if (k == "YVARNAME") g.yvarname = v;
        else if (k == "ZVARNAME") g.zvarname = v;
        else if (k == "DEPTHVARNAME") g.depthvarname = v;
        else if (k == "NUMLEVELSVARNAME") g.numlevelsvarname = v;
        else throw error("unknown key " + k + " at line " + std::to_string(l.number));
    }
    if (g.name.empty()) throw error("grid prm: NAME required");
    if (g.data.empty()) throw error("grid prm: DATA required");
    for (const auto* p : {&g.xvarname, &g.yvarname, &g.zvarname, &g.depthvarname,
                          &g.numlevelsvarname})
        if (p->empty()) throw error("grid prm: coordinate variable names required");
    return g;
}

// ---------------------------------------------------------------------------
// parse_obstypes
// ---------------------------------------------------------------------------

inline std::vector<ObsTypeSpec> parse_obstypes(const std::string& text) {
    std::vector<ObsTypeSpec> types;
    ObsTypeSpec* cur = nullptr;
    bool have_issurface = false, have_hfunction = false;

    auto finish = [&]() {
        if (!cur) return;
        if (cur->var.empty()) throw error("obstype " + cur->name + ": VAR required");
        if (!have_issurface) throw error("obstype " + cur->name + ": ISSURFACE required");
        if (!have_hfunction) throw error("obstype " + cur->name + ": HFUNCTION required");
        prm::normalise_weights(cur->locrad, cur->locweight, "obstype " + cur->name);
    };

    for (const auto& l : prm::lex(text)) {
        const std::string& k = l.key;
        if (k == "NAME") {
            finish();
            prm::need_values(l, 1);
            for (const auto& t : types)
                if (t.name == l.values[0])
                    throw error("duplicate observation type \"" + l.values[0] + "\"");
            types.push_back(ObsTypeSpec{});
            cur = &types.back();
            cur->name = l.values[0];
            have_issurface = have_hfunction = false;
            continue;
        }
        if (!cur) throw error(k + " before NAME at line " + std::to_string(l.number));
        if (k == "VAR") {
            prm::need_values(l, 1);
            cur->var = l.values[0];
        } else if (k == "VAR2") {
            prm::need_values(l, 1);
            cur->var2 = l.values[0];
        } else if (k == "ISSURFACE") {
            prm::need_values(l, 1);
            std::string v = uppercase(l.values[0]);
            if (v == "YES" || v == "TRUE" || v == "1") cur->issurface = true;
            else if (v == "NO" || v == "FALSE" || v == "0") cur->issurface = false;
            else throw error("ISSURFACE expects yes/no at line " + std::to_string(l.number));
            have_issurface = true;
        } else if (k == "OFFSET") {
            prm::need_values(l, 2);
            cur->offset = std::make_pair(l.values[0], l.values[1]);
        } else if (k == "HFUNCTION") {
            prm::need_values(l, 1);
            cur->hfunction = l.values[0];
            have_hfunction = true;
        } else if (k == "ASYNC") {
            prm::need_values(l, 1);
            double a = prm::to_double(l.values[0], l.number);
            if (a <= 0) throw error("ASYNC interval must be > 0 at line " +
                                    std::to_string(l.number));
            cur->async = a;
        } else if (k == "LOCRAD") {
            prm::need_values(l, 1);
            for (const auto& v : l.values) cur->locrad.push_back(prm::to_double(v, l.number));
        } else if (k == "WEIGHT") {
            prm::need_values(l, 1);
            for (const auto& v : l.values)
                cur->locweight.push_back(prm::to_double(v, l.number));
        } else if (k == "RFACTOR") {
            prm::need_values(l, 1);
            cur->rfactor = prm::to_double(l.values[0], l.number);
        } else if (k == "MINVALUE") {
            prm::need_values(l, 1);
            cur->minvalue = prm::to_double(l.values[0], l.number);
        } else if (k == "MAXVALUE") {
            prm::need_values(l, 1);
            cur->maxvalue = prm::to_double(l.values[0], l.number);
        } else if (k == "XMIN") { prm::need_values(l, 1); cur->xmin = prm::to_double(l.values[0], l.number); }
        else if (k == "XMAX") { prm::need_values(l, 1); cur->xmax = prm::to_double(l.values[0], l.number); }
        else if (k == "YMIN") { prm::need_values(l, 1); cur->ymin = prm::to_double(l.values[0], l.number); }
        else if (k == "YMAX") { prm::need_values(l, 1); cur->ymax = prm::to_double(l.values[0], l.number); }
        else if (k == "ZMIN") { prm::need_values(l, 1); cur->zmin = prm::to_double(l.values[0], l.number); }
        else if (k == "ZMAX") { prm::need_values(l, 1); cur->zmax = prm::to_double(l.values[0], l.number); }
        else throw error("unknown key " + k + " at line " + std::to_string(l.number));
    }
    finish();
    if (types.empty()) throw error("obstypes prm: no types defined");
    return types;
}

// ---------------------------------------------------------------------------
// parse_obsdata
// ---------------------------------------------------------------------------

inline std::vector<ObsDataSection> parse_obsdata(const std::string& text) {
    std::vector<ObsDataSection> sections;
    ObsDataSection* cur = nullptr;

    auto finish = [&]() {
        if (!cur) return;
        if (cur->reader.empty()) throw error("obsdata " + cur->product + ": READER required");
        if (cur->type.empty()) throw error("obsdata " + cur->product + ": TYPE required");
        if (cur->files.empty()) throw error("obsdata " + cur->product + ": FILE required");
    };

    for (const auto& l : prm::lex(text)) {
        const std::string& k = l.key;
        if (k == "PRODUCT") {
            finish();
            prm::need_values(l, 1);
            sections.push_back(ObsDataSection{});
            cur = &sections.back();
            cur->product = l.values[0];
            continue;
        }
        if (!cur) throw error(k + " before PRODUCT at line " + std::to_string(l.number));
        if (k == "READER") {
            prm::need_values(l, 1);
            cur->reader = l.values[0];
        } else if (k == "TYPE") {
            prm::need_values(l, 1);
            cur->type = l.values[0];
        } else if (k == "FILE") {
            prm::need_values(l, 1);
            cur->files.push_back(l.values[0]);
        } else if (k == "ERROR_STD") {
            prm::need_values(l, 1);
            ErrorStdEntry e;
            size_t opidx;
            if (prm::is_number(l.values[0])) {
                e.from_file = false;
                e.value = prm::to_double(l.values[0], l.number);
                opidx = 1;
            } else {
                e.from_file = true;
                e.file = l.values[0];
                prm::need_values(l, 2);
                e.varname = l.values[1];
                opidx = 2;
            }
            if (l.values.size() > opidx) {
                std::string op = uppercase(l.values[opidx]);
                if (op == "EQUAL" || op == "EQ") e.op = ErrorStdOp::EQUAL;
                else if (op == "PLUS" || op == "PL") e.op = ErrorStdOp::PLUS;
                else if (op == "MULT" || op == "MU") e.op = ErrorStdOp::MULT;
                else if (op == "MIN" || op == "MI") e.op = ErrorStdOp::MIN;
                else if (op == "MAX" || op == "MA") e.op = ErrorStdOp::MAX;
                else throw error("unknown ERROR_STD operation \"" + l.values[opidx] +
                                 "\" at line " + std::to_string(l.number));
            }
            cur->error_std.push_back(std::move(e));
        } else if (k == "PARAMETER") {
            prm::need_values(l, 2);
            cur->parameters.emplace_back(l.values[0], l.values[1]);
        } else {
            throw error("unknown key " + k + " at line " + std::to_string(l.number));
        }
    }
    finish();
    return sections;
}

// ---------------------------------------------------------------------------
// Serializers: canonical "KEY = value" form
// ---------------------------------------------------------------------------

namespace prm {

inline std::string fmt(double x) {
    if (std::isnan(x)) return "NaN";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string fmt_inflation(const Inflation& i) {
    if (i.plain) return fmt(i.mult) + " PLAIN";
    return fmt(i.mult) + " " + fmt(i.cap);
}

}  // namespace prm

inline std::string serialize_main(const DaConfig& c) {
    std::ostringstream o;
    o << "MODE = " << (c.mode == DaMode::ENKF ? "ENKF" : "ENOI") << "\n";
    o << "SCHEME = " << (c.scheme == DaScheme::DENKF ? "DENKF" : "ETKF") << "\n";
    o << "ALPHA = " << prm::fmt(c.alpha) << "\n";
    o << "MODEL = " << c.model_file << "\n";
    o << "GRID = " << c.grid_file << "\n";
    o << "OBSTYPES = " << c.obstypes_file << "\n";
    o << "OBS = " << c.obs_file << "\n";
    o << "DATE = " << prm::fmt(c.date) << "\n";
    o << "ENSDIR = " << c.ensdir << "\n";
    if (!c.bgdir.empty()) o << "BGDIR = " << c.bgdir << "\n";
    if (!std::isnan(c.kfactor)) o << "KFACTOR = " << prm::fmt(c.kfactor) << "\n";
    o << "RFACTOR = " << prm::fmt(c.rfactor) << "\n";
    if (!c.locrad.empty()) {
        o << "LOCRAD =";
        for (double r : c.locrad) o << " " << prm::fmt(r);
        o << "\n";
        o << "WEIGHT =";
        for (double w : c.locweight) o << " " << prm::fmt(w);
        o << "\n";
    }
    o << "STRIDE = " << c.stride << "\n";
    o << "SOBSTRIDE = " << c.sobstride << "\n";
    o << "INFLATION = " << prm::fmt_inflation(c.inflation) << "\n";
    o << "ZSTATINTS =";
    for (const auto& [z1, z2] : c.zstatints)
        o << " [" << prm::fmt(z1) << " " << prm::fmt(z2) << "]";
    o << "\n";
    for (const auto& r : c.regions) {
        o << "REGION = " << r.name << " " << prm::fmt(r.lon1) << " " << prm::fmt(r.lon2)
          << " " << prm::fmt(r.lat1) << " " << prm::fmt(r.lat2);
        for (const auto& [z1, z2] : r.zints)
            o << " [" << prm::fmt(z1) << " " << prm::fmt(z2) << "]";
        o << "\n";
    }
    for (const auto& [i, j] : c.pointlogs) o << "POINTLOG " << i << " " << j << "\n";
    for (const auto& b : c.badbatches)
        o << "BADBATCHES = " << b.type << " " << prm::fmt(b.max_bias) << " "
          << prm::fmt(b.max_mad) << " " << b.min_nobs << "\n";
    return o.str();
}

inline std::string serialize_model(const ModelCfg& m) {
    std::ostringstream o;
    o << "NAME = " << m.name << "\n";
    for (const auto& v : m.vars) {
        o << "\nVAR = " << v.name << "\n";
        if (!v.grid.empty()) o << "GRID = " << v.grid << "\n";
        if (v.inflation) o << "INFLATION = " << prm::fmt_inflation(*v.inflation) << "\n";
        if (v.randomise)
            o << "RANDOMISE " << prm::fmt(v.randomise->lambda) << " "
              << prm::fmt(v.randomise->sigma0) << "\n";
    }
    return o.str();
}

inline std::string serialize_grid(const GridCfg& g) {
    std::ostringstream o;
    o << "NAME = " << g.name << "\n";
    o << "VTYPE = z\n";
    o << "DATA = " << g.data << "\n";
    if (!g.xdimname.empty()) o << "XDIMNAME = " << g.xdimname << "\n";
    if (!g.ydimname.empty()) o << "YDIMNAME = " << g.ydimname << "\n";
    if (!g.zdimname.empty()) o << "ZDIMNAME = " << g.zdimname << "\n";
    o << "XVARNAME = " << g.xvarname << "\n";
    o << "YVARNAME = " << g.yvarname << "\n";
    o << "ZVARNAME = " << g.zvarname << "\n";
    o << "DEPTHVARNAME = " << g.depthvarname << "\n";
    o << "NUMLEVELSVARNAME = " << g.numlevelsvarname << "\n";
    return o.str();
}

inline std::string serialize_obstypes(const std::vector<ObsTypeSpec>& types) {
    std::ostringstream o;
    bool first = true;
    for (const auto& t : types) {
        if (!first) o << "\n";
        first = false;
        o << "NAME = " << t.name << "\n";
        o << "VAR = " << t.var << "\n";
        if (t.var2) o << "VAR2 = " << *t.var2 << "\n";
        o << "ISSURFACE = " << (t.issurface ? "yes" : "no") << "\n";
        if (t.offset) o << "OFFSET = " << t.offset->first << " " << t.offset->second << "\n";
        o << "HFUNCTION = " << t.hfunction << "\n";
        if (t.async) o << "ASYNC = " << prm::fmt(*t.async) << "\n";
        if (!t.locrad.empty()) {
            o << "LOCRAD =";
            for (double r : t.locrad) o << " " << prm::fmt(r);
            o << "\n";
            o << "WEIGHT =";
            for (double w : t.locweight) o << " " << prm::fmt(w);
            o << "\n";
        }
        o << "RFACTOR = " << prm::fmt(t.rfactor) << "\n";
        if (t.minvalue != -kInf) o << "MINVALUE = " << prm::fmt(t.minvalue) << "\n";
        if (t.maxvalue != kInf) o << "MAXVALUE = " << prm::fmt(t.maxvalue) << "\n";
        if (t.xmin != -kInf) o << "XMIN = " << prm::fmt(t.xmin) << "\n";
        if (t.xmax != kInf) o << "XMAX = " << prm::fmt(t.xmax) << "\n";
        if (t.ymin != -kInf) o << "YMIN = " << prm::fmt(t.ymin) << "\n";
        if (t.ymax != kInf) o << "YMAX = " << prm::fmt(t.ymax) << "\n";
        if (t.zmin != -kInf) o << "ZMIN = " << prm::fmt(t.zmin) << "\n";
        if (t.zmax != kInf) o << "ZMAX = " << prm::fmt(t.zmax) << "\n";
    }
    return o.str();
}

inline std::string serialize_obsdata(const std::vector<ObsDataSection>& sections) {
    std::ostringstream o;
    bool first = true;
    for (const auto& s : sections) {
        if (!first) o << "\n";
        first = false;
        o << "PRODUCT = " << s.product << "\n";
        o << "READER = " << s.reader << "\n";
        o << "TYPE = " << s.type << "\n";
        for (const auto& f : s.files) o << "FILE = " << f << "\n";
        for (const auto& e : s.error_std) {
            o << "ERROR_STD = ";
            if (e.from_file) o << e.file << " " << e.varname;
            else o << prm::fmt(e.value);
            switch (e.op) {
                case ErrorStdOp::EQUAL: o << " EQUAL"; break;
                case ErrorStdOp::PLUS: o << " PLUS"; break;
                case ErrorStdOp::MULT: o << " MULT"; break;
                case ErrorStdOp::MIN: o << " MIN"; break;
                case ErrorStdOp::MAX: o << " MAX"; break;
            }
            o << "\n";
        }
        for (const auto& [k, v] : s.parameters) o << "PARAMETER " << k << " = " << v << "\n";
    }
    return o.str();
}

// ---------------------------------------------------------------------------
// Whole-config load: reads the main file and the four files it names,
// resolving paths relative to the main file's directory.
// ---------------------------------------------------------------------------

namespace prm {

inline std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw error("cannot open \"" + path + "\"");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string resolve(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace prm

inline void validate_config(DaConfig& c) {
    for (const auto& s : c.obsdata)
        if (!c.find_type(s.type))
            throw error("obsdata product " + s.product + " references unknown type \"" +
                        s.type + "\"");
    for (const auto& b : c.badbatches)
        if (!c.find_type(b.type))
            throw error("BADBATCHES references unknown type \"" + b.type + "\"");
    for (const auto& v : c.model.vars)
        if (!v.grid.empty() && v.grid != c.grid.name)
            throw error("model variable " + v.name + " references unknown grid \"" +
                        v.grid + "\"");
}

inline DaConfig load_config(const std::string& main_path) {
    std::string dir = std::filesystem::path(main_path).parent_path().string();
    DaConfig c = parse_main(prm::read_file(main_path));
    c.model_file = prm::resolve(dir, c.model_file);
    c.grid_file = prm::resolve(dir, c.grid_file);
    c.obstypes_file = prm::resolve(dir, c.obstypes_file);
    c.obs_file = prm::resolve(dir, c.obs_file);
    c.ensdir = prm::resolve(dir, c.ensdir);
    if (!c.bgdir.empty()) c.bgdir = prm::resolve(dir, c.bgdir);
    c.model = parse_model(prm::read_file(c.model_file));
    c.grid = parse_grid(prm::read_file(c.grid_file));
    c.grid.data = prm::resolve(std::filesystem::path(c.grid_file).parent_path().string(),
                               c.grid.data);
    c.obstypes = parse_obstypes(prm::read_file(c.obstypes_file));
    std::string types_dir =
        std::filesystem::path(c.obstypes_file).parent_path().string();
    for (auto& t : c.obstypes)
        if (t.offset) t.offset->first = prm::resolve(types_dir, t.offset->first);
    c.obsdata = parse_obsdata(prm::read_file(c.obs_file));
    std::string obs_dir = std::filesystem::path(c.obs_file).parent_path().string();
    for (auto& s : c.obsdata) {
        for (auto& f : s.files) f = prm::resolve(obs_dir, f);
        for (auto& e : s.error_std)
            if (e.from_file) e.file = prm::resolve(obs_dir, e.file);
    }
    validate_config(c);
    return c;
}

}  // namespace ekc
