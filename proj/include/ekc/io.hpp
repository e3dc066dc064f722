#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ekc/core.hpp"
#include "ekc/obs.hpp"

namespace ekc {

// ---------------------------------------------------------------------------
// Array container: 4-byte magic "EKC1", 4-byte little-endian header length,
// UTF-8 JSON header {"dims":[...],"dtype":"f32"}, then the raw little-endian
// float payload in row-major order.
// ---------------------------------------------------------------------------

struct ArrayFile {
    std::vector<int> dims;
    std::vector<float> data;

    std::int64_t size() const {
        std::int64_t n = 1;
        for (int d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }
};

inline void write_array(const std::string& path, const std::vector<int>& dims,
                        std::span<const float> payload) {
    if (dims.empty()) throw error(path + ": empty dimension list");
    std::int64_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw error(path + ": empty dimension");
        n *= d;
    }
    if (n != static_cast<std::int64_t>(payload.size()))
        throw error(path + ": payload size does not match dims");

    nlohmann::json hdr;
    hdr["dims"] = dims;
    hdr["dtype"] = "f32";
    std::string h = hdr.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw error("cannot open \"" + path + "\" for writing");
    f.write("EKC1", 4);
    std::uint32_t hlen = static_cast<std::uint32_t>(h.size());
    f.write(reinterpret_cast<const char*>(&hlen), 4);
    f.write(h.data(), h.size());
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw error("write failed for \"" + path + "\"");
}

inline ArrayFile read_array(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw error("cannot open \"" + path + "\"");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "EKC1", 4) != 0)
        throw error(path + ": magic mismatch");
    std::uint32_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 4);
    std::string h(hlen, '\0');
    f.read(h.data(), hlen);
    if (!f) throw error(path + ": truncated header");
    nlohmann::json hdr = nlohmann::json::parse(h, nullptr, false);
    if (hdr.is_discarded() || !hdr.contains("dims") || hdr.value("dtype", "") != "f32")
        throw error(path + ": bad header");

    ArrayFile a;
    a.dims = hdr["dims"].get<std::vector<int>>();
    if (a.dims.empty()) throw error(path + ": empty dimension list");
    std::int64_t n = 1;
    for (int d : a.dims) {
        if (d <= 0) throw error(path + ": empty dimension");
        n *= d;
    }
    a.data.resize(n);
    f.read(reinterpret_cast<char*>(a.data.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
        throw error(path + ": truncated payload");
    return a;
}

// ---------------------------------------------------------------------------
// Ensemble / background file-name conventions
// ---------------------------------------------------------------------------

inline std::string member_path(const std::string& dir, int member,
                               const std::string& var,
                               std::optional<int> slot = std::nullopt) {
    if (member < 1) throw error("member id must be >= 1");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mem%03d_", member);
    std::string name = std::string(buf) + var;
    if (slot) name += "_" + std::to_string(*slot);
    return (std::filesystem::path(dir) / (name + ".ekc")).string();
}

inline std::string bg_path(const std::string& dir, const std::string& var,
                           std::optional<int> slot = std::nullopt) {
    std::string name = "bg_" + var;
    if (slot) name += "_" + std::to_string(*slot);
    return (std::filesystem::path(dir) / (name + ".ekc")).string();
}

// ---------------------------------------------------------------------------
// Observation tables: CSV with "." decimal, "," separator, quoted strings,
// reals printed with 9 significant digits.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
                else quoted = false;
            } else cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else cur += c;
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

inline void write_obs(const std::string& path, const ObsTable& obs) {
    std::ofstream f(path);
    if (!f) throw error("cannot open \"" + path + "\" for writing");
    f << "id,type,product,instrument,batch,lon,lat,depth,fi,fj,fk,value,std,time,status\n";
    for (const auto& o : obs) {
        f << o.id << ',' << detail::csv_quote(o.type) << ','
          << detail::csv_quote(o.product) << ',' << detail::csv_quote(o.instrument)
          << ',' << o.batch << ',' << detail::fmt_real(o.lon) << ','
          << detail::fmt_real(o.lat) << ',' << detail::fmt_real(o.depth) << ','
          << detail::fmt_real(o.fi) << ',' << detail::fmt_real(o.fj) << ','
          << detail::fmt_real(o.fk) << ',' << detail::fmt_real(o.value) << ','
          << detail::fmt_real(o.std) << ',' << detail::fmt_real(o.time) << ','
          << to_string(o.status) << '\n';
    }
    if (!f) throw error("write failed for \"" + path + "\"");
}

inline ObsTable read_obs(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw error("cannot open \"" + path + "\"");
    std::string line;
    if (!std::getline(f, line)) throw error(path + ": missing header");
    ObsTable obs;
    while (std::getline(f, line)) {
        if (trim(line).empty()) continue;
        auto v = detail::csv_split(line);
        if (v.size() != 15) throw error(path + ": bad row \"" + line + "\"");
        Observation o;
        o.id = std::stoi(v[0]);
        o.type = v[1];
        o.product = v[2];
        o.instrument = v[3];
        o.batch = std::stoi(v[4]);
        o.lon = std::stod(v[5]);
        o.lat = std::stod(v[6]);
        o.depth = std::stod(v[7]);
        o.fi = std::stod(v[8]);
        o.fj = std::stod(v[9]);
        o.fk = std::stod(v[10]);
        o.value = std::stod(v[11]);
        o.std = std::stod(v[12]);
        o.time = std::stod(v[13]);
        o.status = obs_status_from_string(v[14]);
        obs.push_back(std::move(o));
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Point logs: complete per-location DA information as JSON with embedded
// arrays (double precision, so transforms can be reproduced from s and S).
// ---------------------------------------------------------------------------

struct PointLogVariable {
    Mat forecast;                    // [nlevels x m]
    Mat analysis;                    // empty until the update stage runs
    double inflation_mult = 1.0;
    double inflation_cap = 0.5;
    bool inflation_plain = false;
};

struct PointLogRecord {
    int i = 0, j = 0;
    double lon = 0, lat = 0, depth = 0;
    double date = 0;
    bool enkf = true;

    std::vector<int> obs_ids;
    std::vector<double> lcoeffs;
    std::vector<double> obs_lon, obs_lat, obs_depth;
    std::vector<double> obs_val, obs_std;
    std::vector<double> obs_fi, obs_fj, obs_fk;
    std::vector<std::string> obs_type;
    std::vector<double> obs_time;

    Vec s;        // [p]
    Mat S;        // [p x m], row per observation
    Vec w;        // [m]
    Mat X5;       // [m x m] transform computed at this node (EnKF)
    Mat X5_actual;  // the interpolated transform actually used here

    std::map<std::string, PointLogVariable> variables;
};

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat mat_from_json(const nlohmann::json& j) {
    if (j.empty()) return Mat();
    Mat m(j.size(), j[0].size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
    return m;
}

inline nlohmann::json vec_to_json(const Vec& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Vec vec_from_json(const nlohmann::json& j) {
    Vec v(j.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

}  // namespace detail

inline std::string pointlog_path(const std::string& dir, int i, int j) {
    return (std::filesystem::path(dir) /
            ("pointlog_" + std::to_string(i) + "," + std::to_string(j) + ".json"))
        .string();
}

inline void write_pointlog(const std::string& path, const PointLogRecord& r) {
    size_t p = r.obs_ids.size();
    if (r.lcoeffs.size() != p || r.obs_val.size() != p ||
        static_cast<size_t>(r.s.size()) != p ||
        (p > 0 && static_cast<size_t>(r.S.rows()) != p))
        throw error("pointlog: dimension mismatch");

    nlohmann::json j;
    j["date"] = r.date;
    j["i"] = r.i;
    j["j"] = r.j;
    j["lon"] = r.lon;
    j["lat"] = r.lat;
    j["depth"] = r.depth;
    j["mode"] = r.enkf ? "ENKF" : "ENOI";
    j["obs_ids"] = r.obs_ids;
    j["lcoeffs"] = r.lcoeffs;
    j["obs_lon"] = r.obs_lon;
    j["obs_lat"] = r.obs_lat;
    j["obs_depth"] = r.obs_depth;
    j["obs_val"] = r.obs_val;
    j["obs_std"] = r.obs_std;
    j["obs_fi"] = r.obs_fi;
    j["obs_fj"] = r.obs_fj;
    j["obs_fk"] = r.obs_fk;
    j["obs_type"] = r.obs_type;
    j["obs_time"] = r.obs_time;
    j["s"] = detail::vec_to_json(r.s);
    j["S"] = detail::mat_to_json(r.S);
    j["w"] = detail::vec_to_json(r.w);
    j["X5"] = detail::mat_to_json(r.X5);
    j["X5_actual"] = detail::mat_to_json(r.X5_actual);
    nlohmann::json vars;
    for (const auto& [name, v] : r.variables) {
        nlohmann::json jv;
        jv["forecast"] = detail::mat_to_json(v.forecast);
        if (v.analysis.size() > 0) jv["analysis"] = detail::mat_to_json(v.analysis);
        jv["inflation"] = {v.inflation_mult, v.inflation_cap};
        jv["inflation_plain"] = v.inflation_plain;
        vars[name] = std::move(jv);
    }
    j["variables"] = std::move(vars);

    std::ofstream f(path);
    if (!f) throw error("cannot open \"" + path + "\" for writing");
    f << j.dump(1) << "\n";
}

inline PointLogRecord read_pointlog(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw error("cannot open \"" + path + "\"");
    nlohmann::json j = nlohmann::json::parse(f);
    PointLogRecord r;
    r.date = j["date"];
    r.i = j["i"];
    r.j = j["j"];
    r.lon = j["lon"];
    r.lat = j["lat"];
    r.depth = j["depth"];
    r.enkf = j["mode"] == "ENKF";
    r.obs_ids = j["obs_ids"].get<std::vector<int>>();
    r.lcoeffs = j["lcoeffs"].get<std::vector<double>>();
    r.obs_lon = j["obs_lon"].get<std::vector<double>>();
    r.obs_lat = j["obs_lat"].get<std::vector<double>>();
    r.obs_depth = j["obs_depth"].get<std::vector<double>>();
    r.obs_val = j["obs_val"].get<std::vector<double>>();
    r.obs_std = j["obs_std"].get<std::vector<double>>();
    r.obs_fi = j["obs_fi"].get<std::vector<double>>();
    r.obs_fj = j["obs_fj"].get<std::vector<double>>();
    r.obs_fk = j["obs_fk"].get<std::vector<double>>();
    r.obs_type = j["obs_type"].get<std::vector<std::string>>();
    r.obs_time = j["obs_time"].get<std::vector<double>>();
    r.s = detail::vec_from_json(j["s"]);
    r.S = detail::mat_from_json(j["S"]);
    if (r.S.size() == 0 && r.s.size() > 0) r.S.resize(r.s.size(), 0);
    r.w = detail::vec_from_json(j["w"]);
    r.X5 = detail::mat_from_json(j["X5"]);
    r.X5_actual = detail::mat_from_json(j["X5_actual"]);
    for (auto& [name, jv] : j["variables"].items()) {
        PointLogVariable v;
        v.forecast = detail::mat_from_json(jv["forecast"]);
        if (jv.contains("analysis")) v.analysis = detail::mat_from_json(jv["analysis"]);
        v.inflation_mult = jv["inflation"][0];
        v.inflation_cap = jv["inflation"][1];
        v.inflation_plain = jv["inflation_plain"];
        r.variables[name] = std::move(v);
    }
    return r;
}

}  // namespace ekc
