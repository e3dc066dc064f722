#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ekc/core.hpp"
#include "ekc/io.hpp"
#include "ekc/prm.hpp"

namespace ekc {

// Rectangular lon/lat grid with z layers. lon/lat may be non-equidistant but
// must be strictly monotonic; z holds layer-centre depths, increasing.
// numlevels is the z-grid land mask: 0 = land.
struct Grid {
    int ni = 0, nj = 0, nk = 0;
    std::vector<double> lon, lat, z;
    std::vector<double> depth;   // [nj*ni] row-major
    std::vector<int> numlevels;  // [nj*ni]
    bool periodic_x = false;

    double depth_at(int j, int i) const { return depth[static_cast<size_t>(j) * ni + i]; }
    int levels_at(int j, int i) const { return numlevels[static_cast<size_t>(j) * ni + i]; }
    bool land(int j, int i) const { return levels_at(j, i) == 0; }
};

namespace geo {

inline bool ascending(const std::vector<double>& c) { return c.back() >= c.front(); }

// Fractional index on a strictly monotonic axis; NaN when outside.
inline double frac_index(const std::vector<double>& c, double x) {
    int n = static_cast<int>(c.size());
    if (n == 1) return x == c[0] ? 0.0 : kNaN;
    bool inc = ascending(c);
    double lo = inc ? c.front() : c.back();
    double hi = inc ? c.back() : c.front();
    if (x < lo || x > hi) return kNaN;
    int a = 0, b = n - 1;
    while (b - a > 1) {
        int m = (a + b) / 2;
        if ((x >= c[m]) == inc) a = m;
        else b = m;
    }
    if (c[b] == c[a]) return a;
    return a + (x - c[a]) / (c[b] - c[a]);
}

inline bool detect_periodic_x(const std::vector<double>& lon) {
    if (lon.size() < 2) return false;
    double span = std::abs(lon.back() - lon.front());
    double cell = span / (static_cast<double>(lon.size()) - 1);
    return std::abs(span + cell - 360.0) < 0.5 * cell;
}

}  // namespace geo

inline Grid make_grid(std::vector<double> lon, std::vector<double> lat,
                      std::vector<double> z, std::vector<double> depth,
                      std::vector<int> numlevels) {
    Grid g;
    g.ni = static_cast<int>(lon.size());
    g.nj = static_cast<int>(lat.size());
    g.nk = static_cast<int>(z.size());
    if (g.ni < 1 || g.nj < 1 || g.nk < 1) throw error("grid: empty axis");
    for (size_t i = 1; i < z.size(); ++i)
        if (z[i] <= z[i - 1]) throw error("grid: z must be strictly increasing");
    if (depth.size() != static_cast<size_t>(g.ni) * g.nj ||
        numlevels.size() != static_cast<size_t>(g.ni) * g.nj)
        throw error("grid: depth/numlevels size mismatch");
    for (int v : numlevels)
        if (v < 0 || v > g.nk) throw error("grid: numlevels out of range");
    g.lon = std::move(lon);
    g.lat = std::move(lat);
    g.z = std::move(z);
    g.depth = std::move(depth);
    g.numlevels = std::move(numlevels);
    g.periodic_x = geo::detect_periodic_x(g.lon);
    return g;
}

inline Grid load_grid(const GridCfg& cfg) {
    auto dir = std::filesystem::path(cfg.data);
    auto arr = [&dir](const std::string& var) {
        return read_array((dir / (var + ".ekc")).string());
    };
    auto as_doubles = [](const ArrayFile& a) {
        return std::vector<double>(a.data.begin(), a.data.end());
    };
    ArrayFile ax = arr(cfg.xvarname), ay = arr(cfg.yvarname), az = arr(cfg.zvarname);
    ArrayFile ad = arr(cfg.depthvarname), an = arr(cfg.numlevelsvarname);
    std::vector<int> numlevels(an.data.size());
    for (size_t i = 0; i < an.data.size(); ++i)
        numlevels[i] = static_cast<int>(std::lround(an.data[i]));
    return make_grid(as_doubles(ax), as_doubles(ay), as_doubles(az), as_doubles(ad),
                     std::move(numlevels));
}

inline void save_grid(const Grid& g, const GridCfg& cfg) {
    std::filesystem::create_directories(cfg.data);
    auto dir = std::filesystem::path(cfg.data);
    auto put = [&dir](const std::string& var, const std::vector<int>& dims,
                      const std::vector<double>& data) {
        std::vector<float> f(data.begin(), data.end());
        write_array((dir / (var + ".ekc")).string(), dims, f);
    };
    put(cfg.xvarname, {g.ni}, g.lon);
    put(cfg.yvarname, {g.nj}, g.lat);
    put(cfg.zvarname, {g.nk}, g.z);
    put(cfg.depthvarname, {g.nj, g.ni}, g.depth);
    put(cfg.numlevelsvarname, {g.nj, g.ni},
        std::vector<double>(g.numlevels.begin(), g.numlevels.end()));
}

// ---------------------------------------------------------------------------
// Coordinate mapping
// ---------------------------------------------------------------------------

inline std::optional<std::pair<double, double>> xy_to_fij(const Grid& g, double lon,
                                                          double lat) {
    double fj = geo::frac_index(g.lat, lat);
    if (std::isnan(fj)) return std::nullopt;

    double fi = geo::frac_index(g.lon, lon);
    if (std::isnan(fi) && g.periodic_x && g.ni > 1) {
        bool inc = geo::ascending(g.lon);
        double l0 = g.lon.front(), l1 = g.lon.back();
        double x = lon;
        if (inc) {
            while (x < l0) x += 360.0;
            while (x >= l0 + 360.0) x -= 360.0;
            if (x > l1)  // between the last and first cell
                fi = (g.ni - 1) + (x - l1) / (l0 + 360.0 - l1);
            else
                fi = geo::frac_index(g.lon, x);
        } else {
            while (x > l0) x -= 360.0;
            while (x <= l0 - 360.0) x += 360.0;
            if (x < l1)
                fi = (g.ni - 1) + (l1 - x) / (l1 - (l0 - 360.0));
            else
                fi = geo::frac_index(g.lon, x);
        }
    }
    if (std::isnan(fi)) return std::nullopt;
    return std::make_pair(fi, fj);
}

inline std::pair<double, double> fij_to_xy(const Grid& g, double fi, double fj) {
    auto interp = [](const std::vector<double>& c, double f, bool periodic) {
        int n = static_cast<int>(c.size());
        if (n == 1) return c[0];
        int a = static_cast<int>(std::floor(f));
        if (periodic && a >= n - 1 && f < n) {
            double t = f - (n - 1);
            double next = c[0] + (c.back() >= c.front() ? 360.0 : -360.0);
            return c[n - 1] + t * (next - c[n - 1]);
        }
        a = std::clamp(a, 0, n - 2);
        double t = f - a;
        return c[a] + t * (c[a + 1] - c[a]);
    };
    return {interp(g.lon, fi, g.periodic_x), interp(g.lat, fj, false)};
}

// Fractional layer index by linear interpolation between layer centres,
// clamped to [0, nk-1].
inline double z_to_fk(const Grid& g, double depth) {
    if (g.nk == 1) return 0.0;
    if (depth <= g.z.front()) return 0.0;
    if (depth >= g.z.back()) return static_cast<double>(g.nk - 1);
    return geo::frac_index(g.z, depth);
}

inline double great_circle_km(double lon1, double lat1, double lon2, double lat2) {
    constexpr double d2r = M_PI / 180.0;
    double phi1 = lat1 * d2r, phi2 = lat2 * d2r;
    double dphi = (lat2 - lat1) * d2r, dlam = (lon2 - lon1) * d2r;
    double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
               std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
    a = std::min(1.0, std::max(0.0, a));
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(a));
}

// ---------------------------------------------------------------------------
// Observation operators: linear interpolation from the corner grid nodes,
// with land corners excluded and the weights renormalised.
// ---------------------------------------------------------------------------

namespace geo {

struct Corner {
    int i, j;
    double w;
};

inline std::array<Corner, 4> corners_xy(const Grid& g, double fi, double fj) {
    int i0, i1;
    double u;
    if (g.ni == 1) {
        i0 = i1 = 0;
        u = 0;
    } else if (g.periodic_x && fi >= g.ni - 1) {
        i0 = g.ni - 1;
        i1 = 0;
        u = fi - (g.ni - 1);
    } else {
        i0 = std::clamp(static_cast<int>(std::floor(fi)), 0, g.ni - 2);
        i1 = i0 + 1;
        u = fi - i0;
    }
    int j0, j1;
    double v;
    if (g.nj == 1) {
        j0 = j1 = 0;
        v = 0;
    } else {
        j0 = std::clamp(static_cast<int>(std::floor(fj)), 0, g.nj - 2);
        j1 = j0 + 1;
        v = fj - j0;
    }
    return {Corner{i0, j0, (1 - u) * (1 - v)}, Corner{i1, j0, u * (1 - v)},
            Corner{i0, j1, (1 - u) * v}, Corner{i1, j1, u * v}};
}

}  // namespace geo

// field(j, i) -> value at the surface layer
template <typename F>
double h_surface_fn(const Grid& g, F&& field, double fi, double fj) {
    auto cs = geo::corners_xy(g, fi, fj);
    double sum = 0, wsum = 0;
    for (const auto& c : cs) {
        if (g.land(c.j, c.i)) continue;
        sum += c.w * field(c.j, c.i);
        wsum += c.w;
    }
    if (wsum <= 0) throw error("observation on land");
    return sum / wsum;
}

// field(k, j, i) -> value at (fi, fj, fk); corner (i,j) is wet at layer k
// when numlevels(j,i) > k
template <typename F>
double h_volume_fn(const Grid& g, F&& field, double fi, double fj, double fk) {
    auto cs = geo::corners_xy(g, fi, fj);
    double fkc = std::clamp(fk, 0.0, static_cast<double>(g.nk - 1));
    int k0 = std::clamp(static_cast<int>(std::floor(fkc)), 0, g.nk - 1);
    int k1 = std::min(k0 + 1, g.nk - 1);
    double t = fkc - k0;
    double sum = 0, wsum = 0;
    for (const auto& c : cs) {
        int nl = g.levels_at(c.j, c.i);
        if (nl > k0 && (1 - t) > 0) {
            sum += c.w * (1 - t) * field(k0, c.j, c.i);
            wsum += c.w * (1 - t);
        }
        if (k1 != k0 && nl > k1 && t > 0) {
            sum += c.w * t * field(k1, c.j, c.i);
            wsum += c.w * t;
        }
    }
    if (wsum <= 0) throw error("observation on land");
    return sum / wsum;
}

inline double h_surface(const Grid& g, const std::vector<float>& field, double fi,
                        double fj) {
    if (field.size() != static_cast<size_t>(g.ni) * g.nj)
        throw error("h_surface: field size mismatch");
    return h_surface_fn(
        g, [&](int j, int i) { return static_cast<double>(field[static_cast<size_t>(j) * g.ni + i]); },
        fi, fj);
}

inline double h_volume(const Grid& g, const std::vector<float>& field, double fi,
                       double fj, double fk) {
    if (field.size() != static_cast<size_t>(g.nk) * g.ni * g.nj)
        throw error("h_volume: field size mismatch");
    return h_volume_fn(
        g,
        [&](int k, int j, int i) {
            return static_cast<double>(
                field[(static_cast<size_t>(k) * g.nj + j) * g.ni + i]);
        },
        fi, fj, fk);
}

}  // namespace ekc
