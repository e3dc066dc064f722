#pragma once

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ekc/analysis.hpp"
#include "ekc/core.hpp"
#include "ekc/ensemble.hpp"
#include "ekc/grid.hpp"
#include "ekc/locality.hpp"
#include "ekc/model.hpp"
#include "ekc/obsprep.hpp"
#include "ekc/oracle.hpp"
#include "ekc/update.hpp"

namespace ekc {

// Twin experiments: truth synthesis, observation synthesis, and the
// production analysis chain run in memory (double precision throughout, so
// the oracle comparisons are not limited by file round-trips).

struct TwinCycle {
    int cycle = 0;
    double rmse_f = 0, rmse_a = 0, spread_a = 0;
    double mean_err = 0, cov_err = 0;  // oracle scenario only
};

struct TwinResult {
    std::string scenario;
    std::vector<TwinCycle> cycles;
    bool pass = false;
    std::string message;
};

namespace twin {

// Ring grid: n cells along a periodic longitude circle at the equator.
inline Grid ring_grid(int n) {
    std::vector<double> lon(n);
    for (int i = 0; i < n; ++i) lon[i] = i * (360.0 / n);
    return make_grid(lon, {0.0}, {0.0}, std::vector<double>(n, 1000.0),
                     std::vector<int>(n, 1));
}

inline ObsTable ring_obs(const Grid& grid, const Vec& values, double sigma,
                         const std::vector<int>& cells) {
    ObsTable obs;
    for (size_t k = 0; k < cells.size(); ++k) {
        Observation o;
        o.id = static_cast<int>(k);
        o.type = "V";
        o.fi = cells[k];
        o.fj = 0;
        auto [lon, lat] = fij_to_xy(grid, o.fi, o.fj);
        o.lon = lon;
        o.lat = lat;
        o.value = values[k];
        o.std = sigma;
        obs.push_back(std::move(o));
    }
    return obs;
}

inline double rmse(const Vec& a, const Vec& b) {
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

// Apply the per-cell interpolated transforms to a ring-state ensemble.
inline void apply_field_enkf(Mat& E, const TransformField& field) {
    for (Eigen::Index i = 0; i < E.rows(); ++i) {
        LocalTransform t = interp_transform(field, static_cast<double>(i), 0.0);
        E.row(i) = E.row(i) * t.X5;
    }
}

inline Vec apply_field_enoi(const Vec& bg, const Mat& anoms, const TransformField& field) {
    Vec out = bg;
    for (Eigen::Index i = 0; i < bg.size(); ++i) {
        LocalTransform t = interp_transform(field, static_cast<double>(i), 0.0);
        out[i] += anoms.row(i) * t.w;
    }
    return out;
}

// Capped inflation on a double-precision ensemble (same rule as the file
// update path).
inline void inflate_ensemble(const Mat& Ef, Mat& Ea, const Inflation& inf) {
    int m = static_cast<int>(Ea.cols());
    for (Eigen::Index i = 0; i < Ea.rows(); ++i) {
        double mean_f = Ef.row(i).mean(), mean_a = Ea.row(i).mean();
        double var_f = (Ef.row(i).array() - mean_f).square().sum() / (m - 1);
        double var_a = (Ea.row(i).array() - mean_a).square().sum() / (m - 1);
        if (var_a <= 0) continue;
        double eff;
        if (inf.plain) {
            eff = inf.mult;
        } else {
            double ratio = std::sqrt(var_f / var_a);
            eff = std::min(inf.mult, std::max(1.0, 1.0 + inf.cap * (ratio - 1.0)));
        }
        Ea.row(i) = (Ea.row(i).array() - mean_a) * eff + mean_a;
    }
}

inline ObsQuantities make_quantities(const Mat& HE, const Vec& y) {
    ObsQuantities q;
    q.HE = HE;
    q.Hx = HE.rowwise().mean();
    q.innovation = y - q.Hx;
    q.sigma_eff = Vec();
    return q;
}

}  // namespace twin

// ---------------------------------------------------------------------------
// Lorenz-96 EnKF scenario: n=40, F=8, m=25, every cell observed each cycle
// with sigma=1, DEnKF, localisation with support of about 10 grid spacings,
// capped inflation 1.05.
// ---------------------------------------------------------------------------

inline TwinResult twin_lorenz96(int cycles = 500, std::uint64_t seed = 7) {
    const int n = 40, m = 25;
    const double sigma = 1.0;
    TwinResult res;
    res.scenario = "lorenz96";
    Grid grid = twin::ring_grid(n);
    ModelSpec spec;
    spec.kind = ModelKind::LORENZ96;
    spec.n = n;

    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss;
    Vec truth = Vec::Constant(n, 8.0);
    truth[0] += 0.01;
    for (int s = 0; s < 1000; ++s) truth = model::rk4_step(truth, spec.dt, spec.forcing);
    Mat E(n, m);
    for (int e = 0; e < m; ++e)
        for (int i = 0; i < n; ++i) E(i, e) = truth[i] + 3.0 * gauss(rng);

    double spacing_km = great_circle_km(grid.lon[0], 0.0, grid.lon[1], 0.0);
    TaperSpec taper_spec({10.0 * spacing_km});
    auto taper_fn = [&taper_spec](const std::string&) -> const TaperSpec& {
        return taper_spec;
    };
    Inflation inf{1.05, 0.5, false};
    std::vector<int> cells(n);
    for (int i = 0; i < n; ++i) cells[i] = i;

    BuildOptions bo;
    bo.enkf = true;
    bo.scheme = DaScheme::DENKF;
    for (int c = 0; c < cycles; ++c) {
        truth = model::rk4_step(truth, spec.dt, spec.forcing);
        for (int e = 0; e < m; ++e) E.col(e) = model::rk4_step(E.col(e), spec.dt, spec.forcing);

        Vec y(n);
        for (int i = 0; i < n; ++i) y[i] = truth[i] + sigma * gauss(rng);
        ObsTable obs = twin::ring_obs(grid, y, sigma, cells);
        ObsQuantities q = twin::make_quantities(E, y);
        q.sigma_eff = Vec::Constant(n, sigma);

        TwinCycle tc;
        tc.cycle = c;
        tc.rmse_f = twin::rmse(E.rowwise().mean(), truth);

        TransformField field = build_transform_field(grid, obs, q, taper_fn, bo);
        Mat Ef = E;
        twin::apply_field_enkf(E, field);
        twin::inflate_ensemble(Ef, E, inf);

        tc.rmse_a = twin::rmse(E.rowwise().mean(), truth);
        auto [mean, anoms] = mean_and_anomalies(E);
        tc.spread_a = std::sqrt(anoms.array().square().sum() /
                                static_cast<double>(n * (m - 1)));
        res.cycles.push_back(tc);
        if (tc.rmse_a > 10.0 * sigma) {
            res.message = "divergence at cycle " + std::to_string(c);
            return res;
        }
    }

    double sum_rmse = 0, sum_spread = 0;
    int count = 0;
    for (const auto& tc : res.cycles)
        if (tc.cycle >= 50) {
            sum_rmse += tc.rmse_a;
            sum_spread += tc.spread_a;
            ++count;
        }
    double mean_rmse = sum_rmse / count, mean_spread = sum_spread / count;
    std::ostringstream msg;
    msg << "mean analysis rmse " << mean_rmse << ", mean spread " << mean_spread;
    res.message = msg.str();
    res.pass = mean_rmse < 0.7 && mean_spread >= 0.5 * mean_rmse &&
               mean_spread <= 2.0 * mean_rmse;
    return res;
}

// ---------------------------------------------------------------------------
// Linear-advection oracle scenario: the production ETKF against the dense
// Kalman filter, full rank, no localisation, no inflation.
// ---------------------------------------------------------------------------

inline TwinResult twin_linadv_oracle(int cycles = 20, std::uint64_t seed = 11) {
    const int n = 16, m = 20, p = 8;
    const double sigma = 0.5;
    TwinResult res;
    res.scenario = "linadv-oracle";
    Grid grid = twin::ring_grid(n);
    Mat M = linadv_matrix(n);

    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss;
    Vec truth(n);
    for (int i = 0; i < n; ++i) truth[i] = gauss(rng);
    Mat E(n, m);
    for (int e = 0; e < m; ++e)
        for (int i = 0; i < n; ++i) E(i, e) = truth[i] + gauss(rng);

    auto [mean0, anoms0] = mean_and_anomalies(E);
    DenseKfState kf{mean0, covariance(anoms0)};

    TaperSpec global_taper;
    auto taper_fn = [&global_taper](const std::string&) -> const TaperSpec& {
        return global_taper;
    };
    BuildOptions bo;
    bo.enkf = true;
    bo.scheme = DaScheme::ETKF;

    double max_mean_err = 0, max_cov_err = 0;
    std::uniform_int_distribution<int> cell_dist(0, n - 1);
    for (int c = 0; c < cycles; ++c) {
        truth = M * truth;
        E = M * E;
        kf = kf_forecast(kf, M, Mat::Zero(n, n));

        std::vector<int> cells;
        while (static_cast<int>(cells.size()) < p) {
            int cand = cell_dist(rng);
            if (std::find(cells.begin(), cells.end(), cand) == cells.end())
                cells.push_back(cand);
        }
        Mat H = Mat::Zero(p, n);
        Vec y(p);
        for (int k = 0; k < p; ++k) {
            H(k, cells[k]) = 1.0;
            y[k] = truth[cells[k]] + sigma * gauss(rng);
        }

        ObsTable obs = twin::ring_obs(grid, y, sigma, cells);
        ObsQuantities q = twin::make_quantities(H * E, y);
        q.sigma_eff = Vec::Constant(p, sigma);
        TransformField field = build_transform_field(grid, obs, q, taper_fn, bo);
        twin::apply_field_enkf(E, field);

        kf = kf_analysis(kf, H, sigma * sigma * Mat::Identity(p, p), y);

        auto [mean, anoms] = mean_and_anomalies(E);
        Mat P = covariance(anoms);
        TwinCycle tc;
        tc.cycle = c;
        tc.mean_err = (mean - kf.x).norm() / kf.x.norm();
        tc.cov_err = (P - kf.P).norm() / kf.P.norm();
        tc.rmse_f = tc.rmse_a = twin::rmse(mean, truth);
        res.cycles.push_back(tc);
        max_mean_err = std::max(max_mean_err, tc.mean_err);
        max_cov_err = std::max(max_cov_err, tc.cov_err);
    }
    std::ostringstream msg;
    msg << "max mean rel err " << max_mean_err << ", max cov rel err " << max_cov_err;
    res.message = msg.str();
    res.pass = max_mean_err <= 1e-8 && max_cov_err <= 1e-7;
    return res;
}

// ---------------------------------------------------------------------------
// EnOI scenario: Lorenz-96 with a 100-member static ensemble sampled from a
// long free run.
// ---------------------------------------------------------------------------

inline TwinResult twin_enoi_lorenz96(int cycles = 300, std::uint64_t seed = 13) {
    const int n = 40, m_static = 100;
    const double sigma = 1.0;
    TwinResult res;
    res.scenario = "enoi-lorenz96";
    Grid grid = twin::ring_grid(n);
    ModelSpec spec;
    spec.kind = ModelKind::LORENZ96;
    spec.n = n;

    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss;
    Vec state = Vec::Constant(n, 8.0);
    state[1] += 0.02;
    for (int s = 0; s < 1000; ++s) state = model::rk4_step(state, spec.dt, spec.forcing);

    // static ensemble from snapshots of a free run, decorrelated in time
    Mat snapshots(n, m_static);
    for (int e = 0; e < m_static; ++e) {
        for (int s = 0; s < 10; ++s) state = model::rk4_step(state, spec.dt, spec.forcing);
        snapshots.col(e) = state;
    }
    auto [smean, anoms] = mean_and_anomalies(snapshots);
    // shrink the climatological anomalies towards a forecast-error scale
    anoms *= 0.5;

    Vec truth = state;
    for (int s = 0; s < 500; ++s) truth = model::rk4_step(truth, spec.dt, spec.forcing);
    Vec bg = truth;
    for (int i = 0; i < n; ++i) bg[i] += gauss(rng);

    double spacing_km = great_circle_km(grid.lon[0], 0.0, grid.lon[1], 0.0);
    TaperSpec taper_spec({10.0 * spacing_km});
    auto taper_fn = [&taper_spec](const std::string&) -> const TaperSpec& {
        return taper_spec;
    };
    const double rfactor = 2.0;
    std::vector<int> cells(n);
    for (int i = 0; i < n; ++i) cells[i] = i;

    BuildOptions bo;
    bo.enkf = false;
    for (int c = 0; c < cycles; ++c) {
        truth = model::rk4_step(truth, spec.dt, spec.forcing);
        bg = model::rk4_step(bg, spec.dt, spec.forcing);

        Vec y(n);
        for (int i = 0; i < n; ++i) y[i] = truth[i] + sigma * gauss(rng);
        ObsTable obs = twin::ring_obs(grid, y, sigma, cells);

        ObsQuantities q;
        q.HE = anoms.colwise() + bg;  // background plus static anomalies
        q.Hx = bg;
        q.innovation = y - bg;
        q.sigma_eff = Vec::Constant(n, sigma * std::sqrt(rfactor));

        TwinCycle tc;
        tc.cycle = c;
        tc.rmse_f = twin::rmse(bg, truth);

        TransformField field = build_transform_field(grid, obs, q, taper_fn, bo);
        bg = twin::apply_field_enoi(bg, anoms, field);

        tc.rmse_a = twin::rmse(bg, truth);
        res.cycles.push_back(tc);
        if (tc.rmse_a > 10.0 * sigma) {
            res.message = "divergence at cycle " + std::to_string(c);
            return res;
        }
    }
    double sum_f = 0, sum_a = 0;
    int count = 0;
    for (const auto& tc : res.cycles)
        if (tc.cycle >= 50) {
            sum_f += tc.rmse_f;
            sum_a += tc.rmse_a;
            ++count;
        }
    double mean_f = sum_f / count, mean_a = sum_a / count;
    std::ostringstream msg;
    msg << "mean forecast rmse " << mean_f << ", mean analysis rmse " << mean_a;
    res.message = msg.str();
    res.pass = mean_a < mean_f && mean_a < sigma;
    return res;
}

inline TwinResult twin_run(const std::string& scenario) {
    if (scenario == "lorenz96") return twin_lorenz96();
    if (scenario == "linadv-oracle") return twin_linadv_oracle();
    if (scenario == "enoi-lorenz96") return twin_enoi_lorenz96();
    throw error("unknown twin scenario \"" + scenario + "\"");
}

inline void write_twin_csv(const std::string& path, const TwinResult& res) {
    std::ofstream f(path);
    if (!f) throw error("cannot write \"" + path + "\"");
    f << "cycle,rmse_f,rmse_a,spread_a,mean_err,cov_err\n";
    for (const auto& tc : res.cycles)
        f << tc.cycle << ',' << tc.rmse_f << ',' << tc.rmse_a << ',' << tc.spread_a
          << ',' << tc.mean_err << ',' << tc.cov_err << '\n';
}

}  // namespace ekc
