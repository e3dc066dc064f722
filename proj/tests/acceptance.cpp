// Acceptance checks: each criterion prints exactly one PASS/FAIL line and the
// process exits nonzero if any of them fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "ekc/diag.hpp"
#include "ekc/ensemble.hpp"
#include "ekc/locality.hpp"
#include "ekc/obsprep.hpp"
#include "ekc/oracle.hpp"
#include "ekc/prm.hpp"
#include "ekc/twin.hpp"
#include "ekc/update.hpp"

using namespace ekc;

namespace {

int failures = 0;

void run_check(const std::string& name,
               const std::function<std::pair<bool, std::string>()>& body) {
    bool ok = false;
    std::string detail;
    try {
        auto [o, d] = body();
        ok = o;
        detail = d;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    std::printf("%s: %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++failures;
}

std::string num(double v) {
    std::ostringstream o;
    o << v;
    return o.str();
}

// ---------------------------------------------------------------------------
// 1. The cycling ensemble filter reproduces the exact dense filter when run
//    at full rank without localisation or inflation.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_kalman_equivalence() {
    TwinResult res = twin_linadv_oracle(20, 11);
    return {res.pass, res.message};
}

// ---------------------------------------------------------------------------
// 2. All ensemble-transform constructions reproduce the exact analysis
//    covariance across 200 random instances.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_transform_suite() {
    double worst = 0;
    int count = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto rng = make_rng(seed);
        std::normal_distribution<double> gauss;
        int n = 5, m = 30, p = 4;
        Mat E(n, m);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < m; ++c) E(r, c) = gauss(rng);
        auto [mean, A] = mean_and_anomalies(E);
        Mat P = covariance(A);
        Mat H(p, n);
        for (int r = 0; r < p; ++r)
            for (int c = 0; c < n; ++c) H(r, c) = gauss(rng);
        Mat L(p, p);
        for (int r = 0; r < p; ++r)
            for (int c = 0; c < p; ++c) L(r, c) = gauss(rng);
        Mat R = L * L.transpose() + 0.1 * Mat::Identity(p, p);
        Mat Rs = 0.64 * Mat::Identity(p, p);

        auto pa_for = [&](const Mat& Robs) {
            Mat M = H * P * H.transpose() + Robs;
            Mat K = P * H.transpose() * M.ldlt().solve(Mat::Identity(p, p));
            Mat Pa = (Mat::Identity(n, n) - K * H) * P;
            return std::pair{K, Mat((Pa + Pa.transpose()) / 2.0)};
        };
        auto cov_of = [](const Mat& anoms) {
            return Mat(anoms * anoms.transpose() /
                       (static_cast<double>(anoms.cols()) - 1));
        };

        auto [K, Pa] = pa_for(R);
        Mat HA = H * A;
        Mat HPHt = H * P * H.transpose();
        worst = std::max(worst,
                         (cov_of(etm_left_sqrt(K, H) * A) - Pa).cwiseAbs().maxCoeff());
        worst = std::max(
            worst, (cov_of(etm_left_inv_sqrt(P, H, R) * A) - Pa).cwiseAbs().maxCoeff());
        worst = std::max(
            worst,
            (cov_of(A * etm_right_sqrt(HA, HPHt, R, m)) - Pa).cwiseAbs().maxCoeff());
        count += 3;

        auto [Ks, Pas] = pa_for(Rs);
        (void)Ks;
        worst = std::max(
            worst,
            (cov_of(A * etm_andrews(HA, HPHt, Rs, m)) - Pas).cwiseAbs().maxCoeff());
        count += 1;
    }
    bool ok = count == 200 && worst < 1e-8;
    return {ok, std::to_string(count) + " instances, worst error " + num(worst)};
}

// ---------------------------------------------------------------------------
// 3. The deterministic scheme matches the square-root scheme to second order
//    in the scaled anomalies.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_denkf_second_order() {
    auto diff_at = [](double scale) {
        auto rng = make_rng(3);
        std::normal_distribution<double> gauss;
        Mat S(5, 4);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 4; ++c) S(r, c) = scale * gauss(rng);
        Vec s = Vec::Zero(5);
        Mat a = compute_transform(S, s, DaScheme::ETKF).T_R;
        Mat b = compute_transform(S, s, DaScheme::DENKF).T_R;
        return (a - b).cwiseAbs().maxCoeff();
    };
    // agreement through second order leaves a fourth-order residual, so
    // doubling the scale multiplies the difference by ~16
    double ratio = diff_at(0.02) / diff_at(0.01);
    bool ok = ratio > 14.5 && ratio < 17.5 && diff_at(0.01) < 1e-6;
    return {ok, "residual scaling ratio " + num(ratio)};
}

// ---------------------------------------------------------------------------
// 4. The localisation taper has the prescribed shape.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_taper_shape() {
    using locality::taper0;
    bool ok = taper0(0.0) == 1.0;
    ok = ok && std::abs(taper0(1.0) - 0.208333) < 1e-6;
    ok = ok && std::abs(taper0(2.0)) < 1e-12 && taper0(2.1) == 0.0;
    double prev = taper0(0.0);
    for (int k = 1; k <= 1000 && ok; ++k) {
        double v = taper0(2.0 * k / 1000.0);
        ok = v >= -1e-14 && v <= prev + 1e-12;
        prev = v;
    }
    TaperSpec spec({500.0});
    double g = taper(500.0 / 3.5, spec);
    ok = ok && std::abs(g - 0.6065) < 0.02;
    return {ok, "taper(R/3.5) = " + num(g)};
}

// ---------------------------------------------------------------------------
// 5. Observation-error moderation keeps every scalar increment within K
//    forecast spreads and never sharpens the error.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_moderation_bound() {
    auto rng = make_rng(29);
    std::uniform_real_distribution<double> un(0.01, 10.0);
    std::uniform_real_distribution<double> ud(-100.0, 100.0);
    double worst_excess = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        double sf2 = un(rng), so2 = un(rng), d = ud(rng);
        double kfactor = un(rng);
        double mod = moderate_obs_error(so2, sf2, d, kfactor);
        if (mod < so2 - 1e-9) return {false, "variance sharpened"};
        double dx = std::abs(sf2 * d / (sf2 + mod));
        double bound = kfactor * std::sqrt(sf2);
        worst_excess = std::max(worst_excess, dx / bound);
    }
    bool ok = worst_excess <= 1.0 + 1e-9;
    return {ok, "worst |dx| / (K sigma_f) = " + num(worst_excess)};
}

// ---------------------------------------------------------------------------
// 6. Superobing conserves the precision-weighted mean and total precision,
//    and the merged location stays inside the hull of its parts.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_superob_conservation() {
    std::vector<double> lon(10), lat(10);
    for (int i = 0; i < 10; ++i) lon[i] = i;
    for (int j = 0; j < 10; ++j) lat[j] = j;
    Grid grid = make_grid(lon, lat, {0.0}, std::vector<double>(100, 10.0),
                          std::vector<int>(100, 1));
    auto rng = make_rng(31);
    std::uniform_real_distribution<double> upos(0.0, 1.9);
    std::uniform_real_distribution<double> uval(-1.0, 1.0);
    std::uniform_real_distribution<double> usig(0.05, 0.5);

    for (int trial = 0; trial < 200; ++trial) {
        int count = 2 + trial % 9;
        ObsTable obs;
        double wsum = 0, wval = 0, vmin = 1e9, vmax = -1e9, fmin = 1e9, fmax = -1e9;
        for (int k = 0; k < count; ++k) {
            Observation o;
            o.type = "V";
            o.fi = upos(rng);
            o.fj = upos(rng);
            o.value = uval(rng);
            o.std = usig(rng);
            obs.push_back(o);
            double w = 1.0 / (o.std * o.std);
            wsum += w;
            wval += w * o.value;
            vmin = std::min(vmin, o.value);
            vmax = std::max(vmax, o.value);
            fmin = std::min(fmin, o.fi);
            fmax = std::max(fmax, o.fi);
        }
        ObsTable merged = superob(obs, grid, 2);
        if (merged.size() != 1) return {false, "cluster did not merge"};
        const Observation& s = merged[0];
        if (std::abs(1.0 / (s.std * s.std) - wsum) > 1e-9 * wsum)
            return {false, "total precision not conserved"};
        if (std::abs(s.value - wval / wsum) > 1e-12)
            return {false, "weighted mean not conserved"};
        if (s.value < vmin - 1e-12 || s.value > vmax + 1e-12)
            return {false, "merged value left the hull"};
        if (s.fi < fmin - 1e-12 || s.fi > fmax + 1e-12)
            return {false, "merged position left the hull"};
        if (s.n_merged != count) return {false, "merge count wrong"};
    }
    return {true, "200 random clusters conserved"};
}

// ---------------------------------------------------------------------------
// 7. State cells beyond the taper support of every observation come out of
//    the update bit-identical.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_zero_impact() {
    int ni = 16, nj = 12, m = 6;
    std::vector<double> lon(ni), lat(nj);
    for (int i = 0; i < ni; ++i) lon[i] = i;
    for (int j = 0; j < nj; ++j) lat[j] = j;
    Grid grid = make_grid(lon, lat, {0.0}, std::vector<double>(ni * nj, 10.0),
                          std::vector<int>(ni * nj, 1));

    auto rng = make_rng(37);
    std::normal_distribution<double> gauss;
    ObsTable obs;
    ObsQuantities q;
    int p = 12;
    q.HE.resize(p, m);
    q.Hx.resize(p);
    q.innovation.resize(p);
    q.sigma_eff.resize(p);
    for (int k = 0; k < p; ++k) {
        Observation o;
        o.type = "V";
        o.lon = 2.0 + 0.2 * (k % 4);
        o.lat = 2.0 + 0.2 * (k / 4);
        o.fi = o.lon;
        o.fj = o.lat;
        o.value = gauss(rng);
        o.std = 0.3;
        obs.push_back(o);
        for (int c = 0; c < m; ++c) q.HE(k, c) = gauss(rng);
        q.Hx[k] = q.HE.row(k).mean();
        q.innovation[k] = o.value - q.Hx[k];
        q.sigma_eff[k] = o.std;
    }
    TaperSpec spec({400.0});
    auto taper_fn = [&spec](const std::string&) -> const TaperSpec& { return spec; };
    BuildOptions bo;
    bo.stride = 2;
    TransformField field = build_transform_field(grid, obs, q, taper_fn, bo);

    std::vector<std::vector<float>> members(m);
    for (auto& f : members) {
        f.resize(static_cast<size_t>(ni) * nj);
        for (auto& x : f) x = static_cast<float>(gauss(rng));
    }
    auto orig = members;
    update_field_enkf(members, grid, field, true);

    // columns i >= 10 are farther than 600 km from every observation
    bool untouched = true, touched = false;
    for (int e = 0; e < m; ++e)
        for (int j = 0; j < nj; ++j)
            for (int i = 0; i < ni; ++i) {
                bool same =
                    members[e][j * ni + i] == orig[e][j * ni + i];
                if (i >= 10 && !same) untouched = false;
                if (i < 10 && !same) touched = true;
            }
    return {untouched && touched,
            untouched ? "remote cells bit-identical" : "remote cells modified"};
}

// ---------------------------------------------------------------------------
// 8. Capped inflation never deflates and never exceeds the multiple, and the
//    ensemble mean is preserved.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_inflation_capping() {
    auto rng = make_rng(41);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> umult(1.0, 1.5);
    for (int trial = 0; trial < 200; ++trial) {
        int m = 3 + trial % 6;
        size_t nelem = 50;
        std::vector<std::vector<float>> fc(m), an(m);
        for (int c = 0; c < m; ++c) {
            fc[c].resize(nelem);
            an[c].resize(nelem);
            for (size_t e = 0; e < nelem; ++e) {
                fc[c][e] = static_cast<float>(gauss(rng));
                an[c][e] = static_cast<float>((0.1 + 0.01 * (e % 30)) * gauss(rng));
            }
        }
        std::vector<double> mean0(nelem, 0.0);
        for (size_t e = 0; e < nelem; ++e) {
            for (int c = 0; c < m; ++c) mean0[e] += an[c][e];
            mean0[e] /= m;
        }
        Inflation inf;
        inf.mult = umult(rng);
        inf.cap = 0.5;
        std::vector<float> applied;
        inflate(fc, an, inf, &applied);
        for (size_t e = 0; e < nelem; ++e) {
            if (applied[e] < 1.0f || applied[e] > static_cast<float>(inf.mult) + 1e-6f)
                return {false, "factor outside [1, mult]"};
            double mean1 = 0;
            for (int c = 0; c < m; ++c) mean1 += an[c][e];
            mean1 /= m;
            if (std::abs(mean1 - mean0[e]) > 1e-5)
                return {false, "mean not preserved"};
        }

        // hand-checked capping values on a spread ratio of 2 and 1.04
        std::vector<std::vector<float>> f2 = {{-1.0f}, {1.0f}};
        std::vector<std::vector<float>> a2 = {{-0.5f}, {0.5f}};
        Inflation i2{1.06, 0.5, false};
        std::vector<float> ap;
        inflate(f2, a2, i2, &ap);
        if (std::abs(ap[0] - 1.06f) > 1e-6) return {false, "cap at multiple wrong"};
        std::vector<std::vector<float>> a3 = {{-1.0f / 1.04f}, {1.0f / 1.04f}};
        Inflation i3{1.2, 0.5, false};
        inflate(f2, a3, i3, &ap);
        if (std::abs(ap[0] - 1.02f) > 1e-4) return {false, "damped ratio wrong"};
    }
    return {true, "200 fuzzed ensembles stayed within bounds"};
}

// ---------------------------------------------------------------------------
// 9. The cycling assimilation twin tracks the chaotic truth.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_lorenz96_twin() {
    auto t0 = std::chrono::steady_clock::now();
    TwinResult res = twin_lorenz96(500, 7);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                      .count();
    bool ok = res.pass && secs < 60.0;
    return {ok, res.message + ", " + num(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 10. The static-ensemble scheme beats its own forecast, and asynchronous
//     windows bin observation times correctly.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_enoi_and_slots() {
    TwinResult res = twin_enoi_lorenz96(300, 13);
    if (!res.pass) return {false, res.message};

    // hand-binned asynchronous slots around an analysis at t = 6085.5 with a
    // one-day window
    struct Case { double t; int slot; };
    const Case cases[] = {{6085.5, 0}, {6085.2, 0},  {6085.99, 0}, {6086.01, 1},
                          {6084.4, -1}, {6083.3, -2}, {6086.6, 1},  {6087.8, 2}};
    for (const auto& c : cases)
        if (assign_slot(c.t, 6085.5, 1.0) != c.slot)
            return {false, "slot for t=" + num(c.t) + " wrong"};
    // a quarter-day window sharpens the binning
    if (assign_slot(6085.5 + 0.13, 6085.5, 0.25) != 1)
        return {false, "quarter-day slot wrong"};
    return {true, res.message};
}

// ---------------------------------------------------------------------------
// 11. A point log contains everything needed to recompute its own transform.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_pointlog_reproducibility() {
    std::vector<double> lon(8), lat(8);
    for (int i = 0; i < 8; ++i) lon[i] = i;
    for (int j = 0; j < 8; ++j) lat[j] = j;
    Grid grid = make_grid(lon, lat, {0.0}, std::vector<double>(64, 10.0),
                          std::vector<int>(64, 1));
    auto rng = make_rng(43);
    std::normal_distribution<double> gauss;
    ObsTable obs;
    int p = 5, m = 6;
    ObsQuantities q;
    q.HE.resize(p, m);
    q.Hx.resize(p);
    q.innovation.resize(p);
    q.sigma_eff.resize(p);
    for (int k = 0; k < p; ++k) {
        Observation o;
        o.type = "V";
        o.lon = 2.0 + 0.3 * k;
        o.lat = 2.0 + 0.2 * k;
        o.fi = o.lon;
        o.fj = o.lat;
        o.value = gauss(rng);
        o.std = 0.4;
        obs.push_back(o);
        for (int c = 0; c < m; ++c) q.HE(k, c) = gauss(rng);
        q.Hx[k] = q.HE.row(k).mean();
        q.innovation[k] = o.value - q.Hx[k];
        q.sigma_eff[k] = o.std;
    }
    TaperSpec spec({500.0});
    auto taper_fn = [&spec](const std::string&) -> const TaperSpec& { return spec; };
    DaConfig cfg;
    cfg.scheme = DaScheme::ETKF;
    BuildOptions bo;
    bo.scheme = cfg.scheme;
    TransformField field = build_transform_field(grid, obs, q, taper_fn, bo);
    PointLogRecord rec = build_pointlog(2, 2, grid, obs, q, taper_fn, field, cfg);

    auto path = std::filesystem::temp_directory_path() /
                ("ekc_acc_pl_" + std::to_string(::getpid()) + ".json");
    write_pointlog(path.string(), rec);
    PointLogRecord back = read_pointlog(path.string());
    std::filesystem::remove(path);

    LocalTransform re = compute_transform(back.S, back.s, cfg.scheme, cfg.alpha);
    double err = (re.X5 - back.X5).cwiseAbs().maxCoeff();
    double err2 = (back.X5 - rec.X5).cwiseAbs().maxCoeff();
    bool ok = err < 1e-9 && err2 == 0.0;
    return {ok, "recomputed transform error " + num(err)};
}

// ---------------------------------------------------------------------------
// 12. The configuration parser reads the documented syntax and round-trips
//     through its own serializer.
// ---------------------------------------------------------------------------
std::pair<bool, std::string> check_parser_golden() {
    const std::string text =
        "# main configuration\n"
        "MODE = EnKF\n"
        "SCHEME = ETKF\n"
        "ALPHA = 0.9\n"
        "MODEL = model.prm\n"
        "GRID = grid.prm\n"
        "OBSTYPES = obstypes.prm\n"
        "OBS = obs.prm\n"
        "DATE = 6085.5\n"
        "ENSDIR = ens\n"
        "KFACTOR = 2\n"
        "RFACTOR = 1.5\n"
        "LOCRAD = 150 500\n"
        "WEIGHT = 0.9 0.1\n"
        "STRIDE = 3\n"
        "SOBSTRIDE = 2\n"
        "INFLATION = 1.06 0.5\n"
        "ZSTATINTS = [0 100] [100 500]\n"
        "REGION = Tropics -180 180 -30 30\n"
        "POINTLOG 17 30\n"
        "BADBATCHES = SLA 0.06 0.10 500\n";
    DaConfig c = parse_main(text);
    bool ok = c.mode == DaMode::ENKF && c.scheme == DaScheme::ETKF &&
              c.alpha == 0.9 && c.date == 6085.5 && c.kfactor == 2.0 &&
              c.rfactor == 1.5 && c.stride == 3 && c.sobstride == 2 &&
              c.inflation.mult == 1.06 && c.inflation.cap == 0.5 &&
              !c.inflation.plain && c.locrad == std::vector<double>{150.0, 500.0} &&
              std::abs(c.locweight[0] - 0.9) < 1e-12 &&
              c.zstatints.size() == 2 && c.regions.size() == 1 &&
              c.regions[0].name == "Tropics" && c.regions[0].lat2 == 30 &&
              c.pointlogs == std::vector<std::pair<int, int>>{{17, 30}} &&
              c.badbatches.size() == 1 && c.badbatches[0].min_nobs == 500;
    if (!ok) return {false, "golden values not reproduced"};

    DaConfig rt = parse_main(serialize_main(c));
    ok = rt.mode == c.mode && rt.scheme == c.scheme && rt.alpha == c.alpha &&
         rt.date == c.date && rt.kfactor == c.kfactor && rt.stride == c.stride &&
         rt.inflation.mult == c.inflation.mult && rt.locrad == c.locrad &&
         rt.locweight == c.locweight && rt.zstatints == c.zstatints &&
         rt.badbatches.size() == c.badbatches.size();
    if (!ok) return {false, "serializer round-trip drifted"};

    // a single-valued inflation implies a unit cap
    DaConfig one = parse_main(
        "MODE = EnKF\nMODEL = m\nGRID = g\nOBSTYPES = t\nOBS = o\nDATE = 0\n"
        "ENSDIR = e\nINFLATION = 1.06\n");
    if (one.inflation.cap != 1.0) return {false, "single-value inflation cap wrong"};

    // rejected inputs
    for (const std::string bad :
         {std::string("MODE = other\n"),
          std::string("MODE = EnKF\nMODE = EnKF\n"),
          std::string("MODE = EnKF\nNOSUCHKEY = 1\n")}) {
        try {
            parse_main(bad);
            return {false, "malformed input accepted"};
        } catch (const error&) {
        }
    }
    return {true, "golden block, round-trip and rejections verified"};
}

}  // namespace

int main() {
    run_check("exact-filter-equivalence", check_kalman_equivalence);
    run_check("transform-covariance-suite", check_transform_suite);
    run_check("denkf-second-order", check_denkf_second_order);
    run_check("taper-shape", check_taper_shape);
    run_check("moderation-increment-bound", check_moderation_bound);
    run_check("superob-conservation", check_superob_conservation);
    run_check("localisation-zero-impact", check_zero_impact);
    run_check("inflation-capping", check_inflation_capping);
    run_check("lorenz96-twin", check_lorenz96_twin);
    run_check("enoi-and-async-slots", check_enoi_and_slots);
    run_check("pointlog-reproducibility", check_pointlog_reproducibility);
    run_check("parser-golden", check_parser_golden);

    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
