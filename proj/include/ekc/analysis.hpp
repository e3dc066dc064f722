#pragma once

#include <functional>

#include "ekc/core.hpp"
#include "ekc/prm.hpp"

namespace ekc {

// Standardised observation quantities. S is stored with one row per
// observation (transposed relative to the usual m-column convention); all
// formulas below are written for that layout.
struct StdObs {
    Vec s;  // [p]
    Mat S;  // [p x m]
};

struct LocalTransform {
    Vec w;    // [m]
    Mat T_R;  // [m x m] (empty for EnOI)
    Mat X5;   // [m x m] (empty for EnOI)
    double dfs = 0;
    double srf = 0;
};

// ---------------------------------------------------------------------------
// Adaptive moderation: widen the observation error variance so that the
// scalar obs-space increment stays below K times the forecast spread.
// All arguments are variances except the innovation d.
// ---------------------------------------------------------------------------

inline double moderate_obs_error(double sigma_obs2, double sigma_f2, double innovation,
                                 double kfactor) {
    if (!(kfactor > 0)) throw error("moderate_obs_error: K must be > 0");
    double sum = sigma_f2 + sigma_obs2;
    return std::sqrt(sum * sum +
                     sigma_f2 * innovation * innovation / (kfactor * kfactor)) -
           sigma_f2;
}

// ---------------------------------------------------------------------------
// Standardisation: s_o = f_o (y_o - Hx_o) / (sigma_o sqrt(m-1)),
//                  S_o = f_o (HE_o - Hx_o) / (sigma_o sqrt(m-1)).
// sigma_eff carries the effective error std per observation (R-factors and
// moderation already applied); taper holds the localisation coefficients.
// ---------------------------------------------------------------------------

inline StdObs standardize(const Mat& HE, const Vec& Hx, const Vec& innovation,
                          const Vec& sigma_eff, const Vec& taper) {
    Eigen::Index p = HE.rows();
    Eigen::Index m = HE.cols();
    if (Hx.size() != p || innovation.size() != p || sigma_eff.size() != p ||
        taper.size() != p)
        throw error("standardize: shape mismatch");
    double norm = std::sqrt(static_cast<double>(m) - 1.0);
    StdObs so;
    so.s.resize(p);
    so.S.resize(p, m);
    for (Eigen::Index o = 0; o < p; ++o) {
        if (!(sigma_eff[o] > 0)) throw error("standardize: sigma must be > 0");
        double c = taper[o] / (sigma_eff[o] * norm);
        so.s[o] = c * innovation[o];
        so.S.row(o) = c * (HE.row(o).array() - Hx[o]).matrix();
    }
    return so;
}

// ---------------------------------------------------------------------------
// Gain G = (I + S^T S)^-1 S^T = S^T (I + S S^T)^-1, computed through the
// smaller of the two inversions.
// ---------------------------------------------------------------------------

inline Mat compute_gain(const Mat& S) {
    Eigen::Index p = S.rows(), m = S.cols();
    if (p == 0) return Mat::Zero(m, 0);
    if (p >= m) {
        Mat lhs = Mat::Identity(m, m) + S.transpose() * S;
        return lhs.ldlt().solve(S.transpose());
    }
    Mat lhs = Mat::Identity(p, p) + S * S.transpose();
    return (lhs.ldlt().solve(S)).transpose();
}

namespace analysis {

// Symmetric inverse square root of I + alpha S^T S. The matrix is >= I
// analytically, so eigenvalues are clamped below at 1 to kill round-off.
inline Mat inv_sqrt_i_plus(const Mat& StS, double alpha) {
    Eigen::Index m = StS.rows();
    Mat a = Mat::Identity(m, m) + alpha * StS;
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    Vec lam = es.eigenvalues().cwiseMax(1.0);
    return es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

inline Mat assemble_x5(const Vec& w, const Mat& T_R) {
    Eigen::Index m = w.size();
    Mat ones = Mat::Ones(m, m) / static_cast<double>(m);
    Mat centering = Mat::Identity(m, m) - ones;
    return ones + centering * (w * Eigen::RowVectorXd::Ones(m) + T_R);
}

}  // namespace analysis

// ---------------------------------------------------------------------------
// ETKF / DEnKF transform with the ALPHA moderation of spread reduction.
// ---------------------------------------------------------------------------

inline LocalTransform compute_transform(const Mat& S, const Vec& s, DaScheme scheme,
                                        double alpha = 1.0) {
    if (alpha < 0 || alpha > 1) throw error("compute_transform: alpha must be in [0,1]");
    Eigen::Index m = S.cols();
    LocalTransform t;
    Mat G = compute_gain(S);
    t.w = G * s;
    Mat GS = G * S;
    if (scheme == DaScheme::ETKF) {
        t.T_R = analysis::inv_sqrt_i_plus(S.transpose() * S, alpha);
    } else {
        t.T_R = Mat::Identity(m, m) - (alpha / 2.0) * GS;
    }
    t.X5 = analysis::assemble_x5(t.w, t.T_R);
    t.dfs = GS.trace();
    double signal = (S.transpose() * S).trace();
    t.srf = t.dfs > 0 ? std::sqrt(signal / t.dfs) - 1.0 : 0.0;
    return t;
}

// EnOI: mean-update weights only; the anomalies are static.
inline Vec enoi_weights(const Mat& S, const Vec& s) { return compute_gain(S) * s; }

// ---------------------------------------------------------------------------
// Ensemble observations. The observation operator is supplied as a callable
// on a full state column; the finite-difference variant evaluates it on
// x 1^T + eps A and divides the anomalies back by eps.
// ---------------------------------------------------------------------------

enum class HVariant { SPREAD, FINITE_DIFF };

inline Mat ensemble_observations(const Mat& ensemble,
                                 const std::function<Vec(const Vec&)>& hop,
                                 HVariant variant = HVariant::SPREAD,
                                 double eps = 1e-3) {
    Eigen::Index m = ensemble.cols();
    if (variant == HVariant::SPREAD) {
        Mat HE;
        for (Eigen::Index j = 0; j < m; ++j) {
            Vec h = hop(ensemble.col(j));
            if (j == 0) HE.resize(h.size(), m);
            HE.col(j) = h;
        }
        return HE;
    }
    Vec mean = ensemble.rowwise().mean();
    Mat anoms = ensemble.colwise() - mean;
    Vec hmean = hop(mean);
    Mat HE(hmean.size(), m);
    for (Eigen::Index j = 0; j < m; ++j) {
        Vec h = hop(mean + eps * anoms.col(j));
        HE.col(j) = hmean + (h - hmean) / eps;
    }
    return HE;
}

}  // namespace ekc
