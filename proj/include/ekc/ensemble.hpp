#pragma once

#include "ekc/core.hpp"

namespace ekc {

// Ensemble algebra. Columns are members; the mean and anomalies are
// recomputed on demand rather than cached.

inline std::pair<Vec, Mat> mean_and_anomalies(const Mat& ensemble) {
    if (ensemble.cols() < 2) throw error("ensemble: m must be >= 2");
    Vec mean = ensemble.rowwise().mean();
    Mat anoms = ensemble.colwise() - mean;
    return {std::move(mean), std::move(anoms)};
}

// Dense covariance A A^T / (m-1); oracle-scale use only.
inline Mat covariance(const Mat& anoms) {
    if (anoms.cols() < 2) throw error("covariance: m must be >= 2");
    if (anoms.rows() > 200) throw error("covariance: dense form restricted to n <= 200");
    return anoms * anoms.transpose() / (static_cast<double>(anoms.cols()) - 1);
}

inline Mat apply_x5(const Mat& ensemble, const Mat& x5) {
    if (x5.rows() != ensemble.cols() || x5.cols() != ensemble.cols())
        throw error("apply_x5: shape mismatch");
    return ensemble * x5;
}

inline Vec apply_w(const Vec& mean, const Mat& anoms, const Vec& w) {
    if (w.size() != anoms.cols() || mean.size() != anoms.rows())
        throw error("apply_w: shape mismatch");
    return mean + anoms * w;
}

// Element-wise ensemble spread (std with 1/(m-1) normalisation).
inline Vec spread(const Mat& anoms) {
    if (anoms.cols() < 2) throw error("spread: m must be >= 2");
    return (anoms.array().square().rowwise().sum() /
            (static_cast<double>(anoms.cols()) - 1))
        .sqrt()
        .matrix();
}

// Replace the ensemble by mean + A Up for a mean-preserving unitary Up.
// Leaves the mean exactly and the covariance numerically unchanged.
inline Mat redraw(const Mat& ensemble, const Mat& up, double tol = 1e-8) {
    int m = static_cast<int>(ensemble.cols());
    if (up.rows() != m || up.cols() != m) throw error("redraw: shape mismatch");
    if ((up * up.transpose() - Mat::Identity(m, m)).cwiseAbs().maxCoeff() > tol)
        throw error("redraw: transform is not unitary");
    if ((up * Vec::Ones(m) - Vec::Ones(m)).cwiseAbs().maxCoeff() > tol)
        throw error("redraw: transform does not preserve the mean");
    auto [mean, anoms] = mean_and_anomalies(ensemble);
    return (mean * Eigen::RowVectorXd::Ones(m)) + anoms * up;
}

// A random mean-preserving rotation: any orthonormal basis change that fixes
// the 1-direction satisfies the redraw constraints.
inline Mat random_mean_preserving_rotation(int m, std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss;
    Mat b(m, m);
    b.col(0) = Vec::Ones(m) / std::sqrt(static_cast<double>(m));
    for (int c = 1; c < m; ++c)
        for (int r = 0; r < m; ++r) b(r, c) = gauss(rng);
    Eigen::HouseholderQR<Mat> qr(b);
    Mat q = qr.householderQ();
    if (q.col(0).dot(b.col(0)) < 0) q = -q;
    Mat rot(m, m);
    rot.col(0) = Vec::Zero(m);
    rot(0, 0) = 1.0;
    // rotate only within the orthogonal complement of 1
    Mat inner = Mat::Identity(m - 1, m - 1);
    for (int c = 1; c < m - 1; ++c)
        for (int r = c + 1; r < m - 1; ++r) {
            double theta = gauss(rng);
            Mat g = Mat::Identity(m - 1, m - 1);
            g(c, c) = std::cos(theta);
            g(r, r) = std::cos(theta);
            g(c, r) = -std::sin(theta);
            g(r, c) = std::sin(theta);
            inner = inner * g;
        }
    Mat full = Mat::Identity(m, m);
    full.block(1, 1, m - 1, m - 1) = inner;
    return q * full * q.transpose();
}

}  // namespace ekc
