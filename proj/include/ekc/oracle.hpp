#pragma once

#include "ekc/core.hpp"

namespace ekc {

// Exact dense Kalman-filter references for testing. Small dimensions only;
// no performance concerns apply.

struct DenseKfState {
    Vec x;
    Mat P;
};

namespace oracle {

inline void check_state(const DenseKfState& s) {
    if (s.P.rows() != s.P.cols() || s.P.rows() != s.x.size())
        throw error("kf: shape mismatch");
    if ((s.P - s.P.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw error("kf: covariance not symmetric");
}

// Symmetric PSD square root / inverse square root.
inline Mat sym_sqrt(const Mat& a, bool inverse = false) {
    Eigen::SelfAdjointEigenSolver<Mat> es((a + a.transpose()) / 2.0);
    Vec lam = es.eigenvalues().cwiseMax(0.0);
    Vec d = inverse ? lam.cwiseSqrt().cwiseInverse() : Vec(lam.cwiseSqrt());
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// General principal square root through diagonalisation: X^{1/2} = V L^{1/2} V^{-1}.
inline Mat gen_sqrt(const Mat& a) {
    Eigen::EigenSolver<Mat> es(a);
    if (es.info() != Eigen::Success) throw error("gen_sqrt: eigendecomposition failed");
    Eigen::MatrixXcd v = es.eigenvectors();
    Eigen::VectorXcd lam = es.eigenvalues();
    Eigen::VectorXcd r = lam.cwiseSqrt();
    Eigen::MatrixXcd root =
        v * r.asDiagonal() * v.inverse();
    if (root.imag().cwiseAbs().maxCoeff() > 1e-8)
        throw error("gen_sqrt: square root is not real");
    return root.real();
}

}  // namespace oracle

inline DenseKfState kf_forecast(const DenseKfState& s, const Mat& M, const Mat& Q) {
    oracle::check_state(s);
    if (M.cols() != s.x.size() || Q.rows() != M.rows() || Q.cols() != M.rows())
        throw error("kf_forecast: shape mismatch");
    DenseKfState out;
    out.x = M * s.x;
    out.P = M * s.P * M.transpose() + Q;
    out.P = (out.P + out.P.transpose()) / 2.0;
    return out;
}

inline DenseKfState kf_analysis(const DenseKfState& s, const Mat& H, const Mat& R,
                                const Vec& y) {
    oracle::check_state(s);
    Eigen::Index n = s.x.size(), p = y.size();
    if (H.rows() != p || H.cols() != n || R.rows() != p || R.cols() != p)
        throw error("kf_analysis: shape mismatch");
    Mat inn_cov = H * s.P * H.transpose() + R;
    Eigen::LDLT<Mat> ldlt(inn_cov);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        !(ldlt.vectorD().minCoeff() > 0.0))
        throw error("kf_analysis: singular innovation covariance");
    Mat K = s.P * H.transpose() * ldlt.solve(Mat::Identity(p, p));
    DenseKfState out;
    out.x = s.x + K * (y - H * s.x);
    out.P = (Mat::Identity(n, n) - K * H) * s.P;
    out.P = (out.P + out.P.transpose()) / 2.0;
    return out;
}

// Left-multiplied ensemble transforms: A^a = T_L A^f.
inline Mat etm_left_sqrt(const Mat& K, const Mat& H) {
    Eigen::Index n = H.cols();
    return oracle::gen_sqrt(Mat::Identity(n, n) - K * H);
}

inline Mat etm_left_inv_sqrt(const Mat& P, const Mat& H, const Mat& R) {
    Eigen::Index n = P.rows();
    Mat a = Mat::Identity(n, n) +
            P * H.transpose() * R.ldlt().solve(Mat(H));
    Mat root = oracle::gen_sqrt(a);
    return root.partialPivLu().solve(Mat::Identity(n, n));
}

// Right-multiplied transforms: A^a = A^f T_R.
inline Mat etm_right_sqrt(const Mat& HA, const Mat& HPHt, const Mat& R, int m) {
    Mat M = HPHt + R;
    Mat a = Mat::Identity(m, m) -
            HA.transpose() * M.ldlt().solve(Mat(HA)) / (static_cast<double>(m) - 1);
    return oracle::gen_sqrt(a);
}

inline Mat etm_andrews(const Mat& HA, const Mat& HPHt, const Mat& R, int m) {
    Mat M = HPHt + R;
    Mat Mh = oracle::sym_sqrt(M);
    Mat Rh = oracle::sym_sqrt(R);
    Mat inner = (Mh + Rh).partialPivLu().solve(Mat(HA));
    Mat minv_half = oracle::sym_sqrt(M, true);
    return Mat::Identity(m, m) -
           HA.transpose() * minv_half * inner / (static_cast<double>(m) - 1);
}

}  // namespace ekc
