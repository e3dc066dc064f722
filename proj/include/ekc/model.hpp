#pragma once

#include "ekc/core.hpp"

namespace ekc {

enum class ModelKind { LORENZ96, LINADV };

struct ModelSpec {
    ModelKind kind = ModelKind::LORENZ96;
    int n = 40;
    double forcing = 8.0;      // Lorenz-96 F
    double dt = 0.05;          // RK4 step
    int steps_per_cycle = 1;
    double q_std = 0.0;        // additive model-noise std; 0 = perfect model
};

namespace model {

inline Vec lorenz96_rhs(const Vec& x, double forcing) {
    int n = static_cast<int>(x.size());
    Vec d(n);
    for (int i = 0; i < n; ++i) {
        int im1 = (i - 1 + n) % n, im2 = (i - 2 + n) % n, ip1 = (i + 1) % n;
        d[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
    }
    return d;
}

inline Vec rk4_step(const Vec& x, double dt, double forcing) {
    Vec k1 = lorenz96_rhs(x, forcing);
    Vec k2 = lorenz96_rhs(x + 0.5 * dt * k1, forcing);
    Vec k3 = lorenz96_rhs(x + 0.5 * dt * k2, forcing);
    Vec k4 = lorenz96_rhs(x + dt * k3, forcing);
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
}

}  // namespace model

// One-cell cyclic shift; exactly linear with a known (permutation) matrix.
inline Mat linadv_matrix(int n) {
    Mat m = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) m((i + 1) % n, i) = 1.0;
    return m;
}

// Advance the state by one cycle (deterministic part only).
inline Vec step(const ModelSpec& spec, const Vec& state) {
    if (state.size() != spec.n) throw error("step: state size mismatch");
    Vec x = state;
    if (spec.kind == ModelKind::LINADV) {
        for (int s = 0; s < spec.steps_per_cycle; ++s) {
            Vec y(spec.n);
            for (int i = 0; i < spec.n; ++i) y[(i + 1) % spec.n] = x[i];
            x = y;
        }
    } else {
        if (spec.n < 4) throw error("Lorenz-96 requires n >= 4");
        if (spec.dt <= 0) throw error("dt must be > 0");
        for (int s = 0; s < spec.steps_per_cycle; ++s)
            x = model::rk4_step(x, spec.dt, spec.forcing);
    }
    if (!x.allFinite()) throw error("model blow-up");
    return x;
}

// Propagate each ensemble member independently over a number of cycles.
// Noise is Gaussian i.i.d. per element, with the RNG split per member so the
// result is reproducible for a given seed and independent of the schedule.
inline Mat propagate_ensemble(const ModelSpec& spec, const Mat& ensemble, int cycles,
                              std::uint64_t seed = 0) {
    if (ensemble.cols() < 2) throw error("propagate_ensemble: m must be >= 2");
    Mat out = ensemble;
    parallel_for(ensemble.cols(), [&](std::int64_t member) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(member));
        std::normal_distribution<double> noise(0.0, spec.q_std);
        Vec x = out.col(member);
        for (int c = 0; c < cycles; ++c) {
            x = step(spec, x);
            if (spec.q_std > 0)
                for (int i = 0; i < spec.n; ++i) x[i] += noise(rng);
        }
        out.col(member) = x;
    });
    if (!out.allFinite()) throw error("model blow-up");
    return out;
}

}  // namespace ekc
