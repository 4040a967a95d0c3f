#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedtdd/error.hpp"

namespace fedtdd {

enum class ScheduleKind { Linear, Cosine };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw Error("unknown schedule kind '" + s + "' (expected 'linear' or 'cosine')");
}

// Arrays are indexed by diffusion step t in 1..T; index 0 is the clean-data
// anchor with gamma_bar[0] == 1. gamma[t] = 1 - delta[t] and gamma_bar is its
// running product, so corruption level is monotone in t.
struct NoiseSchedule {
    std::size_t n_steps = 0;
    std::vector<double> delta;
    std::vector<double> gamma;
    std::vector<double> gamma_bar;

    // Coefficients of the reverse-step posterior mean
    //   mu = c0(t) * x0_hat + ct(t) * x_t
    // At t == 1 the posterior is the clean prediction itself; the division
    // would only reproduce 1 and 0 up to round-off, so return them outright.
    double c0(std::size_t t) const {
        if (t == 1) return 1.0;
        return std::sqrt(gamma_bar[t - 1]) * delta[t] / (1.0 - gamma_bar[t]);
    }
    double ct(std::size_t t) const {
        if (t == 1) return 0.0;
        return std::sqrt(gamma[t]) * (1.0 - gamma_bar[t - 1]) / (1.0 - gamma_bar[t]);
    }
    double posterior_variance(std::size_t t) const {
        return delta[t] * (1.0 - gamma_bar[t - 1]) / (1.0 - gamma_bar[t]);
    }
    // Per-step weight of the training objective.
    double loss_weight(std::size_t t, double lambda) const {
        return lambda * gamma[t] * (1.0 - gamma_bar[t]) / (delta[t] * delta[t]);
    }
};

inline NoiseSchedule make_schedule(ScheduleKind kind, std::size_t n_steps) {
    require(n_steps >= 2, "make_schedule: need at least 2 steps");
    NoiseSchedule s;
    s.n_steps = n_steps;
    s.delta.assign(n_steps + 1, 0.0);
    s.gamma.assign(n_steps + 1, 1.0);
    s.gamma_bar.assign(n_steps + 1, 1.0);

    if (kind == ScheduleKind::Linear) {
        const double lo = 1e-4;
        const double hi = 0.02;
        for (std::size_t t = 1; t <= n_steps; ++t)
            s.delta[t] = lo + (hi - lo) * static_cast<double>(t - 1) /
                                  static_cast<double>(n_steps - 1);
    } else {
        // Squared-cosine corruption profile; deltas are recovered from the
        // profile ratios and capped away from 1.
        const double offset = 0.008;
        auto profile = [&](double u) {
            const double v = std::cos((u + offset) / (1.0 + offset) * M_PI / 2.0);
            return v * v;
        };
        const double p0 = profile(0.0);
        double prev = 1.0;
        for (std::size_t t = 1; t <= n_steps; ++t) {
            const double cur =
                profile(static_cast<double>(t) / static_cast<double>(n_steps)) / p0;
            double d = 1.0 - cur / prev;
            if (d > 0.999) d = 0.999;
            if (d < 1e-12) d = 1e-12;
            s.delta[t] = d;
            prev = cur;
        }
    }

    for (std::size_t t = 1; t <= n_steps; ++t) {
        s.gamma[t] = 1.0 - s.delta[t];
        s.gamma_bar[t] = s.gamma_bar[t - 1] * s.gamma[t];
    }
    return s;
}

}  // namespace fedtdd
