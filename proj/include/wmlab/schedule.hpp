#pragma once

#include <cmath>
#include <vector>

#include "wmlab/common.hpp"

namespace wmlab {

// Per-step noising arithmetic for T diffusion steps. Index convention:
// beta[t-1] is the step-t coefficient; alpha_bar(t) with t in [0, T] and
// alpha_bar(0) = 1 (no noise).
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta;       // T entries, strictly increasing in (0,1)
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product, left-to-right

    double alpha_bar_at(int t) const {
        require_usage(t >= 0 && t <= steps, "alpha_bar_at: t out of range");
        return t == 0 ? 1.0 : alpha_bar[t - 1];
    }

    // per-step amplitude ratio of the surviving signal to accumulated noise
    double snr(int t) const {
        const double ab = alpha_bar_at(t);
        return std::sqrt(ab) / std::sqrt(1.0 - ab);
    }
};

// Linear beta schedule over [beta_start, beta_end].
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

}  // namespace wmlab
