#include "wmlab/schedule.hpp"

namespace wmlab {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    require_usage(steps >= 1, "make_schedule: steps must be >= 1");
    require_usage(beta_start > 0.0 && beta_start < 1.0, "make_schedule: beta_start must be in (0,1)");
    require_usage(beta_end > 0.0 && beta_end < 1.0, "make_schedule: beta_end must be in (0,1)");
    require_usage(steps == 1 || beta_start < beta_end, "make_schedule: beta_start must be < beta_end");

    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        s.beta[i] = beta_start + frac * (beta_end - beta_start);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

}  // namespace wmlab
