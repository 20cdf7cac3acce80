#pragma once

#include <string>
#include <vector>

#include "wmlab/image.hpp"
#include "wmlab/rng.hpp"
#include "wmlab/schedule.hpp"

namespace wmlab {

// Scalar reduction of the noised-watermark channel: for x0 = c + b·delta with
// bit b ∈ {±1} and known (c, delta), the projection of x_t onto delta is a
// sufficient statistic with amplitude sqrt(ab_t)·‖delta‖ and noise
// sqrt(1-ab_t).
struct AntipodalChannelModel {
    double pattern_energy = 0.0;  // effective amplitude at step t
    double noise_std = 0.0;

    static AntipodalChannelModel at_step(const NoiseSchedule& schedule, int t, double pattern_norm);
};

enum class MiMethod { Quadrature, MonteCarlo, ProbeFano };

struct MIEstimate {
    double value_nats = 0.0;
    MiMethod method = MiMethod::Quadrature;
    double error_bound = 0.0;

    double value_bits() const { return value_nats / std::log(2.0); }
};

// Exact I(Y;S) for Y = S + N, S uniform on ±amplitude, N ~ Normal(0, sigma²),
// by adaptive quadrature over the two-component mixture entropy. Result in
// nats, in [0, ln 2].
MIEstimate awgn_bit_mi(double amplitude, double sigma);

// Same channel, estimated from `draws` seeded samples via the plug-in
// log-density-ratio average. Used as an independent cross-check.
MIEstimate awgn_bit_mi_monte_carlo(double amplitude, double sigma, int64_t draws, uint64_t seed);

// Per-step exact MI of the noised channel for t = 1..T.
std::vector<MIEstimate> mi_decay_curve(const NoiseSchedule& schedule, double pattern_norm);

// Binary entropy in nats.
double binary_entropy_nats(double p);

struct ProbeBoundOptions {
    double holdout_fraction = 0.3;
    int train_steps = 400;
    double lr = 0.05;
    double l2 = 1e-3;
};

// Trains a linear probe to predict the embedded bit from each (signed-domain)
// image, then converts held-out accuracy p into the lower bound
// ln 2 - H_b(p). error_bound covers the binomial uncertainty of p (95%).
// Refuses class imbalance beyond 60/40.
MIEstimate probe_mi_lower_bound(const std::vector<Image>& regenerated, const std::vector<int>& bits,
                                uint64_t seed, const ProbeBoundOptions& opts = {});

struct DpiAuditReport {
    bool passed = false;
    double upstream_mi_nats = 0.0;   // exact MI at t*, before regeneration
    double upstream_error = 0.0;
    double probe_bound_nats = 0.0;
    double probe_error = 0.0;
    double margin_nats = 0.0;        // upstream + errors - probe bound
    std::string detail;
};

// Data-processing audit: the probe bound after regeneration must not exceed
// the exact upstream MI at the matching t* (up to the combined error bounds).
DpiAuditReport dpi_audit(const NoiseSchedule& schedule, double pattern_norm, int t_star,
                         const MIEstimate& probe_bound);

}  // namespace wmlab
