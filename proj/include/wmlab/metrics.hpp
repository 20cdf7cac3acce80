#pragma once

#include <optional>
#include <vector>

#include "wmlab/codec.hpp"
#include "wmlab/diffusion.hpp"
#include "wmlab/image.hpp"

namespace wmlab {

// 10·log10(peak²/MSE) with peak = domain width; +inf for identical images.
double psnr(const Image& a, const Image& b);

// Mean local SSIM over valid (un-padded) 11×11 Gaussian windows, sigma 1.5,
// K1 = 0.01, K2 = 0.03, channel-averaged.
double ssim(const Image& a, const Image& b);

// Normalized L2 distance between denoiser feature maps at t = 0, averaged
// over layers. Symmetric; zero iff the activations agree. Labeled
// "perceptual (proxy)" in every report; it is not LPIPS.
double perceptual_distance(const Image& a, const Image& b, const Denoiser& denoiser);

struct WilsonInterval {
    double lo = 0.0, hi = 0.0;
};
WilsonInterval wilson_interval(int successes, int n, double z = 1.959963984540054);

struct MetricReport {
    double psnr_db = 0.0;           // mean over finite values
    int psnr_inf_count = 0;         // images identical to the reference
    double ssim_value = 0.0;
    double perceptual = 0.0;        // proxy; NaN when no denoiser was supplied
    double bit_accuracy = 0.0;
    double exact_match_rate = 0.0;
    WilsonInterval exact_match_ci;
    int n = 0;
    double chance_exact = 0.0;      // 2^-L
};

}  // namespace wmlab
