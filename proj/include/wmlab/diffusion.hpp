#pragma once

#include <memory>
#include <vector>

#include "wmlab/image.hpp"
#include "wmlab/nn.hpp"
#include "wmlab/rng.hpp"
#include "wmlab/schedule.hpp"

namespace wmlab {

enum class SamplerKind { Ddpm, Ddim };

const char* sampler_kind_name(SamplerKind k);
SamplerKind sampler_kind_from_name(const std::string& name);

// Noisy image plus its position on the diffusion timeline. t = 0 is clean.
struct DiffusionState {
    Image x;  // signed domain
    int t = 0;
};

struct DenoiserConfig {
    int channels = 3;
    int height = 32;
    int width = 32;
    int steps = 100;             // T
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int base_width = 32;         // channel widths: base, 2·base, 3·base
    int time_embed_dim = 64;

    // training
    int train_steps = 2600;
    int batch_size = 16;
    double lr = 1.2e-3;
    double target_mse_ratio = 0.2;  // vs the eps-variance baseline of 1.0

    void validate() const;
};

struct DenoiserMetrics {
    double holdout_eps_mse = 0.0;
    double untrained_eps_mse = 0.0;
    bool converged = false;
};

// Small eps-prediction U-Net with its schedule.
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, uint64_t seed);
    Denoiser(const Denoiser&);
    Denoiser& operator=(const Denoiser&);
    Denoiser(Denoiser&&) noexcept;
    Denoiser& operator=(Denoiser&&) noexcept;
    ~Denoiser();

    const DenoiserConfig& config() const;
    const NoiseSchedule& schedule() const;
    bool trained() const;
    void mark_trained(const DenoiserMetrics& metrics);
    const DenoiserMetrics& metrics() const;

    // predicted noise for a signed-domain image at step t; re-entrant
    Tensor predict_eps(const Tensor& x, int t) const;

    // feature maps used by the perceptual-distance proxy (activations of the
    // encoder trunk evaluated at t = 0)
    std::vector<Tensor> feature_maps(const Tensor& x) const;

    nn::ParamList parameters();

    struct Impl;
    Impl& impl() { return *impl_; }
    const Impl& impl() const { return *impl_; }

private:
    std::unique_ptr<Impl> impl_;
};

// closed-form forward marginal: sqrt(ab_t)·x0 + sqrt(1-ab_t)·eps
Image forward_noise(const Image& x0, int t, const NoiseSchedule& schedule, const Tensor& eps);
Image forward_noise_seeded(const Image& x0, int t, const NoiseSchedule& schedule, uint64_t seed);

// One ancestral step t -> t-1 with caller-supplied posterior noise.
DiffusionState ddpm_step(const DiffusionState& state, const Denoiser& denoiser, const Tensor& eps);
// One deterministic step t -> t-1.
DiffusionState ddim_step(const DiffusionState& state, const Denoiser& denoiser);
// (x_t - sqrt(1-ab_t)·eps_hat)/sqrt(ab_t)
Image predict_x0(const DiffusionState& state, const Denoiser& denoiser);

struct RegenerateOptions {
    SamplerKind sampler = SamplerKind::Ddim;
    int ddim_stride = 2;  // strided deterministic sampling; ddpm always runs every step
    bool forward_noising = true;  // false: start the reverse pass from the image itself
};

// Noises a signed-domain image to t* = round(fraction·T), then denoises back
// to t = 0. Output clipped to [-1,1] at the end only.
Image regenerate(const Image& x, double t_star_fraction, const Denoiser& denoiser,
                 uint64_t seed, const RegenerateOptions& opts = {});

struct DenoiserTrainReport {
    DenoiserMetrics final_metrics;
    std::vector<double> loss_curve;
    int steps_run = 0;
};

// Trains eps-prediction on signed-domain images; throws ComputeError with the
// loss curve attached if the target is not reached.
DenoiserTrainReport train_denoiser(Denoiser& denoiser, const std::vector<Image>& train_images,
                                   const std::vector<Image>& val_images, uint64_t seed,
                                   bool verbose = false);

}  // namespace wmlab
