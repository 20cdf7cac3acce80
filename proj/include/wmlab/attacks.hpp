#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wmlab/codec.hpp"
#include "wmlab/diffusion.hpp"
#include "wmlab/metrics.hpp"

namespace wmlab {

enum class AttackKind { None, Jpeg, GaussianNoise, Blur, DiffusionUnguided, DiffusionGuided };

const char* attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& name);

// Declarative attack configuration. Validated at construction; parameters
// must be complete and in range for the kind.
struct AttackSpec {
    AttackKind kind = AttackKind::None;
    uint64_t seed = 0;

    // jpeg
    int quality = 10;
    // gaussian noise
    double sigma = 25.0 / 255.0;
    // blur
    int kernel = 5;
    // diffusion attacks
    double t_star_fraction = 0.5;
    SamplerKind sampler = SamplerKind::Ddim;
    int ddim_stride = 2;
    // guided attack
    double eta = 0.1;
    double gate_bit_accuracy = 0.8;
    double gate_confidence_tau = 1.0;
    bool noised_start = true;  // false reproduces the no-noise initialization variant

    void validate() const;
    std::string to_json() const;
    static AttackSpec from_json(const std::string& json_text);
};

struct GuidanceTraceStep {
    int t = 0;
    double watermark_loss = 0.0;
    double gradient_norm = 0.0;
    bool gate_fired = false;
};

// Attack result: output image, decoding verdict and quality metrics
// against the watermarked input (the reference to preserve).
struct AttackOutcome {
    Image output;                 // unit domain
    Message decoded;
    std::vector<float> logits;
    double psnr_db = 0.0;         // +inf when output == input
    double ssim_value = 0.0;
    double perceptual = 0.0;      // NaN when no denoiser is available
    double bit_acc = 0.0;
    bool exact = false;
    std::vector<GuidanceTraceStep> trace;  // guided attack only
};

// classical baselines
Image jpeg_attack(const Image& x, int quality = 10);
Image noise_attack(const Image& x, double sigma, uint64_t seed);
Image blur_attack(const Image& x, int kernel = 5);

// mean per-bit cross-entropy of the decoder output against the bitwise
// complement of `true_message` (low when the decoder is maximally wrong)
// -- declared in codec.hpp as watermark_loss(logits, message).

// Regeneration attack without decoder access.
AttackOutcome unguided_attack(const Image& x, const AttackSpec& spec, const Denoiser& denoiser,
                              const Codec& codec);

// Decoder-in-the-loop attack; takes a gradient step against the watermark
// whenever the confidence gate fires.
AttackOutcome guided_attack(const Image& x, const AttackSpec& spec, const Denoiser& denoiser,
                            const Codec& codec, const Message& true_message);

// Uniform entry point for every kind. `true_message` is required by the
// guided kind and used to fill decode verdicts for all kinds.
AttackOutcome apply_attack(const Image& x, const AttackSpec& spec, const Codec& codec,
                           const Denoiser* denoiser, const Message& true_message);

}  // namespace wmlab
