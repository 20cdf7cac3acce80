#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "wmlab/image.hpp"
#include "wmlab/nn.hpp"
#include "wmlab/rng.hpp"

namespace wmlab {

// Fixed-length bit payload.
struct Message {
    std::vector<uint8_t> bits;

    int length() const { return static_cast<int>(bits.size()); }
    void validate() const {
        for (uint8_t b : bits) require_usage(b == 0 || b == 1, "Message: bits must be 0 or 1");
    }
};

Message random_message(int length, Rng& rng);
Message complement(const Message& m);

// fraction of agreeing positions
double bit_accuracy(const Message& a, const Message& b);
bool exact_match(const Message& a, const Message& b);

// ---------------------------------------------------------------------------
// distortion layers (the trainable pool; all differentiable w.r.t. the input)

enum class DistortKind { Identity, GaussianNoise, Blur, ApproxJpeg };

const char* distort_kind_name(DistortKind k);
DistortKind distort_kind_from_name(const std::string& name);

// Applies one distortion layer. `strength` is sigma for gaussian noise,
// kernel size for blur (odd), quality for approx_jpeg; ignored for identity.
Image distort(const Image& image, DistortKind kind, double strength, uint64_t seed);

// uniform k×k averaging with reflected borders (used by both the training
// pool and the blur attack)
Image box_blur_reflect(const Image& image, int kernel);

// IJG-style quality scaling of the two standard base tables; entries in [1,255].
void jpeg_quant_tables(int quality, int luma[64], int chroma[64]);

// ---------------------------------------------------------------------------
// codec

struct CodecConfig {
    int message_bits = 16;
    int channels = 3;
    int height = 32;
    int width = 32;

    int enc_hidden = 48;
    int dec_hidden = 48;

    std::vector<DistortKind> distortion_pool = {DistortKind::Identity, DistortKind::GaussianNoise,
                                                DistortKind::Blur, DistortKind::ApproxJpeg};
    double noise_sigma = 25.0 / 255.0;
    int blur_kernel = 5;
    int jpeg_quality = 10;

    // training
    int train_steps = 4200;
    int batch_size = 16;
    double lr = 1.5e-3;
    double target_clean_accuracy = 0.99;
    double target_psnr_db = 35.0;

    void validate() const;
};

struct WatermarkResidual {
    Tensor delta;
    float linf_bound = 0.0f;
};

struct CodecMetrics {
    double clean_bit_accuracy = 0.0;
    double clean_exact_rate = 0.0;
    double mean_psnr_db = 0.0;
    double noise_bit_accuracy = 0.0;
    double blur_bit_accuracy = 0.0;
    double jpeg_bit_accuracy = 0.0;  // real JPEG round trip, not the surrogate
    bool converged = false;
};

// Encoder/decoder pair. Construction gives random (untrained) parameters;
// train_codec or checkpoint loading produces a usable one.
class Codec {
public:
    Codec(const CodecConfig& cfg, uint64_t seed);
    Codec(const Codec&);
    Codec& operator=(const Codec&);
    Codec(Codec&&) noexcept;
    Codec& operator=(Codec&&) noexcept;
    ~Codec();

    const CodecConfig& config() const;
    bool trained() const;
    void mark_trained(const CodecMetrics& metrics);
    const CodecMetrics& metrics() const;

    // Embeds `m` into a [0,1] cover; deterministic. Returned image is the
    // clipped cover + residual.
    std::pair<Image, WatermarkResidual> embed(const Image& cover, const Message& m) const;

    // Always returns a full-length message; bit i is 1 iff logits[i] > 0.
    std::pair<std::vector<float>, Message> decode(const Image& image) const;

    // Loss pushing the decoder toward the bitwise complement of `true_message`
    // (mean per-bit cross-entropy, nats). If `input_grad` is non-null it
    // receives d(loss)/d(pixels) of the unit-domain input.
    double watermark_loss_on_image(const Image& image, const Message& true_message,
                                   Tensor* input_grad) const;

    // Decoder robustness loss and its gradient w.r.t. a unit-domain image:
    // cross-entropy of decode(distort(image)) against `m`. This is the
    // per-sample objective used by training (minus the imperceptibility term).
    double training_loss_input_grad(const Image& image, const Message& m, DistortKind kind,
                                    double strength, uint64_t seed, Tensor* input_grad) const;

    nn::ParamList parameters();
    const nn::ParamList parameters() const;

    struct Impl;
    Impl& impl() { return *impl_; }
    const Impl& impl() const { return *impl_; }

private:
    std::unique_ptr<Impl> impl_;
};

// Loss value on decoder logits directly (no gradient); see
// Codec::watermark_loss_on_image for the image-level version.
double watermark_loss(const std::vector<float>& logits, const Message& true_message);

struct CodecTrainReport {
    CodecMetrics final_metrics;
    std::vector<double> loss_curve;  // sampled every eval interval
    int steps_run = 0;
};

// Trains encoder+decoder on [0,1] images. Throws ComputeError with the final
// metrics attached if the convergence targets are not met.
CodecTrainReport train_codec(Codec& codec, const std::vector<Image>& train_images,
                             const std::vector<Image>& val_images, uint64_t seed,
                             bool verbose = false);

}  // namespace wmlab
