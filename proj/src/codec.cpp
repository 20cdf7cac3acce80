#include "wmlab/codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "wmlab/image_io.hpp"
#include "wmlab/metrics.hpp"

namespace wmlab {

Message random_message(int length, Rng& rng) {
    require_usage(length >= 1, "random_message: length must be positive");
    Message m;
    m.bits.resize(length);
    for (auto& b : m.bits) b = rng.coin() ? 1 : 0;
    return m;
}

Message complement(const Message& m) {
    Message out = m;
    for (auto& b : out.bits) b = b ? 0 : 1;
    return out;
}

double bit_accuracy(const Message& a, const Message& b) {
    require_usage(a.length() == b.length(), "bit_accuracy: message lengths differ");
    require_usage(a.length() > 0, "bit_accuracy: empty messages");
    int agree = 0;
    for (int i = 0; i < a.length(); ++i) agree += (a.bits[i] == b.bits[i]);
    return static_cast<double>(agree) / a.length();
}

bool exact_match(const Message& a, const Message& b) { return bit_accuracy(a, b) == 1.0; }

// ---------------------------------------------------------------------------
// distortion layers

const char* distort_kind_name(DistortKind k) {
    switch (k) {
        case DistortKind::Identity: return "identity";
        case DistortKind::GaussianNoise: return "gaussian_noise";
        case DistortKind::Blur: return "blur";
        case DistortKind::ApproxJpeg: return "approx_jpeg";
    }
    return "?";
}

DistortKind distort_kind_from_name(const std::string& name) {
    if (name == "identity") return DistortKind::Identity;
    if (name == "gaussian_noise") return DistortKind::GaussianNoise;
    if (name == "blur") return DistortKind::Blur;
    if (name == "approx_jpeg") return DistortKind::ApproxJpeg;
    throw UsageError("unknown distortion layer: " + name);
}

void jpeg_quant_tables(int quality, int luma[64], int chroma[64]) {
    require_usage(quality >= 1 && quality <= 100, "jpeg_quant_tables: quality must be in [1,100]");
    static constexpr int base_luma[64] = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    static constexpr int base_chroma[64] = {
        17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
        99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i) {
        luma[i] = std::clamp((base_luma[i] * scale + 50) / 100, 1, 255);
        chroma[i] = std::clamp((base_chroma[i] * scale + 50) / 100, 1, 255);
    }
}

namespace {

// reflect-101 border index
inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

// smooth staircase standing in for round(); analytic everywhere
inline double soft_round(double z) { return z - std::sin(kTwoPi * z) / kTwoPi; }
inline double soft_round_deriv(double z) { return 1.0 - std::cos(kTwoPi * z); }

struct Dct8 {
    double d[8][8];
    Dct8() {
        const double pi = 3.14159265358979323846;
        for (int j = 0; j < 8; ++j) d[0][j] = 1.0 / std::sqrt(8.0);
        for (int i = 1; i < 8; ++i)
            for (int j = 0; j < 8; ++j) d[i][j] = 0.5 * std::cos((2 * j + 1) * i * pi / 16.0);
    }
};

const Dct8& dct8() {
    static const Dct8 m;
    return m;
}

// out = D·in·Dᵀ when forward, Dᵀ·in·D otherwise
void dct2d(const double in[8][8], double out[8][8], bool forward) {
    const auto& D = dct8().d;
    double tmp[8][8];
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += (forward ? D[i][k] : D[k][i]) * in[k][j];
            tmp[i][j] = acc;
        }
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += tmp[i][k] * (forward ? D[j][k] : D[k][j]);
            out[i][j] = acc;
        }
}

// RGB(unit) -> level-shifted YCbCr (0-255 scale, 128 removed from all three)
constexpr double kFwdColor[3][3] = {{76.245, 149.685, 29.07},
                                    {-43.02768, -84.47232, 127.5},
                                    {127.5, -106.76544, -20.73456}};
constexpr double kFwdOffset[3] = {-128.0, 0.0, 0.0};
// inverse: rgb = (M·w + 128)/255
constexpr double kInvColor[3][3] = {{1.0, 0.0, 1.402}, {1.0, -0.344136, -0.714136}, {1.0, 1.772, 0.0}};

}  // namespace

// Saved state of one differentiable distortion application.
struct DistortCtx {
    DistortKind kind = DistortKind::Identity;
    double strength = 0.0;
    int h = 0, w = 0, c = 0;
    std::vector<float> clip_mask;  // 1 where the final clip passed values through
    std::vector<double> jpeg_z;    // quantizer-domain coefficients, per channel plane
};

static Image distort_forward(const Image& image, DistortKind kind, double strength, uint64_t seed,
                             DistortCtx* ctx) {
    require_usage(image.domain == Domain::Unit, "distort: expected a unit-domain image");
    if (ctx) {
        ctx->kind = kind;
        ctx->strength = strength;
        ctx->c = image.channels();
        ctx->h = image.height();
        ctx->w = image.width();
    }
    switch (kind) {
        case DistortKind::Identity:
            return image;
        case DistortKind::GaussianNoise: {
            require_usage(strength > 0.0, "distort: gaussian_noise needs sigma > 0");
            Rng rng(seed);
            Image out = image;
            if (ctx) ctx->clip_mask.assign(image.t.size(), 1.0f);
            for (size_t i = 0; i < out.t.size(); ++i) {
                const float y = out.t.v[i] + static_cast<float>(strength * rng.normal());
                const float yc = std::clamp(y, 0.0f, 1.0f);
                if (ctx && yc != y) ctx->clip_mask[i] = 0.0f;
                out.t.v[i] = yc;
            }
            return out;
        }
        case DistortKind::Blur: {
            const int k = static_cast<int>(strength);
            return box_blur_reflect(image, k);
        }
        case DistortKind::ApproxJpeg: {
            const int quality = static_cast<int>(strength);
            require_usage(quality >= 1 && quality <= 100, "distort: approx_jpeg quality in [1,100]");
            require_usage(image.channels() == 3, "distort: approx_jpeg expects RGB");
            require_usage(image.height() % 8 == 0 && image.width() % 8 == 0,
                          "distort: approx_jpeg needs multiple-of-8 sides");
            const int h = image.height(), w = image.width();
            int qtab[2][64];
            jpeg_quant_tables(quality, qtab[0], qtab[1]);

            // color transform
            std::vector<double> ycc(static_cast<size_t>(3) * h * w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double r = image.t.at(0, y, x), g = image.t.at(1, y, x), b = image.t.at(2, y, x);
                    for (int ch = 0; ch < 3; ++ch)
                        ycc[(static_cast<size_t>(ch) * h + y) * w + x] =
                            kFwdColor[ch][0] * r + kFwdColor[ch][1] * g + kFwdColor[ch][2] * b + kFwdOffset[ch];
                }

            if (ctx) ctx->jpeg_z.assign(static_cast<size_t>(3) * h * w, 0.0);
            // blockwise DCT + smooth quantization
            for (int ch = 0; ch < 3; ++ch) {
                const int* q = qtab[ch == 0 ? 0 : 1];
                for (int by = 0; by < h; by += 8)
                    for (int bx = 0; bx < w; bx += 8) {
                        double blk[8][8], coef[8][8];
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j)
                                blk[i][j] = ycc[(static_cast<size_t>(ch) * h + by + i) * w + bx + j];
                        dct2d(blk, coef, true);
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j) {
                                const double qv = q[i * 8 + j];
                                const double z = coef[i][j] / qv;
                                if (ctx)
                                    ctx->jpeg_z[(static_cast<size_t>(ch) * h + by + i) * w + bx + j] = z;
                                coef[i][j] = soft_round(z) * qv;
                            }
                        dct2d(coef, blk, false);
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j)
                                ycc[(static_cast<size_t>(ch) * h + by + i) * w + bx + j] = blk[i][j];
                    }
            }

            // inverse color transform + clip
            Image out(3, h, w, Domain::Unit);
            if (ctx) ctx->clip_mask.assign(out.t.size(), 1.0f);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double wv[3] = {ycc[(static_cast<size_t>(0) * h + y) * w + x],
                                          ycc[(static_cast<size_t>(1) * h + y) * w + x],
                                          ycc[(static_cast<size_t>(2) * h + y) * w + x]};
                    for (int ch = 0; ch < 3; ++ch) {
                        const double raw =
                            (kInvColor[ch][0] * wv[0] + kInvColor[ch][1] * wv[1] + kInvColor[ch][2] * wv[2] + 128.0) /
                            255.0;
                        const double clipped = std::clamp(raw, 0.0, 1.0);
                        if (ctx && clipped != raw)
                            ctx->clip_mask[(static_cast<size_t>(ch) * h + y) * w + x] = 0.0f;
                        out.t.at(ch, y, x) = static_cast<float>(clipped);
                    }
                }
            return out;
        }
    }
    throw UsageError("distort: unknown layer");
}

static Tensor distort_backward(const DistortCtx& ctx, const Tensor& gy) {
    switch (ctx.kind) {
        case DistortKind::Identity:
            return gy;
        case DistortKind::GaussianNoise: {
            Tensor gx = gy;
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] *= ctx.clip_mask[i];
            return gx;
        }
        case DistortKind::Blur: {
            const int k = static_cast<int>(ctx.strength);
            const int r = k / 2;
            const float inv = 1.0f / static_cast<float>(k * k);
            Tensor gx(ctx.c, ctx.h, ctx.w);
            for (int c = 0; c < ctx.c; ++c)
                for (int y = 0; y < ctx.h; ++y)
                    for (int x = 0; x < ctx.w; ++x) {
                        const float g = gy.at(c, y, x) * inv;
                        for (int dy = -r; dy <= r; ++dy)
                            for (int dx = -r; dx <= r; ++dx)
                                gx.at(c, reflect(y + dy, ctx.h), reflect(x + dx, ctx.w)) += g;
                    }
            return gx;
        }
        case DistortKind::ApproxJpeg: {
            const int h = ctx.h, w = ctx.w;
            int qtab[2][64];
            jpeg_quant_tables(static_cast<int>(ctx.strength), qtab[0], qtab[1]);

            // clip mask, then inverse color adjoint
            std::vector<double> gycc(static_cast<size_t>(3) * h * w, 0.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int ch = 0; ch < 3; ++ch) {
                        const size_t idx = (static_cast<size_t>(ch) * h + y) * w + x;
                        const double go = gy.v[idx] * ctx.clip_mask[idx] / 255.0;
                        for (int k2 = 0; k2 < 3; ++k2)
                            gycc[(static_cast<size_t>(k2) * h + y) * w + x] += kInvColor[ch][k2] * go;
                    }

            // blockwise adjoint: inverse DCT adjoint -> quantizer derivative -> DCT adjoint
            for (int ch = 0; ch < 3; ++ch) {
                const int* q = qtab[ch == 0 ? 0 : 1];
                for (int by = 0; by < h; by += 8)
                    for (int bx = 0; bx < w; bx += 8) {
                        double blk[8][8], coef[8][8];
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j)
                                blk[i][j] = gycc[(static_cast<size_t>(ch) * h + by + i) * w + bx + j];
                        dct2d(blk, coef, true);  // adjoint of the inverse transform
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j) {
                                const double z =
                                    ctx.jpeg_z[(static_cast<size_t>(ch) * h + by + i) * w + bx + j];
                                coef[i][j] *= soft_round_deriv(z);
                                (void)q;
                            }
                        dct2d(coef, blk, false);  // adjoint of the forward transform
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j)
                                gycc[(static_cast<size_t>(ch) * h + by + i) * w + bx + j] = blk[i][j];
                    }
            }

            // forward color adjoint
            Tensor gx(3, h, w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double gv[3] = {gycc[(static_cast<size_t>(0) * h + y) * w + x],
                                          gycc[(static_cast<size_t>(1) * h + y) * w + x],
                                          gycc[(static_cast<size_t>(2) * h + y) * w + x]};
                    for (int ch = 0; ch < 3; ++ch)
                        gx.at(ch, y, x) = static_cast<float>(kFwdColor[0][ch] * gv[0] + kFwdColor[1][ch] * gv[1] +
                                                             kFwdColor[2][ch] * gv[2]);
                }
            return gx;
        }
    }
    throw UsageError("distort_backward: unknown layer");
}

Image distort(const Image& image, DistortKind kind, double strength, uint64_t seed) {
    return distort_forward(image, kind, strength, seed, nullptr);
}

Image box_blur_reflect(const Image& image, int kernel) {
    require_usage(kernel >= 1 && kernel % 2 == 1, "box_blur_reflect: kernel must be odd");
    const int r = kernel / 2;
    const float inv = 1.0f / static_cast<float>(kernel * kernel);
    Image out(image.channels(), image.height(), image.width(), image.domain);
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < image.height(); ++y)
            for (int x = 0; x < image.width(); ++x) {
                float acc = 0.0f;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        acc += image.t.at(c, reflect(y + dy, image.height()), reflect(x + dx, image.width()));
                out.t.at(c, y, x) = acc * inv;
            }
    return out;
}

// ---------------------------------------------------------------------------
// encoder / decoder networks

void CodecConfig::validate() const {
    require_config(message_bits >= 1, "codec: message_bits must be >= 1");
    require_config(channels == 3, "codec: channels must be 3");
    require_config(height % 8 == 0 && width % 8 == 0, "codec: sides must be multiples of 8");
    require_config(!distortion_pool.empty(), "codec: distortion pool must not be empty");
    require_config(noise_sigma > 0, "codec: noise_sigma must be positive");
    require_config(blur_kernel >= 1 && blur_kernel % 2 == 1, "codec: blur_kernel must be odd");
    require_config(jpeg_quality >= 1 && jpeg_quality <= 100, "codec: jpeg_quality in [1,100]");
    require_config(train_steps > 0 && batch_size > 0 && lr > 0, "codec: bad training params");
}

namespace {

struct EncoderNet {
    nn::Conv2d conv1, conv2, conv3;
    nn::GroupNorm gn1, gn2;

    void init(const CodecConfig& cfg, Rng& rng) {
        conv1.init("enc.conv1", cfg.channels + cfg.message_bits, cfg.enc_hidden, 3, 1, rng);
        gn1.init("enc.gn1", cfg.enc_hidden, 8);
        conv2.init("enc.conv2", cfg.enc_hidden, cfg.enc_hidden, 3, 1, rng);
        gn2.init("enc.gn2", cfg.enc_hidden, 8);
        conv3.init("enc.conv3", cfg.enc_hidden, cfg.channels, 3, 1, rng, /*zero_init=*/true);
    }

    struct Acts {
        Tensor in, z1, n1, a1, z2, n2, a2, delta;
        nn::GroupNorm::Cache g1, g2;
        std::vector<float> col, gcol;
    };

    void forward(const Tensor& in, Acts& a) const {
        a.in = in;
        conv1.forward(a.in, a.z1, a.col);
        gn1.forward(a.z1, a.n1, a.g1);
        nn::silu(a.n1, a.a1);
        conv2.forward(a.a1, a.z2, a.col);
        gn2.forward(a.z2, a.n2, a.g2);
        nn::silu(a.n2, a.a2);
        conv3.forward(a.a2, a.delta, a.col);
    }

    void backward(Acts& a, const Tensor& g_delta) {
        Tensor g_a2, g_n2, g_z2, g_a1, g_n1, g_z1;
        conv3.backward(a.a2, g_delta, &g_a2, a.col, a.gcol);
        g_n2 = zeros_like(a.n2);
        nn::silu_backward(a.n2, g_a2, g_n2);
        gn2.backward(g_n2, a.g2, g_z2);
        conv2.backward(a.a1, g_z2, &g_a1, a.col, a.gcol);
        g_n1 = zeros_like(a.n1);
        nn::silu_backward(a.n1, g_a1, g_n1);
        gn1.backward(g_n1, a.g1, g_z1);
        conv1.backward(a.in, g_z1, nullptr, a.col, a.gcol);
    }

    nn::ParamList params() {
        return {&conv1.weight, &conv1.bias, &gn1.gamma, &gn1.beta, &conv2.weight, &conv2.bias,
                &gn2.gamma, &gn2.beta, &conv3.weight, &conv3.bias};
    }
};

struct DecoderNet {
    nn::Conv2d conv1, conv2, conv3, conv4;
    nn::GroupNorm gn1, gn2, gn3, gn4;
    nn::Dense fc1, fc2;
    int width2 = 0, width3 = 0;

    void init(const CodecConfig& cfg, Rng& rng) {
        width2 = cfg.dec_hidden + 16;
        width3 = cfg.dec_hidden * 2;
        conv1.init("dec.conv1", cfg.channels, cfg.dec_hidden, 3, 1, rng);
        gn1.init("dec.gn1", cfg.dec_hidden, 8);
        conv2.init("dec.conv2", cfg.dec_hidden, width2, 3, 2, rng);
        gn2.init("dec.gn2", width2, 8);
        conv3.init("dec.conv3", width2, width3, 3, 2, rng);
        gn3.init("dec.gn3", width3, 8);
        conv4.init("dec.conv4", width3, width3, 3, 1, rng);
        gn4.init("dec.gn4", width3, 8);
        fc1.init("dec.fc1", width3, width3, rng);
        fc2.init("dec.fc2", width3, cfg.message_bits, rng);
    }

    struct Acts {
        Tensor in, z1, n1, a1, z2, n2, a2, z3, n3, a3, z4, n4, a4;
        nn::GroupNorm::Cache g1, g2, g3, g4;
        std::vector<float> pooled, f1, f1a, logits;
        std::vector<float> col, gcol;
    };

    // input: unit-domain pixels; centered internally
    void forward(const Tensor& unit_in, Acts& a) const {
        a.in = unit_in;
        for (auto& x : a.in.v) x = 2.0f * x - 1.0f;
        conv1.forward(a.in, a.z1, a.col);
        gn1.forward(a.z1, a.n1, a.g1);
        nn::silu(a.n1, a.a1);
        conv2.forward(a.a1, a.z2, a.col);
        gn2.forward(a.z2, a.n2, a.g2);
        nn::silu(a.n2, a.a2);
        conv3.forward(a.a2, a.z3, a.col);
        gn3.forward(a.z3, a.n3, a.g3);
        nn::silu(a.n3, a.a3);
        conv4.forward(a.a3, a.z4, a.col);
        gn4.forward(a.z4, a.n4, a.g4);
        nn::silu(a.n4, a.a4);
        nn::global_avg_pool(a.a4, a.pooled);
        fc1.forward(a.pooled, a.f1);
        a.f1a.resize(a.f1.size());
        for (size_t i = 0; i < a.f1.size(); ++i) a.f1a[i] = nn::silu_scalar(a.f1[i]);
        fc2.forward(a.f1a, a.logits);
    }

    // returns gradient w.r.t. the unit-domain input when input_grad != null
    void backward(Acts& a, const std::vector<float>& g_logits, Tensor* input_grad) {
        std::vector<float> g_f1a, g_f1, g_pooled;
        fc2.backward(a.f1a, g_logits, &g_f1a);
        g_f1.assign(a.f1.size(), 0.0f);
        for (size_t i = 0; i < a.f1.size(); ++i) {
            const float s = 1.0f / (1.0f + std::exp(-a.f1[i]));
            g_f1[i] = g_f1a[i] * s * (1.0f + a.f1[i] * (1.0f - s));
        }
        fc1.backward(a.pooled, g_f1, &g_pooled);
        Tensor g_a4;
        nn::global_avg_pool_backward(g_pooled, a.a4, g_a4);
        Tensor g_n4, g_z4, g_a3, g_n3, g_z3, g_a2, g_n2, g_z2, g_a1, g_n1, g_z1;
        g_n4 = zeros_like(a.n4);
        nn::silu_backward(a.n4, g_a4, g_n4);
        gn4.backward(g_n4, a.g4, g_z4);
        conv4.backward(a.a3, g_z4, &g_a3, a.col, a.gcol);
        g_n3 = zeros_like(a.n3);
        nn::silu_backward(a.n3, g_a3, g_n3);
        gn3.backward(g_n3, a.g3, g_z3);
        conv3.backward(a.a2, g_z3, &g_a2, a.col, a.gcol);
        g_n2 = zeros_like(a.n2);
        nn::silu_backward(a.n2, g_a2, g_n2);
        gn2.backward(g_n2, a.g2, g_z2);
        conv2.backward(a.a1, g_z2, &g_a1, a.col, a.gcol);
        g_n1 = zeros_like(a.n1);
        nn::silu_backward(a.n1, g_a1, g_n1);
        gn1.backward(g_n1, a.g1, g_z1);
        conv1.backward(a.in, g_z1, input_grad, a.col, a.gcol);
        if (input_grad)
            for (auto& g : input_grad->v) g *= 2.0f;  // chain through the centering
    }

    nn::ParamList params() {
        return {&conv1.weight, &conv1.bias, &gn1.gamma, &gn1.beta, &conv2.weight, &conv2.bias,
                &gn2.gamma,    &gn2.beta,   &conv3.weight, &conv3.bias, &gn3.gamma, &gn3.beta,
                &conv4.weight, &conv4.bias, &gn4.gamma, &gn4.beta, &fc1.weight, &fc1.bias,
                &fc2.weight,   &fc2.bias};
    }
};

}  // namespace

struct Codec::Impl {
    CodecConfig cfg;
    EncoderNet encoder;
    DecoderNet decoder;
    CodecMetrics metrics;
    bool trained = false;

    Tensor build_encoder_input(const Image& cover, const Message& m) const {
        Tensor in(cfg.channels + cfg.message_bits, cfg.height, cfg.width);
        std::copy(cover.t.v.begin(), cover.t.v.end(), in.v.begin());
        const size_t plane = static_cast<size_t>(cfg.height) * cfg.width;
        for (int b = 0; b < cfg.message_bits; ++b) {
            const float v = m.bits[b] ? 1.0f : -1.0f;
            std::fill_n(in.v.begin() + static_cast<ptrdiff_t>((cfg.channels + b) * plane), plane, v);
        }
        return in;
    }

    void check_image(const Image& img, const char* where) const {
        if (img.channels() != cfg.channels || img.height() != cfg.height || img.width() != cfg.width)
            throw ConfigError(std::string(where) + ": image shape does not match the codec configuration");
        require_usage(img.domain == Domain::Unit, std::string(where) + ": expected unit-domain image");
    }

    void check_message(const Message& m, const char* where) const {
        if (m.length() != cfg.message_bits)
            throw ConfigError(std::string(where) + ": message length does not match the codec configuration");
        m.validate();
    }
};

Codec::Codec(const CodecConfig& cfg, uint64_t seed) : impl_(std::make_unique<Impl>()) {
    cfg.validate();
    impl_->cfg = cfg;
    Rng rng(Rng::derive(seed, 0xC0DEC));
    impl_->encoder.init(cfg, rng);
    impl_->decoder.init(cfg, rng);
}

Codec::Codec(const Codec& o) : impl_(std::make_unique<Impl>(*o.impl_)) {}
Codec& Codec::operator=(const Codec& o) {
    impl_ = std::make_unique<Impl>(*o.impl_);
    return *this;
}
Codec::Codec(Codec&&) noexcept = default;
Codec& Codec::operator=(Codec&&) noexcept = default;
Codec::~Codec() = default;

const CodecConfig& Codec::config() const { return impl_->cfg; }
bool Codec::trained() const { return impl_->trained; }
void Codec::mark_trained(const CodecMetrics& metrics) {
    impl_->metrics = metrics;
    impl_->trained = true;
}
const CodecMetrics& Codec::metrics() const { return impl_->metrics; }

std::pair<Image, WatermarkResidual> Codec::embed(const Image& cover, const Message& m) const {
    impl_->check_image(cover, "embed");
    impl_->check_message(m, "embed");
    EncoderNet::Acts acts;
    impl_->encoder.forward(impl_->build_encoder_input(cover, m), acts);
    Image out = cover;
    WatermarkResidual res;
    res.delta = acts.delta;
    float linf = 0.0f;
    for (size_t i = 0; i < out.t.size(); ++i) {
        out.t.v[i] = std::clamp(cover.t.v[i] + acts.delta.v[i], 0.0f, 1.0f);
        linf = std::max(linf, std::abs(acts.delta.v[i]));
    }
    res.linf_bound = linf;
    return {std::move(out), std::move(res)};
}

std::pair<std::vector<float>, Message> Codec::decode(const Image& image) const {
    impl_->check_image(image, "decode");
    DecoderNet::Acts acts;
    impl_->decoder.forward(image.t, acts);
    Message m;
    m.bits.resize(impl_->cfg.message_bits);
    for (int i = 0; i < impl_->cfg.message_bits; ++i) m.bits[i] = acts.logits[i] > 0.0f ? 1 : 0;
    return {acts.logits, std::move(m)};
}

double watermark_loss(const std::vector<float>& logits, const Message& true_message) {
    require_usage(static_cast<int>(logits.size()) == true_message.length(),
                  "watermark_loss: logit/message length mismatch");
    const Message target = complement(true_message);
    std::vector<float> t(target.bits.begin(), target.bits.end());
    return nn::bce_with_logits(logits, t, nullptr);
}

double Codec::watermark_loss_on_image(const Image& image, const Message& true_message,
                                      Tensor* input_grad) const {
    impl_->check_image(image, "watermark_loss_on_image");
    impl_->check_message(true_message, "watermark_loss_on_image");
    DecoderNet::Acts acts;
    DecoderNet dec = impl_->decoder;  // gradient buffers are scratch here
    dec.forward(image.t, acts);
    const Message target = complement(true_message);
    std::vector<float> tgt(target.bits.begin(), target.bits.end());
    std::vector<float> g_logits;
    const double loss = nn::bce_with_logits(acts.logits, tgt, &g_logits);
    if (input_grad) {
        nn::zero_grads(dec.params());
        dec.backward(acts, g_logits, input_grad);
    }
    return loss;
}

double Codec::training_loss_input_grad(const Image& image, const Message& m, DistortKind kind,
                                       double strength, uint64_t seed, Tensor* input_grad) const {
    impl_->check_image(image, "training_loss_input_grad");
    impl_->check_message(m, "training_loss_input_grad");
    DistortCtx ctx;
    Image distorted = distort_forward(image, kind, strength, seed, &ctx);
    DecoderNet::Acts acts;
    DecoderNet dec = impl_->decoder;
    dec.forward(distorted.t, acts);
    std::vector<float> tgt(m.bits.begin(), m.bits.end());
    std::vector<float> g_logits;
    const double loss = nn::bce_with_logits(acts.logits, tgt, &g_logits);
    if (input_grad) {
        nn::zero_grads(dec.params());
        Tensor g_dist;
        dec.backward(acts, g_logits, &g_dist);
        *input_grad = distort_backward(ctx, g_dist);
    }
    return loss;
}

nn::ParamList Codec::parameters() {
    nn::ParamList out = impl_->encoder.params();
    for (auto* p : impl_->decoder.params()) out.push_back(p);
    return out;
}

const nn::ParamList Codec::parameters() const { return const_cast<Codec*>(this)->parameters(); }

// ---------------------------------------------------------------------------
// training

namespace {

struct EvalResult {
    double clean_acc = 0.0, clean_exact = 0.0, mean_psnr = 0.0;
    double noise_acc = 0.0, blur_acc = 0.0, jpeg_acc = 0.0;
};

EvalResult evaluate_codec(const Codec& codec, const std::vector<Image>& images, int limit,
                          uint64_t seed, bool with_robustness) {
    const auto& cfg = codec.config();
    Rng rng(Rng::derive(seed, 0xE7A1));
    EvalResult r;
    int n = std::min<int>(limit, static_cast<int>(images.size()));
    int finite_psnr = 0;
    for (int i = 0; i < n; ++i) {
        const Message m = random_message(cfg.message_bits, rng);
        auto [wm, res] = codec.embed(images[i], m);
        const double p = psnr(images[i], wm);
        if (std::isfinite(p)) {
            r.mean_psnr += p;
            ++finite_psnr;
        }
        auto [logits, m_hat] = codec.decode(wm);
        r.clean_acc += bit_accuracy(m, m_hat);
        r.clean_exact += exact_match(m, m_hat) ? 1.0 : 0.0;
        if (with_robustness) {
            auto noisy = distort(wm, DistortKind::GaussianNoise, cfg.noise_sigma, rng.next_u64());
            r.noise_acc += bit_accuracy(m, codec.decode(noisy).second);
            auto blurred = distort(wm, DistortKind::Blur, cfg.blur_kernel, 0);
            r.blur_acc += bit_accuracy(m, codec.decode(blurred).second);
            auto jpeged = jpeg_round_trip(wm, cfg.jpeg_quality);
            r.jpeg_acc += bit_accuracy(m, codec.decode(jpeged).second);
        }
    }
    r.clean_acc /= n;
    r.clean_exact /= n;
    r.mean_psnr = finite_psnr > 0 ? r.mean_psnr / finite_psnr : std::numeric_limits<double>::infinity();
    if (with_robustness) {
        r.noise_acc /= n;
        r.blur_acc /= n;
        r.jpeg_acc /= n;
    }
    return r;
}

}  // namespace

CodecTrainReport train_codec(Codec& codec, const std::vector<Image>& train_images,
                             const std::vector<Image>& val_images, uint64_t seed, bool verbose) {
    require_usage(!train_images.empty(), "train_codec: dataset must not be empty");
    require_usage(!val_images.empty(), "train_codec: validation set must not be empty");
    auto& impl = codec.impl();
    const CodecConfig& cfg = impl.cfg;
    for (const auto& img : train_images) impl.check_image(img, "train_codec");

    Rng rng(Rng::derive(seed, 0x7121A));
    nn::AdamConfig acfg;
    acfg.lr = cfg.lr;
    nn::Adam opt(acfg);
    nn::ParamList params = codec.parameters();

    // imperceptibility weight; adapted toward the PSNR target
    double w_img = 12.0;
    const int warmup_steps = std::min(500, cfg.train_steps / 6);
    const int eval_every = 150;

    CodecTrainReport report;
    EncoderNet::Acts enc_acts;
    DecoderNet::Acts dec_acts;

    // deterministic rotation through the pool, noise-heavy pools unchanged
    std::vector<DistortKind> pool;
    for (DistortKind k : cfg.distortion_pool) {
        pool.push_back(k);
        if (k == DistortKind::ApproxJpeg) pool.push_back(k);  // hardest layer gets double weight
    }

    for (int step = 0; step < cfg.train_steps; ++step) {
        nn::zero_grads(params);
        double batch_loss = 0.0;
        const bool identity_phase = step < warmup_steps;
        for (int bi = 0; bi < cfg.batch_size; ++bi) {
            const Image& cover = train_images[rng.uniform_index(train_images.size())];
            const Message m = random_message(cfg.message_bits, rng);

            impl.encoder.forward(impl.build_encoder_input(cover, m), enc_acts);
            Image wm = cover;
            Tensor clip_mask(cfg.channels, cfg.height, cfg.width);
            for (size_t i = 0; i < wm.t.size(); ++i) {
                const float raw = cover.t.v[i] + enc_acts.delta.v[i];
                const float cl = std::clamp(raw, 0.0f, 1.0f);
                clip_mask.v[i] = (cl == raw) ? 1.0f : 0.0f;
                wm.t.v[i] = cl;
            }

            DistortKind kind =
                identity_phase ? DistortKind::Identity : pool[rng.uniform_index(pool.size())];
            double strength = 0.0;
            switch (kind) {
                case DistortKind::Identity: break;
                case DistortKind::GaussianNoise: strength = cfg.noise_sigma; break;
                case DistortKind::Blur: strength = cfg.blur_kernel; break;
                case DistortKind::ApproxJpeg: strength = cfg.jpeg_quality; break;
            }
            DistortCtx dctx;
            Image distorted = distort_forward(wm, kind, strength, rng.next_u64(), &dctx);

            impl.decoder.forward(distorted.t, dec_acts);
            std::vector<float> tgt(m.bits.begin(), m.bits.end());
            std::vector<float> g_logits;
            const double msg_loss = nn::bce_with_logits(dec_acts.logits, tgt, &g_logits);

            Tensor g_dist_in;
            impl.decoder.backward(dec_acts, g_logits, &g_dist_in);
            Tensor g_wm = distort_backward(dctx, g_dist_in);

            // imperceptibility term: w_img · mean((wm - cover)²)
            double img_loss = 0.0;
            const double inv_n = 1.0 / static_cast<double>(wm.t.size());
            for (size_t i = 0; i < wm.t.size(); ++i) {
                const double d = static_cast<double>(wm.t.v[i]) - cover.t.v[i];
                img_loss += d * d;
                g_wm.v[i] += static_cast<float>(w_img * 2.0 * d * inv_n);
            }
            img_loss *= inv_n;

            // through the embedding clip into the encoder
            Tensor g_delta = g_wm;
            for (size_t i = 0; i < g_delta.size(); ++i) g_delta.v[i] *= clip_mask.v[i];
            impl.encoder.backward(enc_acts, g_delta);

            batch_loss += msg_loss + w_img * img_loss;
        }
        const double inv_b = 1.0 / cfg.batch_size;
        for (auto* p : params)
            for (auto& g : p->g) g *= static_cast<float>(inv_b);
        const double progress = static_cast<double>(step) / cfg.train_steps;
        const double lr_t = cfg.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.14159265358979 * progress)));
        opt.step(params, lr_t);

        if ((step + 1) % eval_every == 0 || step + 1 == cfg.train_steps) {
            auto ev = evaluate_codec(codec, val_images, 24, seed, false);
            report.loss_curve.push_back(batch_loss * inv_b);
            if (!identity_phase) {
                if (ev.mean_psnr < cfg.target_psnr_db + 0.7)
                    w_img = std::min(w_img * 1.6, 4000.0);
                else if (ev.mean_psnr > cfg.target_psnr_db + 2.5)
                    w_img = std::max(w_img * 0.75, 0.5);
            }
            if (verbose)
                std::printf("codec step %d loss %.4f psnr %.2f acc %.4f w_img %.1f\n", step + 1,
                            batch_loss * inv_b, ev.mean_psnr, ev.clean_acc, w_img);
        }
    }

    auto final_eval = evaluate_codec(codec, val_images, static_cast<int>(val_images.size()), seed, true);
    CodecMetrics metrics;
    metrics.clean_bit_accuracy = final_eval.clean_acc;
    metrics.clean_exact_rate = final_eval.clean_exact;
    metrics.mean_psnr_db = final_eval.mean_psnr;
    metrics.noise_bit_accuracy = final_eval.noise_acc;
    metrics.blur_bit_accuracy = final_eval.blur_acc;
    metrics.jpeg_bit_accuracy = final_eval.jpeg_acc;
    metrics.converged = final_eval.clean_acc >= cfg.target_clean_accuracy &&
                        final_eval.mean_psnr >= cfg.target_psnr_db;
    report.final_metrics = metrics;
    report.steps_run = cfg.train_steps;

    if (!metrics.converged) {
        std::ostringstream os;
        os << "train_codec: did not converge (clean_acc=" << metrics.clean_bit_accuracy
           << ", psnr=" << metrics.mean_psnr_db << " dB after " << cfg.train_steps << " steps)";
        throw ComputeError(os.str());
    }
    codec.mark_trained(metrics);
    return report;
}

}  // namespace wmlab
