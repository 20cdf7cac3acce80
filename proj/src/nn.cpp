#include "wmlab/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>

namespace wmlab::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void he_init(std::vector<float>& w, int fan_in, Rng& rng) {
    const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (auto& x : w) x = static_cast<float>(rng.normal()) * std;
}

// im2col for zero-padded convolution: col is (in_c·k·k) × (oh·ow), row-major
void im2col(const Tensor& x, int k, int stride, int pad, int oh, int ow, std::vector<float>& col) {
    const int K = x.c * k * k;
    const int N = oh * ow;
    col.assign(static_cast<size_t>(K) * N, 0.0f);
    for (int c = 0; c < x.c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                float* dst = col.data() + static_cast<size_t>(row) * N;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h) continue;
                    const float* src = x.data() + (static_cast<size_t>(c) * x.h + iy) * x.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < x.w) dst[oy * ow + ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<float>& col, int k, int stride, int pad, int oh, int ow, Tensor& gx) {
    const int N = oh * ow;
    for (int c = 0; c < gx.c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                const float* src = col.data() + static_cast<size_t>(row) * N;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= gx.h) continue;
                    float* dst = gx.data() + (static_cast<size_t>(c) * gx.h + iy) * gx.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < gx.w) dst[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

void Conv2d::init(const std::string& name, int in_c_, int out_c_, int k_, int stride_, Rng& rng,
                  bool zero_init) {
    in_c = in_c_;
    out_c = out_c_;
    k = k_;
    stride = stride_;
    pad = (k - 1) / 2;
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.resize(static_cast<size_t>(out_c) * in_c * k * k);
    bias.resize(out_c);
    if (!zero_init) he_init(weight.w, in_c * k * k, rng);
}

void Conv2d::out_shape(const Tensor& x, int& oh, int& ow) const {
    oh = (x.h + 2 * pad - k) / stride + 1;
    ow = (x.w + 2 * pad - k) / stride + 1;
}

void Conv2d::forward(const Tensor& x, Tensor& y, std::vector<float>& col) const {
    int oh, ow;
    out_shape(x, oh, ow);
    y = Tensor(out_c, oh, ow);
    im2col(x, k, stride, pad, oh, ow, col);
    const int K = in_c * k * k, N = oh * ow;
    CMapMat W(weight.w.data(), out_c, K);
    CMapMat C(col.data(), K, N);
    MapMat Y(y.data(), out_c, N);
    Y.noalias() = W * C;
    for (int oc = 0; oc < out_c; ++oc) Y.row(oc).array() += bias.w[oc];
}

void Conv2d::backward(const Tensor& x, const Tensor& gy, Tensor* gx, std::vector<float>& col,
                      std::vector<float>& gcol) {
    int oh, ow;
    out_shape(x, oh, ow);
    const int K = in_c * k * k, N = oh * ow;
    im2col(x, k, stride, pad, oh, ow, col);
    CMapMat C(col.data(), K, N);
    CMapMat GY(gy.data(), out_c, N);
    MapMat GW(weight.g.data(), out_c, K);
    GW.noalias() += GY * C.transpose();
    for (int oc = 0; oc < out_c; ++oc) bias.g[oc] += GY.row(oc).sum();
    if (gx) {
        gcol.assign(static_cast<size_t>(K) * N, 0.0f);
        CMapMat W(weight.w.data(), out_c, K);
        MapMat GC(gcol.data(), K, N);
        GC.noalias() = W.transpose() * GY;
        if (!gx->same_shape(x)) *gx = zeros_like(x);
        col2im_add(gcol, k, stride, pad, oh, ow, *gx);
    }
}

void Dense::init(const std::string& name, int in_n_, int out_n_, Rng& rng, bool zero_init) {
    in_n = in_n_;
    out_n = out_n_;
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.resize(static_cast<size_t>(out_n) * in_n);
    bias.resize(out_n);
    if (!zero_init) he_init(weight.w, in_n, rng);
}

void Dense::forward(const std::vector<float>& x, std::vector<float>& y) const {
    y.assign(out_n, 0.0f);
    CMapMat W(weight.w.data(), out_n, in_n);
    Eigen::Map<const Eigen::VectorXf> X(x.data(), in_n);
    Eigen::Map<Eigen::VectorXf> Y(y.data(), out_n);
    Y.noalias() = W * X;
    for (int i = 0; i < out_n; ++i) y[i] += bias.w[i];
}

void Dense::backward(const std::vector<float>& x, const std::vector<float>& gy, std::vector<float>* gx) {
    CMapMat W(weight.w.data(), out_n, in_n);
    MapMat GW(weight.g.data(), out_n, in_n);
    Eigen::Map<const Eigen::VectorXf> X(x.data(), in_n);
    Eigen::Map<const Eigen::VectorXf> GY(gy.data(), out_n);
    GW.noalias() += GY * X.transpose();
    for (int i = 0; i < out_n; ++i) bias.g[i] += gy[i];
    if (gx) {
        gx->assign(in_n, 0.0f);
        Eigen::Map<Eigen::VectorXf> GX(gx->data(), in_n);
        GX.noalias() = W.transpose() * GY;
    }
}

void GroupNorm::init(const std::string& name, int channels_, int groups_) {
    channels = channels_;
    groups = groups_;
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.resize(channels);
    beta.resize(channels);
    std::fill(gamma.w.begin(), gamma.w.end(), 1.0f);
}

void GroupNorm::forward(const Tensor& x, Tensor& y, Cache& cache) const {
    y = Tensor(x.c, x.h, x.w);
    cache.x_hat = Tensor(x.c, x.h, x.w);
    cache.inv_std.assign(groups, 0.0f);
    const int per_group = channels / groups;
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int g = 0; g < groups; ++g) {
        const size_t base = static_cast<size_t>(g) * per_group * plane;
        const size_t n = per_group * plane;
        double mean = 0.0;
        for (size_t i = 0; i < n; ++i) mean += x.v[base + i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = x.v[base + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        cache.inv_std[g] = inv;
        for (int cc = 0; cc < per_group; ++cc) {
            const int c = g * per_group + cc;
            for (size_t i = 0; i < plane; ++i) {
                const size_t idx = static_cast<size_t>(c) * plane + i;
                const float xh = (x.v[idx] - static_cast<float>(mean)) * inv;
                cache.x_hat.v[idx] = xh;
                y.v[idx] = gamma.w[c] * xh + beta.w[c];
            }
        }
    }
}

void GroupNorm::backward(const Tensor& gy, const Cache& cache, Tensor& gx) {
    if (!gx.same_shape(gy)) gx = zeros_like(gy);
    const int per_group = channels / groups;
    const size_t plane = static_cast<size_t>(gy.h) * gy.w;
    for (int g = 0; g < groups; ++g) {
        const size_t n = per_group * plane;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int cc = 0; cc < per_group; ++cc) {
            const int c = g * per_group + cc;
            double dg = 0.0, db = 0.0;
            for (size_t i = 0; i < plane; ++i) {
                const size_t idx = static_cast<size_t>(c) * plane + i;
                const float xh = cache.x_hat.v[idx];
                const float go = gy.v[idx];
                dg += static_cast<double>(go) * xh;
                db += go;
                const double dxh = static_cast<double>(go) * gamma.w[c];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh;
            }
            gamma.g[c] += static_cast<float>(dg);
            beta.g[c] += static_cast<float>(db);
        }
        const double inv = cache.inv_std[g];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (int cc = 0; cc < per_group; ++cc) {
            const int c = g * per_group + cc;
            for (size_t i = 0; i < plane; ++i) {
                const size_t idx = static_cast<size_t>(c) * plane + i;
                const double dxh = static_cast<double>(gy.v[idx]) * gamma.w[c];
                gx.v[idx] += static_cast<float>(
                    inv * (dxh - inv_n * sum_dxhat - cache.x_hat.v[idx] * inv_n * sum_dxhat_xhat));
            }
        }
    }
}

void silu(const Tensor& x, Tensor& y) {
    if (!y.same_shape(x)) y = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) y.v[i] = silu_scalar(x.v[i]);
}

void silu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    if (!gx.same_shape(x)) gx = zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x.v[i]));
        gx.v[i] += gy.v[i] * s * (1.0f + x.v[i] * (1.0f - s));
    }
}

void upsample2x_nearest(const Tensor& x, Tensor& y) {
    y = Tensor(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int iy = 0; iy < x.h * 2; ++iy)
            for (int ix = 0; ix < x.w * 2; ++ix) y.at(c, iy, ix) = x.at(c, iy / 2, ix / 2);
}

void upsample2x_nearest_backward(const Tensor& gy, Tensor& gx) {
    if (gx.c != gy.c || gx.h != gy.h / 2 || gx.w != gy.w / 2) gx = Tensor(gy.c, gy.h / 2, gy.w / 2);
    for (int c = 0; c < gy.c; ++c)
        for (int iy = 0; iy < gy.h; ++iy)
            for (int ix = 0; ix < gy.w; ++ix) gx.at(c, iy / 2, ix / 2) += gy.at(c, iy, ix);
}

void global_avg_pool(const Tensor& x, std::vector<float>& y) {
    y.assign(x.c, 0.0f);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
        double acc = 0.0;
        for (size_t i = 0; i < plane; ++i) acc += x.v[static_cast<size_t>(c) * plane + i];
        y[c] = static_cast<float>(acc / static_cast<double>(plane));
    }
}

void global_avg_pool_backward(const std::vector<float>& gy, const Tensor& like, Tensor& gx) {
    if (!gx.same_shape(like)) gx = zeros_like(like);
    const size_t plane = static_cast<size_t>(like.h) * like.w;
    for (int c = 0; c < like.c; ++c) {
        const float g = gy[c] / static_cast<float>(plane);
        for (size_t i = 0; i < plane; ++i) gx.v[static_cast<size_t>(c) * plane + i] += g;
    }
}

void concat_channels(const Tensor& a, const Tensor& b, Tensor& y) {
    y = Tensor(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), y.v.begin());
    std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<ptrdiff_t>(a.size()));
}

void split_channels_backward(const Tensor& gy, Tensor& ga, Tensor& gb) {
    const size_t na = ga.size();
    for (size_t i = 0; i < na; ++i) ga.v[i] += gy.v[i];
    for (size_t i = 0; i < gb.size(); ++i) gb.v[i] += gy.v[na + i];
}

void add_channel_bias(Tensor& x, const std::vector<float>& bias) {
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
        const float b = bias[c];
        for (size_t i = 0; i < plane; ++i) x.v[static_cast<size_t>(c) * plane + i] += b;
    }
}

std::vector<float> timestep_embedding(int t, int dim) {
    std::vector<float> emb(dim, 0.0f);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        emb[i] = static_cast<float>(std::sin(t * freq));
        emb[half + i] = static_cast<float>(std::cos(t * freq));
    }
    return emb;
}

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
    double acc = 0.0;
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    if (grad && !grad->same_shape(pred)) *grad = zeros_like(pred);
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.v[i]) - target.v[i];
        acc += d * d;
        if (grad) grad->v[i] = static_cast<float>(2.0 * d * inv_n);
    }
    return acc * inv_n;
}

double bce_with_logits(const std::vector<float>& logits, const std::vector<float>& targets,
                       std::vector<float>* grad) {
    double acc = 0.0;
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    if (grad) grad->assign(logits.size(), 0.0f);
    for (size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i], y = targets[i];
        // log(1+exp(-|z|)) + max(z,0) - z*y, numerically stable
        acc += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * y;
        if (grad) {
            const double s = 1.0 / (1.0 + std::exp(-z));
            (*grad)[i] = static_cast<float>((s - y) * inv_n);
        }
    }
    return acc * inv_n;
}

void Adam::step(const ParamList& params, double lr_override) {
    ++t_;
    const double lr = lr_override > 0 ? lr_override : cfg_.lr;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (ParamBlock* p : params) {
        if (p->m.size() != p->w.size()) {
            p->m.assign(p->w.size(), 0.0f);
            p->v.assign(p->w.size(), 0.0f);
        }
        for (size_t i = 0; i < p->w.size(); ++i) {
            const double g = p->g[i];
            p->m[i] = static_cast<float>(cfg_.beta1 * p->m[i] + (1.0 - cfg_.beta1) * g);
            p->v[i] = static_cast<float>(cfg_.beta2 * p->v[i] + (1.0 - cfg_.beta2) * g * g);
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            p->w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

void zero_grads(const ParamList& params) {
    for (ParamBlock* p : params) p->zero_grad();
}

}  // namespace wmlab::nn
