#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wmlab/rng.hpp"
#include "wmlab/tensor.hpp"

namespace wmlab::nn {

// One named weight array plus its gradient and Adam moments.
struct ParamBlock {
    std::string name;
    std::vector<float> w;
    std::vector<float> g;
    std::vector<float> m, v;  // sized on first optimizer step

    void resize(size_t n) {
        w.assign(n, 0.0f);
        g.assign(n, 0.0f);
    }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0f); }
};

using ParamList = std::vector<ParamBlock*>;

// ---------------------------------------------------------------------------
// layers (stateless apart from parameters; activations live in caller caches)

struct Conv2d {
    int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
    ParamBlock weight;  // out_c × (in_c·k·k), row-major
    ParamBlock bias;    // out_c

    void init(const std::string& name, int in_c_, int out_c_, int k_, int stride_, Rng& rng,
              bool zero_init = false);
    void out_shape(const Tensor& x, int& oh, int& ow) const;
    void forward(const Tensor& x, Tensor& y, std::vector<float>& col) const;
    // gx may be null when the input gradient is not needed
    void backward(const Tensor& x, const Tensor& gy, Tensor* gx, std::vector<float>& col,
                  std::vector<float>& gcol);
};

struct Dense {
    int in_n = 0, out_n = 0;
    ParamBlock weight;  // out_n × in_n row-major
    ParamBlock bias;

    void init(const std::string& name, int in_n_, int out_n_, Rng& rng, bool zero_init = false);
    void forward(const std::vector<float>& x, std::vector<float>& y) const;
    void backward(const std::vector<float>& x, const std::vector<float>& gy, std::vector<float>* gx);
};

struct GroupNorm {
    int channels = 0, groups = 1;
    float eps = 1e-5f;
    ParamBlock gamma, beta;

    void init(const std::string& name, int channels_, int groups_);
    // cache holds x_hat and per-group inv_std for the backward pass
    struct Cache {
        Tensor x_hat;
        std::vector<float> inv_std;
    };
    void forward(const Tensor& x, Tensor& y, Cache& cache) const;
    void backward(const Tensor& gy, const Cache& cache, Tensor& gx);
};

// y = x·sigmoid(x)
void silu(const Tensor& x, Tensor& y);
void silu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);
inline float silu_scalar(float x) { return x / (1.0f + std::exp(-x)); }

void upsample2x_nearest(const Tensor& x, Tensor& y);
void upsample2x_nearest_backward(const Tensor& gy, Tensor& gx);

void global_avg_pool(const Tensor& x, std::vector<float>& y);
void global_avg_pool_backward(const std::vector<float>& gy, const Tensor& like, Tensor& gx);

void concat_channels(const Tensor& a, const Tensor& b, Tensor& y);
void split_channels_backward(const Tensor& gy, Tensor& ga, Tensor& gb);

// add a per-channel bias vector to every spatial position
void add_channel_bias(Tensor& x, const std::vector<float>& bias);

// sinusoidal position features for an integer timestep
std::vector<float> timestep_embedding(int t, int dim);

// ---------------------------------------------------------------------------
// losses (mean-reduced; gradient written w.r.t. the first argument)

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad);
double bce_with_logits(const std::vector<float>& logits, const std::vector<float>& targets,
                       std::vector<float>* grad);

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(const ParamList& params, double lr_override = -1.0);
    int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
};

void zero_grads(const ParamList& params);

}  // namespace wmlab::nn
