#pragma once

#include <cstddef>
#include <vector>

#include "wmlab/common.hpp"

namespace wmlab {

// Dense C×H×W float tensor, channel-major.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0f) {}

    size_t size() const { return v.size(); }
    float* data() { return v.data(); }
    const float* data() const { return v.data(); }

    float& at(int ci, int yi, int xi) { return v[(static_cast<size_t>(ci) * h + yi) * w + xi]; }
    float at(int ci, int yi, int xi) const { return v[(static_cast<size_t>(ci) * h + yi) * w + xi]; }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.c, t.h, t.w); }

}  // namespace wmlab
