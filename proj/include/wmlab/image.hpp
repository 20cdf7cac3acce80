#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "wmlab/tensor.hpp"

namespace wmlab {

// Value domain of an image tensor. Codec operations work on [0,1],
// diffusion operations on [-1,1].
enum class Domain { Unit, Signed };

inline double domain_lo(Domain d) { return d == Domain::Unit ? 0.0 : -1.0; }
inline double domain_hi(Domain d) { return d == Domain::Unit ? 1.0 : 1.0; }
inline double domain_width(Domain d) { return d == Domain::Unit ? 1.0 : 2.0; }
inline const char* domain_name(Domain d) { return d == Domain::Unit ? "unit" : "signed"; }

// H×W×C real image with an explicit value-domain tag. Pixels are stored
// channel-major (see Tensor).
struct Image {
    Tensor t;
    Domain domain = Domain::Unit;

    Image() = default;
    Image(int c, int h, int w, Domain d) : t(c, h, w), domain(d) {}
    Image(Tensor tt, Domain d) : t(std::move(tt)), domain(d) {}

    int channels() const { return t.c; }
    int height() const { return t.h; }
    int width() const { return t.w; }

    bool in_domain(float slack = 0.0f) const {
        const float lo = static_cast<float>(domain_lo(domain)) - slack;
        const float hi = static_cast<float>(domain_hi(domain)) + slack;
        for (float x : t.v)
            if (!(x >= lo && x <= hi)) return false;
        return true;
    }

    void clip_to_domain() {
        const float lo = static_cast<float>(domain_lo(domain));
        const float hi = static_cast<float>(domain_hi(domain));
        for (auto& x : t.v) x = std::clamp(x, lo, hi);
    }
};

inline void require_same_shape(const Image& a, const Image& b, const std::string& where) {
    require_usage(a.t.same_shape(b.t), where + ": image shapes differ");
    require_usage(a.domain == b.domain, where + ": image domains differ");
}

// [0,1] -> [-1,1]
inline Image to_signed(const Image& img) {
    if (img.domain == Domain::Signed) return img;
    Image out(img.channels(), img.height(), img.width(), Domain::Signed);
    for (size_t i = 0; i < img.t.size(); ++i) out.t.v[i] = 2.0f * img.t.v[i] - 1.0f;
    return out;
}

// [-1,1] -> [0,1]
inline Image to_unit(const Image& img) {
    if (img.domain == Domain::Unit) return img;
    Image out(img.channels(), img.height(), img.width(), Domain::Unit);
    for (size_t i = 0; i < img.t.size(); ++i) out.t.v[i] = 0.5f * (img.t.v[i] + 1.0f);
    return out;
}

inline Image clipped_to_unit(const Image& img) {
    Image out = to_unit(img);
    out.clip_to_domain();
    return out;
}

}  // namespace wmlab
