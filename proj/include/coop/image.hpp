#pragma once

#include "coop/common.hpp"
#include "coop/geometry.hpp"

namespace coop {

// H x W x C photometric grid, values in [0, 1], C in {1, 3}.
struct ImageBuffer {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;

    ImageBuffer() = default;
    ImageBuffer(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, fill) {
        if (c != 1 && c != 3) throw std::invalid_argument("channel count must be 1 or 3");
    }

    double& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
    bool same_shape(const ImageBuffer& o) const { return h == o.h && w == o.w && c == o.c; }

    void validate() const;  // finite and within [0, 1]
};

struct PixelMask {
    Grid<uint8_t> m;

    PixelMask() = default;
    PixelMask(int h, int w, bool fill = false) : m(h, w, fill ? 1 : 0) {}
    static PixelMask all_true(int h, int w) { return PixelMask(h, w, true); }

    int h() const { return m.h; }
    int w() const { return m.w; }
    bool at(int y, int x) const { return m.at(y, x) != 0; }
    void set(int y, int x, bool b) { m.at(y, x) = b ? 1 : 0; }
    size_t count() const {
        size_t n = 0;
        for (auto b : m.v) n += (b != 0);
        return n;
    }
    PixelMask operator&(const PixelMask& o) const {
        if (!m.same_shape(o.m)) throw DimensionMismatch("mask shapes differ");
        PixelMask r(m.h, m.w);
        for (size_t i = 0; i < m.v.size(); ++i) r.m.v[i] = m.v[i] & o.m.v[i];
        return r;
    }
};

struct ImagePyramid {
    std::vector<ImageBuffer> levels;  // level s downscaled by 1/2^s, level 0 = original
};

// 2x2 average downsampling to ceil(h/2) x ceil(w/2); odd borders average the
// pixels that exist.
GridD downsample2(const GridD& g);
ImageBuffer downsample2(const ImageBuffer& img);
// Mask downsampling: coarse pixel true when at least half of its block is true.
PixelMask downsample2(const PixelMask& mask);
// Flow downsampling halves the displacement values as well.
FlowField downsample2_flow(const FlowField& f);

// Adjoint of downsample2 for gradients: spreads each coarse value back over
// its block with the same 1/count weights.
GridD downsample2_adjoint(const GridD& coarse, int fine_h, int fine_w);

// Repeated 2x2 averaging; rejects level counts that would shrink past 1 px.
ImagePyramid build_pyramid(const ImageBuffer& image, int levels);

double mean_intensity(const ImageBuffer& img);

}  // namespace coop
