#include "coop/warp.hpp"

#include <algorithm>

namespace coop {

namespace {

struct Footprint {
    int x0, x1, y0, y1;
    double fx, fy;
    bool inside;
};

inline Footprint footprint(const int h, const int w, double x, double y) {
    Footprint f;
    const double xf = std::floor(x), yf = std::floor(y);
    f.fx = x - xf;
    f.fy = y - yf;
    const int ix = static_cast<int>(xf), iy = static_cast<int>(yf);
    f.x0 = std::clamp(ix, 0, w - 1);
    f.x1 = std::clamp(ix + 1, 0, w - 1);
    f.y0 = std::clamp(iy, 0, h - 1);
    f.y1 = std::clamp(iy + 1, 0, h - 1);
    f.inside = x >= 0.0 && x <= w - 1.0 && y >= 0.0 && y <= h - 1.0;
    return f;
}

}  // namespace

GridSample sample_bilinear(const GridD& g, double x, double y) {
    const Footprint f = footprint(g.h, g.w, x, y);
    const double v00 = g.at(f.y0, f.x0), v01 = g.at(f.y0, f.x1);
    const double v10 = g.at(f.y1, f.x0), v11 = g.at(f.y1, f.x1);
    GridSample s;
    const double top = v00 + f.fx * (v01 - v00);
    const double bot = v10 + f.fx * (v11 - v10);
    s.value = top + f.fy * (bot - top);
    s.dvx = (1 - f.fy) * (v01 - v00) + f.fy * (v11 - v10);
    s.dvy = bot - top;
    s.inside = f.inside;
    return s;
}

void scatter_bilinear(GridD& grad, double x, double y, double g) {
    const Footprint f = footprint(grad.h, grad.w, x, y);
    grad.at(f.y0, f.x0) += g * (1 - f.fx) * (1 - f.fy);
    grad.at(f.y0, f.x1) += g * f.fx * (1 - f.fy);
    grad.at(f.y1, f.x0) += g * (1 - f.fx) * f.fy;
    grad.at(f.y1, f.x1) += g * f.fx * f.fy;
}

WarpResult warp_by_flow(const ImageBuffer& source, const FlowField& flow) {
    if (source.h != flow.h() || source.w != flow.w()) {
        throw DimensionMismatch("warp_by_flow: source and flow dimensions differ");
    }
    const int h = source.h, w = source.w, c = source.c;
    WarpResult out{ImageBuffer(h, w, c), PixelMask(h, w)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x + flow.x.at(y, x);
            const double sy = y + flow.y.at(y, x);
            const Footprint f = footprint(h, w, sx, sy);
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = source.at(f.y0, f.x0, ch), v01 = source.at(f.y0, f.x1, ch);
                const double v10 = source.at(f.y1, f.x0, ch), v11 = source.at(f.y1, f.x1, ch);
                const double top = v00 + f.fx * (v01 - v00);
                const double bot = v10 + f.fx * (v11 - v10);
                out.image.at(y, x, ch) = top + f.fy * (bot - top);
            }
            out.valid.set(y, x, f.inside);
        }
    }
    return out;
}

PositionGrad warp_position_gradient(const ImageBuffer& source, const FlowField& flow,
                                    const ImageBuffer& upstream) {
    if (!source.same_shape(upstream) || source.h != flow.h() || source.w != flow.w()) {
        throw DimensionMismatch("warp_position_gradient: shape mismatch");
    }
    const int h = source.h, w = source.w, c = source.c;
    PositionGrad out{GridD(h, w, 0.0), GridD(h, w, 0.0)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x + flow.x.at(y, x);
            const double sy = y + flow.y.at(y, x);
            const Footprint f = footprint(h, w, sx, sy);
            double gx = 0, gy = 0;
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = source.at(f.y0, f.x0, ch), v01 = source.at(f.y0, f.x1, ch);
                const double v10 = source.at(f.y1, f.x0, ch), v11 = source.at(f.y1, f.x1, ch);
                const double u = upstream.at(y, x, ch);
                gx += u * ((1 - f.fy) * (v01 - v00) + f.fy * (v11 - v10));
                gy += u * ((v10 + f.fx * (v11 - v10)) - (v00 + f.fx * (v01 - v00)));
            }
            out.x.at(y, x) = gx;
            out.y.at(y, x) = gy;
        }
    }
    return out;
}

ImageBuffer warp_source_gradient(const ImageBuffer& source, const FlowField& flow,
                                 const ImageBuffer& upstream) {
    if (!source.same_shape(upstream) || source.h != flow.h() || source.w != flow.w()) {
        throw DimensionMismatch("warp_source_gradient: shape mismatch");
    }
    const int h = source.h, w = source.w, c = source.c;
    ImageBuffer grad(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x + flow.x.at(y, x);
            const double sy = y + flow.y.at(y, x);
            const Footprint f = footprint(h, w, sx, sy);
            for (int ch = 0; ch < c; ++ch) {
                const double u = upstream.at(y, x, ch);
                grad.at(f.y0, f.x0, ch) += u * (1 - f.fx) * (1 - f.fy);
                grad.at(f.y0, f.x1, ch) += u * f.fx * (1 - f.fy);
                grad.at(f.y1, f.x0, ch) += u * (1 - f.fx) * f.fy;
                grad.at(f.y1, f.x1, ch) += u * f.fx * f.fy;
            }
        }
    }
    return grad;
}

WarpResult warp_by_depth_pose(const ImageBuffer& source, const DepthMap& depth,
                              const PoseSE3& pose, const CameraIntrinsics& K) {
    if (source.h != depth.h() || source.w != depth.w()) {
        throw DimensionMismatch("warp_by_depth_pose: source and depth dimensions differ");
    }
    const RigidFlowResult rf = rigid_flow(depth, pose, K);
    WarpResult out = warp_by_flow(source, rf.flow);
    for (int y = 0; y < source.h; ++y)
        for (int x = 0; x < source.w; ++x)
            if (!rf.valid.at(y, x)) out.valid.set(y, x, false);
    return out;
}

PixelMask occlusion_mask_fwd_bwd(const FlowField& flow_fwd, const FlowField& flow_bwd,
                                 double threshold) {
    if (!flow_fwd.same_shape(flow_bwd)) {
        throw DimensionMismatch("occlusion_mask_fwd_bwd: flow dimensions differ");
    }
    const int h = flow_fwd.h(), w = flow_fwd.w();
    PixelMask occluded(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double fx = flow_fwd.x.at(y, x);
            const double fy = flow_fwd.y.at(y, x);
            const double bx = sample_bilinear(flow_bwd.x, x + fx, y + fy).value;
            const double by = sample_bilinear(flow_bwd.y, x + fx, y + fy).value;
            const double rx = fx + bx, ry = fy + by;
            occluded.set(y, x, std::sqrt(rx * rx + ry * ry) > threshold);
        }
    }
    return occluded;
}

}  // namespace coop
