#pragma once

#include "coop/image.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// Differentiable bilinear inverse warping. Out-of-image samples are clamped
// for value (gradients stay defined) but the pixel is masked invalid.
// ---------------------------------------------------------------------------

struct GridSample {
    double value = 0;
    double dvx = 0, dvy = 0;  // derivative of value w.r.t. sample position
    bool inside = false;      // footprint fully within [0, w-1] x [0, h-1]
};

GridSample sample_bilinear(const GridD& g, double x, double y);

// Adds g * (bilinear weights) to the four footprint corners (clamped).
void scatter_bilinear(GridD& grad, double x, double y, double g);

struct WarpResult {
    ImageBuffer image;
    PixelMask valid;
};

// I_hat(p) = source sampled at p + flow(p).
WarpResult warp_by_flow(const ImageBuffer& source, const FlowField& flow);

// Per-pixel gradient of a scalar loss w.r.t. the sample positions, given the
// upstream gradient on the warped image. Row-major (gx, gy) pairs.
struct PositionGrad {
    GridD x, y;
};
PositionGrad warp_position_gradient(const ImageBuffer& source, const FlowField& flow,
                                    const ImageBuffer& upstream);

// Gradient w.r.t. the source image itself (scatter through the weights).
ImageBuffer warp_source_gradient(const ImageBuffer& source, const FlowField& flow,
                                 const ImageBuffer& upstream);

// Depth+pose view synthesis: warp along the rigid flow of (depth, pose, K);
// validity is the warp footprint AND the geometric validity.
WarpResult warp_by_depth_pose(const ImageBuffer& source, const DepthMap& depth,
                              const PoseSE3& pose, const CameraIntrinsics& K);

// Forward-backward consistency occlusion detection. Returned mask is true at
// OCCLUDED pixels: |flow_fwd(p) + flow_bwd(p + flow_fwd(p))| > threshold,
// with clamped bilinear lookup of the backward field.
PixelMask occlusion_mask_fwd_bwd(const FlowField& flow_fwd, const FlowField& flow_bwd,
                                 double threshold);

inline constexpr double kOcclusionThreshold = 0.2;

}  // namespace coop
