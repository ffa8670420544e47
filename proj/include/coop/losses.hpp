#pragma once

#include "coop/delta.hpp"
#include "coop/grad.hpp"
#include "coop/photometric.hpp"
#include "coop/warp.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// Scalar losses with analytic gradients. Photometric losses are means over
// their contributing pixels so mask size does not rescale gradient magnitude.
// ---------------------------------------------------------------------------

struct LossWeights {
    double lambda_gc = 0.001;
    double lambda_fwd_bwd = 0.001;
    double lambda_s = 0.01;
    double lambda_ep = 0.001;
    double lambda_var = 1e-6;
};

inline constexpr double kVarianceEpsilon = 1e-12;

// ---- weighted photometric flow loss (L_delta) -----------------------------

struct FlowLossResult {
    double value = 0;
    FlowField dflow;
    size_t pixels = 0;
};

// Mean over warp-valid, non-occluded pixels of w(p) * phi(target, warp)(p).
// weights == nullptr means uniform 1; occlusion mask is true at excluded
// pixels. Throws EmptyMask when nothing contributes.
FlowLossResult loss_flow(const ImageBuffer& target, const ImageBuffer& source,
                         const FlowField& flow, const GridD* weights,
                         const PixelMask* occlusion, double alpha = kAlphaDefault);

// ---- masked min-reprojection depth+pose loss (L_theta_alpha) ---------------

struct DepthPoseView {
    const ImageBuffer* source = nullptr;
    PoseSE3 pose;                     // target -> source
    const PixelMask* rigid = nullptr; // V mask; nullptr admits every pixel
};

struct DepthPoseLossResult {
    double value = 0;
    GridD ddepth;
    std::vector<Vec6> dpose;  // one per view
    Grid<int> argmin;         // winning view per pixel, -1 where none
    size_t pixels = 0;
};

// Per pixel, minimum phi over the views whose warp is valid and whose rigid
// mask admits the pixel; mean over contributing pixels. Gradients flow only
// to each pixel's winning view. Throws EmptyMask on a degenerate mask.
DepthPoseLossResult loss_depth_pose(const ImageBuffer& target,
                                    const std::vector<DepthPoseView>& views,
                                    const DepthMap& depth, const CameraIntrinsics& K,
                                    double alpha = kAlphaDefault);

// ---- adaptive photometric baseline (GLNet psi) -----------------------------

struct GlnetLossResult {
    double value = 0;
    Grid<int> assignment;  // 0 = depth-pose warp won (ties included), 1 = flow warp
    ImageBuffer dwarped_dp, dwarped_fl;
    size_t pixels = 0;
};

// psi = mean_p min(phi(target, warped_dp), phi(target, warped_fl)); each
// pixel's gradient reaches only the winning warp.
GlnetLossResult loss_glnet(const ImageBuffer& target, const ImageBuffer& warped_dp,
                           const ImageBuffer& warped_fl, const PixelMask* valid_dp = nullptr,
                           const PixelMask* valid_fl = nullptr, double alpha = kAlphaDefault);

// ---- geometric consistency ------------------------------------------------

struct GcLossResult {
    double value = 0;
    GridD ddepth_t, ddepth_s;
    Vec6 dpose{};
    size_t pixels = 0;
};

// Mean of |z_proj - z_warp| / (z_proj + z_warp) where z_proj is the depth of
// the pose-transformed point of frame t and z_warp samples the source depth
// at the projected pixel.
GcLossResult loss_geometry_consistency(const DepthMap& depth_t, const DepthMap& depth_s,
                                       const PoseSE3& pose, const CameraIntrinsics& K);

// ---- forward-backward flow consistency -------------------------------------

struct FwdBwdLossResult {
    double value = 0;
    FlowField dflow_fwd, dflow_bwd;
    size_t pixels = 0;
};

// Mean of |flow_fwd(p) + flow_bwd(p + flow_fwd(p))| over non-occluded pixels.
FwdBwdLossResult loss_fwd_bwd(const FlowField& flow_fwd, const FlowField& flow_bwd,
                              const PixelMask* occlusion = nullptr);

// ---- edge-aware smoothness --------------------------------------------------

struct DepthSmoothnessResult {
    double value = 0;
    GridD ddepth;
};

// First differences of mean-normalized disparity weighted by exp(-|dI|).
// Invariant to positive rescaling of the depth map.
DepthSmoothnessResult loss_smoothness_depth(const DepthMap& depth, const ImageBuffer& image);

struct FlowSmoothnessResult {
    double value = 0;
    FlowField dflow;
};

FlowSmoothnessResult loss_smoothness_flow(const FlowField& flow, const ImageBuffer& image);

// ---- epipolar consistency of the optical flow ------------------------------

struct EpipolarLossResult {
    double value = 0;
    FlowField dflow;
    Vec6 dpose{};
    size_t pixels = 0;
};

// Line-distance-normalized epipolar residual of flow correspondences under
// the fundamental matrix of (pose, K). Zero translation has no epipolar
// geometry: the loss is defined as 0 there.
EpipolarLossResult loss_epipolar(const FlowField& flow, const PoseSE3& pose,
                                 const CameraIntrinsics& K);

// ---- inverse depth-variance stabilizer -------------------------------------

struct VarianceLossResult {
    double value = 0;
    GridD ddepth;
};

VarianceLossResult loss_depth_variance(const DepthMap& depth, double eps = kVarianceEpsilon);

// ---- final multi-scale objective -------------------------------------------

struct LossBreakdown {
    double total = 0;
    double l_depth_pose = 0;  // photometric dp term summed over scales
    double l_flow = 0;        // weighted photometric flow term summed over scales
    double l_gc = 0, l_fwd_bwd = 0, l_smooth = 0, l_ep = 0, l_var = 0;
    LossWeights lambdas;
    size_t rigid_pixels = 0;  // contributing pixels of the dp term at scale 0
    size_t flow_pixels = 0;
    std::vector<double> per_scale_dp, per_scale_flow;

    // Recomputed lambda-weighted sum, for bookkeeping checks against total.
    double weighted_sum() const {
        return l_depth_pose + l_flow + lambdas.lambda_gc * l_gc +
               lambdas.lambda_fwd_bwd * l_fwd_bwd + lambdas.lambda_s * l_smooth +
               lambdas.lambda_ep * l_ep + lambdas.lambda_var * l_var;
    }
};

struct ViewInputs {
    const ImageBuffer* source = nullptr;
    PoseSE3 pose;                            // target -> source
    const FlowField* flow = nullptr;         // predicted optical flow, target -> source
    const PixelMask* occlusion = nullptr;    // true = excluded from the flow loss
    const PixelMask* rigid = nullptr;        // V mask for the dp loss
    const GridD* flow_weights = nullptr;     // tail weights for the flow loss
    const DepthMap* source_depth = nullptr;  // enables the gc term when present
};

struct FinalLossGrads {
    GridD ddepth;
    std::vector<Vec6> dpose;
    std::vector<FlowField> dflow;
};

// L_final = L_theta_alpha + L_delta + lambda-weighted auxiliary terms, with
// the photometric terms accumulated over `scales` pyramid levels (predictions
// downscaled alongside the frames). Auxiliary terms act at full resolution.
LossBreakdown loss_final(const ImageBuffer& target, const std::vector<ViewInputs>& views,
                         const DepthMap& depth, const CameraIntrinsics& K,
                         const LossWeights& weights, int scales, double alpha,
                         FinalLossGrads* grads);

}  // namespace coop
