#pragma once

#include <functional>

#include "coop/geometry.hpp"
#include "coop/image.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// Uniform gradient contract: analytic partial derivatives for every
// differentiable operation, plus the central-finite-difference checker used
// as the oracle in tests.
// ---------------------------------------------------------------------------

// d(R(rvec) v) / d rvec factored as three matrices applied to R v, so the
// per-pixel cost of pose Jacobians is three mat-vec products.
struct RotationJacobianOp {
    Mat3 M[3];
    bool small_angle = false;

    // Column i of d(R v)/d rvec given the rotated vector R v.
    Vec3 col(int i, const Vec3& Rv) const {
        if (small_angle) {
            const Vec3 ei{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
            return ei.cross(Rv);
        }
        return M[i] * Rv;
    }
};

RotationJacobianOp make_rotation_jacobian(const Vec3& rvec);

struct RigidFlowChainGrads {
    GridD ddepth;
    Vec6 dpose;  // rotation xyz then translation xyz
};

// Applies the transposed Jacobian of rigid_flow to an upstream flow-field
// gradient. Pixels marked invalid (or with transformed z <= 0) contribute
// nothing, matching the forward clamp.
RigidFlowChainGrads chain_rigid_flow_grads(const DepthMap& depth, const PoseSE3& pose,
                                           const CameraIntrinsics& K, const FlowField& upstream,
                                           const Grid<uint8_t>* valid = nullptr);

// ---------------------------------------------------------------------------
// Finite-difference checking
// ---------------------------------------------------------------------------

struct FDConfig {
    double step = 1e-4;
    double tolerance = 1e-4;
    int samples = 64;
    uint64_t seed = 1;
};

struct CoordResult {
    size_t index = 0;
    double analytic = 0;
    double fd = 0;
    double rel_error = 0;
};

struct GradCheckReport {
    double max_rel_error = 0;
    int checked = 0;
    int rejected = 0;  // coordinates resampled because FD straddled a kink
    bool pass = true;
    std::vector<CoordResult> failures;
};

// Compares analytic gradients against central differences at randomly probed
// coordinates. A coordinate whose two-step FD estimates disagree sits within
// 2h of a kink (bilinear knot, abs, min switch) and is resampled. Relative
// error uses denominator max(|analytic|, |fd|, 1e-8); differences below the
// FD noise floor count as agreement.
GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                           const std::vector<double>& point,
                           const std::vector<double>& analytic, const FDConfig& cfg);

// Pass/fail table over every differentiable loss operation on seeded random
// smooth inputs. With negative_control, analytic gradients are doubled and
// every row is expected to fail.
struct GradSuiteRow {
    std::string op;
    std::string parameter;  // depth | pose | flow | image
    double max_rel_error = 0;
    int rejected = 0;
    bool pass = false;
};

std::vector<GradSuiteRow> run_gradcheck_suite(const FDConfig& cfg, int inputs_per_op,
                                              bool negative_control);

// Smooth random inputs shared by the FD harnesses.
ImageBuffer random_smooth_image(int h, int w, int c, uint64_t seed);
GridD random_smooth_grid(int h, int w, double lo, double hi, uint64_t seed);
FlowField random_smooth_flow(int h, int w, double amplitude, uint64_t seed);
DepthMap random_smooth_depth(int h, int w, double lo, double hi, uint64_t seed);
PoseSE3 random_small_pose(uint64_t seed);

}  // namespace coop
