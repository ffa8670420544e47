#pragma once

#include "coop/common.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// Pinhole camera, SE(3) pose, and the rigid flow induced by camera motion.
// Pixel convention: integer coordinates at pixel centers, x right, y down,
// origin at the top-left pixel center.
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
    double fx = 1, fy = 1, cx = 0, cy = 0;

    CameraIntrinsics() = default;
    CameraIntrinsics(double fx_, double fy_, double cx_, double cy_)
        : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
        if (fx <= 0 || fy <= 0) throw std::invalid_argument("focal lengths must be positive");
    }

    // Intrinsics of the image downscaled by 2 (pixel-center convention:
    // fine coordinate u maps to coarse (u - 0.5) / 2).
    CameraIntrinsics halved() const {
        return CameraIntrinsics(fx / 2, fy / 2, (cx - 0.5) / 2, (cy - 0.5) / 2);
    }
};

// Rigid displacement stored as axis-angle rotation (radians) + translation.
struct PoseSE3 {
    Vec3 rotation;     // axis-angle, angle = |rotation| in [0, pi]
    Vec3 translation;  // meters

    PoseSE3() = default;
    PoseSE3(const Vec3& r, const Vec3& t) : rotation(r), translation(t) { normalize_angle(); }

    static PoseSE3 identity() { return PoseSE3(); }

    Mat3 rotation_matrix() const;

    Vec3 apply(const Vec3& p) const { return rotation_matrix() * p + translation; }

    PoseSE3 compose(const PoseSE3& other) const;  // this ∘ other (apply other first)
    PoseSE3 inverse() const;

  private:
    void normalize_angle();
};

// Rodrigues rotation from an axis-angle vector.
Mat3 rodrigues(const Vec3& rvec);

// Axis-angle from a rotation matrix, angle in [0, pi].
Vec3 rotation_log(const Mat3& R);

// d(R(rvec) * v) / d(rvec), one column per rotation-vector component.
Mat3 rotate_point_jacobian(const Vec3& rvec, const Vec3& v);

struct DepthMap {
    GridD v;

    DepthMap() = default;
    DepthMap(int h, int w, double fill = 1.0) : v(h, w, fill) {}
    int h() const { return v.h; }
    int w() const { return v.w; }

    void validate() const;  // throws NonPositiveDepth on nonpositive/nonfinite entries
};

// Per-pixel 2-vector displacement in pixels, stored as two planes.
struct FlowField {
    GridD x, y;

    FlowField() = default;
    FlowField(int h, int w) : x(h, w, 0.0), y(h, w, 0.0) {}
    int h() const { return x.h; }
    int w() const { return x.w; }
    bool same_shape(const FlowField& o) const { return x.same_shape(o.x); }
};

struct Projection {
    Vec2 pixel;
    double depth = 0;
};

// pixel = (fx*x/z + cx, fy*y/z + cy); throws NonPositiveDepth when z <= 0.
Projection project(const Vec3& point, const CameraIntrinsics& K);

// Inverse of project; throws NonPositiveDepth when depth <= 0.
Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& K);

struct RigidFlowResult {
    FlowField flow;
    Grid<uint8_t> valid;  // false where the transformed point lands behind the camera
};

// Apparent motion of each pixel under camera motion only:
// F(p) = project(pose ∘ backproject(p, depth(p))) - p.
RigidFlowResult rigid_flow(const DepthMap& depth, const PoseSE3& pose,
                           const CameraIntrinsics& K);

// Minimum z for a transformed point to count as in front of the camera.
inline constexpr double kMinDepth = 1e-9;

}  // namespace coop
