#include "coop/geometry.hpp"

#include <algorithm>

namespace coop {

Mat3 rodrigues(const Vec3& rvec) {
    const double theta2 = rvec.dot(rvec);
    const double theta = std::sqrt(theta2);
    double a, b;  // sin(t)/t, (1-cos(t))/t^2
    if (theta < 1e-8) {
        a = 1.0 - theta2 / 6.0;
        b = 0.5 - theta2 / 24.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    const Mat3 K = Mat3::skew(rvec);
    return Mat3::identity() + K * a + (K * K) * b;
}

Vec3 rotation_log(const Mat3& R) {
    const double cos_theta = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double theta = std::acos(cos_theta);
    const Vec3 skew_part{R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)};
    if (theta < 1e-8) {
        return skew_part * 0.5;
    }
    if (theta < M_PI - 1e-6) {
        return skew_part * (theta / (2.0 * std::sin(theta)));
    }
    // Near pi the skew part vanishes; recover the axis from the diagonal of
    // R = I + 2 b [w]x^2 with b = (1-cos)/t^2 ~ 2/pi^2.
    Vec3 axis;
    axis.x = std::sqrt(std::max(0.0, (R(0, 0) + 1.0) / 2.0));
    axis.y = std::sqrt(std::max(0.0, (R(1, 1) + 1.0) / 2.0));
    axis.z = std::sqrt(std::max(0.0, (R(2, 2) + 1.0) / 2.0));
    // Fix signs using the largest component and the off-diagonal sums.
    if (axis.x >= axis.y && axis.x >= axis.z) {
        if (R(0, 1) + R(1, 0) < 0) axis.y = -axis.y;
        if (R(0, 2) + R(2, 0) < 0) axis.z = -axis.z;
    } else if (axis.y >= axis.z) {
        if (R(0, 1) + R(1, 0) < 0) axis.x = -axis.x;
        if (R(1, 2) + R(2, 1) < 0) axis.z = -axis.z;
    } else {
        if (R(0, 2) + R(2, 0) < 0) axis.x = -axis.x;
        if (R(1, 2) + R(2, 1) < 0) axis.y = -axis.y;
    }
    const double n = axis.norm();
    if (n < 1e-12) return {theta, 0, 0};
    return axis * (theta / n);
}

Mat3 rotate_point_jacobian(const Vec3& rvec, const Vec3& v) {
    // Gallego & Yezzi: d(R v)/dw_i = ((w_i [w]x + [w x (I - R) e_i]x) / |w|^2) R v,
    // limit -[R v]x as |w| -> 0.
    const Mat3 R = rodrigues(rvec);
    const Vec3 Rv = R * v;
    const double theta2 = rvec.dot(rvec);
    Mat3 J;
    if (theta2 < 1e-16) {
        const Mat3 S = Mat3::skew(Rv) * -1.0;
        return S;
    }
    const Mat3 K = Mat3::skew(rvec);
    for (int i = 0; i < 3; ++i) {
        const Vec3 ei{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
        const Vec3 ImR_ei{ei.x - R(0, i), ei.y - R(1, i), ei.z - R(2, i)};
        const double wi = (i == 0) ? rvec.x : (i == 1) ? rvec.y : rvec.z;
        const Mat3 M = (K * wi + Mat3::skew(rvec.cross(ImR_ei))) * (1.0 / theta2);
        const Vec3 col = M * Rv;
        J(0, i) = col.x;
        J(1, i) = col.y;
        J(2, i) = col.z;
    }
    return J;
}

void PoseSE3::normalize_angle() {
    double theta = rotation.norm();
    if (theta <= M_PI || theta < 1e-12) return;
    // Wrap the angle into [0, pi] keeping the same rotation.
    double wrapped = std::fmod(theta, 2.0 * M_PI);
    if (wrapped > M_PI) wrapped -= 2.0 * M_PI;  // now in (-pi, pi]
    rotation = rotation * (wrapped / theta);
}

Mat3 PoseSE3::rotation_matrix() const { return rodrigues(rotation); }

PoseSE3 PoseSE3::compose(const PoseSE3& other) const {
    const Mat3 Ra = rotation_matrix();
    const Mat3 Rb = other.rotation_matrix();
    PoseSE3 out;
    out.rotation = rotation_log(Ra * Rb);
    out.translation = Ra * other.translation + translation;
    return out;
}

PoseSE3 PoseSE3::inverse() const {
    const Mat3 Rt = rotation_matrix().transposed();
    PoseSE3 out;
    out.rotation = rotation_log(Rt);
    out.translation = (Rt * translation) * -1.0;
    return out;
}

void DepthMap::validate() const {
    for (double d : v.v) {
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw NonPositiveDepth("depth map contains nonpositive or nonfinite values");
        }
    }
}

Projection project(const Vec3& point, const CameraIntrinsics& K) {
    if (!(point.z > 0.0)) throw NonPositiveDepth("cannot project point with z <= 0");
    return {{K.fx * point.x / point.z + K.cx, K.fy * point.y / point.z + K.cy}, point.z};
}

Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& K) {
    if (!(depth > 0.0)) throw NonPositiveDepth("cannot backproject with depth <= 0");
    return {depth * (pixel.x - K.cx) / K.fx, depth * (pixel.y - K.cy) / K.fy, depth};
}

RigidFlowResult rigid_flow(const DepthMap& depth, const PoseSE3& pose,
                           const CameraIntrinsics& K) {
    const int h = depth.h(), w = depth.w();
    RigidFlowResult out;
    out.flow = FlowField(h, w);
    out.valid = Grid<uint8_t>(h, w, 0);
    const Mat3 R = pose.rotation_matrix();
    const Vec3 t = pose.translation;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = depth.v.at(y, x);
            const Vec3 X{d * (x - K.cx) / K.fx, d * (y - K.cy) / K.fy, d};
            const Vec3 Y = R * X + t;
            if (Y.z <= kMinDepth) continue;  // flagged invalid, flow stays 0
            out.flow.x.at(y, x) = K.fx * Y.x / Y.z + K.cx - x;
            out.flow.y.at(y, x) = K.fy * Y.y / Y.z + K.cy - y;
            out.valid.at(y, x) = 1;
        }
    }
    return out;
}

}  // namespace coop
