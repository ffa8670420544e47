#pragma once

#include "coop/image.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// Ground-truth scene generator: a textured background plane plus moving
// textured boxes, rendered for frames t-1, t, t+1 under a constant-velocity
// camera. Every truth channel is consistent by construction; in particular
// the target frame is assembled so that bilinear warping of frame t+1 along
// the true flow reproduces it exactly outside occlusions at zero noise.
// ---------------------------------------------------------------------------

struct SceneBox {
    double center_x = 0, center_y = 0;  // world coords at time t
    double half_x = 1, half_y = 1;
    double z = 5;            // plane depth at time t
    Vec3 velocity;           // world units per frame step
    uint64_t texture_seed = 0;
    double texture_scale = 1;              // world-space noise wavelength
    std::array<double, 3> flat_color{0.5, 0.5, 0.5};  // homogeneous rendering
};

struct SceneSpec {
    int h = 48, w = 64;
    CameraIntrinsics K{60.0, 60.0, 31.5, 23.5};
    double background_z = 12.0;
    uint64_t background_texture_seed = 1;
    double background_texture_scale = 1.6;
    std::vector<SceneBox> boxes;
    Vec3 cam_rot_vel;    // camera rotation per frame step (axis-angle)
    Vec3 cam_trans_vel;  // camera translation per frame step
    double noise = 0.0;  // iid gaussian sigma added to all frames
    bool homogeneous = false;  // flat-colored boxes (photometrically ambiguous)
    uint64_t seed = 0;
};

struct SceneTruth {
    ImageBuffer frame_prev, frame_t, frame_next;
    DepthMap depth;                        // frame t
    PoseSE3 pose_to_prev, pose_to_next;    // t -> s
    FlowField rigid_flow, total_flow;      // canonical pair t -> t+1
    FlowField rigid_flow_prev, total_flow_prev;
    PixelMask moving;                      // box pixels with nonzero velocity
    PixelMask occlusion;                   // not co-visible in t+1 (canonical pair)
    PixelMask occlusion_prev;
};

// Renders the scene; throws EmptyFrustum when some pixel ray hits nothing.
SceneTruth render(const SceneSpec& spec);

// Deterministic randomized specs; per-scene subseed = splitmix64(seed ^ index).
// difficulty in [0, 1] scales moving-object count, size and speed; 0 means a
// fully static scene.
std::vector<SceneSpec> scene_batch(uint64_t seed, int count, double difficulty,
                                   bool homogeneous = false);

// Fraction of frame-t pixels covered by moving boxes.
double moving_fraction(const SceneTruth& truth);

}  // namespace coop
