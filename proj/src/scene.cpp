#include "coop/scene.hpp"

#include <random>

#include "coop/warp.hpp"

namespace coop {

namespace {

inline double hash01(int64_t ix, int64_t iy, uint64_t seed) {
    const uint64_t h = splitmix64(seed ^ (static_cast<uint64_t>(ix) * 0x9E3779B97F4A7C15ULL) ^
                                  (static_cast<uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Band-limited multi-octave value noise; bilinear between lattice values so
// the texture is smooth at the sampling scale.
double value_noise(double u, double v, uint64_t seed) {
    double acc = 0, wsum = 0, freq = 1.0, amp = 1.0;
    for (int k = 0; k < 3; ++k) {
        const double su = u * freq, sv = v * freq;
        const double fu = su - std::floor(su), fv = sv - std::floor(sv);
        const int64_t iu = static_cast<int64_t>(std::floor(su));
        const int64_t iv = static_cast<int64_t>(std::floor(sv));
        const double h00 = hash01(iu, iv, seed + k);
        const double h01 = hash01(iu + 1, iv, seed + k);
        const double h10 = hash01(iu, iv + 1, seed + k);
        const double h11 = hash01(iu + 1, iv + 1, seed + k);
        const double top = h00 + fu * (h01 - h00);
        const double bot = h10 + fu * (h11 - h10);
        acc += amp * (top + fv * (bot - top));
        wsum += amp;
        freq *= 2.0;
        amp *= 0.5;
    }
    return acc / wsum;
}

struct Hit {
    double lambda = 0;   // camera-frame depth (rays are normalized to z=1)
    int surface = -1;    // -1 none, 0 background, 1.. = box index + 1
    Vec3 world;          // intersection point in world coords
};

struct CameraAt {
    Mat3 world_to_cam;  // A
    Mat3 cam_to_world;  // A^T
    Vec3 center;
};

CameraAt camera_at(const SceneSpec& spec, double dt) {
    CameraAt c;
    c.world_to_cam = rodrigues(spec.cam_rot_vel * dt);
    c.cam_to_world = c.world_to_cam.transposed();
    c.center = spec.cam_trans_vel * dt;
    return c;
}

// Nearest surface along the ray of continuous pixel (px, py) at time t + dt.
Hit cast(const SceneSpec& spec, const CameraAt& cam, double px, double py, double dt) {
    const Vec3 dir_cam{(px - spec.K.cx) / spec.K.fx, (py - spec.K.cy) / spec.K.fy, 1.0};
    const Vec3 dir = cam.cam_to_world * dir_cam;
    Hit best;
    if (dir.z > 1e-9) {
        const double lam = (spec.background_z - cam.center.z) / dir.z;
        if (lam > 0) best = {lam, 0, cam.center + dir * lam};
    }
    for (size_t i = 0; i < spec.boxes.size(); ++i) {
        const SceneBox& b = spec.boxes[i];
        const double bz = b.z + b.velocity.z * dt;
        if (dir.z <= 1e-9) continue;
        const double lam = (bz - cam.center.z) / dir.z;
        if (lam <= 0 || (best.surface >= 0 && lam >= best.lambda)) continue;
        const Vec3 X = cam.center + dir * lam;
        const double bx = b.center_x + b.velocity.x * dt;
        const double by = b.center_y + b.velocity.y * dt;
        if (std::abs(X.x - bx) <= b.half_x && std::abs(X.y - by) <= b.half_y) {
            best = {lam, static_cast<int>(i) + 1, X};
        }
    }
    return best;
}

// Surface color at a hit; box textures ride along with the box.
void surface_color(const SceneSpec& spec, const Hit& hit, double dt, double* rgb) {
    if (hit.surface == 0) {
        for (int ch = 0; ch < 3; ++ch) {
            const double n = value_noise(hit.world.x / spec.background_texture_scale,
                                         hit.world.y / spec.background_texture_scale,
                                         spec.background_texture_seed + 97 * ch);
            rgb[ch] = 0.12 + 0.76 * n;
        }
        return;
    }
    const SceneBox& b = spec.boxes[hit.surface - 1];
    if (spec.homogeneous) {
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = b.flat_color[ch];
        return;
    }
    const double lx = hit.world.x - (b.center_x + b.velocity.x * dt);
    const double ly = hit.world.y - (b.center_y + b.velocity.y * dt);
    for (int ch = 0; ch < 3; ++ch) {
        const double n = value_noise(lx / b.texture_scale, ly / b.texture_scale,
                                     b.texture_seed + 131 * ch);
        rgb[ch] = 0.12 + 0.76 * n;
    }
}

ImageBuffer render_frame(const SceneSpec& spec, double dt) {
    const CameraAt cam = camera_at(spec, dt);
    ImageBuffer img(spec.h, spec.w, 3);
    double rgb[3];
    for (int y = 0; y < spec.h; ++y) {
        for (int x = 0; x < spec.w; ++x) {
            const Hit hit = cast(spec, cam, x, y, dt);
            if (hit.surface < 0) throw EmptyFrustum("scene ray misses every surface");
            surface_color(spec, hit, dt, rgb);
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = rgb[ch];
        }
    }
    return img;
}

PoseSE3 pose_to(const SceneSpec& spec, double dt) {
    const CameraAt cam = camera_at(spec, dt);
    return PoseSE3(rotation_log(cam.world_to_cam), (cam.world_to_cam * cam.center) * -1.0);
}

void add_noise(ImageBuffer& img, double sigma, uint64_t seed) {
    if (sigma <= 0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& v : img.v) v = std::clamp(v + n(rng), 0.0, 1.0);
}

}  // namespace

SceneTruth render(const SceneSpec& spec) {
    if (spec.h < 4 || spec.w < 4) throw std::invalid_argument("scene too small");
    SceneTruth out;
    out.frame_prev = render_frame(spec, -1.0);
    out.frame_next = render_frame(spec, +1.0);
    out.pose_to_prev = pose_to(spec, -1.0);
    out.pose_to_next = pose_to(spec, +1.0);
    out.depth = DepthMap(spec.h, spec.w);
    out.rigid_flow = FlowField(spec.h, spec.w);
    out.total_flow = FlowField(spec.h, spec.w);
    out.rigid_flow_prev = FlowField(spec.h, spec.w);
    out.total_flow_prev = FlowField(spec.h, spec.w);
    out.moving = PixelMask(spec.h, spec.w);
    out.occlusion = PixelMask(spec.h, spec.w);
    out.occlusion_prev = PixelMask(spec.h, spec.w);

    const CameraAt cam_t = camera_at(spec, 0.0);
    struct PixelInfo {
        Hit hit;
        Vec3 vel;  // world velocity of the material point
    };
    Grid<PixelInfo> info(spec.h, spec.w);

    for (int y = 0; y < spec.h; ++y) {
        for (int x = 0; x < spec.w; ++x) {
            const Hit hit = cast(spec, cam_t, x, y, 0.0);
            if (hit.surface < 0) throw EmptyFrustum("scene ray misses every surface");
            out.depth.v.at(y, x) = hit.lambda;
            Vec3 vel{};
            if (hit.surface > 0) {
                vel = spec.boxes[hit.surface - 1].velocity;
                out.moving.set(y, x, vel.norm() > 0.0);
            }
            info.at(y, x) = {hit, vel};
        }
    }

    // Flows and occlusion per pair. A pixel is occluded in s when its advected
    // material point is off-frame, behind the camera, or covered by a nearer
    // surface at time s.
    for (int pair = 0; pair < 2; ++pair) {
        const double dt = pair == 0 ? +1.0 : -1.0;
        const CameraAt cam_s = camera_at(spec, dt);
        FlowField& total = pair == 0 ? out.total_flow : out.total_flow_prev;
        FlowField& rigid = pair == 0 ? out.rigid_flow : out.rigid_flow_prev;
        PixelMask& occl = pair == 0 ? out.occlusion : out.occlusion_prev;
        for (int y = 0; y < spec.h; ++y) {
            for (int x = 0; x < spec.w; ++x) {
                const PixelInfo& pi = info.at(y, x);
                // Static-assumption image position.
                const Vec3 Yr = cam_s.world_to_cam * (pi.hit.world - cam_s.center);
                if (Yr.z > kMinDepth) {
                    rigid.x.at(y, x) = spec.K.fx * Yr.x / Yr.z + spec.K.cx - x;
                    rigid.y.at(y, x) = spec.K.fy * Yr.y / Yr.z + spec.K.cy - y;
                }
                // Advected material point.
                const Vec3 Xs = pi.hit.world + pi.vel * dt;
                const Vec3 Y = cam_s.world_to_cam * (Xs - cam_s.center);
                if (Y.z <= kMinDepth) {
                    occl.set(y, x, true);
                    continue;
                }
                const double qx = spec.K.fx * Y.x / Y.z + spec.K.cx;
                const double qy = spec.K.fy * Y.y / Y.z + spec.K.cy;
                total.x.at(y, x) = qx - x;
                total.y.at(y, x) = qy - y;
                if (qx < 0 || qx > spec.w - 1 || qy < 0 || qy > spec.h - 1) {
                    occl.set(y, x, true);
                    continue;
                }
                const Hit vis = cast(spec, cam_s, qx, qy, dt);
                if (vis.surface < 0 || vis.lambda < Y.z - 1e-6) occl.set(y, x, true);
            }
        }
    }

    // Assemble frame t: non-occluded pixels pull their value from frame t+1
    // through the true flow (making the canonical warp reconstruction exact);
    // occluded pixels render from their own surface.
    out.frame_t = ImageBuffer(spec.h, spec.w, 3);
    double rgb[3];
    for (int y = 0; y < spec.h; ++y) {
        for (int x = 0; x < spec.w; ++x) {
            if (!out.occlusion.at(y, x)) {
                const double qx = x + out.total_flow.x.at(y, x);
                const double qy = y + out.total_flow.y.at(y, x);
                // bilinear sample of frame_next at (qx, qy), per channel
                const int x0 = std::clamp(static_cast<int>(std::floor(qx)), 0, spec.w - 1);
                const int x1 = std::clamp(x0 + 1, 0, spec.w - 1);
                const int y0 = std::clamp(static_cast<int>(std::floor(qy)), 0, spec.h - 1);
                const int y1 = std::clamp(y0 + 1, 0, spec.h - 1);
                const double fx = qx - std::floor(qx), fy = qy - std::floor(qy);
                for (int ch = 0; ch < 3; ++ch) {
                    const double v00 = out.frame_next.at(y0, x0, ch);
                    const double v01 = out.frame_next.at(y0, x1, ch);
                    const double v10 = out.frame_next.at(y1, x0, ch);
                    const double v11 = out.frame_next.at(y1, x1, ch);
                    const double top = v00 + fx * (v01 - v00);
                    const double bot = v10 + fx * (v11 - v10);
                    out.frame_t.at(y, x, ch) = top + fy * (bot - top);
                }
            } else {
                surface_color(spec, info.at(y, x).hit, 0.0, rgb);
                for (int ch = 0; ch < 3; ++ch) out.frame_t.at(y, x, ch) = rgb[ch];
            }
        }
    }

    add_noise(out.frame_prev, spec.noise, subseed(spec.seed, 11));
    add_noise(out.frame_t, spec.noise, subseed(spec.seed, 12));
    add_noise(out.frame_next, spec.noise, subseed(spec.seed, 13));
    return out;
}

std::vector<SceneSpec> scene_batch(uint64_t seed, int count, double difficulty,
                                   bool homogeneous) {
    if (count < 1) throw std::invalid_argument("scene_batch: count must be >= 1");
    difficulty = std::clamp(difficulty, 0.0, 1.0);
    std::vector<SceneSpec> specs;
    specs.reserve(count);
    for (int i = 0; i < count; ++i) {
        const uint64_t s = subseed(seed, static_cast<uint64_t>(i));
        std::mt19937_64 rng(s);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        SceneSpec spec;
        spec.seed = s;
        spec.homogeneous = homogeneous;
        spec.noise = 0.01;
        spec.h = 48;
        spec.w = 64;
        spec.K = CameraIntrinsics(0.95 * spec.w, 0.95 * spec.w, (spec.w - 1) / 2.0,
                                  (spec.h - 1) / 2.0);
        spec.background_z = 10.0 + 6.0 * u(rng);
        spec.background_texture_seed = subseed(s, 100);
        // background noise wavelength ~8 px on screen
        spec.background_texture_scale = 8.0 * spec.background_z / spec.K.fx;
        spec.cam_rot_vel = {0.004 * (2 * u(rng) - 1), 0.004 * (2 * u(rng) - 1),
                            0.003 * (2 * u(rng) - 1)};
        spec.cam_trans_vel = {0.30 * (2 * u(rng) - 1) * spec.background_z / 12.0,
                              0.18 * (2 * u(rng) - 1) * spec.background_z / 12.0,
                              (0.05 + 0.22 * u(rng)) * spec.background_z / 12.0};
        const int nbox = difficulty <= 0.0 ? 0 : 1 + static_cast<int>(difficulty * 2.999);
        for (int b = 0; b < nbox; ++b) {
            SceneBox box;
            box.z = (0.30 + 0.35 * u(rng)) * spec.background_z;
            const double size_px = (5.0 + 4.0 * u(rng)) * (0.75 + 0.75 * difficulty);
            box.half_x = size_px * box.z / spec.K.fx;
            box.half_y = (0.7 + 0.6 * u(rng)) * size_px * box.z / spec.K.fy;
            // keep the box inside the frame at time t with a margin
            const double margin = 4.0;
            const double px = margin + size_px +
                              u(rng) * (spec.w - 1 - 2 * (margin + size_px));
            const double py = margin + size_px +
                              u(rng) * (spec.h - 1 - 2 * (margin + size_px));
            box.center_x = (px - spec.K.cx) * box.z / spec.K.fx;
            box.center_y = (py - spec.K.cy) * box.z / spec.K.fy;
            const double speed_px = (1.5 + 2.5 * u(rng)) * (0.5 + difficulty);
            const double ang = 2.0 * M_PI * u(rng);
            box.velocity = {std::cos(ang) * speed_px * box.z / spec.K.fx,
                            std::sin(ang) * speed_px * box.z / spec.K.fy,
                            0.04 * (2 * u(rng) - 1) * difficulty};
            box.texture_seed = subseed(s, 200 + b);
            box.texture_scale = 6.0 * box.z / spec.K.fx;
            box.flat_color = {0.25 + 0.5 * u(rng), 0.25 + 0.5 * u(rng), 0.25 + 0.5 * u(rng)};
            spec.boxes.push_back(box);
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

double moving_fraction(const SceneTruth& truth) {
    return static_cast<double>(truth.moving.count()) /
           static_cast<double>(truth.moving.m.v.size());
}

}  // namespace coop
