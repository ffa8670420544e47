#include "coop/grad.hpp"

#include <random>

#include "coop/losses.hpp"

namespace coop {

RotationJacobianOp make_rotation_jacobian(const Vec3& rvec) {
    RotationJacobianOp op;
    const double theta2 = rvec.dot(rvec);
    if (theta2 < 1e-16) {
        op.small_angle = true;
        return op;
    }
    const Mat3 R = rodrigues(rvec);
    const Mat3 K = Mat3::skew(rvec);
    for (int i = 0; i < 3; ++i) {
        const Vec3 ImR_ei{(i == 0 ? 1.0 : 0.0) - R(0, i), (i == 1 ? 1.0 : 0.0) - R(1, i),
                          (i == 2 ? 1.0 : 0.0) - R(2, i)};
        const double wi = (i == 0) ? rvec.x : (i == 1) ? rvec.y : rvec.z;
        op.M[i] = (K * wi + Mat3::skew(rvec.cross(ImR_ei))) * (1.0 / theta2);
    }
    return op;
}

RigidFlowChainGrads chain_rigid_flow_grads(const DepthMap& depth, const PoseSE3& pose,
                                           const CameraIntrinsics& K, const FlowField& upstream,
                                           const Grid<uint8_t>* valid) {
    const int h = depth.h(), w = depth.w();
    if (upstream.h() != h || upstream.w() != w) {
        throw DimensionMismatch("chain_rigid_flow_grads: upstream shape differs");
    }
    RigidFlowChainGrads out;
    out.ddepth = GridD(h, w, 0.0);
    out.dpose = Vec6{};
    const Mat3 R = pose.rotation_matrix();
    const Vec3 t = pose.translation;
    const RotationJacobianOp rj = make_rotation_jacobian(pose.rotation);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (valid && !valid->at(y, x)) continue;
            const double ux = upstream.x.at(y, x), uy = upstream.y.at(y, x);
            if (ux == 0.0 && uy == 0.0) continue;
            const double d = depth.v.at(y, x);
            const Vec3 dir{(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0};
            const Vec3 X = dir * d;
            const Vec3 Rx = R * X;
            const Vec3 Y = Rx + t;
            if (Y.z <= kMinDepth) continue;
            const double iz = 1.0 / Y.z;
            // Projection Jacobian rows: d(pixel)/dY.
            const Vec3 jx{K.fx * iz, 0.0, -K.fx * Y.x * iz * iz};
            const Vec3 jy{0.0, K.fy * iz, -K.fy * Y.y * iz * iz};
            // u^T J, a 3-vector acting on dY.
            const Vec3 uJ = jx * ux + jy * uy;
            // Depth: dY/dd = R dir.
            out.ddepth.at(y, x) = uJ.dot(R * dir);
            // Rotation: dY/dw_i = col_i of the rotation Jacobian applied to Rx.
            out.dpose[0] += uJ.dot(rj.col(0, Rx));
            out.dpose[1] += uJ.dot(rj.col(1, Rx));
            out.dpose[2] += uJ.dot(rj.col(2, Rx));
            // Translation: dY/dt = I.
            out.dpose[3] += uJ.x;
            out.dpose[4] += uJ.y;
            out.dpose[5] += uJ.z;
        }
    }
    return out;
}

GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                           const std::vector<double>& point,
                           const std::vector<double>& analytic, const FDConfig& cfg) {
    if (point.size() != analytic.size()) {
        throw DimensionMismatch("grad_check: point and gradient sizes differ");
    }
    if (point.empty()) throw std::invalid_argument("grad_check: empty parameter block");
    GradCheckReport report;
    std::mt19937_64 rng(splitmix64(cfg.seed));
    std::uniform_int_distribution<size_t> pick(0, point.size() - 1);
    std::vector<double> probe = point;
    const double h = cfg.step;
    const int max_attempts = cfg.samples * 20;

    auto eval_at = [&](size_t i, double delta) {
        probe[i] = point[i] + delta;
        const double v = loss_fn(probe);
        probe[i] = point[i];
        if (!std::isfinite(v)) throw NonFiniteLoss("grad_check: loss not finite at probe");
        return v;
    };

    // Full sweep for small blocks, random probing for large ones.
    const bool sweep = point.size() <= static_cast<size_t>(cfg.samples);
    size_t sweep_i = 0;
    int attempts = 0;
    while (report.checked < cfg.samples && attempts < max_attempts) {
        ++attempts;
        size_t i;
        if (sweep) {
            if (sweep_i >= point.size()) break;
            i = sweep_i++;
        } else {
            i = pick(rng);
        }
        const double fp = eval_at(i, h), fm = eval_at(i, -h);
        const double fp2 = eval_at(i, 2 * h), fm2 = eval_at(i, -2 * h);
        const double fd1 = (fp - fm) / (2 * h);
        const double fd2 = (fp2 - fm2) / (4 * h);
        // Two-step disagreement marks a kink within 2h of the probe.
        if (std::abs(fd1 - fd2) > 0.25 * std::max(std::abs(fd1), std::abs(fd2)) + 1e-7) {
            ++report.rejected;
            if (sweep) ++report.checked;  // sweeps cannot resample elsewhere
            continue;
        }
        ++report.checked;
        const double a = analytic[i];
        double rel;
        if (std::abs(a - fd1) < 1e-7) {
            rel = 0.0;  // below the FD noise floor
        } else {
            rel = std::abs(a - fd1) / std::max({std::abs(a), std::abs(fd1), 1e-8});
        }
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel > cfg.tolerance) {
            report.pass = false;
            report.failures.push_back({i, a, fd1, rel});
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Random smooth inputs
// ---------------------------------------------------------------------------

namespace {

GridD smooth_noise(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GridD g(h, w);
    for (auto& v : g.v) v = u(rng);
    g = box3(box3(g));
    return g;
}

}  // namespace

ImageBuffer random_smooth_image(int h, int w, int c, uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    ImageBuffer img(h, w, c);
    for (int ch = 0; ch < c; ++ch) {
        const GridD g = smooth_noise(h, w, rng);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(y, x, ch) = 0.15 + 0.7 * g.at(y, x);
    }
    return img;
}

GridD random_smooth_grid(int h, int w, double lo, double hi, uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    GridD g = smooth_noise(h, w, rng);
    for (auto& v : g.v) v = lo + (hi - lo) * v;
    return g;
}

FlowField random_smooth_flow(int h, int w, double amplitude, uint64_t seed) {
    FlowField f(h, w);
    f.x = random_smooth_grid(h, w, -amplitude, amplitude, seed);
    f.y = random_smooth_grid(h, w, -amplitude, amplitude, seed ^ 0x9e37ULL);
    return f;
}

DepthMap random_smooth_depth(int h, int w, double lo, double hi, uint64_t seed) {
    DepthMap d;
    d.v = random_smooth_grid(h, w, lo, hi, seed);
    return d;
}

PoseSE3 random_small_pose(uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> r(-0.02, 0.02), t(-0.15, 0.15);
    return PoseSE3({r(rng), r(rng), r(rng)}, {t(rng), t(rng), 0.5 * t(rng) - 0.05});
}

// ---------------------------------------------------------------------------
// Per-operation FD suite
// ---------------------------------------------------------------------------

namespace {

struct SuiteCase {
    std::string op;
    std::string parameter;
    std::vector<double> point;
    std::vector<double> analytic;
    std::function<double(const std::vector<double>&)> loss;
};

std::vector<double> flatten_flow(const FlowField& f) {
    std::vector<double> out;
    out.reserve(f.x.v.size() * 2);
    out.insert(out.end(), f.x.v.begin(), f.x.v.end());
    out.insert(out.end(), f.y.v.begin(), f.y.v.end());
    return out;
}

FlowField unflatten_flow(const std::vector<double>& v, int h, int w) {
    FlowField f(h, w);
    std::copy(v.begin(), v.begin() + f.x.v.size(), f.x.v.begin());
    std::copy(v.begin() + f.x.v.size(), v.end(), f.y.v.begin());
    return f;
}

std::vector<double> flatten_pose(const PoseSE3& p) {
    return {p.rotation.x, p.rotation.y, p.rotation.z,
            p.translation.x, p.translation.y, p.translation.z};
}

PoseSE3 unflatten_pose(const std::vector<double>& v) {
    PoseSE3 p;
    p.rotation = {v[0], v[1], v[2]};
    p.translation = {v[3], v[4], v[5]};
    return p;
}

Vec6 pose_grad_vec(const Vec6& g) { return g; }

void add_cases_for_input(std::vector<SuiteCase>& cases, uint64_t seed) {
    const int h = 8, w = 10;
    const double alpha = kAlphaDefault;
    const ImageBuffer target = random_smooth_image(h, w, 3, seed);
    const ImageBuffer source = random_smooth_image(h, w, 3, seed ^ 2);
    const FlowField flow = random_smooth_flow(h, w, 1.3, seed ^ 3);
    const DepthMap depth = random_smooth_depth(h, w, 4.0, 9.0, seed ^ 4);
    const PoseSE3 pose = random_small_pose(seed ^ 5);
    const CameraIntrinsics K(0.9 * w, 0.9 * w, (w - 1) / 2.0, (h - 1) / 2.0);

    // loss_flow w.r.t. flow
    {
        FlowLossResult r = loss_flow(target, source, flow, nullptr, nullptr, alpha);
        cases.push_back({"loss_flow", "flow", flatten_flow(flow), flatten_flow(r.dflow),
                         [=](const std::vector<double>& v) {
                             return loss_flow(target, source, unflatten_flow(v, h, w), nullptr,
                                              nullptr, alpha)
                                 .value;
                         }});
    }
    // loss_depth_pose w.r.t. depth and pose
    {
        std::vector<DepthPoseView> views{{&source, pose, nullptr}};
        DepthPoseLossResult r = loss_depth_pose(target, views, depth, K, alpha);
        cases.push_back({"loss_depth_pose", "depth", depth.v.v, r.ddepth.v,
                         [=](const std::vector<double>& v) {
                             DepthMap d = depth;
                             d.v.v = v;
                             std::vector<DepthPoseView> vw{{&source, pose, nullptr}};
                             return loss_depth_pose(target, vw, d, K, alpha).value;
                         }});
        cases.push_back({"loss_depth_pose", "pose", flatten_pose(pose),
                         {r.dpose[0].begin(), r.dpose[0].end()},
                         [=](const std::vector<double>& v) {
                             std::vector<DepthPoseView> vw{{&source, unflatten_pose(v), nullptr}};
                             return loss_depth_pose(target, vw, depth, K, alpha).value;
                         }});
    }
    // loss_glnet w.r.t. both warped images
    {
        const ImageBuffer wdp = random_smooth_image(h, w, 3, seed ^ 6);
        const ImageBuffer wfl = random_smooth_image(h, w, 3, seed ^ 7);
        GlnetLossResult r = loss_glnet(target, wdp, wfl, nullptr, nullptr, alpha);
        cases.push_back({"loss_glnet", "image(dp)", wdp.v, r.dwarped_dp.v,
                         [=](const std::vector<double>& v) {
                             ImageBuffer im = wdp;
                             im.v = v;
                             return loss_glnet(target, im, wfl, nullptr, nullptr, alpha).value;
                         }});
        cases.push_back({"loss_glnet", "image(flow)", wfl.v, r.dwarped_fl.v,
                         [=](const std::vector<double>& v) {
                             ImageBuffer im = wfl;
                             im.v = v;
                             return loss_glnet(target, wdp, im, nullptr, nullptr, alpha).value;
                         }});
    }
    // loss_geometry_consistency w.r.t. both depths and pose
    {
        const DepthMap depth_s = random_smooth_depth(h, w, 4.0, 9.0, seed ^ 8);
        GcLossResult r = loss_geometry_consistency(depth, depth_s, pose, K);
        cases.push_back({"loss_geometry_consistency", "depth", depth.v.v, r.ddepth_t.v,
                         [=](const std::vector<double>& v) {
                             DepthMap d = depth;
                             d.v.v = v;
                             return loss_geometry_consistency(d, depth_s, pose, K).value;
                         }});
        cases.push_back({"loss_geometry_consistency", "depth(source)", depth_s.v.v, r.ddepth_s.v,
                         [=](const std::vector<double>& v) {
                             DepthMap d = depth_s;
                             d.v.v = v;
                             return loss_geometry_consistency(depth, d, pose, K).value;
                         }});
        cases.push_back({"loss_geometry_consistency", "pose", flatten_pose(pose),
                         {r.dpose.begin(), r.dpose.end()},
                         [=](const std::vector<double>& v) {
                             return loss_geometry_consistency(depth, depth_s, unflatten_pose(v), K)
                                 .value;
                         }});
    }
    // loss_fwd_bwd w.r.t. both flows
    {
        FlowField bwd = random_smooth_flow(h, w, 1.3, seed ^ 9);
        FwdBwdLossResult r = loss_fwd_bwd(flow, bwd, nullptr);
        cases.push_back({"loss_fwd_bwd", "flow(fwd)", flatten_flow(flow),
                         flatten_flow(r.dflow_fwd), [=](const std::vector<double>& v) {
                             return loss_fwd_bwd(unflatten_flow(v, h, w), bwd, nullptr).value;
                         }});
        cases.push_back({"loss_fwd_bwd", "flow(bwd)", flatten_flow(bwd),
                         flatten_flow(r.dflow_bwd), [=](const std::vector<double>& v) {
                             return loss_fwd_bwd(flow, unflatten_flow(v, h, w), nullptr).value;
                         }});
    }
    // smoothness
    {
        DepthSmoothnessResult r = loss_smoothness_depth(depth, target);
        cases.push_back({"loss_smoothness(depth)", "depth", depth.v.v, r.ddepth.v,
                         [=](const std::vector<double>& v) {
                             DepthMap d = depth;
                             d.v.v = v;
                             return loss_smoothness_depth(d, target).value;
                         }});
        FlowSmoothnessResult rf = loss_smoothness_flow(flow, target);
        cases.push_back({"loss_smoothness(flow)", "flow", flatten_flow(flow),
                         flatten_flow(rf.dflow), [=](const std::vector<double>& v) {
                             return loss_smoothness_flow(unflatten_flow(v, h, w), target).value;
                         }});
    }
    // epipolar w.r.t. flow and pose
    {
        EpipolarLossResult r = loss_epipolar(flow, pose, K);
        cases.push_back({"loss_epipolar", "flow", flatten_flow(flow), flatten_flow(r.dflow),
                         [=](const std::vector<double>& v) {
                             return loss_epipolar(unflatten_flow(v, h, w), pose, K).value;
                         }});
        cases.push_back({"loss_epipolar", "pose", flatten_pose(pose),
                         {r.dpose.begin(), r.dpose.end()},
                         [=](const std::vector<double>& v) {
                             return loss_epipolar(flow, unflatten_pose(v), K).value;
                         }});
    }
    // depth variance
    {
        VarianceLossResult r = loss_depth_variance(depth);
        cases.push_back({"loss_depth_variance", "depth", depth.v.v, r.ddepth.v,
                         [=](const std::vector<double>& v) {
                             DepthMap d = depth;
                             d.v.v = v;
                             return loss_depth_variance(d).value;
                         }});
    }
    // loss_final w.r.t. depth, pose, flow (full multi-scale chain)
    {
        LossWeights lw;
        auto eval_final = [=](const DepthMap& d, const PoseSE3& p, const FlowField& f,
                              FinalLossGrads* g) {
            std::vector<ViewInputs> views(1);
            views[0].source = &source;
            views[0].pose = p;
            views[0].flow = &f;
            return loss_final(target, views, d, K, lw, 2, alpha, g);
        };
        FinalLossGrads g;
        LossBreakdown b = eval_final(depth, pose, flow, &g);
        (void)b;
        cases.push_back({"loss_final", "depth", depth.v.v, g.ddepth.v,
                         [=](const std::vector<double>& v) {
                             DepthMap d = depth;
                             d.v.v = v;
                             return eval_final(d, pose, flow, nullptr).total;
                         }});
        cases.push_back({"loss_final", "pose", flatten_pose(pose),
                         {g.dpose[0].begin(), g.dpose[0].end()},
                         [=](const std::vector<double>& v) {
                             return eval_final(depth, unflatten_pose(v), flow, nullptr).total;
                         }});
        cases.push_back({"loss_final", "flow", flatten_flow(flow), flatten_flow(g.dflow[0]),
                         [=](const std::vector<double>& v) {
                             return eval_final(depth, pose, unflatten_flow(v, h, w), nullptr)
                                 .total;
                         }});
    }
}

}  // namespace

std::vector<GradSuiteRow> run_gradcheck_suite(const FDConfig& cfg, int inputs_per_op,
                                              bool negative_control) {
    // Aggregate each (op, parameter) over the random inputs.
    std::vector<GradSuiteRow> rows;
    for (int input = 0; input < inputs_per_op; ++input) {
        std::vector<SuiteCase> cases;
        add_cases_for_input(cases, subseed(cfg.seed, 1000 + input));
        for (auto& c : cases) {
            if (negative_control) {
                for (auto& g : c.analytic) g *= 2.0;
            }
            FDConfig local = cfg;
            local.seed = subseed(cfg.seed, 7000 + input);
            GradCheckReport rep = grad_check(c.loss, c.point, c.analytic, local);
            GradSuiteRow* row = nullptr;
            for (auto& r : rows) {
                if (r.op == c.op && r.parameter == c.parameter) {
                    row = &r;
                    break;
                }
            }
            if (!row) {
                rows.push_back({c.op, c.parameter, 0.0, 0, true});
                row = &rows.back();
            }
            row->max_rel_error = std::max(row->max_rel_error, rep.max_rel_error);
            row->rejected += rep.rejected;
            row->pass = row->pass && rep.pass;
        }
    }
    return rows;
}

}  // namespace coop
