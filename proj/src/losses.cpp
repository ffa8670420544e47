#include "coop/losses.hpp"

#include <algorithm>

namespace coop {

namespace {

inline double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

inline Mat3 intrinsics_inverse(const CameraIntrinsics& K) {
    Mat3 m{};
    m(0, 0) = 1.0 / K.fx;
    m(0, 2) = -K.cx / K.fx;
    m(1, 1) = 1.0 / K.fy;
    m(1, 2) = -K.cy / K.fy;
    m(2, 2) = 1.0;
    return m;
}

}  // namespace

FlowLossResult loss_flow(const ImageBuffer& target, const ImageBuffer& source,
                         const FlowField& flow, const GridD* weights,
                         const PixelMask* occlusion, double alpha) {
    if (!target.same_shape(source) || target.h != flow.h() || target.w != flow.w()) {
        throw DimensionMismatch("loss_flow: shape mismatch");
    }
    const int h = target.h, w = target.w;
    const WarpResult warped = warp_by_flow(source, flow);
    const GridD phi = photometric_error(target, warped.image, alpha);

    GridD upstream(h, w, 0.0);
    size_t n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!warped.valid.at(y, x)) continue;
            if (occlusion && occlusion->at(y, x)) continue;
            upstream.at(y, x) = weights ? weights->at(y, x) : 1.0;
            ++n;
        }
    }
    if (n == 0) throw EmptyMask("loss_flow: no contributing pixels");

    FlowLossResult out;
    out.pixels = n;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < upstream.v.size(); ++i) {
        upstream.v[i] *= inv_n;
        out.value += upstream.v[i] * phi.v[i];
    }
    const ImageBuffer dwarped = photometric_backward(target, warped.image, upstream, alpha);
    const PositionGrad pg = warp_position_gradient(source, flow, dwarped);
    out.dflow.x = pg.x;
    out.dflow.y = pg.y;
    return out;
}

DepthPoseLossResult loss_depth_pose(const ImageBuffer& target,
                                    const std::vector<DepthPoseView>& views,
                                    const DepthMap& depth, const CameraIntrinsics& K,
                                    double alpha) {
    if (views.empty()) throw EmptyCandidateList("loss_depth_pose: no source views");
    if (target.h != depth.h() || target.w != depth.w()) {
        throw DimensionMismatch("loss_depth_pose: target and depth differ");
    }
    const int h = target.h, w = target.w;
    const size_t nv = views.size();

    std::vector<RigidFlowResult> rflows(nv);
    std::vector<WarpResult> warps(nv);
    std::vector<GridD> phis(nv);
    for (size_t v = 0; v < nv; ++v) {
        if (!target.same_shape(*views[v].source)) {
            throw DimensionMismatch("loss_depth_pose: source shape differs");
        }
        rflows[v] = rigid_flow(depth, views[v].pose, K);
        warps[v] = warp_by_flow(*views[v].source, rflows[v].flow);
        phis[v] = photometric_error(target, warps[v].image, alpha);
    }

    DepthPoseLossResult out;
    out.argmin = Grid<int>(h, w, -1);
    size_t n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double best = 0;
            int best_v = -1;
            for (size_t v = 0; v < nv; ++v) {
                if (!rflows[v].valid.at(y, x) || !warps[v].valid.at(y, x)) continue;
                if (views[v].rigid && !views[v].rigid->at(y, x)) continue;
                const double e = phis[v].at(y, x);
                if (best_v < 0 || e < best) {
                    best = e;
                    best_v = static_cast<int>(v);
                }
            }
            if (best_v >= 0) {
                out.argmin.at(y, x) = best_v;
                out.value += best;
                ++n;
            }
        }
    }
    if (n == 0) throw EmptyMask("loss_depth_pose: rigid mask admits no pixels");
    out.pixels = n;
    out.value /= static_cast<double>(n);

    out.ddepth = GridD(h, w, 0.0);
    out.dpose.assign(nv, Vec6{});
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t v = 0; v < nv; ++v) {
        GridD upstream(h, w, 0.0);
        bool any = false;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (out.argmin.at(y, x) == static_cast<int>(v)) {
                    upstream.at(y, x) = inv_n;
                    any = true;
                }
            }
        }
        if (!any) continue;
        const ImageBuffer dwarped =
            photometric_backward(target, warps[v].image, upstream, alpha);
        const PositionGrad pg = warp_position_gradient(*views[v].source, rflows[v].flow, dwarped);
        FlowField up;
        up.x = pg.x;
        up.y = pg.y;
        const RigidFlowChainGrads ch =
            chain_rigid_flow_grads(depth, views[v].pose, K, up, &rflows[v].valid);
        for (size_t i = 0; i < out.ddepth.v.size(); ++i) out.ddepth.v[i] += ch.ddepth.v[i];
        for (int i = 0; i < 6; ++i) out.dpose[v][i] += ch.dpose[i];
    }
    return out;
}

GlnetLossResult loss_glnet(const ImageBuffer& target, const ImageBuffer& warped_dp,
                           const ImageBuffer& warped_fl, const PixelMask* valid_dp,
                           const PixelMask* valid_fl, double alpha) {
    if (!target.same_shape(warped_dp) || !target.same_shape(warped_fl)) {
        throw DimensionMismatch("loss_glnet: shape mismatch");
    }
    const int h = target.h, w = target.w;
    const GridD phi_dp = photometric_error(target, warped_dp, alpha);
    const GridD phi_fl = photometric_error(target, warped_fl, alpha);

    GlnetLossResult out;
    out.assignment = Grid<int>(h, w, -1);
    size_t n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool dp_ok = !valid_dp || valid_dp->at(y, x);
            const bool fl_ok = !valid_fl || valid_fl->at(y, x);
            if (!dp_ok && !fl_ok) continue;
            int who;
            if (dp_ok && fl_ok) {
                // ties go to the depth-pose warp
                who = phi_dp.at(y, x) <= phi_fl.at(y, x) ? 0 : 1;
            } else {
                who = dp_ok ? 0 : 1;
            }
            out.assignment.at(y, x) = who;
            out.value += who == 0 ? phi_dp.at(y, x) : phi_fl.at(y, x);
            ++n;
        }
    }
    if (n == 0) throw EmptyMask("loss_glnet: no valid pixels");
    out.pixels = n;
    out.value /= static_cast<double>(n);

    const double inv_n = 1.0 / static_cast<double>(n);
    GridD up_dp(h, w, 0.0), up_fl(h, w, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (out.assignment.at(y, x) == 0) up_dp.at(y, x) = inv_n;
            if (out.assignment.at(y, x) == 1) up_fl.at(y, x) = inv_n;
        }
    }
    out.dwarped_dp = photometric_backward(target, warped_dp, up_dp, alpha);
    out.dwarped_fl = photometric_backward(target, warped_fl, up_fl, alpha);
    return out;
}

GcLossResult loss_geometry_consistency(const DepthMap& depth_t, const DepthMap& depth_s,
                                       const PoseSE3& pose, const CameraIntrinsics& K) {
    if (!depth_t.v.same_shape(depth_s.v)) {
        throw DimensionMismatch("loss_geometry_consistency: depth shapes differ");
    }
    const int h = depth_t.h(), w = depth_t.w();
    const Mat3 R = pose.rotation_matrix();
    const Vec3 t = pose.translation;
    const RotationJacobianOp rj = make_rotation_jacobian(pose.rotation);

    GcLossResult out;
    out.ddepth_t = GridD(h, w, 0.0);
    out.ddepth_s = GridD(h, w, 0.0);

    struct Cached {
        int x, y;
        Vec3 Rdir, Rx, Y;
        GridSample s;
    };
    std::vector<Cached> hits;
    hits.reserve(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = depth_t.v.at(y, x);
            const Vec3 dir{(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0};
            const Vec3 Rx = R * (dir * d);
            const Vec3 Y = Rx + t;
            if (Y.z <= kMinDepth) continue;
            const double qx = K.fx * Y.x / Y.z + K.cx;
            const double qy = K.fy * Y.y / Y.z + K.cy;
            const GridSample s = sample_bilinear(depth_s.v, qx, qy);
            if (!s.inside) continue;
            out.value += std::abs(Y.z - s.value) / (Y.z + s.value);
            hits.push_back({x, y, R * dir, Rx, Y, s});
        }
    }
    if (hits.empty()) throw EmptyValidSet("loss_geometry_consistency: no valid projections");
    out.pixels = hits.size();
    out.value /= static_cast<double>(hits.size());

    const double inv_n = 1.0 / static_cast<double>(hits.size());
    for (const Cached& c : hits) {
        const double z = c.Y.z, sv = c.s.value;
        const double diff = z - sv, denom = z + sv;
        const double dz = inv_n * (sgn(diff) / denom - std::abs(diff) / (denom * denom));
        const double dsv = inv_n * (-sgn(diff) / denom - std::abs(diff) / (denom * denom));
        const double iz = 1.0 / z;
        const Vec3 jx{K.fx * iz, 0.0, -K.fx * c.Y.x * iz * iz};
        const Vec3 jy{0.0, K.fy * iz, -K.fy * c.Y.y * iz * iz};
        // dsv through the sample position q(Y).
        const Vec3 dq = jx * c.s.dvx + jy * c.s.dvy;
        // total dY sensitivity: z contributes on the z axis only.
        const Vec3 dY{dq.x * dsv, dq.y * dsv, dq.z * dsv + dz};
        out.ddepth_t.at(c.y, c.x) += dY.dot(c.Rdir);
        for (int i = 0; i < 3; ++i) out.dpose[i] += dY.dot(rj.col(i, c.Rx));
        out.dpose[3] += dY.x;
        out.dpose[4] += dY.y;
        out.dpose[5] += dY.z;
        // scatter dsv into the source depth corners
        const double qx = K.fx * c.Y.x / z + K.cx;
        const double qy = K.fy * c.Y.y / z + K.cy;
        scatter_bilinear(out.ddepth_s, qx, qy, dsv);
    }
    return out;
}

FwdBwdLossResult loss_fwd_bwd(const FlowField& flow_fwd, const FlowField& flow_bwd,
                              const PixelMask* occlusion) {
    if (!flow_fwd.same_shape(flow_bwd)) {
        throw DimensionMismatch("loss_fwd_bwd: flow shapes differ");
    }
    const int h = flow_fwd.h(), w = flow_fwd.w();
    FwdBwdLossResult out;
    out.dflow_fwd = FlowField(h, w);
    out.dflow_bwd = FlowField(h, w);

    struct Hit {
        int x, y;
        double rx, ry, n;
        GridSample bx, by;
    };
    std::vector<Hit> hits;
    hits.reserve(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (occlusion && occlusion->at(y, x)) continue;
            const double fx = flow_fwd.x.at(y, x), fy = flow_fwd.y.at(y, x);
            const GridSample bx = sample_bilinear(flow_bwd.x, x + fx, y + fy);
            const GridSample by = sample_bilinear(flow_bwd.y, x + fx, y + fy);
            const double rx = fx + bx.value, ry = fy + by.value;
            const double n = std::sqrt(rx * rx + ry * ry);
            out.value += n;
            hits.push_back({x, y, rx, ry, n, bx, by});
        }
    }
    if (hits.empty()) throw EmptyMask("loss_fwd_bwd: everything occluded");
    out.pixels = hits.size();
    out.value /= static_cast<double>(hits.size());

    const double inv_n = 1.0 / static_cast<double>(hits.size());
    for (const Hit& hit : hits) {
        if (hit.n == 0.0) continue;
        const double ux = inv_n * hit.rx / hit.n;
        const double uy = inv_n * hit.ry / hit.n;
        // dr/dfwd = I + position derivative of the backward lookup
        out.dflow_fwd.x.at(hit.y, hit.x) += ux * (1.0 + hit.bx.dvx) + uy * hit.by.dvx;
        out.dflow_fwd.y.at(hit.y, hit.x) += ux * hit.bx.dvy + uy * (1.0 + hit.by.dvy);
        const double px = hit.x + flow_fwd.x.at(hit.y, hit.x);
        const double py = hit.y + flow_fwd.y.at(hit.y, hit.x);
        scatter_bilinear(out.dflow_bwd.x, px, py, ux);
        scatter_bilinear(out.dflow_bwd.y, px, py, uy);
    }
    return out;
}

namespace {

// Shared edge-aware first-difference machinery. Calls fn(ia, ib, wgt) for
// every horizontal and vertical neighbor pair with its exp(-|dI|) weight.
template <typename F>
size_t for_each_edge(const ImageBuffer& image, F&& fn) {
    const int h = image.h, w = image.w;
    size_t count = 0;
    auto edge_weight = [&](int y0, int x0, int y1, int x1) {
        double g = 0;
        for (int ch = 0; ch < image.c; ++ch) {
            g += std::abs(image.at(y1, x1, ch) - image.at(y0, x0, ch));
        }
        return std::exp(-g / image.c);
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x + 1 < w; ++x) {
            fn(static_cast<size_t>(y) * w + x, static_cast<size_t>(y) * w + x + 1,
               edge_weight(y, x, y, x + 1));
            ++count;
        }
    }
    for (int y = 0; y + 1 < h; ++y) {
        for (int x = 0; x < w; ++x) {
            fn(static_cast<size_t>(y) * w + x, static_cast<size_t>(y + 1) * w + x,
               edge_weight(y, x, y + 1, x));
            ++count;
        }
    }
    return count;
}

}  // namespace

DepthSmoothnessResult loss_smoothness_depth(const DepthMap& depth, const ImageBuffer& image) {
    if (depth.h() != image.h || depth.w() != image.w) {
        throw DimensionMismatch("loss_smoothness_depth: shape mismatch");
    }
    const size_t n = depth.v.v.size();
    std::vector<double> disp(n);
    double mu = 0;
    for (size_t i = 0; i < n; ++i) {
        disp[i] = 1.0 / depth.v.v[i];
        mu += disp[i];
    }
    mu /= static_cast<double>(n);

    DepthSmoothnessResult out;
    out.ddepth = GridD(depth.h(), depth.w(), 0.0);
    std::vector<double> gm(n, 0.0);
    double value = 0;
    size_t edges = 0;
    edges = for_each_edge(image, [&](size_t a, size_t b, double wgt) {
        const double dm = (disp[b] - disp[a]) / mu;
        value += std::abs(dm) * wgt;
        const double s = sgn(dm) * wgt;
        gm[b] += s;
        gm[a] -= s;
    });
    const double inv_e = 1.0 / static_cast<double>(edges);
    out.value = value * inv_e;

    // gm holds d(loss*edges)/dm with m = disp/mu; chain the normalization.
    double gm_dot_disp = 0;
    for (size_t i = 0; i < n; ++i) gm_dot_disp += gm[i] * disp[i];
    for (size_t i = 0; i < n; ++i) {
        const double ddisp = inv_e * (gm[i] / mu - gm_dot_disp / (static_cast<double>(n) * mu * mu));
        out.ddepth.v[i] = -ddisp / (depth.v.v[i] * depth.v.v[i]);
    }
    return out;
}

FlowSmoothnessResult loss_smoothness_flow(const FlowField& flow, const ImageBuffer& image) {
    if (flow.h() != image.h || flow.w() != image.w) {
        throw DimensionMismatch("loss_smoothness_flow: shape mismatch");
    }
    FlowSmoothnessResult out;
    out.dflow = FlowField(flow.h(), flow.w());
    double value = 0;
    size_t edges = 0;
    for (const GridD* comp : {&flow.x, &flow.y}) {
        GridD* grad = comp == &flow.x ? &out.dflow.x : &out.dflow.y;
        edges = for_each_edge(image, [&](size_t a, size_t b, double wgt) {
            const double dm = comp->v[b] - comp->v[a];
            value += std::abs(dm) * wgt;
            const double s = sgn(dm) * wgt;
            grad->v[b] += s;
            grad->v[a] -= s;
        });
    }
    const double inv = 1.0 / static_cast<double>(2 * edges);
    out.value = value * inv;
    for (auto& v : out.dflow.x.v) v *= inv;
    for (auto& v : out.dflow.y.v) v *= inv;
    return out;
}

EpipolarLossResult loss_epipolar(const FlowField& flow, const PoseSE3& pose,
                                 const CameraIntrinsics& K) {
    const int h = flow.h(), w = flow.w();
    EpipolarLossResult out;
    out.dflow = FlowField(h, w);
    const Vec3 t = pose.translation;
    if (t.norm() < 1e-12) return out;  // no epipolar geometry without translation

    const Mat3 Kinv = intrinsics_inverse(K);
    const Mat3 KinvT = Kinv.transposed();
    const Mat3 R = pose.rotation_matrix();
    const RotationJacobianOp rj = make_rotation_jacobian(pose.rotation);

    struct Hit {
        int x, y;
        Vec3 l, pd, rkp;  // epipolar line, flow correspondence, R*Kinv*p
        double nval, denom;
    };
    std::vector<Hit> hits;
    hits.reserve(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec3 kp = Kinv * Vec3{static_cast<double>(x), static_cast<double>(y), 1.0};
            const Vec3 rkp = R * kp;
            const Vec3 l = KinvT * t.cross(rkp);
            const double denom2 = l.x * l.x + l.y * l.y;
            if (denom2 < 1e-20) continue;  // point at the epipole
            const Vec3 pd{x + flow.x.at(y, x), y + flow.y.at(y, x), 1.0};
            const double nval = pd.dot(l);
            const double denom = std::sqrt(denom2);
            out.value += std::abs(nval) / denom;
            hits.push_back({x, y, l, pd, rkp, nval, denom});
        }
    }
    if (hits.empty()) return out;
    out.pixels = hits.size();
    out.value /= static_cast<double>(hits.size());

    const double inv_n = 1.0 / static_cast<double>(hits.size());
    for (const Hit& hit : hits) {
        const double s = sgn(hit.nval);
        out.dflow.x.at(hit.y, hit.x) = inv_n * s * hit.l.x / hit.denom;
        out.dflow.y.at(hit.y, hit.x) = inv_n * s * hit.l.y / hit.denom;
        // d(residual)/dl
        const double d3 = hit.denom * hit.denom * hit.denom;
        const Vec3 dl = hit.pd * (s / hit.denom) -
                        Vec3{hit.l.x, hit.l.y, 0.0} * (std::abs(hit.nval) / d3);
        for (int i = 0; i < 3; ++i) {
            const Vec3 ei{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
            // translation: dl/dt_i = KinvT (e_i x (R Kinv p))
            out.dpose[3 + i] += inv_n * dl.dot(KinvT * ei.cross(hit.rkp));
            // rotation: dl/dw_i = KinvT (t x d(R Kinv p)/dw_i)
            out.dpose[i] += inv_n * dl.dot(KinvT * t.cross(rj.col(i, hit.rkp)));
        }
    }
    return out;
}

VarianceLossResult loss_depth_variance(const DepthMap& depth, double eps) {
    const size_t n = depth.v.v.size();
    if (n == 0) throw std::invalid_argument("loss_depth_variance: empty depth map");
    double mu = 0;
    for (double d : depth.v.v) mu += d;
    mu /= static_cast<double>(n);
    double var = 0;
    for (double d : depth.v.v) var += (d - mu) * (d - mu);
    var /= static_cast<double>(n);

    VarianceLossResult out;
    out.value = 1.0 / (var + eps);
    out.ddepth = GridD(depth.h(), depth.w(), 0.0);
    const double f = -out.value * out.value * 2.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) out.ddepth.v[i] = f * (depth.v.v[i] - mu);
    return out;
}

// ---------------------------------------------------------------------------
// Final multi-scale objective
// ---------------------------------------------------------------------------

namespace {

struct ScaleLevel {
    ImageBuffer target;
    std::vector<ImageBuffer> sources;
    DepthMap depth;
    CameraIntrinsics K;
    std::vector<FlowField> flows;
    std::vector<PixelMask> occl;
    std::vector<PixelMask> rigid;
    std::vector<GridD> weights;
    std::vector<bool> has_flow, has_occl, has_rigid, has_weights;
};

ScaleLevel downscale(const ScaleLevel& s) {
    ScaleLevel out;
    out.target = downsample2(s.target);
    out.depth.v = downsample2(s.depth.v);
    out.K = s.K.halved();
    out.has_flow = s.has_flow;
    out.has_occl = s.has_occl;
    out.has_rigid = s.has_rigid;
    out.has_weights = s.has_weights;
    for (size_t v = 0; v < s.sources.size(); ++v) {
        out.sources.push_back(downsample2(s.sources[v]));
        out.flows.push_back(s.has_flow[v] ? downsample2_flow(s.flows[v]) : FlowField());
        out.occl.push_back(s.has_occl[v] ? downsample2(s.occl[v]) : PixelMask());
        out.rigid.push_back(s.has_rigid[v] ? downsample2(s.rigid[v]) : PixelMask());
        out.weights.push_back(s.has_weights[v] ? downsample2(s.weights[v]) : GridD());
    }
    return out;
}

}  // namespace

LossBreakdown loss_final(const ImageBuffer& target, const std::vector<ViewInputs>& views,
                         const DepthMap& depth, const CameraIntrinsics& K,
                         const LossWeights& weights, int scales, double alpha,
                         FinalLossGrads* grads) {
    if (views.empty()) throw EmptyCandidateList("loss_final: no source views");
    if (scales < 1) throw std::invalid_argument("loss_final: scales must be >= 1");
    const size_t nv = views.size();

    std::vector<ScaleLevel> levels(1);
    levels[0].target = target;
    levels[0].depth = depth;
    levels[0].K = K;
    for (const ViewInputs& v : views) {
        if (!v.source) throw std::invalid_argument("loss_final: view without source image");
        levels[0].sources.push_back(*v.source);
        levels[0].flows.push_back(v.flow ? *v.flow : FlowField());
        levels[0].occl.push_back(v.occlusion ? *v.occlusion : PixelMask());
        levels[0].rigid.push_back(v.rigid ? *v.rigid : PixelMask());
        levels[0].weights.push_back(v.flow_weights ? *v.flow_weights : GridD());
        levels[0].has_flow.push_back(v.flow != nullptr);
        levels[0].has_occl.push_back(v.occlusion != nullptr);
        levels[0].has_rigid.push_back(v.rigid != nullptr);
        levels[0].has_weights.push_back(v.flow_weights != nullptr);
    }
    for (int s = 1; s < scales; ++s) levels.push_back(downscale(levels[s - 1]));

    LossBreakdown bd;
    bd.lambdas = weights;
    std::vector<GridD> ddepth_per_scale;
    std::vector<std::vector<FlowField>> dflow_per_scale;
    std::vector<Vec6> dpose(nv, Vec6{});

    for (int s = 0; s < scales; ++s) {
        const ScaleLevel& L = levels[s];
        // depth+pose photometric term (min over views)
        std::vector<DepthPoseView> dpv;
        for (size_t v = 0; v < nv; ++v) {
            dpv.push_back({&L.sources[v], views[v].pose, L.has_rigid[v] ? &L.rigid[v] : nullptr});
        }
        DepthPoseLossResult dp = loss_depth_pose(L.target, dpv, L.depth, L.K, alpha);
        bd.l_depth_pose += dp.value;
        bd.per_scale_dp.push_back(dp.value);
        if (s == 0) bd.rigid_pixels = dp.pixels;
        ddepth_per_scale.push_back(std::move(dp.ddepth));
        for (size_t v = 0; v < nv; ++v)
            for (int i = 0; i < 6; ++i) dpose[v][i] += dp.dpose[v][i];

        // weighted photometric flow term, one per view
        double scale_flow = 0;
        std::vector<FlowField> dflow_s(nv);
        for (size_t v = 0; v < nv; ++v) {
            if (!L.has_flow[v]) {
                dflow_s[v] = FlowField(L.target.h, L.target.w);
                continue;
            }
            FlowLossResult fl =
                loss_flow(L.target, L.sources[v], L.flows[v],
                          L.has_weights[v] ? &L.weights[v] : nullptr,
                          L.has_occl[v] ? &L.occl[v] : nullptr, alpha);
            scale_flow += fl.value;
            if (s == 0) bd.flow_pixels += fl.pixels;
            dflow_s[v] = std::move(fl.dflow);
        }
        bd.l_flow += scale_flow;
        bd.per_scale_flow.push_back(scale_flow);
        dflow_per_scale.push_back(std::move(dflow_s));
    }

    // Auxiliary losses at full resolution.
    GridD ddepth_aux(depth.h(), depth.w(), 0.0);
    std::vector<FlowField> dflow_aux(nv, FlowField(target.h, target.w));

    for (size_t v = 0; v < nv; ++v) {
        if (views[v].source_depth) {
            GcLossResult gc =
                loss_geometry_consistency(depth, *views[v].source_depth, views[v].pose, K);
            bd.l_gc += gc.value;
            for (size_t i = 0; i < ddepth_aux.v.size(); ++i)
                ddepth_aux.v[i] += weights.lambda_gc * gc.ddepth_t.v[i];
            for (int i = 0; i < 6; ++i) dpose[v][i] += weights.lambda_gc * gc.dpose[i];
        }
    }
    if (nv >= 2 && views[0].flow && views[1].flow) {
        // Pair the two predicted directions; for locally linear motion the
        // previous-view flow approximates the backward field of the next.
        FwdBwdLossResult fb = loss_fwd_bwd(*views[1].flow, *views[0].flow,
                                           views[1].occlusion);
        bd.l_fwd_bwd = fb.value;
        for (size_t i = 0; i < dflow_aux[1].x.v.size(); ++i) {
            dflow_aux[1].x.v[i] += weights.lambda_fwd_bwd * fb.dflow_fwd.x.v[i];
            dflow_aux[1].y.v[i] += weights.lambda_fwd_bwd * fb.dflow_fwd.y.v[i];
            dflow_aux[0].x.v[i] += weights.lambda_fwd_bwd * fb.dflow_bwd.x.v[i];
            dflow_aux[0].y.v[i] += weights.lambda_fwd_bwd * fb.dflow_bwd.y.v[i];
        }
    }
    {
        DepthSmoothnessResult sm = loss_smoothness_depth(depth, target);
        bd.l_smooth += sm.value;
        for (size_t i = 0; i < ddepth_aux.v.size(); ++i)
            ddepth_aux.v[i] += weights.lambda_s * sm.ddepth.v[i];
        for (size_t v = 0; v < nv; ++v) {
            if (!views[v].flow) continue;
            FlowSmoothnessResult sf = loss_smoothness_flow(*views[v].flow, target);
            bd.l_smooth += sf.value;
            for (size_t i = 0; i < dflow_aux[v].x.v.size(); ++i) {
                dflow_aux[v].x.v[i] += weights.lambda_s * sf.dflow.x.v[i];
                dflow_aux[v].y.v[i] += weights.lambda_s * sf.dflow.y.v[i];
            }
        }
    }
    for (size_t v = 0; v < nv; ++v) {
        if (!views[v].flow) continue;
        EpipolarLossResult ep = loss_epipolar(*views[v].flow, views[v].pose, K);
        bd.l_ep += ep.value;
        for (size_t i = 0; i < dflow_aux[v].x.v.size(); ++i) {
            dflow_aux[v].x.v[i] += weights.lambda_ep * ep.dflow.x.v[i];
            dflow_aux[v].y.v[i] += weights.lambda_ep * ep.dflow.y.v[i];
        }
        for (int i = 0; i < 6; ++i) dpose[v][i] += weights.lambda_ep * ep.dpose[i];
    }
    {
        VarianceLossResult var = loss_depth_variance(depth);
        bd.l_var = var.value;
        for (size_t i = 0; i < ddepth_aux.v.size(); ++i)
            ddepth_aux.v[i] += weights.lambda_var * var.ddepth.v[i];
    }

    bd.total = bd.weighted_sum();
    if (!std::isfinite(bd.total)) throw NonFiniteLoss("loss_final: total not finite");

    if (grads) {
        // Chain per-scale gradients back to full resolution through the
        // downsampling adjoints (flow values were also halved per level).
        GridD acc_depth = ddepth_per_scale[scales - 1];
        for (int s = scales - 2; s >= 0; --s) {
            GridD up = downsample2_adjoint(acc_depth, levels[s].depth.v.h, levels[s].depth.v.w);
            acc_depth = std::move(up);
            for (size_t i = 0; i < acc_depth.v.size(); ++i)
                acc_depth.v[i] += ddepth_per_scale[s].v[i];
        }
        for (size_t i = 0; i < acc_depth.v.size(); ++i) acc_depth.v[i] += ddepth_aux.v[i];
        grads->ddepth = std::move(acc_depth);

        grads->dflow.assign(nv, FlowField(target.h, target.w));
        for (size_t v = 0; v < nv; ++v) {
            if (!views[v].flow) continue;
            FlowField acc = dflow_per_scale[scales - 1][v];
            for (int s = scales - 2; s >= 0; --s) {
                FlowField up;
                up.x = downsample2_adjoint(acc.x, levels[s].target.h, levels[s].target.w);
                up.y = downsample2_adjoint(acc.y, levels[s].target.h, levels[s].target.w);
                for (size_t i = 0; i < up.x.v.size(); ++i) {
                    up.x.v[i] = 0.5 * up.x.v[i] + dflow_per_scale[s][v].x.v[i];
                    up.y.v[i] = 0.5 * up.y.v[i] + dflow_per_scale[s][v].y.v[i];
                }
                acc = std::move(up);
            }
            for (size_t i = 0; i < acc.x.v.size(); ++i) {
                acc.x.v[i] += dflow_aux[v].x.v[i];
                acc.y.v[i] += dflow_aux[v].y.v[i];
            }
            grads->dflow[v] = std::move(acc);
        }
        grads->dpose = dpose;
    }
    return bd;
}

}  // namespace coop
