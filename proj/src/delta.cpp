#include "coop/delta.hpp"

namespace coop {

DeltaMap compute_delta(const ImageBuffer& target, const ImageBuffer& warped_depth_pose,
                       const ImageBuffer& warped_flow, const PixelMask& validity,
                       double alpha) {
    if (!target.same_shape(warped_depth_pose) || !target.same_shape(warped_flow) ||
        validity.h() != target.h || validity.w() != target.w) {
        throw DimensionMismatch("compute_delta: shape mismatch");
    }
    const GridD phi_dp = photometric_error(target, warped_depth_pose, alpha);
    const GridD phi_fl = photometric_error(target, warped_flow, alpha);
    DeltaMap out{GridD(target.h, target.w, 0.0), validity};
    for (size_t i = 0; i < out.values.v.size(); ++i) {
        out.values.v[i] = phi_dp.v[i] - phi_fl.v[i];
    }
    return out;
}

DeltaFlowMap compute_delta_flow(const FlowField& flow_rigid, const FlowField& flow_optical,
                                double epsilon) {
    if (!flow_rigid.same_shape(flow_optical)) {
        throw DimensionMismatch("compute_delta_flow: flow shapes differ");
    }
    const int h = flow_rigid.h(), w = flow_rigid.w();
    DeltaFlowMap out{GridD(h, w, 0.0), GridD(h, w, 0.0), PixelMask::all_true(h, w)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double rx = flow_rigid.x.at(y, x), ry = flow_rigid.y.at(y, x);
            const double ox = flow_optical.x.at(y, x), oy = flow_optical.y.at(y, x);
            const double denom =
                std::sqrt(rx * rx + ry * ry) + std::sqrt(ox * ox + oy * oy) + epsilon;
            out.x.at(y, x) = (rx - ox) / denom;
            out.y.at(y, x) = (ry - oy) / denom;
        }
    }
    return out;
}

void QuantileBank::feed(const DeltaMap& delta, const DeltaFlowMap& dflow, int stride) {
    if (!delta.values.same_shape(dflow.x)) throw DimensionMismatch("QuantileBank::feed");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    for (size_t i = 0; i < delta.values.v.size(); i += stride) {
        if (!delta.validity.m.v[i] || !dflow.validity.m.v[i]) continue;
        const double d = delta.values.v[i];
        delta_lo.update(d);
        delta_hi.update(d);
        flow_x_lo.update(dflow.x.v[i]);
        flow_x_hi.update(dflow.x.v[i]);
        flow_y_lo.update(dflow.y.v[i]);
        flow_y_hi.update(dflow.y.v[i]);
    }
}

NeighbourhoodSpec build_neighbourhood(const QuantileBank& bank) {
    for (const QuantileEstimator* e :
         {&bank.delta_lo, &bank.delta_hi, &bank.flow_x_lo, &bank.flow_x_hi, &bank.flow_y_lo,
          &bank.flow_y_hi}) {
        if (!e->has_estimate()) {
            throw InsufficientObservations("build_neighbourhood: estimator has < 5 observations");
        }
    }
    NeighbourhoodSpec spec;
    spec.eta = bank.eta();
    spec.zeta = bank.zeta();
    // Independent estimators can cross on short streams; keep bounds ordered.
    spec.q_minus_eta = std::min(bank.delta_lo.value(), bank.delta_hi.value());
    spec.q_eta = std::max(bank.delta_lo.value(), bank.delta_hi.value());
    spec.qx_minus_zeta = std::min(bank.flow_x_lo.value(), bank.flow_x_hi.value());
    spec.qx_zeta = std::max(bank.flow_x_lo.value(), bank.flow_x_hi.value());
    spec.qy_minus_zeta = std::min(bank.flow_y_lo.value(), bank.flow_y_hi.value());
    spec.qy_zeta = std::max(bank.flow_y_lo.value(), bank.flow_y_hi.value());
    return spec;
}

PixelMask rigid_mask(const DeltaMap& delta, const DeltaFlowMap& delta_flow,
                     const NeighbourhoodSpec& spec) {
    if (!delta.values.same_shape(delta_flow.x)) {
        throw DimensionMismatch("rigid_mask: shape mismatch");
    }
    const int h = delta.values.h, w = delta.values.w;
    PixelMask out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!delta.validity.at(y, x) || !delta_flow.validity.at(y, x)) continue;
            out.set(y, x, spec.in_v_eta(delta.values.at(y, x)) &&
                              spec.in_v_zeta(delta_flow.x.at(y, x), delta_flow.y.at(y, x)));
        }
    }
    return out;
}

TailWeights tail_weights(const DeltaMap& delta, const NeighbourhoodSpec& spec) {
    const int h = delta.values.h, w = delta.values.w;
    TailWeights out;
    out.w = GridD(h, w, 0.0);
    size_t valid = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!delta.validity.at(y, x)) continue;
            ++valid;
            if (!spec.in_v_eta(delta.values.at(y, x))) ++out.tail_count;
        }
    }
    out.body_count = valid - out.tail_count;
    if (out.tail_count == 0 || out.body_count == 0) {
        out.degenerate = true;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (delta.validity.at(y, x)) out.w.at(y, x) = 1.0;
        return out;
    }
    const double wt = static_cast<double>(valid) / out.tail_count;
    const double wb = static_cast<double>(valid) / out.body_count;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!delta.validity.at(y, x)) continue;
            out.w.at(y, x) = spec.in_v_eta(delta.values.at(y, x)) ? wb : wt;
        }
    }
    return out;
}

}  // namespace coop
