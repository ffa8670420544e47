#pragma once

#include "coop/photometric.hpp"
#include "coop/quantile.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// The per-pixel disagreement statistics between the depth+pose reconstruction
// and the optical-flow reconstruction, their streaming quantiles, and the
// derived rigid-pixel mask and tail weights.
// ---------------------------------------------------------------------------

// delta(p) = phi(target, warped_depth_pose)(p) - phi(target, warped_flow)(p)
struct DeltaMap {
    GridD values;
    PixelMask validity;
};

// Componentwise normalized flow disagreement, each component in [-1, 1].
struct DeltaFlowMap {
    GridD x, y;
    PixelMask validity;
};

inline constexpr double kDeltaFlowEpsilon = 1e-6;
inline constexpr double kEtaDefault = 0.15;
inline constexpr double kZetaDefault = 0.25;

DeltaMap compute_delta(const ImageBuffer& target, const ImageBuffer& warped_depth_pose,
                       const ImageBuffer& warped_flow, const PixelMask& validity,
                       double alpha = kAlphaDefault);

DeltaFlowMap compute_delta_flow(const FlowField& flow_rigid, const FlowField& flow_optical,
                                double epsilon = kDeltaFlowEpsilon);

// Quantile snapshot taken at an epoch boundary; drives masking in the next
// epoch. Bounds are closed intervals.
struct NeighbourhoodSpec {
    double eta = kEtaDefault;
    double zeta = kZetaDefault;
    double q_minus_eta = -kInf, q_eta = kInf;
    double qx_minus_zeta = -kInf, qx_zeta = kInf;
    double qy_minus_zeta = -kInf, qy_zeta = kInf;

    static constexpr double kInf = std::numeric_limits<double>::infinity();
    static NeighbourhoodSpec unbounded() { return NeighbourhoodSpec{}; }

    bool in_v_eta(double d) const { return d >= q_minus_eta && d <= q_eta; }
    bool in_v_zeta(double dx, double dy) const {
        return dx >= qx_minus_zeta && dx <= qx_zeta && dy >= qy_minus_zeta && dy <= qy_zeta;
    }
};

// Estimator bundle for one epoch of streaming: the two delta quantiles at
// 0.5 -/+ eta and the four flow-component quantiles at 0.5 -/+ zeta.
struct QuantileBank {
    QuantileEstimator delta_lo, delta_hi;
    QuantileEstimator flow_x_lo, flow_x_hi, flow_y_lo, flow_y_hi;

    QuantileBank(double eta, double zeta)
        : delta_lo(0.5 - eta),
          delta_hi(0.5 + eta),
          flow_x_lo(0.5 - zeta),
          flow_x_hi(0.5 + zeta),
          flow_y_lo(0.5 - zeta),
          flow_y_hi(0.5 + zeta),
          eta_(eta),
          zeta_(zeta) {}

    double eta() const { return eta_; }
    double zeta() const { return zeta_; }

    // Streams the valid pixels of one image in row-major order with the
    // given flat-index stride (order matters: P-square is order dependent).
    void feed(const DeltaMap& delta, const DeltaFlowMap& dflow, int stride);

  private:
    double eta_, zeta_;
};

// Snapshot of the bank; throws InsufficientObservations below 5 samples.
NeighbourhoodSpec build_neighbourhood(const QuantileBank& bank);

// True exactly where delta in [q_-eta, q_eta], both flow components within
// their zeta bounds, and the validity masks hold.
PixelMask rigid_mask(const DeltaMap& delta, const DeltaFlowMap& delta_flow,
                     const NeighbourhoodSpec& spec);

struct TailWeights {
    GridD w;             // weight per pixel, 0 on invalid pixels
    size_t tail_count = 0;
    size_t body_count = 0;
    bool degenerate = false;  // empty tail or body: uniform fallback weights
};

// w(p) = |P| / |tail| on tail pixels (delta outside [q_-eta, q_eta]), and
// |P| / |body| otherwise, over valid pixels; sums to 2|P| unless degenerate.
TailWeights tail_weights(const DeltaMap& delta, const NeighbourhoodSpec& spec);

}  // namespace coop
