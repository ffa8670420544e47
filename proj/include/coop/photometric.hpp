#pragma once

#include "coop/image.hpp"
#include "coop/warp.hpp"

namespace coop {

// ---------------------------------------------------------------------------
// Windowed SSIM and the photometric error
//   phi(x, y) = alpha * (1 - SSIM(x, y)) / 2 + (1 - alpha) * |x - y|,
// channel-averaged. SSIM uses a 3x3 mean window with the usual stabilizers.
// ---------------------------------------------------------------------------

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kAlphaDefault = 0.85;

// 3x3 mean filter normalized by the in-bounds neighbor count.
GridD box3(const GridD& g);
// Adjoint of box3: out(q) = sum over windows containing q of g(p) / count(p).
GridD box3_adjoint(const GridD& g);

// Channel-averaged per-pixel SSIM map, values in [-1, 1].
GridD ssim_map(const ImageBuffer& x, const ImageBuffer& y);

// d(sum_p upstream(p) * SSIM(p)) / dy as an image-shaped gradient.
ImageBuffer ssim_backward(const ImageBuffer& x, const ImageBuffer& y, const GridD& upstream);

GridD photometric_error(const ImageBuffer& x, const ImageBuffer& y,
                        double alpha = kAlphaDefault);

// d(sum_p upstream(p) * phi(p)) / dy.
ImageBuffer photometric_backward(const ImageBuffer& x, const ImageBuffer& y,
                                 const GridD& upstream, double alpha = kAlphaDefault);

struct MinReprojection {
    GridD error;        // per-pixel min of phi over valid candidates
    PixelMask valid;    // true where at least one candidate was valid
    Grid<int> argmin;   // winning candidate index, -1 where invalid
};

// Pointwise minimum photometric error over warped candidates; a candidate
// only competes at pixels where its mask is true. Ties keep the earlier
// candidate.
MinReprojection min_reprojection_error(
    const ImageBuffer& target,
    const std::vector<std::pair<const ImageBuffer*, const PixelMask*>>& candidates,
    double alpha = kAlphaDefault);

}  // namespace coop
